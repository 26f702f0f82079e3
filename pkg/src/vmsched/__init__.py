"""Trace-driven simulator of VM scheduling on double-NUMA server clusters."""

from .cluster import (
    Cluster,
    ClusterConfig,
    Placement,
    ResourceVec,
    Utilization,
    VmRecord,
    check_flavor,
    is_large,
)
from .env import (
    EnvConfig,
    Observation,
    Scenario,
    SchedulingEnv,
    StepResult,
    config_digest,
    load_env_config,
    parse_env_config,
    run_episode,
)
from .metrics import (
    ComparisonTable,
    EpisodeRecord,
    RunSummary,
    StepEntry,
    compare,
    read_record,
    render_charts,
    summarize,
    write_record,
)
from .sched import (
    BestFit,
    FirstFit,
    LinearQParams,
    LinearQPolicy,
    RandomPolicy,
    linear_q_features,
    make_policy,
    train_linear_q,
)
from .trace import (
    Flavor,
    GenConfig,
    Request,
    Trace,
    TraceStats,
    Violation,
    generate_trace,
    parse_trace,
    read_trace,
    serialize_trace,
    trace_stats,
    validate_trace,
    write_trace,
)

__version__ = "0.1.0"
