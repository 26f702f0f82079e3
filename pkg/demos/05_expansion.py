"""
Life-long scheduling with cluster expansion
===========================================

In the expansion scenario the cluster adds a batch of servers whenever cpu
utilization reaches the growing threshold, or when the next request would
otherwise be unplaceable.
"""

import yaml

from vmsched import BestFit, Flavor, GenConfig, Scenario, generate_trace
from vmsched import parse_env_config, run_episode

# The standard two-section YAML config; growing_threshold/growing_nums
# drive expansion.  Extensions (seed, max_servers, ...) go under vmsched_ext.
CONFIG = """
cluster_args:
    N: 100
    CPU: 40
    MEM: 90
    double_numa: True
env_args:
    allow_release: True
    growing_threshold: 0.8
    growing_nums: 20
"""
cfg = parse_env_config(yaml.safe_load(CONFIG))
print(f"{cfg.cluster.n_servers} servers, grow by {cfg.growing_nums} "
      f"at {cfg.growing_threshold:.0%} cpu, cap {cfg.cluster.max_servers}")

# Demand that keeps climbing: most VMs are never released.
trace = generate_trace(
    GenConfig(
        n_alloc=3000,
        release_prob=0.25,
        flavor_weights={Flavor(2, 4): 1.0, Flavor(4, 8): 1.0, Flavor(8, 16): 0.5},
        mean_lifetime=400,
        seed=5,
    )
)

record = run_episode(cfg, Scenario.EXPANSION, trace, BestFit())
print("scheduled:", record.totals["scheduled_total"])
print("expansions:", record.totals["expansions"],
      "servers added:", record.totals["servers_added"])

# Server count is a staircase: each firing adds exactly growing_nums.
sizes = sorted({step.server_count for step in record.steps})
print("cluster sizes seen:", sizes)
for i, step in enumerate(record.steps[1:], start=1):
    prev = record.steps[i - 1]
    if step.server_count != prev.server_count:
        print(f"  step {step.step}: {prev.server_count} -> {step.server_count} "
              f"(cpu was {prev.cpu_used_frac:.2f})")
