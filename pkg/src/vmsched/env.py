"""Scenario-level decision environment.

Replays a trace against a cluster: releases are applied automatically, each
allocation asks a policy for a (server, numa) action, and termination
follows the scenario semantics (fading: allocation-only; recovering:
alloc+release, fixed pool; expansion: the pool grows when cpu utilization
crosses a threshold or the next request would not fit).
"""

from __future__ import annotations

import enum
import hashlib
import json
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
import yaml

from .cluster import Cluster, ClusterConfig, check_flavor, is_large
from .errors import (
    EpisodeFinished,
    InvalidConfig,
    InvalidTrace,
    InvalidTraceForScenario,
    UnknownVm,
)
from .metrics import EpisodeRecord, StepEntry
from .trace import Request, Trace, validate_trace

REWARD_MODES = ("per_alloc", "cpu_delta")


class Scenario(enum.Enum):
    FADING = "fading"
    RECOVERING = "recovering"
    EXPANSION = "expansion"

    @classmethod
    def parse(cls, name: str) -> "Scenario":
        try:
            return cls(name.strip().lower())
        except ValueError:
            raise InvalidConfig(
                f"unknown scenario {name!r}; expected one of "
                f"{[s.value for s in cls]}"
            ) from None


@dataclass
class EnvConfig:
    """Cluster shape plus scene parameters, as loaded from the YAML config."""

    cluster: ClusterConfig
    allow_release: bool = True
    growing_threshold: Optional[float] = None
    growing_nums: int = 1
    reward_mode: str = "per_alloc"
    invalid_action_penalty: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.growing_threshold is not None:
            if not 0.0 < self.growing_threshold <= 1.0:
                raise InvalidConfig(
                    f"growing_threshold must be in (0, 1], got {self.growing_threshold}"
                )
            if self.growing_nums < 1:
                raise InvalidConfig(
                    f"growing_nums must be >= 1, got {self.growing_nums}"
                )
        if self.reward_mode not in REWARD_MODES:
            raise InvalidConfig(
                f"reward_mode must be one of {REWARD_MODES}, got {self.reward_mode!r}"
            )


class Observation:
    """Cluster status plus the pending allocation request.

    ``node_free`` is an exact integer copy of the cluster's free vectors;
    :meth:`flat_normalized` is the [0, 1]-scaled flat view consumed by
    learning code (node free over node capacity, request over full-server
    capacity, then the is_large flag).
    """

    __slots__ = (
        "node_free",
        "request_cpu",
        "request_mem",
        "request_is_large",
        "server_count",
        "node_capacity",
        "server_capacity",
    )

    def __init__(self, node_free, request_cpu, request_mem, request_is_large,
                 node_capacity, server_capacity):
        self.node_free = node_free
        self.request_cpu = request_cpu
        self.request_mem = request_mem
        self.request_is_large = request_is_large
        self.server_count = node_free.shape[0]
        self.node_capacity = node_capacity  # (cpu, mem)
        self.server_capacity = server_capacity  # (cpu, mem)

    def normalized_node_free(self) -> np.ndarray:
        cap = np.array(self.node_capacity, dtype=np.float64)
        return self.node_free / cap

    def flat_normalized(self) -> np.ndarray:
        request = np.array(
            [
                self.request_cpu / self.server_capacity[0],
                self.request_mem / self.server_capacity[1],
                1.0 if self.request_is_large else 0.0,
            ],
            dtype=np.float64,
        )
        flat = np.concatenate([self.normalized_node_free().reshape(-1), request])
        return flat.astype(np.float32)


@dataclass(frozen=True)
class StepResult:
    obs: Optional[Observation]  # None once the episode is done
    reward: float
    done: bool
    info: dict


class SchedulingEnv:
    """One episode over one trace; reset/step must be externally serialized."""

    def __init__(self, cfg: EnvConfig, scenario: Scenario, trace: Trace):
        self.cfg = cfg
        self.scenario = scenario
        self.trace = trace
        self.cluster: Optional[Cluster] = None
        self._done = True
        self._pending: Optional[Request] = None
        self._mask: Optional[np.ndarray] = None
        self._cursor = 0
        self._counters = {}

    # --- lifecycle ---

    def reset(self) -> Optional[Observation]:
        """Validate inputs, build a fresh cluster, and advance to the first Alloc.

        Returns the observation for the first pending allocation, or None if
        the trace holds no allocations (the episode is born finished).
        """
        self._check_inputs()
        self.cluster = Cluster(self.cfg.cluster)
        self._cursor = 0
        self._done = False
        self._counters = {
            "scheduled_total": 0,
            "released_total": 0,
            "expansions": 0,
            "servers_added": 0,
            "invalid_action": False,
            "skipped_releases": 0,
        }
        self._apply_releases()
        self._refresh_pending()
        if self._pending is None or not self._mask.any():
            self._done = True
        return self._observe() if self._pending is not None else None

    def _check_inputs(self) -> None:
        violations = validate_trace(self.trace)
        if violations:
            raise InvalidTrace(violations)
        has_release = any(not r.is_alloc for r in self.trace)
        if self.scenario is Scenario.FADING:
            if self.cfg.allow_release:
                raise InvalidConfig("fading scenario requires allow_release: false")
            if has_release:
                raise InvalidTraceForScenario(
                    "fading scenario only allows allocation requests"
                )
        elif self.scenario is Scenario.RECOVERING:
            if not self.cfg.allow_release:
                raise InvalidConfig("recovering scenario requires allow_release: true")
            if self.cfg.growing_threshold is not None:
                raise InvalidConfig("recovering scenario does not grow the cluster")
        else:  # EXPANSION
            if self.cfg.growing_threshold is None:
                raise InvalidConfig("expansion scenario requires growing_threshold")
            if has_release and not self.cfg.allow_release:
                raise InvalidTraceForScenario(
                    "trace contains releases but allow_release is false"
                )
        for flavor in sorted(self.trace.flavor_catalog):
            check_flavor(flavor, self.cfg.cluster)

    # --- stepping ---

    def step(self, action: int) -> StepResult:
        """Apply one placement decision for the pending allocation."""
        if self._done:
            raise EpisodeFinished("step() after the episode ended")
        request = self._pending
        mask = self._mask
        if not (0 <= action < mask.shape[0]) or not mask[action]:
            self._done = True
            self._counters["invalid_action"] = True
            return StepResult(None, self.cfg.invalid_action_penalty, True, self.info())

        server, numa = self.cluster.split_action(int(action))
        self.cluster.place(request.vm_id, request.flavor, server, numa)
        self._counters["scheduled_total"] += 1
        if self.cfg.reward_mode == "per_alloc":
            reward = 1.0
        else:
            reward = request.flavor.cpu / self.cfg.cluster.cpu

        self._cursor += 1
        self._apply_releases()
        self._refresh_pending()
        if self.scenario is Scenario.EXPANSION:
            self._grow_if_needed()
        if self._pending is None or not self._mask.any():
            self._done = True
        obs = self._observe() if not self._done else None
        return StepResult(obs, reward, self._done, self.info())

    def action_mask(self) -> np.ndarray:
        """Feasibility mask for the pending request (post release/expansion)."""
        if self._done:
            raise EpisodeFinished("action_mask() after the episode ended")
        return self._mask

    @property
    def done(self) -> bool:
        return self._done

    @property
    def pending_request(self) -> Optional[Request]:
        return self._pending

    def info(self) -> dict:
        return dict(self._counters)

    # --- internals ---

    def _apply_releases(self) -> None:
        requests = self.trace.requests
        n = len(requests)
        while self._cursor < n and not requests[self._cursor].is_alloc:
            try:
                self.cluster.release(requests[self._cursor].vm_id)
                self._counters["released_total"] += 1
            except UnknownVm:
                # messy real traces: skip and count rather than abort the run
                self._counters["skipped_releases"] += 1
            self._cursor += 1

    def _refresh_pending(self) -> None:
        requests = self.trace.requests
        if self._cursor < len(requests):
            self._pending = requests[self._cursor]
            self._mask = self.cluster.feasible_actions(self._pending.flavor)
            self._mask.flags.writeable = False
        else:
            self._pending = None
            self._mask = None

    def _grow_if_needed(self) -> None:
        threshold = self.cfg.growing_threshold
        while True:
            starved = self._pending is not None and not self._mask.any()
            if self.cluster.utilization().cpu_used_frac < threshold and not starved:
                break
            added = self.cluster.expand(self.cfg.growing_nums)
            if added == 0:
                break
            self._counters["expansions"] += 1
            self._counters["servers_added"] += added
            if self._pending is not None:
                self._mask = self.cluster.feasible_actions(self._pending.flavor)
                self._mask.flags.writeable = False

    def _observe(self) -> Observation:
        cfg = self.cfg.cluster
        request = self._pending
        cap = cfg.node_capacity
        return Observation(
            node_free=self.cluster.free.copy(),
            request_cpu=request.flavor.cpu,
            request_mem=request.flavor.mem,
            request_is_large=is_large(request.flavor, cfg),
            node_capacity=(cap.cpu, cap.mem),
            server_capacity=(cfg.cpu, cfg.mem),
        )


# --- batch evaluation ---

Policy = Callable[[Observation, np.ndarray], int]


def run_episode(
    cfg: EnvConfig,
    scenario: Scenario,
    trace: Trace,
    policy: Policy,
    policy_name: Optional[str] = None,
    seed: Optional[int] = None,
) -> EpisodeRecord:
    """Play one full episode and return its per-step record stream."""
    name = policy_name or getattr(policy, "name", policy.__class__.__name__)
    record = EpisodeRecord(
        scenario=scenario.value,
        config_digest=config_digest(cfg, scenario),
        policy=name,
        seed=cfg.seed if seed is None else seed,
    )
    env = SchedulingEnv(cfg, scenario, trace)
    obs = env.reset()
    step = 0
    while not env.done:
        request_seq = env.pending_request.seq
        action = int(policy(obs, env.action_mask()))
        result = env.step(action)
        util = env.cluster.utilization()
        record.append(
            StepEntry(
                step=step,
                request_seq=request_seq,
                action=action,
                reward=result.reward,
                done=result.done,
                cpu_used_frac=util.cpu_used_frac,
                mem_used_frac=util.mem_used_frac,
                server_count=env.cluster.server_count,
            )
        )
        obs = result.obs
        step += 1
    record.totals = env.info()
    return record


def config_digest(cfg: EnvConfig, scenario: Scenario) -> str:
    """Stable identity of (scenario, config) for aligning comparison runs.

    The seed is deliberately excluded so seed sweeps share a digest.
    """
    doc = {
        "scenario": scenario.value,
        "cluster": {
            "n_servers": cfg.cluster.n_servers,
            "cpu": cfg.cluster.cpu,
            "mem": cfg.cluster.mem,
            "double_numa": cfg.cluster.double_numa,
            "max_servers": cfg.cluster.max_servers,
            "large_cpu_threshold": cfg.cluster.large_cpu_threshold,
        },
        "env": {
            "allow_release": cfg.allow_release,
            "growing_threshold": cfg.growing_threshold,
            "growing_nums": cfg.growing_nums,
            "reward_mode": cfg.reward_mode,
            "invalid_action_penalty": cfg.invalid_action_penalty,
        },
    }
    blob = json.dumps(doc, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()[:16]


# --- YAML configuration ---

_CLUSTER_KEYS = {"N", "CPU", "MEM", "double_numa"}
_ENV_KEYS = {"allow_release", "growing_threshold", "growing_nums"}
_EXT_KEYS = {
    "reward_mode",
    "large_cpu_threshold",
    "max_servers",
    "seed",
    "invalid_action_penalty",
}


def parse_env_config(doc: dict) -> EnvConfig:
    """Build an EnvConfig from the two-section YAML schema (plus extensions)."""
    if not isinstance(doc, dict):
        raise InvalidConfig("config must be a mapping")
    unknown = set(doc) - {"cluster_args", "env_args", "vmsched_ext"}
    if unknown:
        raise InvalidConfig(f"unknown config sections: {sorted(unknown)}")

    cluster_args = doc.get("cluster_args") or {}
    env_args = doc.get("env_args") or {}
    ext = doc.get("vmsched_ext") or {}
    for name, section, allowed in (
        ("cluster_args", cluster_args, _CLUSTER_KEYS),
        ("env_args", env_args, _ENV_KEYS),
        ("vmsched_ext", ext, _EXT_KEYS),
    ):
        if not isinstance(section, dict):
            raise InvalidConfig(f"{name} must be a mapping")
        extra = set(section) - allowed
        if extra:
            raise InvalidConfig(f"unknown keys in {name}: {sorted(extra)}")
    for key in ("N", "CPU", "MEM"):
        if key not in cluster_args:
            raise InvalidConfig(f"cluster_args is missing {key}")

    cluster = ClusterConfig(
        n_servers=int(cluster_args["N"]),
        cpu=int(cluster_args["CPU"]),
        mem=int(cluster_args["MEM"]),
        double_numa=bool(cluster_args.get("double_numa", True)),
        max_servers=ext.get("max_servers"),
        large_cpu_threshold=int(ext.get("large_cpu_threshold", 8)),
    )
    threshold = env_args.get("growing_threshold")
    return EnvConfig(
        cluster=cluster,
        allow_release=bool(env_args.get("allow_release", True)),
        growing_threshold=None if threshold is None else float(threshold),
        growing_nums=int(env_args.get("growing_nums", 1)),
        reward_mode=ext.get("reward_mode", "per_alloc"),
        invalid_action_penalty=float(ext.get("invalid_action_penalty", 0.0)),
        seed=int(ext.get("seed", 0)),
    )


def load_env_config(path) -> EnvConfig:
    with open(path, "r", encoding="utf-8") as f:
        doc = yaml.safe_load(f)
    return parse_env_config(doc)
