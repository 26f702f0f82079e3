"""Shared builders and independent reference implementations.

The reference functions here deliberately use plain-Python loops and their
own accounting so they stay independent of the numpy paths they check.
"""

from __future__ import annotations

import random

import numpy as np
import pytest

from vmsched.cluster import Cluster, ClusterConfig, is_large
from vmsched.env import Observation
from vmsched.trace import Flavor, Request, Trace


# --- trace building ---

def make_trace(events, times=None):
    """Build a Trace from [(vm_id, (cpu, mem) | None), ...] tuples."""
    requests = []
    for seq, (vm_id, flavor) in enumerate(events):
        time = times[seq] if times is not None else seq
        requests.append(
            Request(seq, vm_id, Flavor(*flavor) if flavor else None, time)
        )
    return Trace(requests)


# --- random state construction ---

def random_flavor(rng: random.Random, cfg: ClusterConfig, large_prob=0.3) -> Flavor:
    """A flavor placeable under cfg: small fits one node, large has even dims."""
    if cfg.double_numa and rng.random() < large_prob:
        cpu = 2 * rng.randint(cfg.large_cpu_threshold // 2, cfg.cpu // 2)
        mem = 2 * rng.randint(1, cfg.mem // 2)
        return Flavor(cpu, mem)
    cpu = rng.randint(1, max(1, min(cfg.large_cpu_threshold - 1, cfg.cpu // 2)))
    mem = rng.randint(1, cfg.mem // cfg.nodes_per_server)
    return Flavor(cpu, mem)


def random_cluster(rng: random.Random, cfg: ClusterConfig, n_ops=40) -> Cluster:
    """Evolve a cluster through feasible random place/release operations."""
    cluster = Cluster(cfg)
    counter = 0
    for _ in range(n_ops):
        if cluster.live_vms and rng.random() < 0.35:
            cluster.release(rng.choice(sorted(cluster.live_vms)))
            continue
        flavor = random_flavor(rng, cfg)
        mask = cluster.feasible_actions(flavor)
        feasible = np.flatnonzero(mask)
        if feasible.size == 0:
            continue
        action = int(feasible[rng.randrange(feasible.size)])
        server, numa = cluster.split_action(action)
        cluster.place(f"vm{counter}", flavor, server, numa)
        counter += 1
    return cluster


# --- independent reference implementations ---

def reference_can_place(cluster: Cluster, server: int, numa: int, flavor: Flavor) -> bool:
    """Placement feasibility recomputed with scalar arithmetic only."""
    cfg = cluster.config
    if is_large(flavor, cfg):
        for node in range(cfg.nodes_per_server):
            free_cpu = int(cluster.free[server, node, 0])
            free_mem = int(cluster.free[server, node, 1])
            if free_cpu < flavor.cpu // 2 or free_mem < flavor.mem // 2:
                return False
        return True
    free_cpu = int(cluster.free[server, numa, 0])
    free_mem = int(cluster.free[server, numa, 1])
    return free_cpu >= flavor.cpu and free_mem >= flavor.mem


def reference_mask(cluster: Cluster, flavor: Flavor) -> list[bool]:
    out = []
    for server in range(cluster.server_count):
        for numa in range(cluster.nodes_per_server):
            out.append(reference_can_place(cluster, server, numa, flavor))
    return out


def reference_first_fit(mask) -> int:
    for i, ok in enumerate(mask):
        if ok:
            return i
    raise AssertionError("no feasible entry")


def reference_best_fit(obs: Observation, mask) -> int:
    """Brute-force argmin over (residual cpu, residual mem, flat index)."""
    nodes_per_server = obs.node_free.shape[1]
    best = None
    best_key = None
    for action, ok in enumerate(mask):
        if not ok:
            continue
        server, numa = divmod(action, nodes_per_server)
        if obs.request_is_large:
            free_cpu = int(obs.node_free[server, :, 0].sum())
            free_mem = int(obs.node_free[server, :, 1].sum())
        else:
            free_cpu = int(obs.node_free[server, numa, 0])
            free_mem = int(obs.node_free[server, numa, 1])
        key = (free_cpu - obs.request_cpu, free_mem - obs.request_mem, action)
        if best_key is None or key < best_key:
            best_key = key
            best = action
    if best is None:
        raise AssertionError("no feasible entry")
    return best


def make_observation(node_free, request, is_large_flag=False,
                     node_capacity=(20, 45), server_capacity=(40, 90)):
    """Observation built straight from arrays (no environment needed)."""
    arr = np.asarray(node_free, dtype=np.int64)
    return Observation(
        node_free=arr,
        request_cpu=request[0],
        request_mem=request[1],
        request_is_large=is_large_flag,
        node_capacity=node_capacity,
        server_capacity=server_capacity,
    )


@pytest.fixture
def small_cfg():
    return ClusterConfig(n_servers=2, cpu=40, mem=90, double_numa=True)
