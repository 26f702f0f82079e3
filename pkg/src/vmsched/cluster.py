"""NUMA-aware cluster state: capacity accounting, placement, release, expansion.

A cluster is a list of identical servers.  With ``double_numa`` each server
has two symmetric nodes holding half the server's CPU and memory; small VMs
occupy one node, large VMs straddle both at half their demand each.
Mutating operations update the state in place under exclusive access;
:meth:`Cluster.copy` takes a deep snapshot for value-style comparisons.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import DuplicateVm, Infeasible, InvalidConfig, InvalidFlavor, UnknownVm
from .trace import Flavor


@dataclass(frozen=True)
class ResourceVec:
    """A (cpu, mem) pair; the atomic accounting unit."""

    cpu: int
    mem: int

    def __add__(self, other: "ResourceVec") -> "ResourceVec":
        return ResourceVec(self.cpu + other.cpu, self.mem + other.mem)

    def __sub__(self, other: "ResourceVec") -> "ResourceVec":
        return ResourceVec(self.cpu - other.cpu, self.mem - other.mem)

    def covers(self, other: "ResourceVec") -> bool:
        return self.cpu >= other.cpu and self.mem >= other.mem

    def half(self) -> "ResourceVec":
        if self.cpu % 2 or self.mem % 2:
            raise ValueError(f"cannot halve odd resources {self}")
        return ResourceVec(self.cpu // 2, self.mem // 2)


@dataclass
class ClusterConfig:
    """Shape of the cluster: server count, per-server resources, NUMA layout."""

    n_servers: int
    cpu: int
    mem: int
    double_numa: bool = True
    max_servers: Optional[int] = None  # defaults to 10x the initial count
    large_cpu_threshold: int = 8

    def __post_init__(self):
        if self.max_servers is None:
            self.max_servers = 10 * self.n_servers
        if self.n_servers < 1:
            raise InvalidConfig(f"n_servers must be >= 1, got {self.n_servers}")
        if self.cpu < 1 or self.mem < 1:
            raise InvalidConfig(f"cpu and mem must be >= 1, got {self.cpu}, {self.mem}")
        if self.max_servers < self.n_servers:
            raise InvalidConfig(
                f"max_servers {self.max_servers} below n_servers {self.n_servers}"
            )
        if self.double_numa and (self.cpu % 2 or self.mem % 2):
            raise InvalidConfig(
                f"double_numa requires even cpu and mem, got {self.cpu}, {self.mem}"
            )
        if self.large_cpu_threshold < 1:
            raise InvalidConfig("large_cpu_threshold must be >= 1")

    @property
    def nodes_per_server(self) -> int:
        return 2 if self.double_numa else 1

    @property
    def node_capacity(self) -> ResourceVec:
        if self.double_numa:
            return ResourceVec(self.cpu // 2, self.mem // 2)
        return ResourceVec(self.cpu, self.mem)

    @property
    def server_capacity(self) -> ResourceVec:
        return ResourceVec(self.cpu, self.mem)


@dataclass(frozen=True)
class Placement:
    """Where a VM sits: (server, numa); numa is None when it spans both nodes."""

    server: int
    numa: Optional[int]

    @property
    def spans_both(self) -> bool:
        return self.numa is None


@dataclass(frozen=True)
class VmRecord:
    vm_id: str
    flavor: Flavor
    placement: Placement


@dataclass(frozen=True)
class Utilization:
    cpu_used_frac: float
    mem_used_frac: float


def is_large(flavor: Flavor, cfg: ClusterConfig) -> bool:
    """Whether the flavor straddles both NUMA nodes of a server.

    Large means it exceeds half a server on either resource, or its cpu
    reaches the configured threshold.  Single-NUMA clusters have no split,
    so nothing is large there.
    """
    if not cfg.double_numa:
        return False
    return (
        flavor.cpu * 2 > cfg.cpu
        or flavor.mem * 2 > cfg.mem
        or flavor.cpu >= cfg.large_cpu_threshold
    )


def check_flavor(flavor: Flavor, cfg: ClusterConfig) -> None:
    """Reject flavors that cannot be charged exactly under this config."""
    if is_large(flavor, cfg) and (flavor.cpu % 2 or flavor.mem % 2):
        raise InvalidFlavor(
            f"large flavor {flavor} must have even cpu and mem to split across nodes"
        )


class Cluster:
    """Mutable cluster state: per-node free resources plus the live-VM registry."""

    def __init__(self, config: ClusterConfig):
        self.config = config
        cap = config.node_capacity
        shape = (config.n_servers, config.nodes_per_server, 2)
        self.free = np.empty(shape, dtype=np.int64)
        self.free[:, :, 0] = cap.cpu
        self.free[:, :, 1] = cap.mem
        self.live_vms: dict[str, VmRecord] = {}

    # --- views ---

    @property
    def server_count(self) -> int:
        return self.free.shape[0]

    @property
    def nodes_per_server(self) -> int:
        return self.free.shape[1]

    @property
    def action_space_size(self) -> int:
        return self.server_count * self.nodes_per_server

    def node_free(self, server: int, numa: int) -> ResourceVec:
        cpu, mem = self.free[server, numa]
        return ResourceVec(int(cpu), int(mem))

    def utilization(self) -> Utilization:
        cap = self.config.node_capacity
        n_nodes = self.server_count * self.nodes_per_server
        free_cpu, free_mem = self.free.sum(axis=(0, 1))
        return Utilization(
            cpu_used_frac=float(1.0 - free_cpu / (cap.cpu * n_nodes)),
            mem_used_frac=float(1.0 - free_mem / (cap.mem * n_nodes)),
        )

    # --- placement ---

    def can_place(self, server: int, numa: int, flavor: Flavor) -> bool:
        """Feasibility of one (server, numa) action; numa is ignored for large flavors."""
        if not (0 <= server < self.server_count and 0 <= numa < self.nodes_per_server):
            return False
        if is_large(flavor, self.config):
            half_cpu, half_mem = flavor.cpu // 2, flavor.mem // 2
            node = self.free[server]
            return bool(
                (node[:, 0] >= half_cpu).all() and (node[:, 1] >= half_mem).all()
            )
        node = self.free[server, numa]
        return bool(node[0] >= flavor.cpu and node[1] >= flavor.mem)

    def feasible_actions(self, flavor: Flavor) -> np.ndarray:
        """Boolean mask over the flat (server-major, numa-minor) action space."""
        if is_large(flavor, self.config):
            need = np.array([flavor.cpu // 2, flavor.mem // 2], dtype=np.int64)
            per_server = (self.free >= need).all(axis=2).all(axis=1)
            return np.repeat(per_server, self.nodes_per_server)
        need = np.array([flavor.cpu, flavor.mem], dtype=np.int64)
        return (self.free >= need).all(axis=2).reshape(-1)

    def place(self, vm_id: str, flavor: Flavor, server: int, numa: int) -> VmRecord:
        if vm_id in self.live_vms:
            raise DuplicateVm(f"vm {vm_id!r} is already live")
        check_flavor(flavor, self.config)
        if not self.can_place(server, numa, flavor):
            raise Infeasible(
                f"flavor {flavor} does not fit at server {server} numa {numa}"
            )
        if is_large(flavor, self.config):
            self.free[server, :, 0] -= flavor.cpu // 2
            self.free[server, :, 1] -= flavor.mem // 2
            placement = Placement(server, None)
        else:
            self.free[server, numa, 0] -= flavor.cpu
            self.free[server, numa, 1] -= flavor.mem
            placement = Placement(server, numa)
        record = VmRecord(vm_id, flavor, placement)
        self.live_vms[vm_id] = record
        return record

    def release(self, vm_id: str) -> VmRecord:
        """Free exactly what was charged at placement time."""
        record = self.live_vms.pop(vm_id, None)
        if record is None:
            raise UnknownVm(f"vm {vm_id!r} is not live")
        flavor, placement = record.flavor, record.placement
        if placement.spans_both:
            self.free[placement.server, :, 0] += flavor.cpu // 2
            self.free[placement.server, :, 1] += flavor.mem // 2
        else:
            self.free[placement.server, placement.numa, 0] += flavor.cpu
            self.free[placement.server, placement.numa, 1] += flavor.mem
        return record

    def expand(self, count: int) -> int:
        """Append up to ``count`` empty servers; returns how many were added."""
        if count < 0:
            raise ValueError("expand count must be >= 0")
        added = min(count, self.config.max_servers - self.server_count)
        if added <= 0:
            return 0
        cap = self.config.node_capacity
        fresh = np.empty((added, self.nodes_per_server, 2), dtype=np.int64)
        fresh[:, :, 0] = cap.cpu
        fresh[:, :, 1] = cap.mem
        self.free = np.concatenate([self.free, fresh])
        return added

    # --- action indexing ---

    def flat_action(self, server: int, numa: int) -> int:
        return server * self.nodes_per_server + numa

    def split_action(self, action: int) -> tuple[int, int]:
        return divmod(action, self.nodes_per_server)

    # --- value semantics ---

    def copy(self) -> "Cluster":
        dup = Cluster.__new__(Cluster)
        dup.config = self.config
        dup.free = self.free.copy()
        dup.live_vms = dict(self.live_vms)
        return dup

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, Cluster)
            and self.config == other.config
            and self.free.shape == other.free.shape
            and np.array_equal(self.free, other.free)
            and self.live_vms == other.live_vms
        )

    def snapshot(self) -> dict:
        """JSON-ready view of the full state (debugging and metrics)."""
        cap = self.config.node_capacity
        cap_doc = {"cpu": cap.cpu, "mem": cap.mem}
        servers = [
            {
                "nodes": [
                    {
                        "free": {"cpu": int(node[0]), "mem": int(node[1])},
                        "capacity": cap_doc,
                    }
                    for node in server
                ]
            }
            for server in self.free
        ]
        live_vms = [
            {
                "vm_id": rec.vm_id,
                "flavor": {"cpu": rec.flavor.cpu, "mem": rec.flavor.mem},
                "placement": {"server": rec.placement.server, "numa": rec.placement.numa},
            }
            for rec in sorted(self.live_vms.values(), key=lambda r: r.vm_id)
        ]
        return {"servers": servers, "live_vms": live_vms}

    def check_invariants(self) -> None:
        """Assert conservation and bounds; used by tests and debug runs."""
        cap = self.config.node_capacity
        charged = np.zeros_like(self.free)
        for rec in self.live_vms.values():
            f, p = rec.flavor, rec.placement
            if p.spans_both:
                charged[p.server, :, 0] += f.cpu // 2
                charged[p.server, :, 1] += f.mem // 2
            else:
                charged[p.server, p.numa, 0] += f.cpu
                charged[p.server, p.numa, 1] += f.mem
        capacity = np.empty_like(self.free)
        capacity[:, :, 0] = cap.cpu
        capacity[:, :, 1] = cap.mem
        if not np.array_equal(capacity - self.free, charged):
            raise AssertionError("conservation violated: capacity - free != charged sum")
        if (self.free < 0).any():
            raise AssertionError("negative free resources")
        if (self.free > capacity).any():
            raise AssertionError("free resources exceed capacity")
        if not self.config.n_servers <= self.server_count <= self.config.max_servers:
            raise AssertionError("server count outside configured bounds")
