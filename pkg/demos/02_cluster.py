"""
NUMA-aware cluster accounting
=============================

Place and release VMs on double-NUMA servers, watch the conservation of
resources, and grow the cluster.
"""

import json

from vmsched import Cluster, ClusterConfig, Flavor, is_large

# Each server has 40 cores and 90 GB split evenly over two NUMA nodes,
# so a node offers (20, 45).
cfg = ClusterConfig(n_servers=2, cpu=40, mem=90, double_numa=True)
cluster = Cluster(cfg)
print("node 0 of server 0:", cluster.node_free(0, 0))

# Small flavors occupy a single node.
cluster.place("web-1", Flavor(4, 8), server=0, numa=0)
print("after placing (4, 8):", cluster.node_free(0, 0))

# Flavors at or above the cpu threshold (default 8) straddle both nodes,
# charged half to each.
big = Flavor(8, 16)
print("(8, 16) is large:", is_large(big, cfg))
cluster.place("db-1", big, server=1, numa=0)
print("server 1 nodes:", cluster.node_free(1, 0), cluster.node_free(1, 1))

# Utilization is the used fraction of total capacity per resource.
print("utilization:", cluster.utilization())

# The feasibility mask flattens (server, numa) pairs server-major; for a
# large flavor both entries of a feasible server are true.
print("mask for (8, 16):", cluster.feasible_actions(big))

# Releases restore exactly what placement charged.
before = cluster.copy()
cluster.place("tmp", Flavor(2, 2), 0, 1)
cluster.release("tmp")
assert cluster == before
print("place + release is the identity")

# Expansion appends empty servers, capped by max_servers (default 10x).
added = cluster.expand(3)
print(f"expanded by {added}, now {cluster.server_count} servers")
cluster.check_invariants()

# Snapshots are plain JSON documents.
print(json.dumps(cluster.snapshot()["live_vms"], indent=2))
