"""Acceptance gate: one test per release criterion, at its stated tolerance.

Each test prints ``ACCEPTANCE PASS: <criterion>`` when its assertions hold
(run with ``pytest -s tests/test_acceptance.py`` to see the lines).
"""

import contextlib
import json
import random
import time

import numpy as np
import pytest

from vmsched.cli import main
from vmsched.cluster import Cluster, ClusterConfig, is_large
from vmsched.env import EnvConfig, Scenario, SchedulingEnv, load_env_config, run_episode
from vmsched.sched import (
    BestFit,
    FirstFit,
    LinearQParams,
    LinearQPolicy,
    RandomPolicy,
    train_linear_q,
)
from vmsched.trace import Flavor, GenConfig, Trace, generate_trace, write_trace

from conftest import (
    make_observation,
    random_flavor,
    reference_best_fit,
    reference_first_fit,
    reference_mask,
)

PAPER_YAML = """\
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


@contextlib.contextmanager
def criterion(name):
    try:
        yield
    except BaseException:
        print(f"ACCEPTANCE FAIL: {name}")
        raise
    print(f"ACCEPTANCE PASS: {name}")


def test_config_fidelity(tmp_path):
    with criterion("config fidelity"):
        start = time.perf_counter()
        path = tmp_path / "paper.yaml"
        path.write_text(PAPER_YAML)
        cfg = load_env_config(path)
        assert cfg.cluster.n_servers == 100
        assert cfg.growing_threshold == 0.8
        assert cfg.growing_nums == 20

        cluster = Cluster(cfg.cluster)
        assert cluster.server_count == 100
        assert (cluster.free[:, :, 0] == 20).all()
        assert (cluster.free[:, :, 1] == 45).all()

        # expansion moves in batches of growing_nums until the cap bites
        assert cluster.expand(cfg.growing_nums) == 20
        assert cluster.server_count == 120
        while cluster.expand(cfg.growing_nums):
            pass
        assert cluster.server_count == cfg.cluster.max_servers == 1000
        assert time.perf_counter() - start < 1.0


def test_conservation_fuzz():
    with criterion("conservation fuzz (1e5 ops, 200 seeds)"):
        start = time.perf_counter()
        total_ops = 0
        for seed in range(200):
            rng = random.Random(seed)
            cfg = ClusterConfig(
                n_servers=rng.randint(1, 4),
                cpu=40,
                mem=90,
                double_numa=rng.random() < 0.8,
                max_servers=rng.randint(5, 10),
            )
            cluster = Cluster(cfg)
            cap = cfg.node_capacity
            charged = np.zeros_like(cluster.free)
            counter = 0
            for _ in range(500):
                roll = rng.random()
                if roll < 0.5:
                    flavor = random_flavor(rng, cfg)
                    feasible = np.flatnonzero(cluster.feasible_actions(flavor))
                    if feasible.size:
                        action = int(feasible[rng.randrange(feasible.size)])
                        server, numa = cluster.split_action(action)
                        cluster.place(f"v{counter}", flavor, server, numa)
                        counter += 1
                        if is_large(flavor, cfg):
                            charged[server, :, 0] += flavor.cpu // 2
                            charged[server, :, 1] += flavor.mem // 2
                        else:
                            charged[server, numa, 0] += flavor.cpu
                            charged[server, numa, 1] += flavor.mem
                elif roll < 0.85 and cluster.live_vms:
                    vm_id = rng.choice(sorted(cluster.live_vms))
                    record = cluster.release(vm_id)
                    f, p = record.flavor, record.placement
                    if p.spans_both:
                        charged[p.server, :, 0] -= f.cpu // 2
                        charged[p.server, :, 1] -= f.mem // 2
                    else:
                        charged[p.server, p.numa, 0] -= f.cpu
                        charged[p.server, p.numa, 1] -= f.mem
                else:
                    added = cluster.expand(rng.randint(0, 3))
                    if added:
                        grown = np.zeros(
                            (added, cfg.nodes_per_server, 2), dtype=np.int64
                        )
                        charged = np.concatenate([charged, grown])
                total_ops += 1
                capacity = np.empty_like(cluster.free)
                capacity[:, :, 0] = cap.cpu
                capacity[:, :, 1] = cap.mem
                assert np.array_equal(capacity - cluster.free, charged)
                assert (cluster.free >= 0).all()
        assert total_ops == 100_000
        assert time.perf_counter() - start < 60.0


def test_place_release_round_trip_identity():
    with criterion("round-trip identity (1e4 states)"):
        checked = 0
        for seed in range(20):
            rng = random.Random(1000 + seed)
            cfg = ClusterConfig(
                n_servers=rng.randint(1, 5), cpu=40, mem=90,
                double_numa=rng.random() < 0.8,
            )
            cluster = Cluster(cfg)
            counter = 0
            while checked < (seed + 1) * 500:
                # random walk keeps producing fresh reachable states
                if cluster.live_vms and rng.random() < 0.4:
                    cluster.release(rng.choice(sorted(cluster.live_vms)))
                flavor = random_flavor(rng, cfg)
                feasible = np.flatnonzero(cluster.feasible_actions(flavor))
                if feasible.size == 0:
                    if cluster.live_vms:
                        cluster.release(rng.choice(sorted(cluster.live_vms)))
                    continue
                action = int(feasible[rng.randrange(feasible.size)])
                before = cluster.copy()
                server, numa = cluster.split_action(action)
                cluster.place("probe", flavor, server, numa)
                cluster.release("probe")
                assert cluster == before
                checked += 1
                # keep some placements so the walk visits loaded states
                if rng.random() < 0.6:
                    cluster.place(f"v{counter}", flavor, server, numa)
                    counter += 1
        assert checked == 10_000


def test_mask_equals_exhaustive_sweep():
    with criterion("mask oracle (1e3 states)"):
        states = 0
        for seed in range(100):
            rng = random.Random(2000 + seed)
            cfg = ClusterConfig(
                n_servers=rng.randint(1, 5), cpu=40, mem=90,
                double_numa=rng.random() < 0.8,
            )
            from conftest import random_cluster

            cluster = random_cluster(rng, cfg, n_ops=rng.randint(5, 60))
            for _ in range(10):
                flavor = random_flavor(rng, cfg)
                mask = cluster.feasible_actions(flavor)
                sweep = [
                    cluster.can_place(*cluster.split_action(a), flavor)
                    for a in range(cluster.action_space_size)
                ]
                assert mask.tolist() == sweep
                assert mask.tolist() == reference_mask(cluster, flavor)
                states += 1
        assert states == 1000


def test_heuristics_equal_brute_force_reference():
    with criterion("heuristic oracle (1e3 instances)"):
        instances = 0
        for seed in range(1000):
            rng = random.Random(3000 + seed)
            cfg = ClusterConfig(n_servers=rng.randint(1, 5), cpu=40, mem=90)
            n_alloc = rng.randint(1, 25)  # with releases: at most 50 requests
            gen = GenConfig(
                n_alloc=n_alloc,
                release_prob=rng.random(),
                flavor_weights={
                    Flavor(1, 2): 1.0,
                    Flavor(2, 4): 1.0,
                    Flavor(4, 8): 1.0,
                    Flavor(8, 16): 0.7,
                    Flavor(16, 32): 0.3,
                },
                mean_lifetime=rng.randint(1, 15),
                seed=seed,
            )
            trace = generate_trace(gen)
            assert len(trace) <= 50
            driver = BestFit() if seed % 2 else FirstFit()
            env = SchedulingEnv(
                EnvConfig(cluster=cfg, allow_release=True),
                Scenario.RECOVERING,
                trace,
            )
            obs = env.reset()
            while not env.done:
                mask = env.action_mask()
                assert FirstFit()(obs, mask) == reference_first_fit(mask)
                assert BestFit()(obs, mask) == reference_best_fit(obs, mask)
                obs = env.step(driver(obs, mask)).obs
            instances += 1
        assert instances == 1000


# --- scenario semantics ---

def _drive(env, policy):
    obs = env.reset()
    while not env.done:
        obs = env.step(policy(obs, env.action_mask())).obs
    return env


def _replay_expansion_first_fit(trace, cluster_cfg, threshold, growing_nums):
    """Plain-Python re-implementation of the expansion episode under first-fit.

    Returns per-step (batches_fired, servers_after) plus totals, for checking
    the real environment against independent accounting.
    """
    half_cpu, half_mem = cluster_cfg.cpu // 2, cluster_cfg.mem // 2
    free = [[half_cpu, half_mem] for _ in range(2 * cluster_cfg.n_servers)]
    live = {}
    thr_cpu = cluster_cfg.large_cpu_threshold

    def large(flavor):
        return (
            flavor.cpu * 2 > cluster_cfg.cpu
            or flavor.mem * 2 > cluster_cfg.mem
            or flavor.cpu >= thr_cpu
        )

    def first_fit_slot(flavor):
        if large(flavor):
            need_c, need_m = flavor.cpu // 2, flavor.mem // 2
            for s in range(len(free) // 2):
                a, b = free[2 * s], free[2 * s + 1]
                if a[0] >= need_c and a[1] >= need_m and b[0] >= need_c and b[1] >= need_m:
                    return ("both", s)
            return None
        for i, node in enumerate(free):
            if node[0] >= flavor.cpu and node[1] >= flavor.mem:
                return ("one", i)
        return None

    def used_cpu_frac():
        total = half_cpu * len(free)
        return 1.0 - sum(n[0] for n in free) / total

    steps = []
    scheduled = 0
    cursor = 0
    requests = trace.requests
    # advance to first alloc (valid traces have no leading releases)
    while cursor < len(requests) and not requests[cursor].is_alloc:
        cursor += 1
    while cursor < len(requests):
        request = requests[cursor]
        slot = first_fit_slot(request.flavor)
        if slot is None:
            break  # mirrors termination on an empty mask at the pending request
        if slot[0] == "both":
            s = slot[1]
            for node in (free[2 * s], free[2 * s + 1]):
                node[0] -= request.flavor.cpu // 2
                node[1] -= request.flavor.mem // 2
        else:
            free[slot[1]][0] -= request.flavor.cpu
            free[slot[1]][1] -= request.flavor.mem
        live[request.vm_id] = (request.flavor, slot)
        scheduled += 1
        cursor += 1
        while cursor < len(requests) and not requests[cursor].is_alloc:
            flavor, slot2 = live.pop(requests[cursor].vm_id)
            if slot2[0] == "both":
                s = slot2[1]
                for node in (free[2 * s], free[2 * s + 1]):
                    node[0] += flavor.cpu // 2
                    node[1] += flavor.mem // 2
            else:
                free[slot2[1]][0] += flavor.cpu
                free[slot2[1]][1] += flavor.mem
            cursor += 1
        pending = requests[cursor] if cursor < len(requests) else None
        batches = 0
        while True:
            starved = pending is not None and first_fit_slot(pending.flavor) is None
            if used_cpu_frac() < threshold and not starved:
                break
            room = cluster_cfg.max_servers - len(free) // 2
            added = min(growing_nums, room)
            if added <= 0:
                break
            free.extend([half_cpu, half_mem] for _ in range(2 * added))
            batches += 1
        steps.append((batches, len(free) // 2))
        if pending is not None and first_fit_slot(pending.flavor) is None:
            break
    return steps, scheduled


def test_scenario_semantics():
    with criterion("scenario semantics (fading/recovering/expansion)"):
        # fading: total free resources never increase
        for seed in range(10):
            gen = GenConfig(
                n_alloc=120,
                flavor_weights={Flavor(2, 4): 1.0, Flavor(8, 16): 0.5},
                seed=seed,
            )
            cfg = EnvConfig(
                cluster=ClusterConfig(n_servers=3, cpu=40, mem=90),
                allow_release=False,
            )
            env = SchedulingEnv(cfg, Scenario.FADING, generate_trace(gen))
            obs = env.reset()
            policy = RandomPolicy(seed)
            last = env.cluster.free.sum(axis=(0, 1))
            while not env.done:
                obs = env.step(policy(obs, env.action_mask())).obs
                now = env.cluster.free.sum(axis=(0, 1))
                assert (now <= last).all()
                last = now
            assert env.cluster.server_count == 3

        # recovering: fully-released traces end with an empty cluster
        for seed in range(10):
            gen = GenConfig(
                n_alloc=80,
                release_prob=1.0,
                flavor_weights={Flavor(1, 2): 1.0, Flavor(2, 4): 1.0},
                mean_lifetime=12,
                seed=seed,
            )
            cfg = EnvConfig(
                cluster=ClusterConfig(n_servers=4, cpu=40, mem=90),
                allow_release=True,
            )
            env = _drive(
                SchedulingEnv(cfg, Scenario.RECOVERING, generate_trace(gen)),
                FirstFit(),
            )
            info = env.info()
            assert info["scheduled_total"] == 80, "early termination spoils the check"
            assert env.cluster.live_vms == {}
            cap = env.cluster.config.node_capacity
            assert (env.cluster.free[:, :, 0] == cap.cpu).all()
            assert (env.cluster.free[:, :, 1] == cap.mem).all()
            assert env.cluster.server_count == 4

        # expansion: fires iff threshold or imminent failure, 20 servers a batch
        cluster_cfg = ClusterConfig(
            n_servers=20, cpu=40, mem=90, max_servers=400
        )
        env_cfg = EnvConfig(
            cluster=cluster_cfg,
            allow_release=True,
            growing_threshold=0.8,
            growing_nums=20,
        )
        for seed in range(20):
            gen = GenConfig(
                n_alloc=600,
                release_prob=0.3,
                flavor_weights={
                    Flavor(1, 2): 1.0,
                    Flavor(2, 4): 1.0,
                    Flavor(4, 8): 1.0,
                    Flavor(8, 16): 0.5,
                },
                mean_lifetime=100,
                seed=seed,
            )
            trace = generate_trace(gen)
            record = run_episode(env_cfg, Scenario.EXPANSION, trace, FirstFit())
            expected_steps, expected_scheduled = _replay_expansion_first_fit(
                trace, cluster_cfg, 0.8, 20
            )
            assert record.totals["scheduled_total"] == expected_scheduled
            assert len(record.steps) == len(expected_steps)
            servers = cluster_cfg.n_servers
            fired_total = 0
            for entry, (batches, servers_after) in zip(record.steps, expected_steps):
                assert entry.server_count == servers_after
                # each firing adds exactly growing_nums servers
                assert entry.server_count - servers == 20 * batches
                servers = entry.server_count
                fired_total += batches
            assert record.totals["expansions"] == fired_total
            assert record.totals["servers_added"] == 20 * fired_total
            assert fired_total >= 1, "test traces must actually trigger expansion"


def test_compare_determinism(tmp_path):
    with criterion("determinism (5 policies x 10 seeds, byte-identical)"):
        config = tmp_path / "recovering.yaml"
        config.write_text(
            "cluster_args:\n"
            "    N: 2\n"
            "    CPU: 40\n"
            "    MEM: 90\n"
            "    double_numa: True\n"
            "env_args:\n"
            "    allow_release: True\n"
        )
        trace = generate_trace(
            GenConfig(
                n_alloc=40,
                release_prob=0.5,
                flavor_weights={Flavor(2, 4): 1.0, Flavor(8, 16): 0.5},
                mean_lifetime=10,
                seed=17,
            )
        )
        trace_path = tmp_path / "trace.csv"
        write_trace(trace, trace_path)

        w1 = tmp_path / "w1.json"
        w2 = tmp_path / "w2.json"
        LinearQPolicy(np.zeros(8)).save(w1)
        weights = np.zeros(8)
        weights[2] = -1.0
        weights[3] = -0.25
        LinearQPolicy(weights).save(w2)

        def invoke(out):
            return main(
                [
                    "compare",
                    "--config", str(config),
                    "--scenario", "recovering",
                    "--trace", str(trace_path),
                    "--policy", "first-fit",
                    "--policy", "best-fit",
                    "--policy", "random",
                    "--policy", f"linear-q:{w1}",
                    "--policy", f"linear-q:{w2}",
                    "--seeds", ",".join(str(s) for s in range(10)),
                    "--out", str(out),
                ]
            )

        assert invoke(tmp_path / "a") == 0
        assert invoke(tmp_path / "b") == 0
        files_a = sorted((tmp_path / "a").glob("*.ndjson"))
        assert len(files_a) == 50  # exactly k x s episodes
        for path_a in files_a:
            path_b = tmp_path / "b" / path_a.name
            assert path_a.read_bytes() == path_b.read_bytes()


def test_policy_ordering(tmp_path):
    with criterion("policy ordering (best-fit, first-fit, linear-q >= random)"):
        eval_cfg = EnvConfig(
            cluster=ClusterConfig(n_servers=10, cpu=40, mem=90),
            allow_release=True,
        )

        def eval_traces():
            for seed in range(100):
                yield generate_trace(
                    GenConfig(
                        n_alloc=300,
                        release_prob=0.6,
                        flavor_weights={
                            Flavor(1, 2): 1.0,
                            Flavor(2, 4): 1.0,
                            Flavor(4, 8): 1.0,
                            Flavor(8, 16): 1.0,
                            Flavor(16, 32): 0.5,
                        },
                        mean_lifetime=150,
                        seed=seed,
                    )
                )

        def train_factory(episode):
            # duress toys: a spread-out placement soon blocks a (16, 32) VM
            gen = GenConfig(
                n_alloc=50,
                release_prob=0.0,
                flavor_weights={
                    Flavor(2, 4): 1.0,
                    Flavor(4, 8): 1.0,
                    Flavor(16, 32): 1.5,
                },
                seed=10_000 + episode,
            )
            cfg = EnvConfig(
                cluster=ClusterConfig(n_servers=2, cpu=40, mem=90),
                allow_release=False,
            )
            return SchedulingEnv(cfg, Scenario.FADING, generate_trace(gen))

        trained = train_linear_q(
            train_factory,
            LinearQParams(
                learning_rate=0.03,
                discount=0.95,
                epsilon_start=1.0,
                epsilon_end=0.05,
                epsilon_decay_steps=10_000,
                episodes=1000,
                seed=1,
            ),
        )

        sums = {"best-fit": 0, "first-fit": 0, "linear-q": 0, "random": 0}
        for i, trace in enumerate(eval_traces()):
            policies = {
                "best-fit": BestFit(),
                "first-fit": FirstFit(),
                "linear-q": trained,
                "random": RandomPolicy(i),
            }
            for name, policy in policies.items():
                record = run_episode(eval_cfg, Scenario.RECOVERING, trace, policy)
                sums[name] += record.totals["scheduled_total"]

        means = {name: value / 100 for name, value in sums.items()}
        print(f"policy ordering means: {means}")
        assert means["best-fit"] >= means["random"]
        assert means["first-fit"] >= means["random"]
        assert means["linear-q"] >= means["random"]


def test_throughput(tmp_path, capsys):
    with criterion("throughput (>= 1e4 steps/s at N=100)"):
        config = tmp_path / "paper.yaml"
        config.write_text(PAPER_YAML)
        code = main(
            ["benchmark", "--config", str(config), "--steps", "100000"]
        )
        assert code == 0
        doc = json.loads(capsys.readouterr().out)
        assert doc["steps"] >= 100_000
        assert doc["steps_per_sec"] >= 10_000
