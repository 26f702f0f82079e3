"""
Training the linear Q baseline
==============================

A lightweight value learner over 8 hand-made features of each (state,
action) pair.  Trained on small high-pressure fading toys, it learns to
pack tightly and transfers to larger recovering scenarios.
"""

from pathlib import Path

from vmsched import (
    BestFit,
    ClusterConfig,
    EnvConfig,
    Flavor,
    GenConfig,
    LinearQParams,
    LinearQPolicy,
    RandomPolicy,
    Scenario,
    SchedulingEnv,
    generate_trace,
    run_episode,
    train_linear_q,
)
from vmsched.sched import FEATURE_NAMES


# Training environments: 2 servers, a flavor mix where greedy spreading
# soon strands the big (16, 32) VMs.  Each episode uses a fresh trace.
def factory(episode):
    trace = generate_trace(
        GenConfig(
            n_alloc=50,
            flavor_weights={Flavor(2, 4): 1.0, Flavor(4, 8): 1.0, Flavor(16, 32): 1.5},
            seed=90_000 + episode,
        )
    )
    cfg = EnvConfig(
        cluster=ClusterConfig(n_servers=2, cpu=40, mem=90), allow_release=False
    )
    return SchedulingEnv(cfg, Scenario.FADING, trace)


params = LinearQParams(
    learning_rate=0.03,
    discount=0.95,
    epsilon_start=1.0,
    epsilon_end=0.05,
    epsilon_decay_steps=10_000,
    episodes=1000,
    seed=1,
)
policy = train_linear_q(factory, params)

print("learned weights:")
for name, weight in zip(FEATURE_NAMES, policy.weights):
    print(f"  {name:14s} {weight:+.3f}")
print("negative free/residual weights mean: prefer the tightest node\n")

# Weights serialize to JSON and reload as a frozen policy
# (also usable from the CLI as --policy linear-q:<file>).
out = Path("demo-output")
out.mkdir(exist_ok=True)
policy.save(out / "linear-q.json")
reloaded = LinearQPolicy.load(out / "linear-q.json")

# Evaluate against random and best-fit on held-out recovering traces.
eval_cfg = EnvConfig(
    cluster=ClusterConfig(n_servers=10, cpu=40, mem=90), allow_release=True
)
sums = {"linear-q": 0, "random": 0, "best-fit": 0}
for seed in range(30):
    trace = generate_trace(
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
    for name, p in (
        ("linear-q", reloaded),
        ("random", RandomPolicy(seed)),
        ("best-fit", BestFit()),
    ):
        sums[name] += run_episode(
            eval_cfg, Scenario.RECOVERING, trace, p
        ).totals["scheduled_total"]

for name, total in sums.items():
    print(f"{name:10s} mean scheduled {total / 30:.1f}")
