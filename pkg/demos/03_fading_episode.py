"""
A fading episode, step by step
==============================

Fading traces contain only allocations; the episode ends at the first
request that no action can place.  Here best-fit drives a small cluster
until it fills up.
"""

from vmsched import (
    BestFit,
    ClusterConfig,
    EnvConfig,
    Flavor,
    GenConfig,
    Scenario,
    SchedulingEnv,
    generate_trace,
    run_episode,
    summarize,
)

cfg = EnvConfig(
    cluster=ClusterConfig(n_servers=2, cpu=40, mem=90),
    allow_release=False,
)
trace = generate_trace(
    GenConfig(
        n_alloc=60,
        flavor_weights={Flavor(2, 4): 1.0, Flavor(4, 8): 1.0, Flavor(16, 32): 0.5},
        seed=3,
    )
)

# Drive the environment by hand to see the interface: reset gives the
# observation for the first pending request, action_mask marks feasible
# (server, numa) slots, step applies one placement.
env = SchedulingEnv(cfg, Scenario.FADING, trace)
obs = env.reset()
policy = BestFit()
while not env.done:
    mask = env.action_mask()
    action = policy(obs, mask)
    result = env.step(action)
    obs = result.obs
info = env.info()
print("scheduled:", info["scheduled_total"], "of", len(trace), "requests")
print("final utilization:", env.cluster.utilization())

# run_episode wraps the same loop and returns the per-step record stream.
record = run_episode(cfg, Scenario.FADING, trace, BestFit())
print(summarize(record))

# In fading, free resources never grow back: the cpu curve is monotone.
cpu = [step.cpu_used_frac for step in record.steps]
assert cpu == sorted(cpu)
print("cpu used fraction climbs from", round(cpu[0], 3), "to", round(cpu[-1], 3))
