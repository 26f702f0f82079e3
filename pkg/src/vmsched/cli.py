"""Command-line entry point.

Subcommands: run, compare, validate-trace, gen-trace, trace-stats, benchmark.
Exit codes: 0 success, 1 domain error (invalid trace/config), 2 usage error.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time
from pathlib import Path

import yaml

from . import metrics
from .env import (
    EnvConfig,
    Scenario,
    SchedulingEnv,
    load_env_config,
    run_episode,
)
from .errors import InvalidConfig, VmschedError
from .sched import make_policy
from .trace import (
    Flavor,
    GenConfig,
    generate_trace,
    read_trace,
    serialize_trace,
    trace_stats,
    validate_trace,
)

log = logging.getLogger("vmsched")


class UsageError(Exception):
    """Bad arguments or inconsistent flags; maps to exit code 2."""


def main(argv=None) -> int:
    _configure_logging()
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse already printed the message
        return int(exc.code or 0)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except VmschedError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def _configure_logging() -> None:
    level = os.environ.get("VMSCHED_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="vmsched",
        description="Trace-driven VM scheduling simulator",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run one episode and emit records + charts")
    _add_episode_args(run)
    run.add_argument("--policy", required=True, help="first-fit|best-fit|random|linear-q:<weights>")
    run.add_argument("--seed", type=int, default=None, help="override the config seed")
    run.set_defaults(func=cmd_run)

    cmp_ = sub.add_parser("compare", help="run several policies across seeds")
    _add_episode_args(cmp_)
    cmp_.add_argument(
        "--policy",
        action="append",
        required=True,
        dest="policies",
        help="repeatable policy spec",
    )
    cmp_.add_argument(
        "--seeds",
        required=True,
        help="comma-separated seed list, e.g. 0,1,2",
    )
    cmp_.set_defaults(func=cmd_compare)

    val = sub.add_parser("validate-trace", help="report trace invariant violations")
    val.add_argument("trace", help="trace CSV path")
    val.set_defaults(func=cmd_validate_trace)

    gen = sub.add_parser("gen-trace", help="generate a synthetic trace")
    gen.add_argument("--gen-config", required=True, help="generator YAML path")
    gen.add_argument("--out", required=True, help="output trace CSV path")
    gen.set_defaults(func=cmd_gen_trace)

    stats = sub.add_parser("trace-stats", help="summarize a trace")
    stats.add_argument("trace", help="trace CSV path")
    stats.set_defaults(func=cmd_trace_stats)

    bench = sub.add_parser("benchmark", help="measure environment steps/second")
    bench.add_argument("--config", required=True, help="cluster/env YAML path")
    bench.add_argument("--steps", type=int, default=100_000, help="minimum steps to time")
    bench.add_argument("--policy", default="first-fit", help="policy spec to drive with")
    bench.add_argument("--seed", type=int, default=0)
    bench.set_defaults(func=cmd_benchmark)

    return parser


def _add_episode_args(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--config", required=True, help="cluster/env YAML path")
    sub.add_argument(
        "--scenario",
        required=True,
        choices=[s.value for s in Scenario],
    )
    sub.add_argument("--trace", required=True, help="trace CSV path")
    sub.add_argument("--out", required=True, help="output directory")
    sub.add_argument(
        "--reward-mode",
        choices=["per_alloc", "cpu_delta"],
        default=None,
        help="override the config reward mode",
    )


# --- commands ---

def cmd_run(args) -> int:
    cfg, scenario, trace = _load_episode_inputs(args)
    if args.seed is not None:
        cfg.seed = args.seed
    policy = _build_policy(args.policy, cfg.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    record = run_episode(cfg, scenario, trace, policy)
    record_path = out / f"{policy.name}-seed{record.seed}.ndjson"
    metrics.write_record(record, record_path)
    paths = metrics.render_charts([record], out)
    summary = metrics.summarize(record)
    print(
        f"{policy.name}: scheduled {summary.total_scheduled} VMs over "
        f"{summary.episode_length} steps, total reward {summary.total_reward:.1f}"
    )
    log.info("wrote %s and %d chart/report files", record_path, len(paths))
    return 0


def cmd_compare(args) -> int:
    cfg, scenario, trace = _load_episode_inputs(args)
    seeds = _parse_seeds(args.seeds)
    policy_specs = args.policies
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    records = []
    for spec in policy_specs:
        for seed in seeds:
            episode_cfg = EnvConfig(
                cluster=cfg.cluster,
                allow_release=cfg.allow_release,
                growing_threshold=cfg.growing_threshold,
                growing_nums=cfg.growing_nums,
                reward_mode=cfg.reward_mode,
                invalid_action_penalty=cfg.invalid_action_penalty,
                seed=seed,
            )
            policy = _build_policy(spec, seed)
            record = run_episode(episode_cfg, scenario, trace, policy)
            metrics.write_record(record, out / f"{policy.name}-seed{seed}.ndjson")
            records.append(record)

    table = metrics.compare(records)
    text = table.to_text()
    print(text)
    metrics.atomic_write_text(out / "summary.txt", text + "\n")
    metrics.render_charts(records, out)
    return 0


def cmd_validate_trace(args) -> int:
    _require_file(args.trace)
    trace = read_trace(args.trace)
    violations = validate_trace(trace)
    if violations:
        for v in violations:
            print(str(v))
        print(f"{len(violations)} violation(s) in {args.trace}", file=sys.stderr)
        return 1
    print(f"trace OK: {len(trace)} requests, {len(trace.flavor_catalog)} flavors")
    return 0


def cmd_gen_trace(args) -> int:
    _require_file(args.gen_config)
    cfg = _load_gen_config(args.gen_config)
    trace = generate_trace(cfg)
    metrics.atomic_write_text(args.out, serialize_trace(trace))
    print(f"wrote {len(trace)} requests to {args.out}")
    return 0


def cmd_trace_stats(args) -> int:
    _require_file(args.trace)
    stats = trace_stats(read_trace(args.trace))
    print(json.dumps(stats.__dict__, indent=2))
    return 0


def cmd_benchmark(args) -> int:
    _require_file(args.config)
    base = load_env_config(args.config)
    # recovering-style load at ~25% cpu so the episode never starves
    cfg = EnvConfig(cluster=base.cluster, allow_release=True, seed=args.seed)
    policy = _build_policy(args.policy, args.seed)
    mean_cpu = 2.0
    lifetime = max(1.0, 0.25 * base.cluster.n_servers * base.cluster.cpu / mean_cpu)
    gen = GenConfig(
        n_alloc=max(args.steps, 1),
        release_prob=1.0,
        flavor_weights={
            Flavor(1, 1): 1.0,
            Flavor(1, 2): 1.0,
            Flavor(2, 4): 1.0,
            Flavor(4, 8): 1.0,
        },
        mean_lifetime=lifetime,
        seed=args.seed,
    )
    trace = generate_trace(gen)

    steps = 0
    start = time.perf_counter()
    episode = 0
    while steps < args.steps:
        env = SchedulingEnv(cfg, Scenario.RECOVERING, trace)
        obs = env.reset()
        while not env.done:
            action = policy(obs, env.action_mask())
            obs = env.step(action).obs
            steps += 1
        episode += 1
    elapsed = time.perf_counter() - start
    print(
        json.dumps(
            {
                "steps": steps,
                "episodes": episode,
                "seconds": round(elapsed, 3),
                "steps_per_sec": round(steps / elapsed, 1),
            }
        )
    )
    return 0


# --- helpers ---

def _load_episode_inputs(args):
    _require_file(args.config)
    _require_file(args.trace)
    cfg = load_env_config(args.config)
    scenario = Scenario.parse(args.scenario)
    if args.reward_mode:
        cfg.reward_mode = args.reward_mode
    _check_scenario_config(scenario, cfg)
    trace = read_trace(args.trace)
    return cfg, scenario, trace


def _check_scenario_config(scenario: Scenario, cfg: EnvConfig) -> None:
    """Flag/config mismatches are usage errors, not domain errors."""
    if scenario is Scenario.FADING and cfg.allow_release:
        raise UsageError("--scenario fading requires allow_release: false in the config")
    if scenario is Scenario.RECOVERING:
        if not cfg.allow_release:
            raise UsageError("--scenario recovering requires allow_release: true")
        if cfg.growing_threshold is not None:
            raise UsageError("--scenario recovering conflicts with growing_threshold")
    if scenario is Scenario.EXPANSION and cfg.growing_threshold is None:
        raise UsageError("--scenario expansion requires growing_threshold in the config")


def _build_policy(spec: str, seed: int):
    if spec.startswith("linear-q:"):
        weights_path = spec.split(":", 1)[1]
        _require_file(weights_path)
        policy = make_policy(spec, seed)
        policy.name = f"linear-q-{Path(weights_path).stem}"
        return policy
    try:
        return make_policy(spec, seed)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _parse_seeds(text: str) -> list[int]:
    try:
        seeds = [int(s) for s in text.split(",") if s.strip() != ""]
    except ValueError:
        raise UsageError(f"--seeds must be a comma-separated integer list, got {text!r}")
    if not seeds:
        raise UsageError("--seeds must name at least one seed")
    return seeds


def _require_file(path) -> None:
    if not os.path.isfile(path):
        raise UsageError(f"no such file: {path}")
    if not os.access(path, os.R_OK):
        raise UsageError(f"file not readable: {path}")


def _load_gen_config(path) -> GenConfig:
    with open(path, "r", encoding="utf-8") as f:
        doc = yaml.safe_load(f)
    if not isinstance(doc, dict):
        raise InvalidConfig("generator config must be a mapping")
    flavors = doc.get("flavors")
    if not flavors:
        raise InvalidConfig("generator config needs a non-empty flavors list")
    try:
        weights = {
            Flavor(int(f["cpu"]), int(f["mem"])): float(f.get("weight", 1.0))
            for f in flavors
        }
        return GenConfig(
            n_alloc=int(doc["n_alloc"]),
            release_prob=float(doc.get("release_prob", 0.0)),
            flavor_weights=weights,
            mean_lifetime=float(doc.get("mean_lifetime", 100.0)),
            seed=int(doc.get("seed", 0)),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise InvalidConfig(f"bad generator config: {exc}") from None


if __name__ == "__main__":
    sys.exit(main())
