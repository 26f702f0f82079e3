"""Episode records, run summaries, comparison tables, and static charts.

The interchange format between the environment and this module is NDJSON:
a header line carrying run identity and final counters, then one line per
step with the fields ``step, request_seq, action, reward, done,
cpu_used_frac, mem_used_frac, server_count``.
"""

from __future__ import annotations

import base64
import html
import io
import json
import os
import re
import tempfile
from dataclasses import dataclass, field
from typing import Iterable, Optional

from matplotlib.figure import Figure

STEP_FIELDS = (
    "step",
    "request_seq",
    "action",
    "reward",
    "done",
    "cpu_used_frac",
    "mem_used_frac",
    "server_count",
)


@dataclass(frozen=True)
class StepEntry:
    step: int
    request_seq: int
    action: int
    reward: float
    done: bool
    cpu_used_frac: float
    mem_used_frac: float
    server_count: int


@dataclass
class EpisodeRecord:
    """Per-step stream of one episode plus identifying header data."""

    scenario: str
    config_digest: str
    policy: str
    seed: int
    steps: list[StepEntry] = field(default_factory=list)
    totals: Optional[dict] = None  # final env info counters

    def append(self, entry: StepEntry) -> None:
        self.steps.append(entry)


@dataclass(frozen=True)
class RunSummary:
    total_scheduled: int
    episode_length: int
    mean_cpu_used_frac: float
    max_cpu_used_frac: float
    mean_mem_used_frac: float
    max_mem_used_frac: float
    total_reward: float
    expansions: int

    FIELDS = (
        "total_scheduled",
        "episode_length",
        "mean_cpu_used_frac",
        "max_cpu_used_frac",
        "mean_mem_used_frac",
        "max_mem_used_frac",
        "total_reward",
        "expansions",
    )


def summarize(record: EpisodeRecord) -> RunSummary:
    """Aggregate one episode; an empty record summarizes to all zeros."""
    steps = record.steps
    if not steps:
        return RunSummary(0, 0, 0.0, 0.0, 0.0, 0.0, 0.0, 0)
    totals = record.totals or {}
    cpu = [s.cpu_used_frac for s in steps]
    mem = [s.mem_used_frac for s in steps]
    expansions = totals.get("expansions")
    if expansions is None:
        # fall back to counting growth events visible in the step stream
        expansions = sum(
            1 for a, b in zip(steps, steps[1:]) if b.server_count > a.server_count
        )
    return RunSummary(
        total_scheduled=totals.get("scheduled_total", len(steps)),
        episode_length=len(steps),
        mean_cpu_used_frac=sum(cpu) / len(cpu),
        max_cpu_used_frac=max(cpu),
        mean_mem_used_frac=sum(mem) / len(mem),
        max_mem_used_frac=max(mem),
        total_reward=sum(s.reward for s in steps),
        expansions=expansions,
    )


# --- NDJSON io ---

def record_to_ndjson(record: EpisodeRecord) -> str:
    header = {
        "scenario": record.scenario,
        "config_digest": record.config_digest,
        "policy": record.policy,
        "seed": record.seed,
        "totals": record.totals if record.totals is not None else {},
    }
    lines = [json.dumps(header, separators=(",", ":"))]
    for s in record.steps:
        doc = {name: getattr(s, name) for name in STEP_FIELDS}
        lines.append(json.dumps(doc, separators=(",", ":")))
    return "\n".join(lines) + "\n"


def ndjson_to_record(text: str) -> EpisodeRecord:
    lines = [ln for ln in text.splitlines() if ln]
    if not lines:
        raise ValueError("empty NDJSON document")
    header = json.loads(lines[0])
    record = EpisodeRecord(
        scenario=header["scenario"],
        config_digest=header["config_digest"],
        policy=header["policy"],
        seed=header["seed"],
        totals=header.get("totals") or {},
    )
    for ln in lines[1:]:
        doc = json.loads(ln)
        record.append(StepEntry(**{name: doc[name] for name in STEP_FIELDS}))
    return record


def write_record(record: EpisodeRecord, path) -> None:
    atomic_write_text(path, record_to_ndjson(record))


def read_record(path) -> EpisodeRecord:
    with open(path, "r", encoding="utf-8") as f:
        return ndjson_to_record(f.read())


def atomic_write_text(path, text: str) -> None:
    atomic_write_bytes(path, text.encode("utf-8"))


def atomic_write_bytes(path, data: bytes) -> None:
    """Write via a temp file in the target directory, then rename into place."""
    path = os.fspath(path)
    directory = os.path.dirname(path) or "."
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-")
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


# --- comparison ---

@dataclass(frozen=True)
class ComparisonRow:
    policy: str
    seed: int
    scenario: str
    config_digest: str
    summary: RunSummary


@dataclass
class ComparisonTable:
    """Per-run summaries in input order, with digest consistency flagged."""

    rows: list[ComparisonRow]
    digests_match: bool

    def policy_means(self) -> dict[str, dict[str, float]]:
        """Field-wise means per policy, keyed in order of first appearance."""
        grouped: dict[str, list[RunSummary]] = {}
        for row in self.rows:
            grouped.setdefault(row.policy, []).append(row.summary)
        means = {}
        for policy, summaries in grouped.items():
            means[policy] = {
                name: sum(getattr(s, name) for s in summaries) / len(summaries)
                for name in RunSummary.FIELDS
            }
        return means

    def to_text(self) -> str:
        cols = ("policy", "seed") + RunSummary.FIELDS
        table = [cols]
        for row in self.rows:
            table.append(
                (row.policy, str(row.seed))
                + tuple(_fmt(getattr(row.summary, f)) for f in RunSummary.FIELDS)
            )
        widths = [max(len(r[i]) for r in table) for i in range(len(cols))]
        out = []
        for r in table:
            out.append("  ".join(cell.rjust(w) for cell, w in zip(r, widths)))
        if not self.digests_match:
            out.append("warning: runs use differing scenario/config digests")
        return "\n".join(out)


def _fmt(value) -> str:
    if isinstance(value, float):
        return f"{value:.4f}"
    return str(value)


def compare(runs: Iterable[EpisodeRecord]) -> ComparisonTable:
    runs = list(runs)
    if not runs:
        raise ValueError("compare needs at least one run")
    rows = [
        ComparisonRow(r.policy, r.seed, r.scenario, r.config_digest, summarize(r))
        for r in runs
    ]
    digests = {(r.scenario, r.config_digest) for r in runs}
    return ComparisonTable(rows=rows, digests_match=len(digests) == 1)


# --- charts ---

def utilization_figure(record: EpisodeRecord) -> Figure:
    """cpu/mem used fraction and server count, step by step, for one run."""
    fig = Figure(figsize=(8, 4.5))
    ax = fig.subplots()
    steps = [s.step for s in record.steps]
    ax.plot(steps, [s.cpu_used_frac for s in record.steps], label="cpu used frac")
    ax.plot(steps, [s.mem_used_frac for s in record.steps], label="mem used frac")
    ax.set_xlabel("step")
    ax.set_ylabel("used fraction")
    ax.set_ylim(0.0, 1.05)
    ax.set_title(f"{record.policy} (seed {record.seed}, {record.scenario})")
    if any(a.server_count != b.server_count for a, b in zip(record.steps, record.steps[1:])):
        ax2 = ax.twinx()
        ax2.plot(
            steps,
            [s.server_count for s in record.steps],
            color="tab:gray",
            linestyle=":",
            label="servers",
        )
        ax2.set_ylabel("servers")
    ax.legend(loc="lower right")
    fig.tight_layout()
    return fig


def overlay_figure(records: list[EpisodeRecord]) -> Figure:
    """cpu used fraction of every run on shared axes, one series per run."""
    fig = Figure(figsize=(8, 4.5))
    ax = fig.subplots()
    seen_policies = set()
    for record in records:
        if len(records) <= 8 or record.policy not in seen_policies:
            label = f"{record.policy} (seed {record.seed})"
            seen_policies.add(record.policy)
        else:
            label = "_nolegend_"  # keep seed sweeps from flooding the legend
        ax.plot(
            [s.step for s in record.steps],
            [s.cpu_used_frac for s in record.steps],
            label=label,
        )
    ax.set_xlabel("step")
    ax.set_ylabel("cpu used fraction")
    ax.set_ylim(0.0, 1.05)
    ax.set_title("cpu utilization by policy")
    ax.legend(loc="lower right", fontsize="small")
    fig.tight_layout()
    return fig


def scheduled_bar_figure(records: list[EpisodeRecord]) -> Figure:
    fig = Figure(figsize=(max(8.0, 0.4 * len(records)), 6.0))
    ax = fig.subplots()
    if len(records) > 8:
        labels = [f"{r.policy} s{r.seed}" for r in records]
        rotation = 90
    else:
        labels = [f"{r.policy}\nseed {r.seed}" for r in records]
        rotation = 0
    values = [summarize(r).total_scheduled for r in records]
    ax.bar(range(len(records)), values)
    ax.set_xticks(range(len(records)), labels, fontsize="small", rotation=rotation)
    ax.set_ylabel("total scheduled")
    ax.set_title("scheduled VMs by run")
    fig.tight_layout()
    return fig


def _figure_png(fig: Figure) -> bytes:
    buf = io.BytesIO()
    fig.savefig(buf, format="png", dpi=110)
    return buf.getvalue()


def _slug(text: str) -> str:
    return re.sub(r"[^A-Za-z0-9_.-]+", "-", text)


def render_charts(runs: list[EpisodeRecord], out_dir) -> list[str]:
    """Emit per-run charts, cross-run comparisons, and a self-contained report.

    Returns the paths written.  Single-run invocations get just the
    utilization chart and the report; overlays and bars need >= 2 runs.
    """
    if not runs:
        raise ValueError("render_charts needs at least one run")
    out_dir = os.fspath(out_dir)
    charts_dir = os.path.join(out_dir, "charts")
    os.makedirs(charts_dir, exist_ok=True)

    written: list[str] = []
    images: list[tuple[str, bytes]] = []

    for i, record in enumerate(runs):
        name = f"run{i:02d}_{_slug(record.policy)}_seed{record.seed}_utilization.png"
        png = _figure_png(utilization_figure(record))
        path = os.path.join(charts_dir, name)
        atomic_write_bytes(path, png)
        written.append(path)
        images.append((name, png))

    if len(runs) >= 2:
        png = _figure_png(overlay_figure(runs))
        path = os.path.join(charts_dir, "overlay_cpu_used_frac.png")
        atomic_write_bytes(path, png)
        written.append(path)
        images.append(("overlay_cpu_used_frac.png", png))

        png = _figure_png(scheduled_bar_figure(runs))
        path = os.path.join(charts_dir, "total_scheduled.png")
        atomic_write_bytes(path, png)
        written.append(path)
        images.append(("total_scheduled.png", png))

    report = _report_html(runs, images)
    report_path = os.path.join(out_dir, "report.html")
    atomic_write_text(report_path, report)
    written.append(report_path)
    return written


def _report_html(runs: list[EpisodeRecord], images: list[tuple[str, bytes]]) -> str:
    table = compare(runs)
    parts = [
        "<!DOCTYPE html>",
        "<html><head><meta charset='utf-8'><title>scheduling report</title>",
        "<style>body{font-family:sans-serif;margin:2em}img{max-width:100%}"
        "pre{background:#f4f4f4;padding:1em;overflow-x:auto}</style></head><body>",
        "<h1>Scheduling run report</h1>",
        f"<p>{len(runs)} run(s), scenario "
        f"{html.escape(runs[0].scenario)}</p>",
        "<h2>Summary</h2>",
        f"<pre>{html.escape(table.to_text())}</pre>",
        "<h2>Charts</h2>",
    ]
    for name, png in images:
        b64 = base64.b64encode(png).decode("ascii")
        parts.append(f"<h3>{html.escape(name)}</h3>")
        parts.append(f"<img alt='{html.escape(name)}' src='data:image/png;base64,{b64}'>")
    parts.append("</body></html>")
    return "\n".join(parts)
