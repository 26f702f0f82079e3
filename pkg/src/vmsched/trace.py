"""Request traces: parsing, validation, statistics, and synthesis.

A trace is an ordered list of allocation/release events that drives the
simulator.  The on-disk format is UTF-8 CSV with the header
``vm_id,cpu,mem,time,type`` (type 0 = alloc, 1 = release) and LF line
endings; :func:`serialize_trace` emits it bit-exactly and
:func:`parse_trace` reads it back.
"""

from __future__ import annotations

import io
import math
import random
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Optional

from .errors import InvalidTrace, MalformedRow, UnknownType

CANONICAL_HEADER = ("vm_id", "cpu", "mem", "time", "type")

ALLOC = 0
RELEASE = 1


@dataclass(frozen=True, order=True)
class Flavor:
    """A VM type: how many cores and how much memory (GB) it needs."""

    cpu: int
    mem: int

    def __post_init__(self):
        if self.cpu < 1 or self.mem < 1:
            raise ValueError(f"flavor requires cpu >= 1 and mem >= 1, got {self}")


@dataclass(frozen=True)
class Request:
    """One trace event: allocate a flavor for a vm_id, or release a vm_id."""

    seq: int
    vm_id: str
    flavor: Optional[Flavor]  # None for a release
    time: int

    @property
    def is_alloc(self) -> bool:
        return self.flavor is not None


@dataclass(frozen=True)
class Violation:
    """A single trace-invariant violation, reported by seq position."""

    seq: int
    code: str  # release_before_alloc | double_alloc | time_regression
    message: str

    def __str__(self) -> str:
        return f"{self.code} at seq {self.seq}: {self.message}"


@dataclass(frozen=True)
class TraceStats:
    n_requests: int
    n_alloc: int
    n_release: int
    n_flavors: int
    max_concurrent_vms: int


class Trace:
    """An immutable sequence of requests plus the set of flavors it uses."""

    def __init__(self, requests: Iterable[Request]):
        self.requests: tuple[Request, ...] = tuple(requests)
        self.flavor_catalog: frozenset[Flavor] = frozenset(
            r.flavor for r in self.requests if r.flavor is not None
        )

    def __len__(self) -> int:
        return len(self.requests)

    def __iter__(self):
        return iter(self.requests)

    def __getitem__(self, i: int) -> Request:
        return self.requests[i]

    def __eq__(self, other) -> bool:
        return isinstance(other, Trace) and self.requests == other.requests

    def __hash__(self):
        return hash(self.requests)

    def __repr__(self) -> str:
        return f"Trace({len(self.requests)} requests, {len(self.flavor_catalog)} flavors)"


@dataclass
class GenConfig:
    """Parameters for the synthetic trace generator."""

    n_alloc: int
    release_prob: float = 0.0
    flavor_weights: Mapping[Flavor, float] = field(
        default_factory=lambda: {Flavor(1, 1): 1.0}
    )
    mean_lifetime: float = 100.0
    seed: int = 0

    def __post_init__(self):
        if self.n_alloc < 0:
            raise ValueError("n_alloc must be >= 0")
        if not 0.0 <= self.release_prob <= 1.0:
            raise ValueError("release_prob must be in [0, 1]")
        if not self.flavor_weights:
            raise ValueError("flavor_weights must be non-empty")
        if any(w <= 0 for w in self.flavor_weights.values()):
            raise ValueError("all flavor weights must be > 0")
        if self.mean_lifetime < 1.0:
            raise ValueError("mean_lifetime must be >= 1")


# --- parsing ---

def parse_trace(source, column_map: Optional[Mapping[str, str]] = None) -> Trace:
    """Parse delimiter-separated text into a Trace.

    ``source`` may be a text file object, a string, or an iterable of lines.
    ``column_map`` remaps canonical column names to the headers actually
    present in the file (e.g. ``{"vm_id": "uuid"}``).  Row order becomes seq
    order; release rows ignore their cpu/mem columns.
    """
    if isinstance(source, str):
        source = io.StringIO(source)
    lines = iter(source)

    try:
        header_line = next(lines)
    except StopIteration:
        raise MalformedRow(1, "missing header row") from None
    header = [h.strip() for h in header_line.rstrip("\r\n").split(",")]

    column_map = dict(column_map or {})
    col_idx = {}
    for name in CANONICAL_HEADER:
        wanted = column_map.get(name, name)
        try:
            col_idx[name] = header.index(wanted)
        except ValueError:
            raise MalformedRow(1, f"header is missing column {wanted!r}") from None

    requests = []
    seq = 0
    for lineno, raw in enumerate(lines, start=2):
        line = raw.rstrip("\r\n")
        if not line:
            continue
        cells = line.split(",")
        if len(cells) != len(header):
            raise MalformedRow(
                lineno, f"expected {len(header)} columns, got {len(cells)}"
            )

        vm_id = cells[col_idx["vm_id"]].strip()
        if not vm_id:
            raise MalformedRow(lineno, "empty vm_id")
        time = _parse_int(cells[col_idx["time"]], "time", lineno)
        if time < 0:
            raise MalformedRow(lineno, f"time must be >= 0, got {time}")

        type_cell = cells[col_idx["type"]].strip()
        try:
            kind = int(type_cell)
        except ValueError:
            raise UnknownType(lineno, type_cell) from None
        if kind == ALLOC:
            cpu = _parse_int(cells[col_idx["cpu"]], "cpu", lineno)
            mem = _parse_int(cells[col_idx["mem"]], "mem", lineno)
            try:
                flavor = Flavor(cpu, mem)
            except ValueError as exc:
                raise MalformedRow(lineno, str(exc)) from None
            requests.append(Request(seq, vm_id, flavor, time))
        elif kind == RELEASE:
            requests.append(Request(seq, vm_id, None, time))
        else:
            raise UnknownType(lineno, type_cell)
        seq += 1

    return Trace(requests)


def _parse_int(cell: str, name: str, lineno: int) -> int:
    try:
        return int(cell.strip())
    except ValueError:
        raise MalformedRow(lineno, f"non-numeric {name} field {cell.strip()!r}") from None


def serialize_trace(trace: Trace) -> str:
    """Render a trace in the canonical CSV format (releases carry cpu=mem=0)."""
    out = [",".join(CANONICAL_HEADER)]
    for r in trace:
        if r.is_alloc:
            out.append(f"{r.vm_id},{r.flavor.cpu},{r.flavor.mem},{r.time},{ALLOC}")
        else:
            out.append(f"{r.vm_id},0,0,{r.time},{RELEASE}")
    return "\n".join(out) + "\n"


def read_trace(path, column_map: Optional[Mapping[str, str]] = None) -> Trace:
    with open(path, "r", encoding="utf-8", newline="") as f:
        return parse_trace(f, column_map)


def write_trace(trace: Trace, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(serialize_trace(trace))


# --- validation & statistics ---

def validate_trace(trace: Trace) -> list[Violation]:
    """Return every ordering violation in the trace; empty list iff valid."""
    violations = []
    live: set[str] = set()
    last_time = 0
    for r in trace:
        if r.time < last_time:
            violations.append(
                Violation(
                    r.seq,
                    "time_regression",
                    f"time {r.time} after {last_time}",
                )
            )
        last_time = max(last_time, r.time)
        if r.is_alloc:
            if r.vm_id in live:
                violations.append(
                    Violation(
                        r.seq,
                        "double_alloc",
                        f"vm {r.vm_id!r} allocated while still live",
                    )
                )
            else:
                live.add(r.vm_id)
        else:
            if r.vm_id not in live:
                violations.append(
                    Violation(
                        r.seq,
                        "release_before_alloc",
                        f"vm {r.vm_id!r} released without a live allocation",
                    )
                )
            else:
                live.discard(r.vm_id)
    return violations


def trace_stats(trace: Trace) -> TraceStats:
    """Counts and peak concurrency for a valid trace."""
    violations = validate_trace(trace)
    if violations:
        raise InvalidTrace(violations)
    n_alloc = 0
    n_release = 0
    live = 0
    peak = 0
    for r in trace:
        if r.is_alloc:
            n_alloc += 1
            live += 1
            peak = max(peak, live)
        else:
            n_release += 1
            live -= 1
    return TraceStats(
        n_requests=len(trace),
        n_alloc=n_alloc,
        n_release=n_release,
        n_flavors=len(trace.flavor_catalog),
        max_concurrent_vms=peak,
    )


# --- synthesis ---

def generate_trace(cfg: GenConfig) -> Trace:
    """Generate a valid trace with exactly cfg.n_alloc allocations.

    Alloc i happens at time i.  Each VM is marked for release with
    probability ``release_prob``; its lifetime (in subsequent allocations)
    is geometric with mean ``mean_lifetime``, so the release lands at time
    i + lifetime.  Identical configs produce byte-identical traces.
    """
    rng = random.Random(cfg.seed)
    flavors = sorted(cfg.flavor_weights)
    weights = [cfg.flavor_weights[f] for f in flavors]
    p = min(1.0, 1.0 / cfg.mean_lifetime)

    # (time, kind_rank, tiebreak) -> releases sort ahead of the alloc that
    # shares their timestamp; the lifetime >= 1 keeps them after their own alloc.
    events = []
    for i in range(cfg.n_alloc):
        flavor = rng.choices(flavors, weights=weights, k=1)[0]
        events.append((i, 1, i, ALLOC, f"vm-{i}", flavor))
        if rng.random() < cfg.release_prob:
            if p >= 1.0:
                lifetime = 1
            else:
                lifetime = 1 + int(math.log(1.0 - rng.random()) / math.log(1.0 - p))
            events.append((i + lifetime, 0, i, RELEASE, f"vm-{i}", None))

    events.sort(key=lambda e: e[:3])
    requests = [
        Request(seq, vm_id, flavor, time)
        for seq, (time, _, _, _, vm_id, flavor) in enumerate(events)
    ]
    return Trace(requests)
