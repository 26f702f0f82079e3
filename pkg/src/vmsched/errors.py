"""Exception hierarchy shared across the simulator.

Everything raised on purpose derives from :class:`VmschedError`, so callers
(and the CLI) can distinguish domain failures from genuine bugs.
"""


class VmschedError(Exception):
    """Base class for all simulator errors."""


# --- trace parsing / validation ---

class MalformedRow(VmschedError):
    """A trace row has the wrong arity or a non-numeric numeric field."""

    def __init__(self, line: int, reason: str):
        super().__init__(f"line {line}: {reason}")
        self.line = line
        self.reason = reason


class UnknownType(VmschedError):
    """A trace row's type column is neither 0 (alloc) nor 1 (release)."""

    def __init__(self, line: int, value: str):
        super().__init__(f"line {line}: unknown request type {value!r} (expected 0 or 1)")
        self.line = line
        self.value = value


class InvalidTrace(VmschedError):
    """A trace violates ordering invariants; carries the violation list."""

    def __init__(self, violations):
        summary = "; ".join(str(v) for v in violations[:5])
        more = f" (+{len(violations) - 5} more)" if len(violations) > 5 else ""
        super().__init__(f"invalid trace: {summary}{more}")
        self.violations = list(violations)


# --- cluster ---

class InvalidConfig(VmschedError):
    """A cluster or environment configuration violates its invariants."""


class InvalidFlavor(VmschedError):
    """A flavor cannot be hosted under the given cluster config."""


class Infeasible(VmschedError):
    """A placement was requested on a node without enough free resources."""


class DuplicateVm(VmschedError):
    """An allocation reused a vm_id that is still live."""


class UnknownVm(VmschedError):
    """A release named a vm_id that is not live."""


# --- environment ---

class InvalidTraceForScenario(VmschedError):
    """The trace is incompatible with the requested scenario."""


class EpisodeFinished(VmschedError):
    """step() or action_mask() was called after the episode ended."""


# --- policies ---

class NoFeasibleAction(VmschedError):
    """A policy was asked to act on an all-false feasibility mask."""
