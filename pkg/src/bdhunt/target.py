"""In-process programs under test and the execution primitive.

A target program is a plain function ``program(ctx, data) -> exit status``. It
marks basic blocks with ``ctx.block(id)``, models OS interaction with
``ctx.sys(...)``, routes multi-byte equality tests through ``ctx.cmp`` so the
fuzzer can harvest magic values, and guards injected backdoor bodies with
``ctx.backdoor()``. An edge is the transition between two consecutive blocks,
numbered ``prev * n_blocks + cur``; block 0 is the implicit entry.

The same program function yields two targets: the *backdoor* build runs the
guarded body, the *markers* build skips it and raises the ground-truth flag
instead.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

from .trace import EdgeSet, ExecutionTrace, SyscallClass, SyscallVector

DEFAULT_STEP_BUDGET = 1_000_000
DEFAULT_MAX_INPUT = 4096
EXIT_TIMEOUT = 124
MAX_COMPARISONS = 256
_MAX_LOGGED_OPERAND = 64

BACKDOOR = "backdoor"
MARKERS = "markers"
SAFE = "safe"
_MODES = (BACKDOOR, MARKERS, SAFE)


class StepBudgetExceeded(Exception):
    """Raised by ``execute(..., strict=True)`` when a run loops past its step budget.

    The partial trace (with ``exit_status == EXIT_TIMEOUT``) is attached.
    """

    def __init__(self, trace: ExecutionTrace) -> None:
        super().__init__("target exceeded its step budget")
        self.trace = trace


class InputTooLarge(ValueError):
    pass


class UnknownTarget(KeyError):
    pass


class _Timeout(Exception):
    pass


class TraceContext:
    """Per-run recorder. Never shared between runs, so targets stay reentrant."""

    __slots__ = ("_prev", "_edges", "_n", "_sys", "cmp_log", "steps", "_budget", "triggered", "_mode")

    def __init__(self, n_blocks: int, mode: str, budget: int) -> None:
        self._prev = 0
        self._edges: set[int] = set()
        self._n = n_blocks
        self._sys = 0
        self.cmp_log: list[tuple[bytes, bytes]] = []
        self.steps = 0
        self._budget = budget
        self.triggered = False
        self._mode = mode

    def block(self, b: int) -> None:
        self.steps += 1
        if self.steps > self._budget:
            raise _Timeout
        self._edges.add(self._prev * self._n + b)
        self._prev = b

    def path(self, *blocks: int) -> None:
        """Straight-line run through several blocks (a helper routine's body)."""
        for b in blocks:
            self.block(b)

    def sys(self, *classes: SyscallClass) -> None:
        for c in classes:
            self._sys |= 1 << c

    def cmp(self, observed: bytes, expected: bytes) -> bool:
        """Instrumented equality test (the cmplog stand-in)."""
        if len(self.cmp_log) < MAX_COMPARISONS:
            self.cmp_log.append((bytes(observed[:_MAX_LOGGED_OPERAND]), expected))
        return observed == expected

    def startswith(self, observed: bytes, prefix: bytes) -> bool:
        return self.cmp(observed[: len(prefix)], prefix)

    def backdoor(self) -> bool:
        """Gate for an injected backdoor body.

        True only in the backdoor build. The markers build records the
        ground-truth flag and returns False, so the body never runs there.
        """
        if self._mode == BACKDOOR:
            return True
        if self._mode == MARKERS:
            self.triggered = True
        return False

    def finish(self, status: int) -> ExecutionTrace:
        mask = 0
        for e in self._edges:
            mask |= 1 << e
        return ExecutionTrace(
            EdgeSet.from_mask(mask),
            SyscallVector(self._sys),
            status,
            self.triggered,
            tuple(self.cmp_log),
        )


Program = Callable[[TraceContext, bytes], int]


@dataclass(frozen=True)
class Target:
    name: str
    program: Program
    n_blocks: int
    mode: str = BACKDOOR
    dictionary_hints: tuple[bytes, ...] = ()
    step_budget: int = DEFAULT_STEP_BUDGET
    max_input: int = DEFAULT_MAX_INPUT

    def __post_init__(self) -> None:
        if self.mode not in _MODES:
            raise ValueError(f"unknown target mode {self.mode!r}")
        if self.n_blocks < 1:
            raise ValueError("n_blocks must be positive")

    @property
    def edge_namespace_size(self) -> int:
        return self.n_blocks * self.n_blocks

    def run(self, data: bytes) -> ExecutionTrace:
        return execute(self, data)

    def variant(self, mode: str) -> Target:
        return Target(self.name, self.program, self.n_blocks, mode, self.dictionary_hints,
                      self.step_budget, self.max_input)


def execute(t: Target, data: bytes | object, *, strict: bool = False) -> ExecutionTrace:
    """Run ``t`` once on ``data`` (raw bytes or anything with a ``data`` attribute).

    A run that exhausts the step budget returns what it observed with
    ``exit_status == EXIT_TIMEOUT``; pass ``strict=True`` to get
    ``StepBudgetExceeded`` instead.
    """
    raw = data if isinstance(data, (bytes, bytearray)) else data.data  # type: ignore[attr-defined]
    if len(raw) > t.max_input:
        raise InputTooLarge(f"{len(raw)} bytes exceeds the {t.max_input}-byte limit of {t.name}")
    ctx = TraceContext(t.n_blocks, t.mode, t.step_budget)
    try:
        status = t.program(ctx, bytes(raw))
    except _Timeout:
        trace = ctx.finish(EXIT_TIMEOUT)
        if strict:
            raise StepBudgetExceeded(trace) from None
        return trace
    return ctx.finish(int(status or 0))


class Blocks:
    """Name basic blocks: ``B = Blocks("start", "loop")`` gives ``B.start == 1``.

    ``"name*k"`` reserves a straight-line chain of k blocks and binds ``B.name``
    to the tuple of their ids, for use with ``ctx.path(*B.name)``.
    """

    def __init__(self, *names: str) -> None:
        next_id = 1
        for n in names:
            base, star, k = n.partition("*")
            if star:
                ids = tuple(range(next_id, next_id + int(k)))
                setattr(self, base, ids)
                next_id += int(k)
            else:
                setattr(self, n, next_id)
                next_id += 1
        self.count = next_id


# --- registry -----------------------------------------------------------------


@dataclass(frozen=True)
class BenchmarkPair:
    backdoored: Target
    markers: Target
    trigger_description: str
    archetype: str = ""
    descriptor: dict = field(default_factory=dict, compare=False, hash=False)


_REGISTRY: dict[str, Target] = {}


def register(t: Target) -> Target:
    _REGISTRY[t.name] = t
    return t


def get_target(name: str, mode: str = BACKDOOR) -> Target:
    from . import bench  # noqa: F401  (populates the registry)

    try:
        base = _REGISTRY[name]
    except KeyError:
        raise UnknownTarget(name) from None
    return base if base.mode == mode else base.variant(mode)


def target_names() -> list[str]:
    from . import bench  # noqa: F401

    return sorted(_REGISTRY)


def bundled_benchmark() -> list[BenchmarkPair]:
    from .bench import benchmark_pairs

    return benchmark_pairs()


def marker_twin(t: Target) -> Target:
    return t.variant(MARKERS)


def run_many(t: Target, inputs: Iterable[bytes]) -> Sequence[ExecutionTrace]:
    return [execute(t, x) for x in inputs]
