"""Coverage and syscall observations, distances between them, and their text format.

Edge sets and syscall vectors are both stored as Python integers used as bit
masks: bit ``i`` is set when edge ``i`` (or syscall class ``i``) was observed.
Hamming distance is then a popcount of the XOR, which keeps the per-execution
oracle cheap.
"""

from __future__ import annotations

import enum
import hashlib
from dataclasses import dataclass, field
from typing import Iterable, Iterator

ALPHABET_VERSION = "sc20-v1"
TRACE_FORMAT = "bdhunt-trace 1"


class SyscallClass(enum.IntEnum):
    """Closed, ordered alphabet of syscall categories. Order defines vector positions."""

    READ = 0
    WRITE = 1
    OPEN = 2
    CLOSE = 3
    STAT = 4
    EXEC = 5
    SPAWN = 6
    SETUID = 7
    SETGID = 8
    SOCKET = 9
    CONNECT = 10
    BIND = 11
    SEND = 12
    RECV = 13
    UNLINK = 14
    RENAME = 15
    CHMOD = 16
    KILL = 17
    MMAP = 18
    EXIT = 19


ALPHABET: tuple[SyscallClass, ...] = tuple(SyscallClass)
ALPHABET_SIZE = len(ALPHABET)
_FULL_SYSCALL_MASK = (1 << ALPHABET_SIZE) - 1


def _bits(mask: int) -> Iterator[int]:
    while mask:
        low = mask & -mask
        yield low.bit_length() - 1
        mask ^= low


class EdgeSet:
    """Canonical set of covered edge ids.

    Construct from any iterable of non-negative ints; duplicates and order are
    irrelevant. ``edges`` always yields the ascending, duplicate-free form.
    """

    __slots__ = ("mask",)

    def __init__(self, edges: Iterable[int] = ()) -> None:
        mask = 0
        for e in edges:
            if e < 0:
                raise ValueError(f"edge id must be non-negative, got {e}")
            mask |= 1 << e
        self.mask = mask

    @classmethod
    def from_mask(cls, mask: int) -> EdgeSet:
        if mask < 0:
            raise ValueError("mask must be non-negative")
        obj = cls.__new__(cls)
        obj.mask = mask
        return obj

    @classmethod
    def from_bitmap(cls, bitmap: bytes) -> EdgeSet:
        """Adapter for dense AFL-style maps: any non-zero slot counts as covered."""
        return cls(i for i, v in enumerate(bitmap) if v)

    def to_bitmap(self, size: int) -> bytes:
        out = bytearray(size)
        for e in self:
            if e >= size:
                raise ValueError(f"edge {e} does not fit a {size}-slot bitmap")
            out[e] = 1
        return bytes(out)

    @property
    def edges(self) -> tuple[int, ...]:
        return tuple(_bits(self.mask))

    def __iter__(self) -> Iterator[int]:
        return _bits(self.mask)

    def __len__(self) -> int:
        return self.mask.bit_count()

    def __contains__(self, edge: object) -> bool:
        return isinstance(edge, int) and edge >= 0 and bool(self.mask >> edge & 1)

    def __eq__(self, other: object) -> bool:
        return isinstance(other, EdgeSet) and self.mask == other.mask

    def __hash__(self) -> int:
        return hash(self.mask)

    def __or__(self, other: EdgeSet) -> EdgeSet:
        return EdgeSet.from_mask(self.mask | other.mask)

    def issubset(self, other: EdgeSet) -> bool:
        return self.mask & ~other.mask == 0

    def canonical(self) -> str:
        return ",".join(map(str, self))

    def __repr__(self) -> str:
        return f"EdgeSet({{{self.canonical()}}})"


@dataclass(frozen=True)
class SyscallVector:
    """Presence vector over the syscall alphabet (bit i = ALPHABET[i] used)."""

    mask: int = 0

    def __post_init__(self) -> None:
        if self.mask & ~_FULL_SYSCALL_MASK or self.mask < 0:
            raise ValueError(f"syscall mask {self.mask:#x} outside the {ALPHABET_SIZE}-class alphabet")

    @classmethod
    def of(cls, classes: Iterable[SyscallClass | str]) -> SyscallVector:
        mask = 0
        for c in classes:
            if isinstance(c, str):
                c = SyscallClass[c]
            mask |= 1 << c
        return cls(mask)

    @property
    def used(self) -> tuple[bool, ...]:
        return tuple(bool(self.mask >> i & 1) for i in range(ALPHABET_SIZE))

    @property
    def classes(self) -> tuple[SyscallClass, ...]:
        return tuple(SyscallClass(i) for i in _bits(self.mask))

    def __contains__(self, c: object) -> bool:
        return isinstance(c, int) and bool(self.mask >> c & 1)

    def issubset(self, other: SyscallVector) -> bool:
        return self.mask & ~other.mask == 0

    def __repr__(self) -> str:
        return "SyscallVector({" + ", ".join(c.name for c in self.classes) + "})"


@dataclass(frozen=True)
class SyscallDiff:
    """Classes where two vectors disagree, split by which side used them."""

    left_only: tuple[SyscallClass, ...] = ()
    right_only: tuple[SyscallClass, ...] = ()

    @property
    def distance(self) -> int:
        return len(self.left_only) + len(self.right_only)

    def __bool__(self) -> bool:
        return self.distance > 0

    def classes(self) -> tuple[SyscallClass, ...]:
        return tuple(sorted(self.left_only + self.right_only))

    def canonical(self) -> str:
        left = ",".join(c.name for c in self.left_only)
        right = ",".join(c.name for c in self.right_only)
        return f"+{left}|-{right}"


@dataclass(frozen=True)
class ObservedTrace:
    """What the oracle is allowed to see: coverage, syscalls and exit status."""

    edge_set: EdgeSet
    syscalls: SyscallVector
    exit_status: int = 0


@dataclass(frozen=True)
class ExecutionTrace:
    edge_set: EdgeSet
    syscalls: SyscallVector
    exit_status: int = 0
    ground_truth_triggered: bool = False
    comparison_log: tuple[tuple[bytes, bytes], ...] = field(default=())

    def erase(self) -> ObservedTrace:
        """Drop the ground-truth flag and comparison log before handing to the oracle."""
        return ObservedTrace(self.edge_set, self.syscalls, self.exit_status)


def hamming_edges(a: EdgeSet, b: EdgeSet) -> int:
    return (a.mask ^ b.mask).bit_count()


def hamming_syscalls(a: SyscallVector, b: SyscallVector) -> tuple[int, SyscallDiff]:
    """Distance between two syscall vectors plus the differing classes.

    ``left_only`` holds classes used by ``a`` but not ``b``; ``right_only`` the reverse.
    """
    diff = a.mask ^ b.mask
    if not diff:
        return 0, SyscallDiff()
    left = tuple(SyscallClass(i) for i in _bits(diff & a.mask))
    right = tuple(SyscallClass(i) for i in _bits(diff & b.mask))
    return diff.bit_count(), SyscallDiff(left, right)


def fingerprint(e: EdgeSet) -> int:
    """64-bit BLAKE2b digest of the canonical "1,2,3" ASCII form of the edge set."""
    digest = hashlib.blake2b(e.canonical().encode("ascii"), digest_size=8).digest()
    return int.from_bytes(digest, "big")


# --- text serialization -------------------------------------------------------


class TraceFormatError(ValueError):
    pass


def encode_trace(t: ExecutionTrace | ObservedTrace) -> str:
    triggered = getattr(t, "ground_truth_triggered", False)
    cmps = getattr(t, "comparison_log", ())
    lines = [
        TRACE_FORMAT,
        f"alphabet: {ALPHABET_VERSION}",
        "edges: " + " ".join(map(str, t.edge_set)),
        "syscalls: " + " ".join(c.name for c in t.syscalls.classes),
        f"exit_status: {t.exit_status}",
        f"ground_truth_triggered: {'true' if triggered else 'false'}",
        f"comparisons: {len(cmps)}",
    ]
    lines.extend(f"cmp: {obs.hex() or '-'} {exp.hex() or '-'}" for obs, exp in cmps)
    return "\n".join(lines) + "\n"


def _field(line: str, name: str) -> str:
    prefix = name + ":"
    if not line.startswith(prefix):
        raise TraceFormatError(f"expected field {name!r}, got {line!r}")
    return line[len(prefix):].strip()


def decode_trace(text: str) -> ExecutionTrace:
    lines = text.splitlines()
    if len(lines) < 7 or lines[0] != TRACE_FORMAT:
        raise TraceFormatError("not a bdhunt trace file")
    alphabet = _field(lines[1], "alphabet")
    if alphabet != ALPHABET_VERSION:
        raise TraceFormatError(f"unsupported syscall alphabet {alphabet!r}")
    try:
        edges = EdgeSet(int(x) for x in _field(lines[2], "edges").split())
        syscalls = SyscallVector.of(_field(lines[3], "syscalls").split())
        exit_status = int(_field(lines[4], "exit_status"))
        flag = _field(lines[5], "ground_truth_triggered")
        n = int(_field(lines[6], "comparisons"))
    except (KeyError, ValueError) as exc:
        raise TraceFormatError(str(exc)) from exc
    if flag not in ("true", "false"):
        raise TraceFormatError(f"bad boolean {flag!r}")
    if len(lines) != 7 + n:
        raise TraceFormatError("comparison count does not match body")
    cmps = []
    for line in lines[7:]:
        parts = _field(line, "cmp").split(" ")
        if len(parts) != 2:
            raise TraceFormatError(f"bad comparison line {line!r}")
        cmps.append(tuple(b"" if p == "-" else bytes.fromhex(p) for p in parts))
    return ExecutionTrace(edges, syscalls, exit_status, flag == "true", tuple(cmps))
