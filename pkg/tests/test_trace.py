from __future__ import annotations

import hashlib
import itertools
import random
from pathlib import Path

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bdhunt.trace import (
    ALPHABET,
    ALPHABET_SIZE,
    EdgeSet,
    ExecutionTrace,
    ObservedTrace,
    SyscallClass,
    SyscallDiff,
    SyscallVector,
    TraceFormatError,
    decode_trace,
    encode_trace,
    fingerprint,
    hamming_edges,
    hamming_syscalls,
)

GOLDEN = Path(__file__).parent / "golden"

edge_ids = st.integers(min_value=0, max_value=300)
edge_sets = st.frozensets(edge_ids, max_size=40).map(EdgeSet)
syscall_vectors = st.integers(min_value=0, max_value=(1 << ALPHABET_SIZE) - 1).map(SyscallVector)


def test_alphabet_is_the_fixed_twenty_class_order():
    assert ALPHABET_SIZE == 20
    assert [c.name for c in ALPHABET][:5] == ["READ", "WRITE", "OPEN", "CLOSE", "STAT"]
    assert ALPHABET[-1] is SyscallClass.EXIT


def test_edge_set_canonical_form():
    e = EdgeSet([5, 1, 5, 3])
    assert e.edges == (1, 3, 5)
    assert len(e) == 3
    assert 3 in e and 4 not in e and -1 not in e
    assert e.canonical() == "1,3,5"
    assert EdgeSet() == EdgeSet([])
    with pytest.raises(ValueError):
        EdgeSet([-2])


def test_edge_set_bitmap_adapter():
    bitmap = bytes([0, 7, 0, 1, 255])
    e = EdgeSet.from_bitmap(bitmap)
    assert e.edges == (1, 3, 4)
    assert e.to_bitmap(5) == bytes([0, 1, 0, 1, 1])
    with pytest.raises(ValueError):
        e.to_bitmap(4)


def test_syscall_vector_rejects_bits_outside_alphabet():
    with pytest.raises(ValueError):
        SyscallVector(1 << ALPHABET_SIZE)


def test_hamming_syscalls_worked_example():
    # read/open used vs open only: one class apart, read on the left side
    a = SyscallVector.of(["READ", "OPEN"])
    b = SyscallVector.of(["OPEN"])
    dist, diff = hamming_syscalls(a, b)
    assert dist == 1
    assert diff == SyscallDiff((SyscallClass.READ,), ())
    assert diff.canonical() == "+READ|-"


def test_hamming_syscalls_identical_is_empty_diff():
    v = SyscallVector.of(["SPAWN", "EXEC"])
    assert hamming_syscalls(v, v) == (0, SyscallDiff())
    assert not SyscallDiff()


@settings(max_examples=300)
@given(edge_sets, edge_sets, edge_sets)
def test_hamming_edges_is_a_metric(a, b, c):
    assert hamming_edges(a, a) == 0
    assert hamming_edges(a, b) == hamming_edges(b, a)
    assert (hamming_edges(a, b) == 0) == (a == b)
    assert hamming_edges(a, c) <= hamming_edges(a, b) + hamming_edges(b, c)


@given(edge_sets, edge_sets)
def test_hamming_edges_matches_set_symmetric_difference(a, b):
    assert hamming_edges(a, b) == len(set(a.edges) ^ set(b.edges))


@given(syscall_vectors, syscall_vectors)
def test_hamming_syscalls_agrees_with_edge_hamming_on_same_bits(a, b):
    dist, diff = hamming_syscalls(a, b)
    assert dist == hamming_edges(EdgeSet.from_mask(a.mask), EdgeSet.from_mask(b.mask))
    assert dist == diff.distance
    assert set(diff.left_only) == set(a.classes) - set(b.classes)
    assert set(diff.right_only) == set(b.classes) - set(a.classes)
    assert not set(diff.left_only) & set(diff.right_only)


@given(syscall_vectors, syscall_vectors)
def test_hamming_syscalls_swapping_sides_swaps_diff(a, b):
    _, ab = hamming_syscalls(a, b)
    _, ba = hamming_syscalls(b, a)
    assert (ab.left_only, ab.right_only) == (ba.right_only, ba.left_only)


def test_fingerprint_definition():
    e = EdgeSet([2, 10, 7])
    expected = hashlib.blake2b(b"2,7,10", digest_size=8).digest()
    assert fingerprint(e) == int.from_bytes(expected, "big")


def test_fingerprint_collision_free_on_all_subsets_of_ten_edges():
    prints = set()
    for r in range(11):
        for combo in itertools.combinations(range(10), r):
            prints.add(fingerprint(EdgeSet(combo)))
    assert len(prints) == 2**10


@given(edge_sets)
def test_fingerprint_ignores_construction_order(e):
    shuffled = list(e.edges)
    random.Random(len(shuffled)).shuffle(shuffled)
    assert fingerprint(EdgeSet(shuffled)) == fingerprint(e)


def test_golden_trace_encoding_is_byte_exact():
    t = ExecutionTrace(
        EdgeSet([4096, 17, 3, 0]),
        SyscallVector.of(["SETUID", "READ", "OPEN"]),
        1,
        True,
        ((b"PASS", b"PASS"), (b"", b"let_me_in")),
    )
    assert encode_trace(t) == (GOLDEN / "trace_basic.txt").read_text()
    assert decode_trace((GOLDEN / "trace_basic.txt").read_text()) == t


def test_golden_empty_trace():
    t = ObservedTrace(EdgeSet(), SyscallVector())
    assert encode_trace(t) == (GOLDEN / "trace_empty.txt").read_text()
    assert decode_trace(encode_trace(t)) == ExecutionTrace(EdgeSet(), SyscallVector())


@given(
    edge_sets,
    syscall_vectors,
    st.integers(min_value=-255, max_value=255),
    st.booleans(),
    st.lists(st.tuples(st.binary(max_size=8), st.binary(max_size=8)), max_size=4),
)
def test_trace_round_trip(edges, sys, status, flag, cmps):
    t = ExecutionTrace(edges, sys, status, flag, tuple(cmps))
    assert decode_trace(encode_trace(t)) == t


@pytest.mark.parametrize(
    "text",
    [
        "",
        "bdhunt-trace 2\n",
        (GOLDEN / "trace_empty.txt").read_text().replace("sc20-v1", "sc21-v1"),
        (GOLDEN / "trace_empty.txt").read_text().replace("comparisons: 0", "comparisons: 1"),
        (GOLDEN / "trace_empty.txt").read_text().replace("false", "maybe"),
        (GOLDEN / "trace_basic.txt").read_text().replace("SETUID", "SETUIDX"),
    ],
)
def test_decode_rejects_malformed(text):
    with pytest.raises(TraceFormatError):
        decode_trace(text)


def test_erase_drops_ground_truth():
    t = ExecutionTrace(EdgeSet([1]), SyscallVector.of(["READ"]), 0, True, ((b"a", b"b"),))
    o = t.erase()
    assert isinstance(o, ObservedTrace)
    assert not hasattr(o, "ground_truth_triggered")
    assert not hasattr(o, "comparison_log")
