from __future__ import annotations

import random
import statistics

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bdhunt.fuzzer import (
    DICTIONARY,
    INTERESTING_VALUES,
    MAX_TOKEN,
    OPERATORS,
    SEED,
    Corpus,
    Dictionary,
    NoSeeds,
    TestInput,
    fuzz_loop,
    harvest_dictionary,
    is_interesting,
    load_corpus,
    load_seeds,
    mutate,
    save_corpus,
)
from bdhunt.target import execute, get_target
from bdhunt.trace import EdgeSet, ExecutionTrace, SyscallVector

from conftest import trigger_example

PARENT = TestInput(b"test", 1)


def _trace(edges=(), cmps=()):
    return ExecutionTrace(EdgeSet(edges), SyscallVector(), 0, False, tuple(cmps))


# --- mutate ---------------------------------------------------------------------


def test_single_bit_flip_changes_exactly_one_bit():
    for seed in range(200):
        child = mutate(PARENT, random.Random(seed), Dictionary(), 2, op="bit_flip")
        assert len(child.data) == 4
        flipped = sum(bin(a ^ b).count("1") for a, b in zip(PARENT.data, child.data))
        assert flipped == 1


def test_dictionary_insert_keeps_token_verbatim():
    d = Dictionary([b"ACIDBITCHEZ"])
    for seed in range(50):
        child = mutate(PARENT, random.Random(seed), d, 2, op="dict_insert")
        assert b"ACIDBITCHEZ" in child.data
        assert child.origin == DICTIONARY
        assert len(child.data) == len(PARENT.data) + len(b"ACIDBITCHEZ")


def test_dictionary_overwrite_may_run_past_the_end():
    d = Dictionary([b"let_me_in"])
    lengths = {len(mutate(PARENT, random.Random(s), d, 2, op="dict_overwrite").data)
               for s in range(100)}
    assert min(lengths) >= len(b"let_me_in")
    assert max(lengths) == len(PARENT.data) + len(b"let_me_in")


def test_mutate_is_reproducible():
    d = Dictionary([b"USER", b"PASS"])
    pool = [PARENT, TestInput(b"other input", 5)]
    for seed in range(100):
        a = mutate(PARENT, random.Random(seed), d, 9, pool=pool)
        b = mutate(PARENT, random.Random(seed), d, 9, pool=pool)
        assert a == b


def test_children_record_lineage():
    child = mutate(PARENT, random.Random(0), Dictionary(), 42)
    assert child.id == 42 and child.parent_id == PARENT.id


def test_result_is_clamped_to_max_size():
    big = TestInput(b"x" * 60, 1)
    d = Dictionary([b"y" * 40])
    for seed in range(100):
        assert len(mutate(big, random.Random(seed), d, 2, max_size=64).data) <= 64


def test_empty_parent_is_handled_by_insertion():
    empty = TestInput(b"", 1)
    for seed in range(50):
        assert mutate(empty, random.Random(seed), Dictionary(), 2).data
    with_tokens = Dictionary([b"tok"])
    for seed in range(50):
        assert mutate(empty, random.Random(seed), with_tokens, 2).data


def test_unknown_operator_is_rejected():
    with pytest.raises(ValueError):
        mutate(PARENT, random.Random(0), Dictionary(), 2, op="nonsense")


def test_operator_set_and_interesting_table():
    assert len(OPERATORS) == 8
    values = {v for v, _ in INTERESTING_VALUES}
    assert {0, 1, 0x7F, 0x80, 0xFF, 0xFFFF} <= values


@settings(max_examples=200)
@given(st.binary(min_size=1, max_size=64), st.integers(0, 2**32), st.sampled_from(OPERATORS))
def test_every_operator_yields_bounded_bytes(data, seed, op):
    pool = [TestInput(data, 1), TestInput(b"partner", 2)]
    child = mutate(TestInput(data, 1), random.Random(seed), Dictionary([b"tok"]), 3,
                   pool=pool, max_size=80, op=op)
    assert isinstance(child.data, bytes)
    assert len(child.data) <= 80


# --- dictionary -----------------------------------------------------------------


def test_harvest_adds_the_credential_constant():
    t = get_target("toy_auth")
    d = harvest_dictionary(execute(t, b"PASS aaaa\n"), Dictionary())
    assert b"let_me_in" in d


def test_harvest_with_empty_log_is_a_no_op():
    d = Dictionary([b"a", b"b"])
    assert harvest_dictionary(_trace(), d).tokens == [b"a", b"b"]


def test_harvest_is_idempotent_and_order_stable():
    tr = _trace(cmps=[(b"x", b"one"), (b"y", b"two"), (b"z", b"one")])
    d = harvest_dictionary(tr, Dictionary([b"zero"]))
    assert d.tokens == [b"zero", b"one", b"two"]
    harvest_dictionary(tr, d)
    assert d.tokens == [b"zero", b"one", b"two"]


def test_dictionary_rejects_empty_and_oversized_tokens():
    d = Dictionary([b"", b"a" * (MAX_TOKEN + 1), b"a" * MAX_TOKEN])
    assert d.tokens == [b"a" * MAX_TOKEN]


# --- is_interesting ---------------------------------------------------------------


def test_is_interesting_examples():
    corpus = Corpus()
    first = _trace([1, 2, 3])
    assert is_interesting(first, corpus)
    corpus.add(PARENT, first)
    assert not is_interesting(first, corpus)
    assert not is_interesting(_trace([2]), corpus)
    assert is_interesting(_trace([2, 9]), corpus)


# --- fuzz_loop ------------------------------------------------------------------


def _seeds(*blobs):
    return [TestInput(b, i) for i, b in enumerate(blobs, start=1)]


def test_budget_equal_to_seed_count_runs_only_seeds():
    t = get_target("toy_auth")
    seeds = _seeds(b"PASS a\n", b"PASS a\n", b"USER bob\n")
    seen = []
    corpus = fuzz_loop(t, seeds, 3, 0, lambda i, tr: seen.append(i.id))
    assert seen == [1, 2, 3]
    # the duplicate seed adds nothing new
    assert [e.input.id for e in corpus.entries] == [1, 3]


def test_observer_is_called_exactly_budget_times():
    count = [0]
    fuzz_loop(get_target("toy_auth"), _seeds(b"PASS a\n"), 777, 1,
              lambda i, tr: count.__setitem__(0, count[0] + 1))
    assert count[0] == 777


def test_no_seeds_and_short_budget_are_errors():
    t = get_target("toy_auth")
    with pytest.raises(NoSeeds):
        fuzz_loop(t, [], 10, 0)
    with pytest.raises(ValueError):
        fuzz_loop(t, _seeds(b"a", b"b"), 1, 0)


def test_fuzz_loop_is_reproducible():
    t = get_target("ftpd")
    seeds = _seeds(b"USER ftp\r\nPASS x\r\nLIST\r\n")

    def run():
        calls = []
        corpus = fuzz_loop(t, seeds, 3000, 5, lambda i, tr: calls.append((i.data, tr.edge_set)))
        return calls, [(e.input, e.trace) for e in corpus.entries]

    assert run() == run()


def test_coverage_grows_monotonically_and_entries_are_minimal():
    t = get_target("toy_auth")
    history = []
    corpus = fuzz_loop(t, _seeds(b"PASS aaaa\n"), 50_000, 3)
    union = 0
    for e in corpus.entries:
        new = e.trace.edge_set.mask & ~union
        assert new, "every saved entry brought at least one then-new edge"
        union |= e.trace.edge_set.mask
        history.append(union)
    assert all(a & b == a for a, b in zip(history, history[1:]))
    assert union == corpus.global_mask
    seed_cov = execute(t, b"PASS aaaa\n").edge_set.mask
    assert union & ~seed_cov, "corpus coverage strictly exceeds the seed's"


def _first_trigger(t, seeds, budget, seed, **kw):
    found = []

    def obs(inp, tr):
        if not found and tr.ground_truth_triggered:
            found.append(len(calls))
        calls.append(None)

    calls: list = []
    fuzz_loop(t, seeds, budget, seed, obs, **kw)
    return found[0] if found else None


@pytest.mark.slow
def test_credential_trigger_found_in_nine_of_ten_seeds():
    t = get_target("toy_auth", "markers")
    hits = [_first_trigger(t, _seeds(b"PASS aaaa\n"), 200_000, s) for s in range(10)]
    assert sum(h is not None for h in hits) >= 9, hits


@pytest.mark.slow
def test_harvesting_speeds_up_the_credential_trigger():
    t = get_target("toy_auth", "markers")
    budget = 60_000

    def median(**kw):
        runs = [_first_trigger(t, _seeds(b"PASS aaaa\n"), budget, s, **kw) for s in range(7)]
        return statistics.median(budget + 1 if r is None else r for r in runs)

    assert median() < median(use_cmplog=False, use_hints=False)


def test_parallel_workers_respect_budget_and_corpus_invariants():
    t = get_target("toy_auth")
    count = [0]
    import threading

    lock = threading.Lock()

    def obs(i, tr):
        with lock:
            count[0] += 1

    corpus = fuzz_loop(t, _seeds(b"PASS aaaa\n"), 4000, 0, obs, workers=4)
    assert count[0] == 4000
    union = 0
    for e in corpus.entries:
        union |= e.trace.edge_set.mask
    assert union == corpus.global_mask
    assert len({e.input.id for e in corpus.entries}) == len(corpus)


# --- persistence ----------------------------------------------------------------


def test_seed_directory_loading(tmp_path):
    (tmp_path / "b").write_bytes(b"second")
    (tmp_path / "a").write_bytes(b"first")
    (tmp_path / ".hidden").write_bytes(b"skip")
    seeds = load_seeds(tmp_path)
    assert [(s.data, s.id, s.origin) for s in seeds] == [(b"first", 1, SEED), (b"second", 2, SEED)]
    with pytest.raises(NoSeeds):
        load_seeds(tmp_path / "missing")
    empty = tmp_path / "empty"
    empty.mkdir()
    with pytest.raises(NoSeeds):
        load_seeds(empty)


def test_corpus_round_trip(tmp_path):
    t = get_target("svcconf")
    corpus = fuzz_loop(t, _seeds(b"[net]\nlisten=:80\n"), 1500, 2)
    save_corpus(corpus, tmp_path / "c", "svcconf")
    back = load_corpus(tmp_path / "c")
    assert back.pairs() == corpus.pairs()
    assert back.global_mask == corpus.global_mask


def test_trigger_examples_are_reachable_by_the_dictionary():
    # every bench trigger is an exact or prefix match of some harvested constant
    for name in ("toy_auth", "ftpd", "svcconf", "logd", "xmlparse"):
        t = get_target(name)
        tr = execute(t, trigger_example(name))
        assert any(exp in trigger_example(name) for _, exp in tr.comparison_log), name
