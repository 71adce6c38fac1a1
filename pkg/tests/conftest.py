from __future__ import annotations

import random
from functools import lru_cache

import pytest

from bdhunt.bench import descriptors, seeds_for
from bdhunt.fuzzer import Dictionary, fuzz_loop, mutate
from bdhunt.target import get_target

ALL_TARGETS = ("toy_auth", "ftpd", "imgparse", "xmlparse", "svcconf", "logd", "weak_gate")
BENCH_TARGETS = ALL_TARGETS[:-1]


def example_bytes(entry: dict, key: str = "example") -> bytes:
    if key + "_hex" in entry:
        return bytes.fromhex(entry[key + "_hex"])
    return entry[key].encode()


def trigger_example(name: str) -> bytes:
    return example_bytes(descriptors()["targets"][name], "trigger_example")


@lru_cache(maxsize=None)
def sample_inputs(name: str, budget: int = 4000, mutants: int = 1500) -> tuple[bytes, ...]:
    """Seeds, a short fuzzing corpus and random mutants of it, for property checks."""
    t = get_target(name)
    seeds = seeds_for(name)
    corpus = fuzz_loop(t, seeds, budget, 7)
    pool = [e.input for e in corpus.entries]
    rng = random.Random(11)
    d = Dictionary(t.dictionary_hints + (trigger_example(name),))
    out = [s.data for s in seeds] + [i.data for i in pool]
    for k in range(mutants):
        out.append(mutate(pool[rng.randrange(len(pool))], rng, d, k, pool=pool).data)
    return tuple(out)


@pytest.fixture(params=BENCH_TARGETS)
def bench_target(request):
    return request.param


# acceptance verdicts, echoed at the end of the run so they survive output capture
VERDICTS: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if VERDICTS:
        terminalreporter.section("acceptance criteria")
        for line in sorted(VERDICTS):
            terminalreporter.write_line(line)
