"""Bundled synthetic backdoor benchmark.

Each program module provides ``program``, ``N_BLOCKS`` and ``HINTS``.
Descriptors (trigger, archetype, benign families) live in ``descriptors.json``
and seeds in ``seeds/<target>/``, one raw file per seed.
"""

from __future__ import annotations

import json
from functools import lru_cache
from importlib import resources

from ..fuzzer import TestInput
from ..target import BACKDOOR, MARKERS, BenchmarkPair, Target, get_target, register
from . import ftpd, imgparse, logd, svcconf, toy_auth, weak_gate, xmlparse

_PROGRAMS = {
    "toy_auth": toy_auth,
    "ftpd": ftpd,
    "imgparse": imgparse,
    "xmlparse": xmlparse,
    "svcconf": svcconf,
    "logd": logd,
    "weak_gate": weak_gate,
}

for _name, _mod in _PROGRAMS.items():
    register(Target(_name, _mod.program, _mod.N_BLOCKS, dictionary_hints=_mod.HINTS))


@lru_cache(maxsize=None)
def descriptors() -> dict:
    return json.loads(resources.files(__package__).joinpath("descriptors.json").read_text())


def seeds_for(name: str) -> list[TestInput]:
    root = resources.files(__package__).joinpath("seeds", name)
    files = sorted((p for p in root.iterdir() if p.is_file()), key=lambda p: p.name)
    if not files:
        raise FileNotFoundError(f"no bundled seeds for {name}")
    return [TestInput(p.read_bytes(), i) for i, p in enumerate(files, start=1)]


def benchmark_pairs() -> list[BenchmarkPair]:
    out = []
    for name, desc in descriptors()["targets"].items():
        if desc.get("fixture"):
            continue
        out.append(BenchmarkPair(get_target(name, BACKDOOR), get_target(name, MARKERS),
                                 desc["trigger"], desc["archetype"], desc))
    return out
