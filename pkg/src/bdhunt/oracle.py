"""Metamorphic backdoor oracle.

Phase 1 freezes one representative input per distinct edge set. Phase 2 matches
every generated input to the representative(s) with the closest edge coverage
and reports it when its syscall classes differ from *all* tied nearest
representatives. Reports are deduplicated on (representative, syscall diff).

Only edge sets and syscall vectors cross into this module; ground-truth
labels are dropped on the way in.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

from .fuzzer import SEED, TestInput
from .trace import (
    ALPHABET_VERSION,
    EdgeSet,
    ObservedTrace,
    SyscallClass,
    SyscallDiff,
    SyscallVector,
    decode_trace,
    encode_trace,
    fingerprint,
    hamming_syscalls,
)

DB_FORMAT = "bdhunt-db 1"
REPORT_FORMAT = "bdhunt-report 1"


class EmptyCorpus(ValueError):
    pass


class EmptyDatabase(ValueError):
    pass


@dataclass(frozen=True)
class RepEntry:
    rep_id: int
    input: TestInput
    edge_set: EdgeSet
    syscalls: SyscallVector


@dataclass(frozen=True)
class RepresentativeDb:
    entries: tuple[RepEntry, ...]
    fingerprint_index: frozenset[int]
    target: str = ""

    def __len__(self) -> int:
        return len(self.entries)

    def __post_init__(self) -> None:
        # flat arrays for the linear scan
        object.__setattr__(self, "_masks", tuple(e.edge_set.mask for e in self.entries))
        object.__setattr__(self, "_by_id", {e.rep_id: e for e in self.entries})

    def by_id(self, rep_id: int) -> RepEntry:
        return self._by_id[rep_id]  # type: ignore[attr-defined]


@dataclass(frozen=True)
class BackdoorReport:
    suspect: TestInput
    suspect_edges: EdgeSet
    suspect_syscalls: SyscallVector
    matched_reps: tuple[int, ...]
    edge_distance: int
    # rep_id -> diff; left_only = used by the suspect only, right_only = rep only
    syscall_diff: dict[int, SyscallDiff] = field(hash=False)

    @property
    def dedup_key(self) -> tuple[int, str]:
        primary = self.matched_reps[0]
        return primary, self.syscall_diff[primary].canonical()


def build_database(corpus: object, target: str = "") -> RepresentativeDb:
    """One entry per distinct edge set; the lowest input id wins a tie.

    ``corpus`` is a fuzzer ``Corpus`` or any iterable of (input, trace) pairs.
    Rep ids are assigned 1.. in ascending input-id order.
    """
    pairs = corpus.pairs() if hasattr(corpus, "pairs") else list(corpus)
    if not pairs:
        raise EmptyCorpus("cannot build a representative database from an empty corpus")
    kept: dict[int, tuple[TestInput, EdgeSet, SyscallVector]] = {}
    for inp, trace in sorted(pairs, key=lambda p: p[0].id):
        mask = trace.edge_set.mask
        if mask not in kept:
            kept[mask] = (inp, trace.edge_set, trace.syscalls)
    entries = tuple(
        RepEntry(i, inp, edges, sys) for i, (inp, edges, sys) in enumerate(kept.values(), start=1)
    )
    return RepresentativeDb(entries, frozenset(fingerprint(e.edge_set) for e in entries), target)


def find_nearest(db: RepresentativeDb, e: EdgeSet) -> tuple[int, list[int]]:
    """Smallest edge Hamming distance to ``e`` and every rep id achieving it (ascending)."""
    if not db.entries:
        raise EmptyDatabase("representative database is empty")
    q = e.mask
    best = -1
    reps: list[int] = []
    for entry, mask in zip(db.entries, db._masks):  # type: ignore[attr-defined]
        d = (q ^ mask).bit_count()
        if best < 0 or d < best:
            best = d
            reps = [entry.rep_id]
        elif d == best:
            reps.append(entry.rep_id)
    reps.sort()
    return best, reps


def _judge(db: RepresentativeDb, edges: EdgeSet, syscalls: SyscallVector):
    d, reps = find_nearest(db, edges)
    diffs = {}
    for rid in reps:
        dist, diff = hamming_syscalls(syscalls, db.by_id(rid).syscalls)
        if dist == 0:
            return None
        diffs[rid] = diff
    return d, tuple(reps), diffs


def decide(suspect: TestInput, suspect_trace: ObservedTrace, db: RepresentativeDb) -> BackdoorReport | None:
    verdict = _judge(db, suspect_trace.edge_set, suspect_trace.syscalls)
    if verdict is None:
        return None
    d, reps, diffs = verdict
    return BackdoorReport(suspect, suspect_trace.edge_set, suspect_trace.syscalls, reps, d, diffs)


class Detector:
    """``decide`` with a memo on (edge set, syscall vector).

    Valid because the verdict is a pure function of those two and the frozen db.
    """

    def __init__(self, db: RepresentativeDb) -> None:
        if not db.entries:
            raise EmptyDatabase("representative database is empty")
        self.db = db
        self._memo: dict[tuple[int, int], tuple | None] = {}

    def __call__(self, suspect: TestInput, trace: ObservedTrace) -> BackdoorReport | None:
        key = (trace.edge_set.mask, trace.syscalls.mask)
        try:
            verdict = self._memo[key]
        except KeyError:
            verdict = self._memo[key] = _judge(self.db, trace.edge_set, trace.syscalls)
        if verdict is None:
            return None
        d, reps, diffs = verdict
        return BackdoorReport(suspect, trace.edge_set, trace.syscalls, reps, d, diffs)


def deduplicate(r: BackdoorReport, seen: set) -> bool:
    """True (emit) the first time a (primary rep, syscall diff) key appears."""
    key = r.dedup_key
    if key in seen:
        return False
    seen.add(key)
    return True


# --- persistence ----------------------------------------------------------------


def save_database(db: RepresentativeDb, directory: str | Path) -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    manifest = {
        "format": DB_FORMAT,
        "alphabet": ALPHABET_VERSION,
        "target": db.target,
        "entries": [],
    }
    for e in db.entries:
        stem = f"rep_{e.rep_id:06d}"
        (directory / f"{stem}.input").write_bytes(e.input.data)
        (directory / f"{stem}.trace").write_text(encode_trace(ObservedTrace(e.edge_set, e.syscalls)))
        manifest["entries"].append({
            "rep_id": e.rep_id,
            "input_id": e.input.id,
            "parent_id": e.input.parent_id,
            "origin": e.input.origin,
            "input": f"{stem}.input",
            "trace": f"{stem}.trace",
            "fingerprint": f"{fingerprint(e.edge_set):016x}",
        })
    path = directory / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2) + "\n")
    return path


def load_database(directory: str | Path) -> RepresentativeDb:

    directory = Path(directory)
    manifest = json.loads((directory / "manifest.json").read_text())
    if manifest.get("format") != DB_FORMAT:
        raise ValueError(f"{directory} is not a representative database")
    if manifest.get("alphabet") != ALPHABET_VERSION:
        raise ValueError(f"database uses syscall alphabet {manifest.get('alphabet')!r}")
    entries = []
    for m in manifest["entries"]:
        trace = decode_trace((directory / m["trace"]).read_text())
        inp = TestInput((directory / m["input"]).read_bytes(), m["input_id"], m.get("parent_id"),
                        m.get("origin", SEED))
        entries.append(RepEntry(m["rep_id"], inp, trace.edge_set, trace.syscalls))
    db = RepresentativeDb(tuple(entries), frozenset(fingerprint(e.edge_set) for e in entries),
                          manifest.get("target", ""))
    stored = {int(m["fingerprint"], 16) for m in manifest["entries"]}
    if stored != db.fingerprint_index:
        raise ValueError("database fingerprints do not match stored edge sets")
    return db


def _names(classes: Iterable[SyscallClass]) -> list[str]:
    return [c.name for c in classes]


def report_to_dict(r: BackdoorReport, db: RepresentativeDb) -> dict:
    """Stable-order structured form of a report (what gets written to disk)."""
    primary, diff_key = r.dedup_key
    return {
        "format": REPORT_FORMAT,
        "alphabet": ALPHABET_VERSION,
        "target": db.target,
        "suspect": {
            "id": r.suspect.id,
            "parent_id": r.suspect.parent_id,
            "origin": r.suspect.origin,
            "input_hex": r.suspect.data.hex(),
            "edges": list(r.suspect_edges),
            "syscalls": _names(r.suspect_syscalls.classes),
        },
        "edge_distance": r.edge_distance,
        "matched_reps": [
            {
                "rep_id": rid,
                "input_id": db.by_id(rid).input.id,
                "input_hex": db.by_id(rid).input.data.hex(),
                "edges": list(db.by_id(rid).edge_set),
                "syscalls": _names(db.by_id(rid).syscalls.classes),
                "suspect_only": _names(r.syscall_diff[rid].left_only),
                "rep_only": _names(r.syscall_diff[rid].right_only),
            }
            for rid in r.matched_reps
        ],
        "dedup_key": {"rep_id": primary, "diff": diff_key},
    }


def encode_report(r: BackdoorReport, db: RepresentativeDb) -> str:
    return json.dumps(report_to_dict(r, db), indent=2) + "\n"


@dataclass(frozen=True)
class StoredReport:
    """A report read back from disk, with its representatives inlined."""

    target: str
    report: BackdoorReport
    reps: dict[int, RepEntry]


def decode_report(text: str) -> StoredReport:

    d = json.loads(text)
    if d.get("format") != REPORT_FORMAT:
        raise ValueError("not a bdhunt report")
    if d.get("alphabet") != ALPHABET_VERSION:
        raise ValueError(f"report uses syscall alphabet {d.get('alphabet')!r}")
    s = d["suspect"]
    suspect = TestInput(bytes.fromhex(s["input_hex"]), s["id"], s["parent_id"], s["origin"])
    reps: dict[int, RepEntry] = {}
    diffs: dict[int, SyscallDiff] = {}
    for m in d["matched_reps"]:
        rid = m["rep_id"]
        reps[rid] = RepEntry(rid, TestInput(bytes.fromhex(m["input_hex"]), m["input_id"]),
                             EdgeSet(m["edges"]), SyscallVector.of(m["syscalls"]))
        diffs[rid] = SyscallDiff(tuple(SyscallClass[c] for c in m["suspect_only"]),
                                 tuple(SyscallClass[c] for c in m["rep_only"]))
    report = BackdoorReport(suspect, EdgeSet(s["edges"]), SyscallVector.of(s["syscalls"]),
                            tuple(reps), d["edge_distance"], diffs)
    return StoredReport(d.get("target", ""), report, reps)
