"""Coverage-guided mutational fuzzer used by both campaign phases.

Budgets are execution counts. As a rough guide on the bundled targets, one
execution here stands for about one AFL++ execution on a small binary, so the
30 s .. 20 min phase-1 range of a QEMU-mode campaign maps to roughly
5,000 .. 100,000 executions. Nothing in the code depends on that mapping.
"""

from __future__ import annotations

import json
import random
import threading
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Sequence

from .target import DEFAULT_MAX_INPUT, Target, execute
from .trace import EdgeSet, ExecutionTrace, decode_trace, encode_trace

SEED = "seed"
MUTATION = "mutation"
SPLICE = "splice"
DICTIONARY = "dictionary"
ORIGINS = (SEED, MUTATION, SPLICE, DICTIONARY)

MAX_TOKEN = 64
CORPUS_FORMAT = "bdhunt-corpus 1"

# (value, width in bytes); written little- or big-endian at random.
INTERESTING_VALUES: tuple[tuple[int, int], ...] = (
    (0x00, 1), (0x01, 1), (0x7F, 1), (0x80, 1), (0xFF, 1),
    (0x0000, 2), (0x0100, 2), (0x7FFF, 2), (0x8000, 2), (0xFFFF, 2),
    (0x00000000, 4), (0x7FFFFFFF, 4), (0x80000000, 4), (0xFFFFFFFF, 4),
)

OPERATORS = (
    "bit_flip", "byte_replace", "interesting", "block_delete",
    "block_duplicate", "dict_overwrite", "dict_insert", "splice",
)


class NoSeeds(ValueError):
    pass


@dataclass(frozen=True)
class TestInput:
    __test__ = False  # keep pytest from collecting this class

    data: bytes
    id: int
    parent_id: int | None = None
    origin: str = SEED


@dataclass
class CorpusEntry:
    input: TestInput
    trace: ExecutionTrace
    added_at: int


@dataclass
class Corpus:
    entries: list[CorpusEntry] = field(default_factory=list)
    global_mask: int = 0

    @property
    def global_edges(self) -> EdgeSet:
        return EdgeSet.from_mask(self.global_mask)

    def add(self, inp: TestInput, trace: ExecutionTrace, at: int = 0) -> None:
        self.entries.append(CorpusEntry(inp, trace, at))
        self.global_mask |= trace.edge_set.mask

    def __len__(self) -> int:
        return len(self.entries)

    def pairs(self) -> list[tuple[TestInput, ExecutionTrace]]:
        return [(e.input, e.trace) for e in self.entries]


class Dictionary:
    """Ordered, duplicate-free token list. Empty or over-long tokens are ignored."""

    def __init__(self, tokens: Iterable[bytes] = ()) -> None:
        self.tokens: list[bytes] = []
        self._seen: set[bytes] = set()
        for t in tokens:
            self.add(t)

    def add(self, token: bytes) -> bool:
        if not token or len(token) > MAX_TOKEN or token in self._seen:
            return False
        token = bytes(token)
        self._seen.add(token)
        self.tokens.append(token)
        return True

    def copy(self) -> Dictionary:
        return Dictionary(self.tokens)

    def __contains__(self, token: object) -> bool:
        return token in self._seen

    def __len__(self) -> int:
        return len(self.tokens)


def harvest_dictionary(trace: ExecutionTrace, dictionary: Dictionary) -> Dictionary:
    """Append every comparison constant the target checked against. Mutates in place."""
    seen = dictionary._seen
    for _, expected in trace.comparison_log:
        if expected not in seen:
            dictionary.add(expected)
    return dictionary


def is_interesting(trace: ExecutionTrace, corpus: Corpus) -> bool:
    return bool(trace.edge_set.mask & ~corpus.global_mask)


def _interesting(rng: random.Random, buf: bytearray) -> None:
    value, width = INTERESTING_VALUES[rng.randrange(len(INTERESTING_VALUES))]
    if len(buf) < width:
        width = 1
        value &= 0xFF
    pos = rng.randrange(len(buf) - width + 1)
    order = "little" if rng.random() < 0.5 else "big"
    buf[pos:pos + width] = value.to_bytes(width, order)


def mutate(
    parent: TestInput,
    rng: random.Random,
    dictionary: Dictionary,
    child_id: int,
    *,
    pool: Sequence[TestInput] = (),
    max_size: int = DEFAULT_MAX_INPUT,
    op: str | None = None,
) -> TestInput:
    """Derive one child from ``parent`` with a single randomly chosen operator.

    ``pool`` supplies splice partners. Operators that cannot apply (no tokens,
    no partner, empty parent for in-place edits) are redrawn. An empty parent
    with nothing to insert gets one random byte.
    """
    data = parent.data
    tokens = dictionary.tokens
    if op is None:
        if not data and not tokens and len(pool) <= 1:
            return TestInput(bytes([rng.randrange(256)]), child_id, parent.id, MUTATION)
        while True:
            op = OPERATORS[rng.randrange(8)]
            if op == "dict_overwrite" or op == "dict_insert":
                usable = bool(tokens)
            elif op == "splice":
                usable = len(pool) > 1
            else:
                usable = bool(data)
            if usable:
                break
    buf = bytearray(data)
    origin = MUTATION
    n = len(buf)
    if op == "bit_flip":
        pos = rng.randrange(n)
        buf[pos] ^= 1 << rng.randrange(8)
    elif op == "byte_replace":
        pos = rng.randrange(n)
        buf[pos] = (buf[pos] + 1 + rng.randrange(255)) & 0xFF
    elif op == "interesting":
        _interesting(rng, buf)
    elif op == "block_delete":
        length = 1 + rng.randrange(min(n, 32))
        pos = rng.randrange(n - length + 1)
        del buf[pos:pos + length]
    elif op == "block_duplicate":
        length = 1 + rng.randrange(min(n, 32))
        src = rng.randrange(n - length + 1)
        dst = rng.randrange(n + 1)
        buf[dst:dst] = buf[src:src + length]
    elif op == "dict_overwrite":
        tok = tokens[rng.randrange(len(tokens))]
        pos = rng.randrange(n + 1)
        buf[pos:pos + len(tok)] = tok
        origin = DICTIONARY
    elif op == "dict_insert":
        tok = tokens[rng.randrange(len(tokens))]
        pos = rng.randrange(n + 1)
        buf[pos:pos] = tok
        origin = DICTIONARY
    elif op == "splice":
        other = pool[rng.randrange(len(pool))].data
        cut_a = rng.randrange(n + 1)
        cut_b = rng.randrange(len(other) + 1)
        buf = buf[:cut_a] + other[cut_b:]
        origin = SPLICE
    else:
        raise ValueError(f"unknown mutation operator {op!r}")
    if len(buf) > max_size:
        del buf[max_size:]
    return TestInput(bytes(buf), child_id, parent.id, origin)


Observer = Callable[[TestInput, ExecutionTrace], None]

_RECENT_FRACTION = 10  # entries added in the last 1/10 of executions count double


class _Scheduler:
    """Round-robin over the corpus; recently added entries are visited twice."""

    def __init__(self) -> None:
        self.cursor = 0
        self.pending = 0

    def pick(self, corpus: Corpus, execs: int) -> CorpusEntry:
        entries = corpus.entries
        if self.pending == 0:
            self.cursor = (self.cursor + 1) % len(entries)
            entry = entries[self.cursor]
            recent = execs - max(1, execs // _RECENT_FRACTION)
            self.pending = 2 if entry.added_at >= recent else 1
        self.pending -= 1
        return entries[self.cursor]


def fuzz_loop(
    t: Target,
    seeds: Sequence[TestInput],
    budget_execs: int,
    rng_seed: int,
    observer: Observer | None = None,
    *,
    use_cmplog: bool = True,
    use_hints: bool = True,
    dictionary: Dictionary | None = None,
    workers: int = 1,
    max_size: int | None = None,
) -> Corpus:
    """Run exactly ``budget_execs`` executions of ``t`` and return the corpus.

    Seeds run first, in order. With ``workers == 1`` the result and the
    observer call sequence are fully determined by the arguments.
    """
    if not seeds:
        raise NoSeeds("fuzz_loop needs at least one seed")
    if budget_execs < len(seeds):
        raise ValueError("budget_execs must cover every seed")
    if workers < 1:
        raise ValueError("workers must be >= 1")
    max_size = max_size or t.max_input
    if dictionary is None:
        dictionary = Dictionary(t.dictionary_hints if use_hints else ())
    corpus = Corpus()
    next_id = max(s.id for s in seeds) + 1

    for i, seed in enumerate(seeds):
        trace = execute(t, seed.data[:max_size])
        if use_cmplog:
            harvest_dictionary(trace, dictionary)
        if observer is not None:
            observer(seed, trace)
        if trace.edge_set.mask & ~corpus.global_mask:
            corpus.add(seed, trace, i + 1)
    if not corpus.entries:
        # nothing covered anything new (degenerate target); keep seeds as parents
        corpus.add(seeds[0], execute(t, seeds[0].data[:max_size]), 0)

    if workers == 1:
        _serial(t, corpus, dictionary, len(seeds), budget_execs, next_id, rng_seed,
                observer, use_cmplog, max_size)
    else:
        _parallel(t, corpus, dictionary, len(seeds), budget_execs, next_id, rng_seed,
                  observer, use_cmplog, max_size, workers)
    return corpus


def _serial(t, corpus, dictionary, done, budget, next_id, rng_seed, observer, use_cmplog, max_size):
    rng = random.Random(rng_seed)
    sched = _Scheduler()
    pool = [e.input for e in corpus.entries]
    seen = dictionary._seen
    while done < budget:
        entry = sched.pick(corpus, done)
        child = mutate(entry.input, rng, dictionary, next_id, pool=pool, max_size=max_size)
        next_id += 1
        done += 1
        trace = execute(t, child.data)
        if use_cmplog:
            for _, expected in trace.comparison_log:
                if expected not in seen:
                    dictionary.add(expected)
        if observer is not None:
            observer(child, trace)
        if trace.edge_set.mask & ~corpus.global_mask:
            corpus.add(child, trace, done)
            pool.append(child)


def _parallel(t, corpus, dictionary, done, budget, next_id, rng_seed, observer, use_cmplog,
              max_size, workers):
    lock = threading.Lock()
    sched = _Scheduler()
    pool = [e.input for e in corpus.entries]
    state = {"done": done, "next_id": next_id}

    def work(index: int) -> None:
        rng = random.Random(rng_seed * 1_000_003 + index)
        while True:
            with lock:
                if state["done"] >= budget:
                    return
                state["done"] += 1
                at = state["done"]
                child_id = state["next_id"]
                state["next_id"] += 1
                entry = sched.pick(corpus, at)
                snapshot = list(pool)
                local_dict = dictionary.copy()
            child = mutate(entry.input, rng, local_dict, child_id, pool=snapshot, max_size=max_size)
            trace = execute(t, child.data)
            if observer is not None:
                observer(child, trace)
            with lock:
                if use_cmplog:
                    harvest_dictionary(trace, dictionary)
                if trace.edge_set.mask & ~corpus.global_mask:
                    corpus.add(child, trace, at)
                    pool.append(child)

    threads = [threading.Thread(target=work, args=(i,)) for i in range(workers)]
    for th in threads:
        th.start()
    for th in threads:
        th.join()


# --- on-disk corpora ------------------------------------------------------------


def load_seeds(directory: str | Path) -> list[TestInput]:
    """One seed per regular file, ordered by file name. Ids start at 1."""
    directory = Path(directory)
    if not directory.is_dir():
        raise NoSeeds(f"seed directory {directory} does not exist")
    files = sorted(p for p in directory.iterdir() if p.is_file() and not p.name.startswith("."))
    if not files:
        raise NoSeeds(f"no seed files in {directory}")
    return [TestInput(p.read_bytes(), i) for i, p in enumerate(files, start=1)]


def save_corpus(corpus: Corpus | Iterable[tuple[TestInput, ExecutionTrace]], directory: str | Path,
                target_name: str = "") -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    pairs = corpus.pairs() if isinstance(corpus, Corpus) else list(corpus)
    manifest = {"format": CORPUS_FORMAT, "target": target_name, "entries": []}
    for inp, trace in pairs:
        stem = f"id_{inp.id:09d}"
        (directory / stem).write_bytes(inp.data)
        (directory / f"{stem}.trace").write_text(encode_trace(trace))
        manifest["entries"].append(
            {"id": inp.id, "file": stem, "trace": f"{stem}.trace",
             "parent": inp.parent_id, "origin": inp.origin}
        )
    path = directory / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2) + "\n")
    return path


def load_corpus(directory: str | Path) -> Corpus:
    directory = Path(directory)
    manifest = json.loads((directory / "manifest.json").read_text())
    if manifest.get("format") != CORPUS_FORMAT:
        raise ValueError(f"{directory} is not a corpus directory")
    corpus = Corpus()
    for i, e in enumerate(manifest["entries"]):
        inp = TestInput((directory / e["file"]).read_bytes(), e["id"], e["parent"], e["origin"])
        corpus.add(inp, decode_trace((directory / e["trace"]).read_text()), i)
    return corpus
