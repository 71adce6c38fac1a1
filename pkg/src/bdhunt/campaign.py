"""Two-phase campaigns, ground-truth metrics, and the phase-1 budget sweep.

Ground-truth labels come from re-running inputs on the markers build of the
target. That happens only here, after the oracle has made its decisions.
"""

from __future__ import annotations

import json
import logging
import math
import statistics
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Sequence

from .fuzzer import TestInput, fuzz_loop, load_seeds, save_corpus
from .oracle import (
    BackdoorReport,
    Detector,
    RepresentativeDb,
    build_database,
    deduplicate,
    encode_report,
    save_database,
)
from .target import BACKDOOR, MARKERS, Target, get_target

log = logging.getLogger(__name__)

_PHASE2_SALT = 0x5DEECE66D


@dataclass(frozen=True)
class CampaignConfig:
    target_name: str
    phase1_execs: int
    phase2_execs: int
    rng_seed: int = 0
    workers: int = 1
    seeds_dir: Path | None = None  # None: the target's bundled seeds
    out_dir: Path | None = None  # None: keep everything in memory
    label_phase2: bool = False  # label every phase-2 run (needed to count oracle misses)

    def __post_init__(self) -> None:
        if self.phase1_execs < 1 or self.phase2_execs < 1:
            raise ValueError("phase budgets must be >= 1")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")


@dataclass
class CampaignMetrics:
    detected: bool
    execs_to_first_true_report: int | None
    emitted_reports: int
    true_positive_reports: int
    false_positive_reports: int
    inputs_to_vet_for_95pct: int | None
    phase1_contaminated: bool
    raw_positives: int = 0
    db_size: int = 0
    report_labels: list[bool] = field(default_factory=list)
    # only filled when CampaignConfig.label_phase2 is set
    phase2_triggering_execs: int | None = None
    oracle_misses: int | None = None


@dataclass
class CampaignResult:
    db: RepresentativeDb
    reports: list[BackdoorReport]
    metrics: CampaignMetrics
    report_exec_index: list[int] = field(default_factory=list)

    def __iter__(self):
        # allows ``db, reports, metrics = run_campaign(cfg)``
        return iter((self.db, self.reports, self.metrics))


def vet_count_95(labels: Sequence[bool]) -> int | None:
    """Reports an expert must draw at random for a >= 95% chance of seeing a true one.

    With no true report the expert has to go through all of them. Otherwise the
    answer is the smallest n with P(no true among n draws without replacement)
    <= 5%, i.e. C(R-T, n) / C(R, n) <= 1/20, evaluated in exact integers.
    """
    total = len(labels)
    true = sum(1 for x in labels if x)
    if true == 0:
        return total
    for n in range(1, total + 1):
        if 20 * math.comb(total - true, n) <= math.comb(total, n):
            return n
    return total


def bundled_seeds(target_name: str) -> list[TestInput]:
    from .bench import seeds_for

    return seeds_for(target_name)


def _seeds(cfg: CampaignConfig) -> list[TestInput]:
    if cfg.seeds_dir is not None:
        return load_seeds(cfg.seeds_dir)
    return bundled_seeds(cfg.target_name)


def collect(target: Target, seeds: Sequence[TestInput], budget: int, rng_seed: int,
            workers: int = 1):
    """Phase 1: fuzz and freeze the representative database."""
    corpus = fuzz_loop(target, seeds, budget, rng_seed, workers=workers)
    return build_database(corpus, target.name), corpus


def detect(target: Target, db: RepresentativeDb, seeds: Sequence[TestInput], budget: int,
           rng_seed: int, workers: int = 1, extra_observer=None):
    """Phase 2: fuzz again, judging every execution against the frozen db.

    Returns (emitted reports, their 1-based exec indices, raw positive count, corpus).
    """
    detector = Detector(db)
    seen: set = set()
    emitted: list[BackdoorReport] = []
    at: list[int] = []
    state = {"i": 0, "raw": 0}

    def observe(inp, trace):
        state["i"] += 1
        r = detector(inp, trace.erase())
        if r is not None:
            state["raw"] += 1
            if deduplicate(r, seen):
                emitted.append(r)
                at.append(state["i"])
        if extra_observer is not None:
            extra_observer(inp, r)

    corpus = fuzz_loop(target, seeds, budget, rng_seed ^ _PHASE2_SALT, observe, workers=workers)
    return emitted, at, state["raw"], corpus


def run_campaign(cfg: CampaignConfig) -> CampaignResult:
    target = get_target(cfg.target_name, BACKDOOR)
    twin = get_target(cfg.target_name, MARKERS)
    seeds = _seeds(cfg)

    db, corpus1 = collect(target, seeds, cfg.phase1_execs, cfg.rng_seed, cfg.workers)

    labels_p2 = {"trig": 0, "miss": 0}

    def label_all(inp, report):
        if twin.run(inp.data).ground_truth_triggered:
            labels_p2["trig"] += 1
            if report is None:
                labels_p2["miss"] += 1

    reports, at, raw, corpus2 = detect(
        target, db, seeds, cfg.phase2_execs, cfg.rng_seed, cfg.workers,
        label_all if cfg.label_phase2 else None,
    )

    # --- ground truth: metrics only ---
    labels = [twin.run(r.suspect.data).ground_truth_triggered for r in reports]
    contaminated = any(twin.run(e.input.data).ground_truth_triggered for e in db.entries)
    first = next((i for i, ok in zip(at, labels) if ok), None)
    tp = sum(labels)
    metrics = CampaignMetrics(
        detected=tp > 0,
        execs_to_first_true_report=None if first is None else cfg.phase1_execs + first,
        emitted_reports=len(reports),
        true_positive_reports=tp,
        false_positive_reports=len(reports) - tp,
        inputs_to_vet_for_95pct=vet_count_95(labels),
        phase1_contaminated=contaminated,
        raw_positives=raw,
        db_size=len(db),
        report_labels=labels,
    )
    if cfg.label_phase2:
        metrics.phase2_triggering_execs = labels_p2["trig"]
        metrics.oracle_misses = labels_p2["miss"]

    if cfg.out_dir is not None:
        _persist(cfg, db, reports, metrics, corpus1, corpus2)
    return CampaignResult(db, reports, metrics, at)


def config_to_dict(cfg: CampaignConfig) -> dict:
    d = asdict(cfg)
    for k in ("seeds_dir", "out_dir"):
        d[k] = None if d[k] is None else str(d[k])
    return d


def _persist(cfg, db, reports, metrics, corpus1, corpus2) -> None:
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    save_database(db, out / "db")
    rdir = out / "reports"
    rdir.mkdir(exist_ok=True)
    for old in rdir.glob("report_*.json"):
        old.unlink()
    for i, r in enumerate(reports, start=1):
        (rdir / f"report_{i:06d}.json").write_text(encode_report(r, db))
    save_corpus(corpus1, out / "corpus_phase1", cfg.target_name)
    save_corpus(corpus2, out / "corpus_phase2", cfg.target_name)
    (out / "metrics.json").write_text(json.dumps(asdict(metrics), indent=2) + "\n")
    (out / "config.json").write_text(json.dumps(config_to_dict(cfg), indent=2) + "\n")


# --- multi-campaign drivers -----------------------------------------------------


def _metrics_only(cfg: CampaignConfig) -> CampaignMetrics:
    return run_campaign(cfg).metrics


def run_many(configs: Sequence[CampaignConfig], jobs: int = 1) -> list[CampaignMetrics]:
    if jobs <= 1:
        return [_metrics_only(c) for c in configs]
    with ProcessPoolExecutor(max_workers=jobs) as ex:
        return list(ex.map(_metrics_only, configs))


@dataclass
class SweepRow:
    budget: int
    mean_inputs_to_vet: float
    failed_trials: int
    runs: int


def sweep_row(budget: int, ms: Sequence[CampaignMetrics]) -> SweepRow:
    """Aggregate one budget's campaigns; a missing vet count counts as zero."""
    vet = [m.inputs_to_vet_for_95pct or 0 for m in ms]
    return SweepRow(budget, statistics.fmean(vet), sum(not m.detected for m in ms), len(ms))


def sweep_phase1(cfg_base: CampaignConfig, budgets: Sequence[int], trials: int = 10,
                 targets: Sequence[str] | None = None, jobs: int = 1,
                 results: dict | None = None) -> list[SweepRow]:
    """Phase-1 budget sweep: ``trials`` campaigns per (budget, target).

    Trial ``k`` uses rng seed ``cfg_base.rng_seed + k``. ``results``, if given,
    receives the per-run metrics keyed by (budget, target, trial).
    """
    if not budgets:
        raise ValueError("budgets must be non-empty")
    if trials < 1:
        raise ValueError("trials must be >= 1")
    names = list(targets) if targets else [cfg_base.target_name]
    rows = []
    for budget in budgets:
        keys, cfgs = [], []
        for name in names:
            for k in range(trials):
                keys.append((budget, name, k))
                cfgs.append(replace(cfg_base, target_name=name, phase1_execs=budget,
                                    rng_seed=cfg_base.rng_seed + k, out_dir=None))
        ms = run_many(cfgs, jobs)
        if results is not None:
            results.update(zip(keys, ms))
        rows.append(sweep_row(budget, ms))
        log.info("sweep budget=%d mean_vet=%.2f failed=%d", budget, rows[-1].mean_inputs_to_vet,
                 rows[-1].failed_trials)
    return rows


@dataclass
class BenchRow:
    target: str
    archetype: str
    trials: int
    failed_trials: int
    execs_to_detection_min: int | None
    execs_to_detection_median: float | None
    execs_to_detection_max: int | None
    inputs_to_vet_min: int | None
    inputs_to_vet_mean: float | None
    inputs_to_vet_max: int | None
    mean_reports: float
    contaminated_trials: int


def summarize(target: str, archetype: str, ms: Sequence[CampaignMetrics]) -> BenchRow:
    hits = [m.execs_to_first_true_report for m in ms if m.detected]
    vet = [m.inputs_to_vet_for_95pct or 0 for m in ms]
    return BenchRow(
        target=target,
        archetype=archetype,
        trials=len(ms),
        failed_trials=sum(not m.detected for m in ms),
        execs_to_detection_min=min(hits) if hits else None,
        execs_to_detection_median=statistics.median(hits) if hits else None,
        execs_to_detection_max=max(hits) if hits else None,
        inputs_to_vet_min=min(vet) if vet else None,
        inputs_to_vet_mean=statistics.fmean(vet) if vet else None,
        inputs_to_vet_max=max(vet) if vet else None,
        mean_reports=statistics.fmean(m.emitted_reports for m in ms) if ms else 0.0,
        contaminated_trials=sum(m.phase1_contaminated for m in ms),
    )


def run_bench(trials: int, phase1_execs: int, phase2_execs: int, rng_seed: int = 0,
              targets: Sequence[str] | None = None, jobs: int = 1,
              label_phase2: bool = False):
    """Every bundled pair x ``trials``. Returns (rows, {target: [metrics per trial]})."""
    from .bench import benchmark_pairs

    pairs = benchmark_pairs()
    if targets:
        pairs = [p for p in pairs if p.backdoored.name in targets]
    rows, per_target = [], {}
    for p in pairs:
        name = p.backdoored.name
        cfgs = [CampaignConfig(name, phase1_execs, phase2_execs, rng_seed + k,
                               label_phase2=label_phase2) for k in range(trials)]
        ms = run_many(cfgs, jobs)
        per_target[name] = ms
        rows.append(summarize(name, p.archetype, ms))
        log.info("bench %s: failed=%d/%d", name, rows[-1].failed_trials, trials)
    return rows, per_target
