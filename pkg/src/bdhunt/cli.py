"""Command-line front end.

Subcommands: run, collect, detect, vet, bench, sweep, db-inspect, targets.
Budgets are always explicit execution counts. ``ROSA_OUT`` supplies a default
output directory for the commands that write one.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from dataclasses import asdict
from pathlib import Path

from . import __version__
from .campaign import (
    CampaignConfig,
    bundled_seeds,
    collect,
    detect,
    run_bench,
    run_campaign,
    sweep_phase1,
)
from .fuzzer import NoSeeds, load_seeds, save_corpus
from .oracle import (
    BackdoorReport,
    EmptyCorpus,
    EmptyDatabase,
    RepresentativeDb,
    StoredReport,
    decode_report,
    encode_report,
    load_database,
    save_database,
)
from .target import BACKDOOR, InputTooLarge, UnknownTarget, execute, get_target, target_names
from .trace import TraceFormatError, hamming_syscalls

log = logging.getLogger("bdhunt")

VET_EPILOG = """\
How to judge a report:
  The suspect was matched to the representative(s) whose edge coverage is
  closest, i.e. inputs the program treats as the same kind of request. Only
  the syscall classes that differ are shown.

  Likely backdoor: the suspect alone performs privileged or outward-facing
  work (SETUID, SETGID, SPAWN, EXEC, CONNECT, SEND, ...) and nothing in the
  suspect input legitimately asks for it. Confirm by replaying the suspect.

  Likely false positive: the difference is explained by a legitimate feature
  present in one input and missing from the other (an extra command, option,
  or section that the representative simply does not use). Dedup already
  folds repeats of the same difference against the same representative, so
  move on to the next report.
"""

_PREVIEW = 256


class _OutError(Exception):
    pass


def _out_dir(value: str | None) -> Path:
    value = value or os.environ.get("ROSA_OUT")
    if not value:
        raise _OutError("no output directory: pass --out or set ROSA_OUT")
    return Path(value)


def _seeds(target_name: str, seeds_dir: str | None):
    return load_seeds(seeds_dir) if seeds_dir else bundled_seeds(target_name)


def _summary_line(i: int, r: BackdoorReport) -> str:
    rid, diff = r.dedup_key
    text = r.suspect.data[:40].decode("latin-1").encode("unicode_escape").decode("ascii")
    return f"report {i:06d} rep={rid} dist={r.edge_distance} diff={diff} input={text}"


def _write_reports(reports, db: RepresentativeDb, out: Path) -> None:
    rdir = out / "reports"
    rdir.mkdir(parents=True, exist_ok=True)
    for old in rdir.glob("report_*.json"):
        old.unlink()
    for i, r in enumerate(reports, start=1):
        (rdir / f"report_{i:06d}.json").write_text(encode_report(r, db))


# --- run / collect / detect -----------------------------------------------------


def cmd_run(args: argparse.Namespace) -> int:
    out = _out_dir(args.out)
    cfg = CampaignConfig(
        target_name=args.target,
        phase1_execs=args.phase1_execs,
        phase2_execs=args.phase2_execs,
        rng_seed=args.rng_seed,
        workers=args.workers,
        seeds_dir=Path(args.seeds) if args.seeds else None,
        out_dir=out,
    )
    result = run_campaign(cfg)
    for i, r in enumerate(result.reports, start=1):
        print(_summary_line(i, r))
    m = result.metrics
    print(f"summary target={cfg.target_name} db={m.db_size} raw={m.raw_positives} "
          f"reports={m.emitted_reports} true={m.true_positive_reports} "
          f"vet95={m.inputs_to_vet_for_95pct} contaminated={str(m.phase1_contaminated).lower()}")
    return 0


def cmd_collect(args: argparse.Namespace) -> int:
    out = _out_dir(args.out)
    target = get_target(args.target, BACKDOOR)
    db, corpus = collect(target, _seeds(args.target, args.seeds), args.execs, args.rng_seed,
                         args.workers)
    save_database(db, out / "db")
    save_corpus(corpus, out / "corpus_phase1", target.name)
    print(f"collected {len(corpus)} corpus entries, {len(db)} representatives -> {out / 'db'}")
    return 0


def cmd_detect(args: argparse.Namespace) -> int:
    out = _out_dir(args.out)
    db = load_database(args.db)
    name = args.target or db.target
    if not name:
        raise _OutError("database does not name its target; pass --target")
    target = get_target(name, BACKDOOR)
    reports, _, raw, corpus = detect(target, db, _seeds(name, args.seeds), args.execs,
                                     args.rng_seed, args.workers)
    _write_reports(reports, db, out)
    save_corpus(corpus, out / "corpus_phase2", name)
    for i, r in enumerate(reports, start=1):
        print(_summary_line(i, r))
    print(f"summary target={name} raw={raw} reports={len(reports)}")
    return 0


# --- vet ------------------------------------------------------------------------


def _render_input(label: str, data: bytes) -> list[str]:
    shown = data[:_PREVIEW]
    more = f" (+{len(data) - _PREVIEW} bytes)" if len(data) > _PREVIEW else ""
    text = "".join(chr(b) if 32 <= b < 127 else "." for b in shown)
    return [f"{label} ({len(data)} bytes)", f"  hex:  {shown.hex()}{more}", f"  text: {text}"]


def render_vet(stored: StoredReport) -> str:
    """The vetting view: both inputs plus the differing syscall classes only."""
    r = stored.report
    lines = [f"target: {stored.target or '?'}", f"edge distance: {r.edge_distance}"]
    lines += _render_input(
        f"suspect #{r.suspect.id} (parent {r.suspect.parent_id}, {r.suspect.origin})", r.suspect.data
    )
    for rid in r.matched_reps:
        rep = stored.reps[rid]
        lines += _render_input(f"rep {rid} (input #{rep.input.id})", rep.input.data)
    classes = sorted({c for d in r.syscall_diff.values() for c in d.classes()})
    cols = ["suspect"] + [f"rep {rid}" for rid in r.matched_reps]
    lines.append("syscall classes that differ:")
    lines.append("  " + f"{'class':<10}" + "".join(f"{c:<10}" for c in cols).rstrip())
    for c in classes:
        cells = ["yes" if c in r.suspect_syscalls.classes else "-"]
        cells += ["yes" if c in stored.reps[rid].syscalls.classes else "-" for rid in r.matched_reps]
        lines.append("  " + f"{c.name:<10}" + "".join(f"{x:<10}" for x in cells).rstrip())
    return "\n".join(lines) + "\n"


def _replay(stored: StoredReport, target_name: str) -> list[str]:
    t = get_target(target_name, BACKDOOR)
    r = stored.report
    problems = []
    suspect = execute(t, r.suspect.data)
    if suspect.syscalls != r.suspect_syscalls:
        problems.append("suspect syscall classes differ from the stored report")
    if suspect.edge_set != r.suspect_edges:
        problems.append("suspect edge coverage differs from the stored report")
    for rid in r.matched_reps:
        rep = execute(t, stored.reps[rid].input.data)
        _, diff = hamming_syscalls(suspect.syscalls, rep.syscalls)
        if diff != r.syscall_diff[rid]:
            problems.append(f"rep {rid}: replayed diff {diff.canonical()} != stored "
                            f"{r.syscall_diff[rid].canonical()}")
    return problems


def cmd_vet(args: argparse.Namespace) -> int:
    stored = decode_report(Path(args.report).read_text())
    sys.stdout.write(render_vet(stored))
    if args.replay:
        name = args.target or stored.target
        if not name:
            raise _OutError("report does not name its target; pass --target")
        problems = _replay(stored, name)
        for p in problems:
            print(f"MISMATCH {p}")
        print(f"replay: {len(problems)} mismatch(es)")
        return 1 if problems else 0
    return 0


# --- bench / sweep --------------------------------------------------------------


def _write_delimited(path: Path, rows: list[dict]) -> None:
    with path.open("w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0]) if rows else [])
        w.writeheader()
        w.writerows(rows)


def _fmt(v) -> str:
    if v is None:
        return "-"
    if isinstance(v, float):
        return f"{v:.1f}"
    return str(v)


def cmd_bench(args: argparse.Namespace) -> int:
    from .plotting import plot_bench

    rows, per_target = run_bench(args.trials, args.phase1_execs, args.phase2_execs, args.rng_seed,
                                 args.targets, args.jobs)
    header = ("target", "failed", "det_min", "det_median", "det_max", "vet_min", "vet_mean",
              "vet_max", "reports")
    print("\t".join(header))
    for r in rows:
        print("\t".join(_fmt(v) for v in (
            r.target, f"{r.failed_trials}/{r.trials}", r.execs_to_detection_min,
            r.execs_to_detection_median, r.execs_to_detection_max, r.inputs_to_vet_min,
            r.inputs_to_vet_mean, r.inputs_to_vet_max, r.mean_reports)))
    out = args.out or os.environ.get("ROSA_OUT")
    if out:
        out = Path(out)
        out.mkdir(parents=True, exist_ok=True)
        _write_delimited(out / "bench.csv", [asdict(r) for r in rows])
        (out / "bench.json").write_text(json.dumps({
            "config": {"trials": args.trials, "phase1_execs": args.phase1_execs,
                       "phase2_execs": args.phase2_execs, "rng_seed": args.rng_seed},
            "rows": [asdict(r) for r in rows],
            "trials": {k: [asdict(m) for m in v] for k, v in per_target.items()},
        }, indent=2) + "\n")
        plot_bench(rows, out / "bench.png")
        print(f"wrote {out / 'bench.csv'}, {out / 'bench.json'}, {out / 'bench.png'}")
    return 0


def cmd_sweep(args: argparse.Namespace) -> int:
    from .plotting import plot_sweep

    names = args.targets or [p for p in target_names() if p != "weak_gate"]
    base = CampaignConfig(names[0], 1, args.phase2_execs, args.rng_seed)
    rows = sweep_phase1(base, args.budgets, args.trials, names, args.jobs)
    print("budget\tmean_inputs_to_vet\tfailed_trials\truns")
    for r in rows:
        print(f"{r.budget}\t{r.mean_inputs_to_vet:.2f}\t{r.failed_trials}\t{r.runs}")
    out = args.out or os.environ.get("ROSA_OUT")
    if out:
        out = Path(out)
        out.mkdir(parents=True, exist_ok=True)
        _write_delimited(out / "sweep.csv", [asdict(r) for r in rows])
        plot_sweep(rows, out / "sweep.png", title=", ".join(names))
        print(f"wrote {out / 'sweep.csv'}, {out / 'sweep.png'}")
    return 0


# --- inspection -----------------------------------------------------------------


def cmd_db_inspect(args: argparse.Namespace) -> int:
    db = load_database(args.db)
    print(f"target: {db.target or '?'}  representatives: {len(db)}")
    print("rep_id\tinput_id\tedges\tsyscalls\tinput")
    for e in db.entries:
        text = e.input.data[:40].decode("latin-1").encode("unicode_escape").decode("ascii")
        names = ",".join(c.name for c in e.syscalls.classes) or "-"
        print(f"{e.rep_id}\t{e.input.id}\t{len(e.edge_set)}\t{names}\t{text}")
    return 0


def cmd_targets(args: argparse.Namespace) -> int:
    from .bench import descriptors

    desc = descriptors()["targets"]
    for name in target_names():
        d = desc.get(name, {})
        tag = " (fixture)" if d.get("fixture") else ""
        print(f"{name}\t{d.get('archetype', '')}{tag}")
    return 0


# --- parser ---------------------------------------------------------------------


def _positive(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if v < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {v}")
    return v


def _budget_list(text: str) -> list[int]:
    return [_positive(x) for x in text.split(",") if x]


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="bdhunt", description="Greybox fuzzing with a metamorphic "
                                "backdoor oracle.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True, metavar="COMMAND")

    def common(sp):
        sp.add_argument("--seeds", help="seed directory (default: the target's bundled seeds)")
        sp.add_argument("--rng-seed", type=int, default=0)
        sp.add_argument("--workers", type=_positive, default=1,
                        help="fuzzing threads; results are only reproducible with 1")
        sp.add_argument("--out", help="output directory (default: $ROSA_OUT)")

    sp = sub.add_parser("run", help="phase 1 + phase 2 + metrics, persisted under --out")
    sp.add_argument("--target", required=True)
    sp.add_argument("--phase1-execs", type=_positive, required=True)
    sp.add_argument("--phase2-execs", type=_positive, required=True)
    common(sp)
    sp.set_defaults(func=cmd_run)

    sp = sub.add_parser("collect", help="phase 1 only: build and save the representative db")
    sp.add_argument("--target", required=True)
    sp.add_argument("--execs", type=_positive, required=True)
    common(sp)
    sp.set_defaults(func=cmd_collect)

    sp = sub.add_parser("detect", help="phase 2 only, against a saved db")
    sp.add_argument("--db", required=True, help="database directory written by collect/run")
    sp.add_argument("--target", help="defaults to the target recorded in the db")
    sp.add_argument("--execs", type=_positive, required=True)
    common(sp)
    sp.set_defaults(func=cmd_detect)

    sp = sub.add_parser("vet", help="show one report for manual review",
                        epilog=VET_EPILOG, formatter_class=argparse.RawDescriptionHelpFormatter)
    sp.add_argument("report", help="report_NNNNNN.json file")
    sp.add_argument("--replay", action="store_true",
                    help="re-execute suspect and representatives and check the stored diff")
    sp.add_argument("--target", help="defaults to the target recorded in the report")
    sp.set_defaults(func=cmd_vet)

    sp = sub.add_parser("bench", help="run the bundled benchmark and tabulate results")
    sp.add_argument("--trials", type=_positive, default=10)
    sp.add_argument("--phase1-execs", type=_positive, default=20_000)
    sp.add_argument("--phase2-execs", type=_positive, default=200_000)
    sp.add_argument("--rng-seed", type=int, default=0)
    sp.add_argument("--targets", nargs="+", help="subset of bundled targets")
    sp.add_argument("--jobs", type=_positive, default=1, help="campaigns run in parallel")
    sp.add_argument("--out", help="where to write bench.csv/.json/.png (default: $ROSA_OUT)")
    sp.set_defaults(func=cmd_bench)

    sp = sub.add_parser("sweep", help="phase-1 budget sweep over the bundled benchmark")
    sp.add_argument("--budgets", type=_budget_list, default=[5_000, 20_000, 80_000],
                    help="comma-separated phase-1 budgets")
    sp.add_argument("--trials", type=_positive, default=10)
    sp.add_argument("--phase2-execs", type=_positive, default=200_000)
    sp.add_argument("--rng-seed", type=int, default=0)
    sp.add_argument("--targets", nargs="+")
    sp.add_argument("--jobs", type=_positive, default=1)
    sp.add_argument("--out", help="where to write sweep.csv/.png (default: $ROSA_OUT)")
    sp.set_defaults(func=cmd_sweep)

    sp = sub.add_parser("db-inspect", help="list the representatives of a saved db")
    sp.add_argument("db")
    sp.set_defaults(func=cmd_db_inspect)

    sp = sub.add_parser("targets", help="list registered targets")
    sp.set_defaults(func=cmd_targets)
    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UnknownTarget as exc:
        print(f"bdhunt: unknown target {exc.args[0]!r} (try: bdhunt targets)", file=sys.stderr)
    except (_OutError, NoSeeds, EmptyCorpus, EmptyDatabase, InputTooLarge) as exc:
        print(f"bdhunt: {exc}", file=sys.stderr)
    except (OSError, ValueError, KeyError, TraceFormatError) as exc:
        print(f"bdhunt: {type(exc).__name__}: {exc}", file=sys.stderr)
    return 1


if __name__ == "__main__":
    sys.exit(main())
