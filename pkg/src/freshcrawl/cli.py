"""Command-line front end.

Exit status is 0 on success and 2 on invalid input or configuration.
"""

from __future__ import annotations

import argparse
import contextlib
import logging
import math
import statistics
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Optional, Sequence

from . import csvio
from .behavior import generate_messages, make_population
from .config import ExperimentConfig, apply_seed_env, check_writable, load_config, parse_int_list
from .partition import (
    FrequencySequence,
    arithmetic_step,
    predict_rr_difference,
    split,
)
from .scheduler import HashScheduleInput, hash_schedule, schedule_rates
from .sim.engine import QuotaPolicy, SimConfig, simulate
from .sim.experiments import ACTIVE_CLASSES, build_corpus, speedup_rows, synthetic_frequencies
from .sim.metrics import SimReport

log = logging.getLogger("freshcrawl")

EXIT_OK, EXIT_USAGE = 0, 2


class CliError(Exception):
    pass


def _sink(path: Optional[str]):
    """Writable text file, or stdout when no path is given."""
    if path:
        return open(path, "w", newline="", encoding="utf-8")
    return contextlib.nullcontext(sys.stdout)


def _note(args, text: str):
    """Summary text goes to stdout unless stdout is carrying the CSV."""
    stream = sys.stderr if not getattr(args, "output", None) else sys.stdout
    print(text, file=stream)


def _seed_list(text: str) -> list[int]:
    try:
        seeds = parse_int_list(text)
    except ValueError as e:
        raise argparse.ArgumentTypeError(str(e)) from None
    if not seeds:
        raise argparse.ArgumentTypeError("seed list must not be empty")
    return seeds


# -- generate --------------------------------------------------------------

def cmd_generate(args) -> int:
    seed = args.seed[0]
    only = ACTIVE_CLASSES if args.active_only else None
    specs = make_population(args.users, seed, only=only)
    if not specs:
        raise CliError("no users")
    histories = [generate_messages(s, args.days) for s in specs]
    if args.output:
        check_writable(args.output)
    with _sink(args.output) as fh:
        csvio.write_messages(fh, histories)
    if args.rates:
        check_writable(args.rates)
        csvio.write_rates(args.rates, {h.user_id: len(h) / args.days for h in histories})
    total = sum(len(h) for h in histories)
    _note(args, f"generated {len(histories)} users, {total} messages over {args.days} days (seed {seed})")
    return EXIT_OK


# -- schedule --------------------------------------------------------------

def _read_rates_any(path: str, days: Optional[float]) -> dict[str, float]:
    """Rates from a ``user_id,lambda`` file or estimated from a messages file."""
    table = csvio.read_table(path)
    if table.header == csvio.MESSAGE_COLUMNS:
        per_user = csvio.read_messages(path)
        if not per_user:
            return {}
        span = days or math.ceil((max(int(t.max()) for t in per_user.values()) + 1) / 1440)
        return {u: len(t) / span for u, t in per_user.items()}
    return csvio.read_rates(path)


def cmd_schedule_poisson(args) -> int:
    rates = _read_rates_any(args.input, args.days)
    if not rates:
        raise CliError("no users")
    sched = schedule_rates(rates, args.delta)
    with _sink(args.output) as fh:
        csvio.write_schedule(fh, sched)
    _note(args, f"order: {','.join(sched.order[:20])}{',...' if len(sched.order) > 20 else ''}")
    _note(args, f"total_potentiality={sched.total_potentiality!r}")
    return EXIT_OK


def cmd_schedule_hash(args) -> int:
    rows = csvio.read_hash_input(args.input)
    if not rows:
        raise CliError("no users")
    results = []
    for r in rows:
        inp = HashScheduleInput(r.profile, r.yesterday, args.c, args.s, args.remaining)
        results.append((r.user_id, hash_schedule(inp, args.weight)))
    with _sink(args.output) as fh:
        csvio.write_hash_output(fh, results)
    for u, o in results[:20]:
        _note(args, f"{u}: L={list(o.crawl_times)} new_remaining={o.new_remaining!r}")
    if len(results) > 20:
        _note(args, f"... {len(results) - 20} more users")
    return EXIT_OK


# -- partition -------------------------------------------------------------

def _print_partition(args, assignment, seq: FrequencySequence):
    sums = ";".join(f"{s:.6g}" for s in assignment.part_sums)
    _note(args, f"part_sums={sums} max_min_diff={assignment.max_min_diff:.6g} "
                f"pairwise_diff={assignment.max_pairwise_diff:.6g}")
    if "scale" in assignment.notes:
        _note(args, f"frequencies scaled by {assignment.notes['scale']} before subset-sum")
    if args.strategy == "rr" and args.k == 2:
        step = arithmetic_step(seq.values)
        if step is not None:
            f0, delta = step
            measured = assignment.part_sums[0] - assignment.part_sums[1]
            predicted = predict_rr_difference(f0, delta, len(seq))
            _note(args, f"arithmetic input f0={f0:g} delta={delta:g} n={len(seq)}: "
                        f"predicted Part0-Part1={predicted:g} measured={measured:g}")


def cmd_partition(args) -> int:
    if args.k < 1:
        raise CliError("part count must be positive")
    if args.synthetic:
        return _partition_synthetic(args)
    if not args.input:
        raise CliError("--input or --synthetic is required")
    rates = csvio.read_rates(args.input)
    if not rates:
        raise CliError("no users")
    seq = FrequencySequence(tuple(rates.items()))
    assignment = split(seq, args.k, args.strategy, epsilon=args.epsilon, seed=args.seed[0])
    with _sink(args.output) as fh:
        csvio.write_partition(fh, assignment)
    _print_partition(args, assignment, seq)
    if args.baseline:
        for seed in args.seed:
            base = split(seq, args.k, args.baseline, epsilon=args.epsilon, seed=seed)
            ratio = assignment.max_min_diff / base.max_min_diff if base.max_min_diff else math.inf
            _note(args, f"seed {seed}: {args.baseline} max_min_diff={base.max_min_diff:.6g} ratio={ratio:.4%}")
    return EXIT_OK


def _partition_synthetic(args) -> int:
    """Strategy vs baseline on freshly generated frequencies, one population per seed."""
    baseline = args.baseline or "random"
    wins = 0
    with _sink(args.output) as fh:
        fh.write(f"seed,k,{args.strategy}_diff,{baseline}_diff,ratio\n")
        for seed in args.seed:
            seq = synthetic_frequencies(args.synthetic, seed)
            a = split(seq, args.k, args.strategy, epsilon=args.epsilon, seed=seed).max_min_diff
            b = split(seq, args.k, baseline, epsilon=args.epsilon, seed=seed).max_min_diff
            wins += a < b
            ratio = a / b if b else math.inf
            fh.write(f"{seed},{args.k},{a!r},{b!r},{ratio!r}\n")
    _note(args, f"{args.strategy} below {baseline} in {wins}/{len(args.seed)} seeds")
    return EXIT_OK


# -- simulate --------------------------------------------------------------

_FLAG_KEYS = {
    "machines": "sim.machines", "arch": "sim.architecture", "model": "sim.model",
    "days": "sim.duration", "warmup": "sim.warmup_days", "weight": "sim.hash_weight",
    "s": "sim.span_threshold", "c": "quota.messages_per_call", "quota": "quota.calls_per_window",
    "window": "quota.window", "users": "population.users",
    "users_per_machine": "population.users_per_machine", "split": "sim.split",
    "rr_budget": "sim.rr_budget", "seed": "seeds", "output": "output.runs",
    "summary": "output.summary", "trace": "output.trace",
}


def build_experiment_config(args) -> ExperimentConfig:
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    if not args.config:
        apply_seed_env(cfg)
    for flag, key in _FLAG_KEYS.items():
        v = getattr(args, flag, None)
        if v is not None:
            cfg.set(key, v)
    if args.active_only:
        cfg.set("population.active_only", True)
    if args.warm_start:
        cfg.set("sim.hash_warm_start", True)
    return cfg.validate()


def _run_one(job: tuple[dict, int, int, Optional[str]]) -> tuple[SimReport, Optional[str]]:
    values, machines, seed, trace_path = job
    users = values["population.users_per_machine"] * machines or values["population.users"]
    days = values["sim.warmup_days"] + values["sim.duration"]
    corpus = build_corpus(users, seed, days, values["population.active_only"])
    cfg = SimConfig(
        corpus,
        architecture=values["sim.architecture"],
        machines=machines,
        schedule_model=values["sim.model"],
        quota=QuotaPolicy(values["quota.calls_per_window"], values["quota.window"],
                          values["quota.messages_per_call"]),
        duration=values["sim.duration"],
        rng_seed=seed,
        warmup_days=values["sim.warmup_days"],
        hash_weight=values["sim.hash_weight"],
        hash_warm_start=values["sim.hash_warm_start"],
        span_threshold=values["sim.span_threshold"],
        hash_slots=values["sim.hash_slots"],
        retention=values["sim.retention"],
        split=values["sim.split"],
        rr_budget=values["sim.rr_budget"] or None,
    )
    report, sim = simulate(cfg, corpus)
    if trace_path:
        with open(trace_path, "w", encoding="utf-8") as fh:
            sim.state.log.write_trace(fh, corpus.user_ids)
    return report, trace_path


def _trace_path(base: Optional[str], machines: int, seed: int, many: bool) -> Optional[str]:
    if not base:
        return None
    if not many:
        return base
    p = Path(base)
    return str(p.with_name(f"{p.stem}_m{machines}_s{seed}{p.suffix}"))


def speedup_table(reports: Sequence[SimReport]) -> str:
    lines = [
        "| machines | runs | total_messages | speed-up | vs linear | workload_diff |",
        "|---:|---:|---:|---:|---:|---:|",
    ]
    for r in speedup_rows(reports):
        lines.append(
            f"| {r['machines']} | {r['runs']} | {r['total_messages']:.0f} | {r['speedup']:.3f} "
            f"| {r['linear_error']:+.2%} | {r['workload_diff']:.0f} |"
        )
    return "\n".join(lines)


def cmd_simulate(args) -> int:
    cfg = build_experiment_config(args)
    v = cfg.values
    jobs = [(m, s) for m in v["sim.machines"] for s in cfg.seeds]
    many = len(jobs) > 1
    work = [(dict(v), m, s, _trace_path(v["output.trace"], m, s, many)) for m, s in jobs]
    if args.jobs > 1 and many:
        with ProcessPoolExecutor(args.jobs) as pool:
            results = list(pool.map(_run_one, work))
    else:
        results = [_run_one(w) for w in work]
    reports = [r for r, _ in results]
    runs_path = v["output.runs"]
    with _sink(runs_path) as fh:
        csvio.write_reports(fh, reports)
    summary = (f"{v['sim.architecture']} / {v['sim.model']}, {len(cfg.seeds)} seed(s)\n\n"
               + speedup_table(reports))
    if v["output.summary"]:
        Path(v["output.summary"]).write_text(summary + "\n", encoding="utf-8")
    print(summary, file=sys.stdout if runs_path else sys.stderr)
    return EXIT_OK


# -- report ----------------------------------------------------------------

_SUMMARY_METRICS = ("total_messages", "workload_diff", "avg_msgs_per_call", "freshness_minutes",
                    "deferrals", "migrations")


def summarize(files: Sequence[tuple[str, list[dict]]]) -> str:
    """Median and mean per (file, machine count); change in median total vs the first file."""
    header = ["file", "machines", "runs"]
    for m in _SUMMARY_METRICS:
        header += [f"{m} (median)", f"{m} (mean)"]
    header.append("improvement vs first")
    lines = ["| " + " | ".join(header) + " |", "|" + "---|" * len(header)]
    baseline: dict[int, float] = {}
    for i, (name, rows) in enumerate(files):
        by_m: dict[int, list[dict]] = {}
        for r in rows:
            by_m.setdefault(r["machines"], []).append(r)
        for m in sorted(by_m):
            group = by_m[m]
            cells = [name, str(m), str(len(group))]
            for metric in _SUMMARY_METRICS:
                vals = [g[metric] for g in group]
                cells += [_num(statistics.median(vals)), _num(statistics.fmean(vals))]
            med = statistics.median(g["total_messages"] for g in group)
            if i == 0:
                baseline[m] = med
                cells.append("baseline")
            elif baseline.get(m):
                cells.append(f"{(med - baseline[m]) / baseline[m]:+.2%}")
            else:
                cells.append("n/a")
            lines.append("| " + " | ".join(cells) + " |")
    return "\n".join(lines)


def _num(v: float) -> str:
    return str(int(v)) if float(v).is_integer() else f"{v:.6g}"


def cmd_report(args) -> int:
    files = [(p, csvio.read_reports(p)) for p in args.inputs]
    text = summarize(files)
    if args.output:
        check_writable(args.output)
        Path(args.output).write_text(text + "\n", encoding="utf-8")
    print(text)
    return EXIT_OK


# -- parser ----------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="freshcrawl", description="Crawl scheduling, partitioning and simulation.")
    p.add_argument("-v", "--verbose", action="store_true", help="debug logging on stderr")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="synthesize a user population's posts")
    g.add_argument("--users", type=int, default=1000, help="population size")
    g.add_argument("--days", type=int, default=30, help="days of posting")
    g.add_argument("--seed", type=_seed_list, default=[0], help="population seed (first value used)")
    g.add_argument("--active-only", action="store_true", help="keep only regular and authority posters")
    g.add_argument("--output", help="messages CSV (default stdout)")
    g.add_argument("--rates", help="also write user_id,lambda estimates here")
    g.set_defaults(func=cmd_generate)

    s = sub.add_parser("schedule", help="crawl order or crawl times")
    ssub = s.add_subparsers(dest="model", required=True)
    sp = ssub.add_parser("poisson", help="organ-pipe order from rates or a messages file")
    sp.add_argument("--input", required=True, help="user_id,lambda or user_id,timestamp_minutes CSV")
    sp.add_argument("--output", help="schedule CSV (default stdout)")
    sp.add_argument("--delta", type=float, default=1.0, help="slot width")
    sp.add_argument("--days", type=float, help="observation window for a messages file")
    sp.set_defaults(func=cmd_schedule_poisson)
    sh = ssub.add_parser("hash", help="per-user crawl slots from hash profiles")
    sh.add_argument("--input", required=True, help="user_id,slot,profile,yesterday CSV")
    sh.add_argument("--output", help="hash output CSV (default stdout)")
    sh.add_argument("--c", type=float, default=100.0, help="messages per crawl call")
    sh.add_argument("--s", type=int, default=720, help="span threshold in slots")
    sh.add_argument("--weight", type=float, default=0.5, help="weight of yesterday's counts")
    sh.add_argument("--remaining", type=float, default=0.0, help="carried-over backlog per user")
    sh.set_defaults(func=cmd_schedule_hash)

    pa = sub.add_parser("partition", help="split users across machines")
    pa.add_argument("--input", help="user_id,frequency (or lambda) CSV")
    pa.add_argument("--synthetic", type=int, default=0, metavar="N",
                    help="instead of --input, generate N frequencies per seed and compare with --baseline")
    pa.add_argument("--output", help="partition CSV (default stdout)")
    pa.add_argument("--strategy", choices=("rr", "halving", "setdiv", "random"), default="rr")
    pa.add_argument("--baseline", choices=("rr", "halving", "setdiv", "random"), help="strategy to compare against")
    pa.add_argument("--k", type=int, default=2, help="number of parts")
    pa.add_argument("--epsilon", type=float, default=0.2, help="ratio slack for halving")
    pa.add_argument("--seed", type=_seed_list, default=[0], help="seed or seed list for random splits")
    pa.set_defaults(func=cmd_partition)

    si = sub.add_parser("simulate", help="run the crawl simulator over machine counts and seeds")
    si.add_argument("--config", help="flat key = value configuration file")
    si.add_argument("--machines", type=_seed_list, help="machine counts, e.g. 1,2,4,8,16")
    si.add_argument("--arch", choices=("centralized", "distributed"))
    si.add_argument("--model", choices=("poisson", "hash", "rr"))
    si.add_argument("--seed", type=_seed_list, help="seed list, e.g. 0-19")
    si.add_argument("--users", type=int, help="population size")
    si.add_argument("--users-per-machine", type=int, help="population size per machine")
    si.add_argument("--active-only", action="store_true", help="keep only regular and authority posters")
    si.add_argument("--days", type=int, help="simulated crawl days")
    si.add_argument("--warmup", type=int, help="history days before crawling starts")
    si.add_argument("--quota", type=int, help="calls per window per machine")
    si.add_argument("--window", type=int, help="quota window in minutes")
    si.add_argument("--c", type=int, help="messages per crawl call")
    si.add_argument("--s", type=int, help="hash span threshold in slots")
    si.add_argument("--weight", type=float, help="hash weight of yesterday's counts")
    si.add_argument("--warm-start", action="store_true", help="train hash profiles on the warm-up days")
    si.add_argument("--split", choices=("rr", "setdiv"), help="initial distributed split")
    si.add_argument("--rr-budget", type=int, help="total calls for the rr model")
    si.add_argument("--output", help="per-run CSV (default stdout)")
    si.add_argument("--summary", help="also write the speed-up table here")
    si.add_argument("--trace", help="event trace CSV; suffixed per run when there are several")
    si.add_argument("--jobs", type=int, default=1, help="worker processes")
    si.set_defaults(func=cmd_simulate)

    r = sub.add_parser("report", help="summarize simulation CSVs")
    r.add_argument("inputs", nargs="+", help="report CSVs; the first is the baseline")
    r.add_argument("--output", help="also write the summary here")
    r.set_defaults(func=cmd_report)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (CliError, ValueError) as e:  # config, CSV and partition errors are ValueErrors
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except FileNotFoundError as e:
        print(f"error: {e.filename}: no such file", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
