"""Seeded experiment drivers shared by the command line and the acceptance checks."""

from __future__ import annotations

import statistics
from dataclasses import dataclass, replace
from typing import Iterable, Optional, Sequence

import numpy as np

from ..behavior import UserClass, make_population
from ..partition import FrequencySequence, random_split, rr_split
from .corpus import Corpus
from .engine import QuotaPolicy, SimConfig, simulate
from .metrics import SimReport

ACTIVE_CLASSES = (UserClass.REASONABLE_CONSTANT, UserClass.AUTHORITY)
WEIGHTS = (0.4, 0.5, 0.6, 0.7, 0.8, 0.9)
MACHINE_SWEEP = (1, 2, 4, 8, 16)


def build_corpus(n_users: int, seed: int, days: int, active_only: bool = False) -> Corpus:
    only = ACTIVE_CLASSES if active_only else None
    return Corpus.generate(make_population(n_users, seed, only=only), days)


@dataclass(frozen=True)
class RankingResult:
    seed: int
    poisson: SimReport
    rr: SimReport

    @property
    def improvement(self) -> float:
        return self.poisson.total_messages / max(1, self.rr.total_messages) - 1


def ranking_trial(
    seed: int,
    n_users: int = 5000,
    duration: int = 30,
    quota: QuotaPolicy = QuotaPolicy(20, 60, 100),
    warmup_days: int = 7,
) -> RankingResult:
    """Poisson-planned crawling against round-robin, both spending the full quota."""
    corpus = build_corpus(n_users, seed, warmup_days + duration)
    base = SimConfig(corpus, quota=quota, duration=duration, warmup_days=warmup_days, rng_seed=seed)
    p, _ = simulate(replace(base, schedule_model="poisson"), corpus)
    r, _ = simulate(replace(base, schedule_model="rr"), corpus)
    return RankingResult(seed, p, r)


@dataclass(frozen=True)
class HashSweepResult:
    seed: int
    n_users: int
    by_weight: dict  # weight -> SimReport
    rr: SimReport  # round-robin spending the w=0.5 hash run's call count
    reference_weight: float

    @property
    def hash_reference(self) -> SimReport:
        return self.by_weight[self.reference_weight]

    @property
    def improvement(self) -> float:
        return self.hash_reference.total_messages / max(1, self.rr.total_messages) - 1

    def monotone(self) -> bool:
        reps = [self.by_weight[w] for w in sorted(self.by_weight)]
        calls = [r.total_calls for r in reps]
        avg = [r.avg_msgs_per_call for r in reps]
        return all(a <= b for a, b in zip(calls, calls[1:])) and all(a >= b for a, b in zip(avg, avg[1:]))


def hash_sweep_trial(
    seed: int,
    population: int = 5000,
    duration: int = 30,
    weights: Sequence[float] = WEIGHTS,
    reference_weight: float = 0.5,
    span_threshold: int = 720,
    quota: QuotaPolicy = QuotaPolicy(),
    warmup_days: int = 7,
) -> HashSweepResult:
    """Hash-model runs over a weight sweep on the active users of a population.

    The round-robin baseline gets exactly as many calls as the hash run at
    ``reference_weight`` made, spread evenly over the crawl.
    """
    weights = sorted(set(weights) | {reference_weight})
    corpus = build_corpus(population, seed, warmup_days + duration, active_only=True)
    base = SimConfig(
        corpus, schedule_model="hash", quota=quota, duration=duration,
        warmup_days=warmup_days, span_threshold=span_threshold, rng_seed=seed,
    )
    by_weight = {w: simulate(replace(base, hash_weight=w), corpus)[0] for w in weights}
    budget = by_weight[reference_weight].total_calls
    rr, _ = simulate(replace(base, schedule_model="rr", rr_budget=budget), corpus)
    return HashSweepResult(seed, corpus.n_users, by_weight, rr, reference_weight)


def machine_sweep(
    architecture: str,
    machines: Iterable[int] = MACHINE_SWEEP,
    users_per_machine: int = 2000,
    duration: int = 365,
    seed: int = 0,
    model: str = "poisson",
    quota: QuotaPolicy = QuotaPolicy(10, 60, 100),
    warmup_days: int = 7,
) -> list[SimReport]:
    """One run per machine count; the population grows with the machine count."""
    out = []
    for m in machines:
        corpus = build_corpus(users_per_machine * m, seed, warmup_days + duration)
        cfg = SimConfig(
            corpus, architecture=architecture, machines=m, schedule_model=model,
            quota=quota, duration=duration, warmup_days=warmup_days, rng_seed=seed,
        )
        out.append(simulate(cfg, corpus)[0])
        del corpus
    return out


def speedup_rows(reports: Sequence[SimReport]) -> list[dict]:
    """Median totals per machine count and their ratio to the single-machine median."""
    by_m: dict[int, list[SimReport]] = {}
    for r in reports:
        by_m.setdefault(r.machines, []).append(r)
    if not by_m:
        return []
    base_m = min(by_m)
    base = statistics.median(r.total_messages for r in by_m[base_m]) / base_m
    rows = []
    for m in sorted(by_m):
        total = statistics.median(r.total_messages for r in by_m[m])
        speedup = total / base if base else 0.0
        rows.append({
            "machines": m,
            "runs": len(by_m[m]),
            "total_messages": total,
            "workload_diff": statistics.median(r.workload_diff for r in by_m[m]),
            "speedup": speedup,
            "linear_error": speedup / m - 1 if m else 0.0,
        })
    return rows


@dataclass(frozen=True)
class ArchitectureResult:
    seed: int
    centralized: SimReport
    distributed: SimReport


def architecture_trial(
    seed: int,
    machines: int = 4,
    users_per_machine: int = 500,
    duration: int = 30,
    model: str = "poisson",
    quota: QuotaPolicy = QuotaPolicy(10, 60, 100),
    warmup_days: int = 7,
) -> ArchitectureResult:
    corpus = build_corpus(users_per_machine * machines, seed, warmup_days + duration)
    base = SimConfig(
        corpus, machines=machines, schedule_model=model, quota=quota,
        duration=duration, warmup_days=warmup_days, rng_seed=seed,
    )
    c, _ = simulate(replace(base, architecture="centralized"), corpus)
    d, _ = simulate(replace(base, architecture="distributed"), corpus)
    return ArchitectureResult(seed, c, d)


def synthetic_frequencies(n: int, seed: int) -> FrequencySequence:
    """Daily rates of a generated population, the input the machines would split."""
    specs = make_population(n, seed)
    rng = np.random.default_rng(seed)
    # observed rates scatter around the generator's base rate
    vals = [max(0.0, s.base_rate * rng.uniform(0.8, 1.2)) for s in specs]
    return FrequencySequence(tuple((s.user_id, v) for s, v in zip(specs, vals)))


@dataclass(frozen=True)
class PartitionComparison:
    seed: int
    k: int
    rr_diff: float
    random_diff: float

    @property
    def ratio(self) -> float:
        return self.rr_diff / self.random_diff if self.random_diff else float("inf")


def partition_comparison(
    seed: int,
    n: int = 10000,
    k: int = 2,
    frequencies: Optional[FrequencySequence] = None,
) -> PartitionComparison:
    seq = frequencies if frequencies is not None else synthetic_frequencies(n, seed)
    rr = rr_split(seq.organ_pipe(), k)
    rnd = random_split(seq, k, seed)
    return PartitionComparison(seed, k, rr.max_min_diff, rnd.max_min_diff)
