"""Crawl ordering for rate-modelled users and crawl times for hash-modelled users."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .behavior import HashProfile, slot_minutes, update_hash_profile


def crawl_penalty(t_i: float, n: int, delta: float) -> float:
    """Time factor of a crawl at ``t_i`` within the horizon ``[0, n*delta]``."""
    horizon = n * delta
    if not 0 <= t_i <= horizon:
        raise ValueError(f"time outside horizon: {t_i} not in [0, {horizon}]")
    return t_i * t_i - t_i * horizon + horizon * horizon / 2


def user_potentiality(lam: float, t_i: float, n: int, delta: float) -> float:
    """Expected new posts between the crawl at ``t_i`` and a uniformly random query time."""
    if lam < 0:
        raise ValueError("rate must be non-negative")
    return lam * crawl_penalty(t_i, n, delta) / (n * delta)


@dataclass(frozen=True)
class PoissonScheduleInput:
    users: tuple[tuple[str, float], ...]
    delta: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "users", tuple((str(u), float(l)) for u, l in self.users))
        if self.delta <= 0:
            raise ValueError("delta must be positive")
        if any(lam < 0 for _, lam in self.users):
            raise ValueError("rates must be non-negative")

    @classmethod
    def from_rates(cls, rates: Mapping[str, float], delta: float = 1.0) -> "PoissonScheduleInput":
        """Sort by rate, breaking ties by user id."""
        return cls(tuple(sorted(rates.items(), key=lambda kv: (kv[1], kv[0]))), delta)

    @property
    def n(self) -> int:
        return len(self.users)

    @property
    def horizon(self) -> float:
        return self.n * self.delta


@dataclass(frozen=True)
class CrawlSchedule:
    order: tuple[str, ...]
    total_potentiality: float
    delta: float = 1.0
    rates: Mapping[str, float] = field(default_factory=dict)

    def crawl_time(self, position: int) -> float:
        return position * self.delta


def total_potentiality(schedule: CrawlSchedule, rates: Mapping[str, float], delta: float) -> float:
    n = len(schedule.order)
    total = 0.0
    for j, uid in enumerate(schedule.order):
        try:
            lam = rates[uid]
        except KeyError:
            raise KeyError(f"no rate for user {uid!r}") from None
        total += user_potentiality(lam, j * delta, n, delta)
    return total


def organ_pipe_indices(n: int) -> list[int]:
    """Positions-to-input-index map: evens ascending, then odds descending."""
    half = (n + 1) // 2
    return [2 * j if j < half else 2 * (n - j) - 1 for j in range(n)]


def organ_pipe_schedule(inp: PoissonScheduleInput) -> CrawlSchedule:
    """Order sorted users so the busiest land mid-horizon where the penalty is lowest."""
    lams = [lam for _, lam in inp.users]
    if any(b < a for a, b in zip(lams, lams[1:])):
        raise ValueError("input not sorted")
    order = tuple(inp.users[i][0] for i in organ_pipe_indices(inp.n))
    rates = dict(inp.users)
    total = total_potentiality(CrawlSchedule(order, 0.0), rates, inp.delta) if order else 0.0
    return CrawlSchedule(order, total, inp.delta, rates)


@dataclass(frozen=True)
class HashScheduleInput:
    profile_slots: np.ndarray
    yesterday_counts: np.ndarray
    capacity: float
    span_threshold: int
    remaining: float = 0.0

    def __post_init__(self):
        a = np.asarray(self.profile_slots, dtype=float)
        n = np.asarray(self.yesterday_counts, dtype=float)
        object.__setattr__(self, "profile_slots", a)
        object.__setattr__(self, "yesterday_counts", n)
        if a.shape != n.shape:
            raise ValueError(f"profile has {a.size} slots but counts have {n.size}")
        if self.capacity <= 0:
            raise ValueError("capacity must be positive")
        if self.span_threshold < 1:
            raise ValueError("span threshold must be at least 1")
        if self.remaining < 0:
            raise ValueError("remaining must be non-negative")


@dataclass(frozen=True)
class HashScheduleOutput:
    crawl_times: tuple[int, ...]
    new_remaining: float
    updated_slots: np.ndarray
    last_crawl: int = 0  # relative to the start of the day; <= 0 when L is empty


def hash_schedule(
    inp: HashScheduleInput,
    weight: float = 0.5,
    last_crawl: int = 0,
) -> HashScheduleOutput:
    """Crawl times for one user over one day of ``k`` slots.

    Slot ``i`` (1-based) is a crawl time when the predicted posts since
    the previous crawl exceed the capacity, or when more than
    ``span_threshold`` slots have passed. The reference sum at slot 0 is
    minus the carried-over backlog, so leftovers count toward the first
    trigger. ``last_crawl`` may be negative to continue a span that
    started on an earlier day.
    """
    if last_crawl > 0:
        raise ValueError("last_crawl is relative to day start and must be <= 0")
    k = inp.profile_slots.size
    profile = HashProfile(inp.profile_slots, weight, slot_minutes(k))
    a = update_hash_profile(profile, inp.yesterday_counts).slots

    sums = np.empty(k + 1)
    sums[0] = -inp.remaining
    sums[1:] = np.cumsum(a)

    crawl_times: list[int] = []
    last = last_crawl
    for i in range(1, k + 1):
        ref = sums[max(last, 0)]
        if sums[i] - ref > inp.capacity or i - last > inp.span_threshold:
            crawl_times.append(i)
            last = i
    new_remaining = max(0.0, float(sums[k] - sums[max(last, 0)]))
    return HashScheduleOutput(tuple(crawl_times), new_remaining, a, last - k)


def hash_schedule_batch(
    profiles: np.ndarray,
    yesterday: np.ndarray,
    capacity: float,
    span_threshold: int,
    weight: float,
    remaining: np.ndarray,
    last_crawl: np.ndarray,
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Row-wise :func:`hash_schedule` for a ``(users, k)`` matrix.

    Returns ``(updated_profiles, crawl_mask, new_remaining, new_last_crawl)``
    where ``crawl_mask[u, i-1]`` marks slot ``i`` as a crawl time.
    """
    a = profiles * (1 - weight) + yesterday * weight
    n_users, k = a.shape
    cum = np.cumsum(a, axis=1)
    ref = -np.asarray(remaining, dtype=float).copy()
    last = np.asarray(last_crawl, dtype=np.int64).copy()
    mask = np.zeros((n_users, k), dtype=bool)
    for i in range(1, k + 1):
        fire = (cum[:, i - 1] - ref > capacity) | (i - last > span_threshold)
        mask[:, i - 1] = fire
        ref = np.where(fire, cum[:, i - 1], ref)
        last = np.where(fire, i, last)
    new_remaining = np.maximum(0.0, cum[:, -1] - ref)
    return a, mask, new_remaining, last - k


def schedule_rates(rates: Mapping[str, float], delta: float = 1.0) -> CrawlSchedule:
    """Sort ``rates`` and return the organ-pipe schedule."""
    return organ_pipe_schedule(PoissonScheduleInput.from_rates(rates, delta))
