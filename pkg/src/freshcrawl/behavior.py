"""User posting behaviour: histories, classification, hash profiles, synthesis."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

MINUTES_PER_DAY = 1440


class UserClass(str, enum.Enum):
    INACTIVE = "Inactive"
    INSTABLE = "Instable"
    REASONABLE_CONSTANT = "ReasonableConstant"
    AUTHORITY = "Authority"

    @property
    def is_active(self) -> bool:
        return self in (UserClass.REASONABLE_CONSTANT, UserClass.AUTHORITY)


@dataclass(frozen=True)
class MessageHistory:
    """Posting instants of one user, in whole minutes, over ``[start, end]``."""

    user_id: str
    timestamps: np.ndarray
    start: int = 0
    end: int = MINUTES_PER_DAY

    def __post_init__(self):
        ts = np.asarray(self.timestamps, dtype=np.int64)
        object.__setattr__(self, "timestamps", ts)
        if self.end <= self.start:
            raise ValueError("degenerate window")
        if ts.ndim != 1:
            raise ValueError("timestamps must be one-dimensional")
        if ts.size:
            if np.any(np.diff(ts) < 0):
                raise ValueError("timestamps must be sorted")
            if ts[0] < self.start or ts[-1] > self.end:
                raise ValueError("timestamps fall outside the observation window")

    @property
    def window_days(self) -> float:
        return (self.end - self.start) / MINUTES_PER_DAY

    def __len__(self) -> int:
        return int(self.timestamps.size)

    def day_counts(self) -> np.ndarray:
        """Posts per whole day of the window (a trailing partial day is kept)."""
        n_days = max(1, int(np.ceil(self.window_days)))
        days = (self.timestamps - self.start) // MINUTES_PER_DAY
        return np.bincount(np.minimum(days, n_days - 1), minlength=n_days)

    def slot_counts(self, k: int = 24) -> np.ndarray:
        """Posts per time-of-day slot, aggregated over the whole window."""
        slot = (self.timestamps % MINUTES_PER_DAY) // slot_minutes(k)
        return np.bincount(slot, minlength=k)


@dataclass(frozen=True)
class PoissonModel:
    lam: float  # expected posts per day

    def __post_init__(self):
        if not np.isfinite(self.lam) or self.lam < 0:
            raise ValueError(f"rate must be finite and non-negative, got {self.lam}")

    def expected(self, days: float) -> float:
        return self.lam * days


def slot_minutes(k: int) -> int:
    if k < 1 or MINUTES_PER_DAY % k:
        raise ValueError(f"{k} slots do not tile a 24h day in whole minutes")
    return MINUTES_PER_DAY // k


@dataclass(frozen=True)
class HashProfile:
    """Decayed per-slot post counts for one user."""

    slots: np.ndarray
    weight: float = 0.5
    slot_duration: int = 60  # minutes

    def __post_init__(self):
        a = np.asarray(self.slots, dtype=float)
        object.__setattr__(self, "slots", a)
        if a.ndim != 1 or a.size < 1:
            raise ValueError("profile needs at least one slot")
        if np.any(a < 0):
            raise ValueError("slot values must be non-negative")
        if not 0 < self.weight < 1:
            raise ValueError(f"weight must lie in (0, 1), got {self.weight}")
        if a.size * self.slot_duration != MINUTES_PER_DAY:
            raise ValueError("slot count times slot duration must equal 24h")

    @classmethod
    def empty(cls, k: int = 24, weight: float = 0.5) -> "HashProfile":
        return cls(np.zeros(k), weight, slot_minutes(k))

    def __len__(self) -> int:
        return int(self.slots.size)


@dataclass(frozen=True)
class ClassificationThresholds:
    inactive_mean: float = 1.0
    authority_mean: float = 10.0
    authority_slot_cv: float = 0.75
    instable_peak_ratio: float = 5.0
    instable_zero_share: float = 0.5
    slots: int = 24


@dataclass(frozen=True)
class GeneratorSpec:
    """Parameters of one synthetic user.

    ``daily_shape`` gives the share of a day's posts falling in each slot.
    Instable users alternate ``burst_days`` days at ``burst_rate`` (defaults
    to ``base_rate``) with ``silence_days`` silent days, starting
    ``burst_phase`` days into the cycle.
    """

    user_class: UserClass
    base_rate: float
    daily_shape: np.ndarray = field(default_factory=lambda: np.full(24, 1 / 24))
    burst_rate: Optional[float] = None
    burst_days: int = 1
    silence_days: int = 3
    burst_phase: int = 0
    rng_seed: int = 0
    user_id: str = "u0"

    def __post_init__(self):
        shape = np.asarray(self.daily_shape, dtype=float)
        object.__setattr__(self, "daily_shape", shape)
        if shape.ndim != 1 or shape.size < 1 or np.any(shape < 0):
            raise ValueError("daily_shape must be a non-negative vector")
        if abs(shape.sum() - 1.0) > 1e-9:
            raise ValueError(f"daily_shape must sum to 1, sums to {shape.sum()!r}")
        slot_minutes(shape.size)
        if self.base_rate < 0:
            raise ValueError("base_rate must be non-negative")
        if self.user_class is UserClass.INSTABLE and self.burst_days < 1:
            raise ValueError("burst_days must be at least 1")

    def with_seed(self, seed: int, user_id: Optional[str] = None) -> "GeneratorSpec":
        return replace(self, rng_seed=seed, user_id=user_id or self.user_id)

    def day_rates(self, n_days: int) -> np.ndarray:
        """Expected posts on each day of the trace."""
        if self.user_class is not UserClass.INSTABLE:
            return np.full(n_days, float(self.base_rate))
        burst = self.base_rate if self.burst_rate is None else self.burst_rate
        cycle = self.burst_days + self.silence_days
        phase = (np.arange(n_days) + self.burst_phase) % cycle
        return np.where(phase < self.burst_days, float(burst), 0.0)


def two_peak_shape(
    k: int = 24,
    peaks: Sequence[float] = (15.0, 22.0),
    width: float = 1.5,
    floor: float = 0.02,
) -> np.ndarray:
    """Afternoon-plus-night intensity profile over ``k`` slots."""
    hours = (np.arange(k) + 0.5) * 24.0 / k
    shape = np.full(k, floor)
    for p in peaks:
        d = np.abs(hours - p)
        d = np.minimum(d, 24.0 - d)
        shape += np.exp(-0.5 * (d / width) ** 2)
    return shape / shape.sum()


def flat_shape(k: int = 24) -> np.ndarray:
    return np.full(k, 1.0 / k)


def estimate_poisson_rate(history: MessageHistory) -> PoissonModel:
    if history.end <= history.start:
        raise ValueError("degenerate window")
    return PoissonModel(len(history) / history.window_days)


def classify_user(
    history: MessageHistory,
    thresholds: ClassificationThresholds = ClassificationThresholds(),
) -> UserClass:
    """Place a user in one of the four behaviour classes.

    Rules are checked in order: low mean rate is Inactive; a high mean
    with near-flat time-of-day counts is Authority; a spiky trace with
    mostly empty days is Instable; anything else is ReasonableConstant.
    """
    if len(history) == 0:
        return UserClass.INACTIVE
    mean = len(history) / history.window_days
    if mean < thresholds.inactive_mean:
        return UserClass.INACTIVE
    if mean >= thresholds.authority_mean:
        slots = history.slot_counts(thresholds.slots).astype(float)
        cv = slots.std() / slots.mean()
        if cv < thresholds.authority_slot_cv:
            return UserClass.AUTHORITY
    days = history.day_counts()
    per_day = days.mean()
    if (
        days.max() / per_day > thresholds.instable_peak_ratio
        and np.mean(days == 0) >= thresholds.instable_zero_share
    ):
        return UserClass.INSTABLE
    return UserClass.REASONABLE_CONSTANT


def update_hash_profile(profile: HashProfile, day_counts: Sequence[float]) -> HashProfile:
    n = np.asarray(day_counts, dtype=float)
    if n.shape != profile.slots.shape:
        raise ValueError(
            f"day_counts has {n.size} slots, profile has {profile.slots.size}"
        )
    w = profile.weight
    return replace(profile, slots=profile.slots * (1 - w) + n * w)


def generate_messages(spec: GeneratorSpec, duration: float) -> MessageHistory:
    """Draw a posting trace of ``duration`` days from ``spec``.

    Per-slot counts are Poisson with mean ``day_rate * daily_shape[slot]``;
    instants are uniform whole minutes inside their slot.
    """
    if duration <= 0:
        raise ValueError("duration must be positive")
    end = int(round(duration * MINUTES_PER_DAY))
    k = spec.daily_shape.size
    width = slot_minutes(k)
    n_days = int(np.ceil(end / MINUTES_PER_DAY))
    rng = np.random.default_rng(spec.rng_seed)

    means = np.outer(spec.day_rates(n_days), spec.daily_shape)
    counts = rng.poisson(means).ravel()
    slot_start = np.arange(n_days * k, dtype=np.int64) * width
    ts = np.repeat(slot_start, counts) + rng.integers(0, width, size=int(counts.sum()))
    ts.sort()
    ts = ts[ts <= end]
    return MessageHistory(spec.user_id, ts, 0, end)


def expected_crawl_list_size(a: int, k: int, n: int) -> int:
    """Users reached from ``a`` seeds following ``k`` channels for ``n`` hops."""
    if a < 1 or k < 1 or n < 0:
        raise ValueError("need a >= 1, k >= 1, n >= 0")
    if k == 1:
        return a * (n + 1)
    return a * (k ** (n + 1) - 1) // (k - 1)


@dataclass(frozen=True)
class PopulationMix:
    """Class shares of a synthetic population.

    Defaults follow the observed split: about half of users post less
    than once a day and about a fifth post more than ten times a day.
    """

    inactive: float = 0.50
    instable: float = 0.05
    moderate: float = 0.25  # ReasonableConstant, 1-10 posts/day
    heavy: float = 0.15  # ReasonableConstant, >10 posts/day
    authority: float = 0.05
    slots: int = 24

    def shares(self) -> np.ndarray:
        s = np.array([self.inactive, self.instable, self.moderate, self.heavy, self.authority])
        if np.any(s < 0) or s.sum() <= 0:
            raise ValueError("population shares must be non-negative and not all zero")
        return s / s.sum()


def make_population(
    n_users: int,
    seed: int,
    mix: PopulationMix = PopulationMix(),
    only: Optional[Sequence[UserClass]] = None,
) -> list[GeneratorSpec]:
    """Build ``n_users`` generator specs with deterministic per-user seeds.

    Class counts are apportioned exactly (largest remainder) and then
    shuffled, so the population size does not change the proportions.
    ``only`` keeps users of the listed classes (the count is then smaller).
    """
    rng = np.random.default_rng([seed, 0x5EED])
    shares = mix.shares()
    raw = shares * n_users
    counts = np.floor(raw).astype(int)
    order = np.argsort(-(raw - counts), kind="stable")
    counts[order[: n_users - counts.sum()]] += 1
    kinds = rng.permutation(np.repeat(np.arange(5), counts))
    child_seeds = np.random.SeedSequence([seed, 0xC0DE]).generate_state(n_users, np.uint64)
    k = mix.slots

    specs = []
    for i, kind in enumerate(kinds):
        uid = f"u{i}"
        if kind == 0:
            spec = GeneratorSpec(UserClass.INACTIVE, rng.uniform(0.02, 0.9), flat_shape(k))
        elif kind == 1:
            spec = GeneratorSpec(
                UserClass.INSTABLE,
                base_rate=rng.uniform(12.0, 30.0),
                daily_shape=two_peak_shape(k, peaks=rng.uniform([12, 19], [17, 24])),
                burst_days=1,
                silence_days=int(rng.integers(5, 10)),
                burst_phase=int(rng.integers(0, 10)),
            )
        elif kind in (2, 3):
            lo, hi = (1.5, 9.5) if kind == 2 else (10.5, 25.0)
            spec = GeneratorSpec(
                UserClass.REASONABLE_CONSTANT,
                rng.uniform(lo, hi),
                two_peak_shape(k, peaks=rng.uniform([12, 19], [17, 24])),
            )
        else:
            spec = GeneratorSpec(UserClass.AUTHORITY, rng.uniform(15.0, 40.0), flat_shape(k))
        specs.append(spec.with_seed(int(child_seeds[i]), uid))
    if only is not None:
        keep = set(only)
        specs = [s for s in specs if s.user_class in keep]
    return specs
