"""Splitting crawl workloads across machines."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .scheduler import organ_pipe_indices

SCALE = 1000  # frequencies are rounded to 0.001 posts/day before subset-sum DP


class PartitionError(ValueError):
    pass


@dataclass(frozen=True)
class FrequencySequence:
    entries: tuple[tuple[str, float], ...]
    ordering: str = "raw"  # "raw" | "organ_pipe"

    def __post_init__(self):
        object.__setattr__(self, "entries", tuple((str(u), float(f)) for u, f in self.entries))
        if any(f < 0 for _, f in self.entries):
            raise ValueError("frequencies must be non-negative")
        if self.ordering not in ("raw", "organ_pipe"):
            raise ValueError(f"unknown ordering {self.ordering!r}")

    @classmethod
    def from_values(cls, values: Sequence[float], prefix: str = "u") -> "FrequencySequence":
        return cls(tuple((f"{prefix}{i}", v) for i, v in enumerate(values)))

    def organ_pipe(self) -> "FrequencySequence":
        """Sort ascending (ties by id) and lay out in organ-pipe order."""
        ranked = sorted(self.entries, key=lambda e: (e[1], e[0]))
        return FrequencySequence(tuple(ranked[i] for i in organ_pipe_indices(len(ranked))), "organ_pipe")

    @property
    def values(self) -> np.ndarray:
        return np.array([f for _, f in self.entries], dtype=float)

    def __len__(self) -> int:
        return len(self.entries)


def _diffs(sums: Sequence[float]) -> tuple[float, float]:
    s = sorted(sums)
    if not s:
        return 0.0, 0.0
    # sum_{i<j} |s_i - s_j| over sorted values: each s_i counted (2i - n + 1) times
    n = len(s)
    pairwise = math.fsum((2 * i - n + 1) * v for i, v in enumerate(s))
    return s[-1] - s[0], max(0.0, pairwise)


@dataclass(frozen=True)
class PartitionAssignment:
    parts: tuple[tuple[tuple[str, float], ...], ...]
    part_sums: tuple[float, ...] = ()
    max_min_diff: float = 0.0
    max_pairwise_diff: float = 0.0
    notes: dict = field(default_factory=dict, compare=False)

    @classmethod
    def build(cls, parts: Sequence[Sequence[tuple[str, float]]], **notes) -> "PartitionAssignment":
        parts = tuple(tuple(p) for p in parts)
        sums = tuple(math.fsum(f for _, f in p) for p in parts)
        mm, pw = _diffs(sums)
        return cls(parts, sums, mm, pw, dict(notes))

    @property
    def k(self) -> int:
        return len(self.parts)

    def ids(self) -> list[list[str]]:
        return [[u for u, _ in p] for p in self.parts]


def workload_difference(assignment: PartitionAssignment, rel_tol: float = 1e-9) -> tuple[float, float]:
    """Recompute ``(max_min_diff, max_pairwise_diff)`` and check the stored values."""
    sums = [math.fsum(f for _, f in p) for p in assignment.parts]
    if len(sums) != len(assignment.part_sums):
        raise PartitionError("part count does not match stored part sums")
    scale = max([1.0] + [abs(s) for s in sums])
    for got, stored in zip(sums, assignment.part_sums):
        if abs(got - stored) > rel_tol * scale:
            raise PartitionError(f"stored part sum {stored} disagrees with contents ({got})")
    mm, pw = _diffs(sums)
    for got, stored, name in ((mm, assignment.max_min_diff, "max_min_diff"),
                              (pw, assignment.max_pairwise_diff, "max_pairwise_diff")):
        if abs(got - stored) > rel_tol * scale * max(1, len(sums)) ** 2:
            raise PartitionError(f"stored {name} {stored} disagrees with contents ({got})")
    return mm, pw


def rr_split(sequence: FrequencySequence, m: int) -> PartitionAssignment:
    """Position ``j`` goes to part ``j mod m``.

    On an organ-pipe sequence this is the same as halving recursively by
    position parity when ``m`` is a power of two.
    """
    if m < 1:
        raise ValueError("part count must be positive")
    parts: list[list[tuple[str, float]]] = [[] for _ in range(m)]
    for j, entry in enumerate(sequence.entries):
        parts[j % m].append(entry)
    return PartitionAssignment.build(parts, strategy="rr")


def predict_rr_difference(f0: float, delta: float, n: int) -> float:
    """Signed Part0 - Part1 for an arithmetic sequence laid out organ-pipe and split in two."""
    return (0.0, f0, -delta, f0 - delta)[n % 4]


def random_split(sequence: FrequencySequence, m: int, seed: int) -> PartitionAssignment:
    if m < 1:
        raise ValueError("part count must be positive")
    rng = np.random.default_rng(seed)
    labels = rng.integers(0, m, size=len(sequence))
    parts: list[list[tuple[str, float]]] = [[] for _ in range(m)]
    for entry, lab in zip(sequence.entries, labels):
        parts[lab].append(entry)
    return PartitionAssignment.build(parts, strategy="random", seed=seed)


def subset_sum_select(values: Sequence[int], c: int) -> tuple[list[int], int]:
    """Subset of ``values`` with the largest sum not exceeding ``c``.

    Exact reachable-sum DP on a bitset; bit ``s`` of the ``i``-th snapshot
    says sum ``s`` is reachable with the first ``i`` items. Reconstruction
    walks back from the last item, skipping it whenever the sum was already
    reachable without it, so lower indices are preferred.
    """
    vals = [int(v) for v in values]
    if any(v < 0 for v in vals):
        raise ValueError("values must be non-negative")
    if c <= 0:
        return [], 0
    mask = (1 << (c + 1)) - 1
    snaps = [1]
    reach = 1
    for v in vals:
        if v <= c:
            reach = (reach | (reach << v)) & mask
        snaps.append(reach)
        if reach >> c:
            break  # c itself is reachable; later items cannot improve on it
    best = reach.bit_length() - 1

    chosen = []
    s = best
    for i in range(len(snaps) - 2, -1, -1):
        if (snaps[i] >> s) & 1:
            continue
        chosen.append(i)
        s -= vals[i]
    assert s == 0
    chosen.reverse()
    return chosen, best


def _scaled(entries: Sequence[tuple[str, float]], scale: int = SCALE) -> list[int]:
    return [int(round(f * scale)) for _, f in entries]


@dataclass(frozen=True)
class PtasParams:
    epsilon: float
    k: int

    def __post_init__(self):
        if self.epsilon <= 0:
            raise ValueError("epsilon must be positive")
        if self.k < 1 or self.k & (self.k - 1):
            raise PartitionError("unsupported part count: part count must be a power of 2")

    @property
    def rounds(self) -> int:
        return (self.k - 1).bit_length()

    @property
    def ratio_per_round(self) -> float:
        # a single part (k=1) has no rounds; treat it as one round of slack
        return (1 + self.epsilon) ** (1 / max(1, self.rounds))

    @property
    def epsilon_prime(self) -> float:
        r = self.ratio_per_round
        return (r - 1) / (r + 1)


def _balanced_split(entries: Sequence[tuple[str, float]], mode: str, eps_prime: float):
    vals = _scaled(entries)
    total = sum(vals)
    if mode == "approx":
        # coarsen so the DP has about n/eps' distinct sum values
        unit = max(1, int(eps_prime * total / (2 * max(1, len(vals)))))
        coarse = [v // unit for v in vals]
        idx, _ = subset_sum_select(coarse, math.ceil(sum(coarse) / 2))
    else:
        idx, _ = subset_sum_select(vals, math.ceil(total / 2))
    picked = set(idx)
    left = [e for i, e in enumerate(entries) if i in picked]
    right = [e for i, e in enumerate(entries) if i not in picked]
    return left, right


def recursive_halving(
    frequencies: FrequencySequence,
    params: PtasParams,
    mode: str = "exact",
) -> PartitionAssignment:
    """Split into ``params.k`` parts by repeatedly halving every part.

    Each halving is a subset-sum split at half the part's total. In
    ``exact`` mode the DP runs on the scaled integers directly; ``approx``
    coarsens the values first so the DP size depends on ``1/eps'``.
    """
    if mode not in ("exact", "approx"):
        raise ValueError(f"unknown mode {mode!r}")
    if params.k > len(frequencies):
        raise PartitionError("more parts than entries")
    parts = [list(frequencies.entries)]
    for _ in range(params.rounds):
        nxt = []
        for p in parts:
            nxt.extend(_balanced_split(p, mode, params.epsilon_prime))
        parts = nxt
    return PartitionAssignment.build(
        parts, strategy="halving", epsilon=params.epsilon,
        epsilon_prime=params.epsilon_prime, scale=SCALE, mode=mode,
    )


def set_division(frequencies: FrequencySequence, k: int) -> PartitionAssignment:
    """Peel off ``k-1`` parts, each the best subset not above the remaining average.

    Whatever is left forms the last part.
    """
    if k < 1:
        raise ValueError("part count must be positive")
    if k > len(frequencies):
        raise PartitionError("more parts than entries")
    remaining = list(frequencies.entries)
    parts = []
    for left in range(k, 1, -1):
        vals = _scaled(remaining)
        target = sum(vals) // left
        idx, _ = subset_sum_select(vals, target)
        picked = set(idx)
        parts.append([remaining[i] for i in idx])
        remaining = [e for i, e in enumerate(remaining) if i not in picked]
    parts.append(remaining)
    return PartitionAssignment.build(parts, strategy="setdiv", scale=SCALE)


def split(
    sequence: FrequencySequence,
    k: int,
    strategy: str,
    *,
    epsilon: float = 0.2,
    seed: int = 0,
) -> PartitionAssignment:
    """Dispatch by strategy name: ``rr``, ``halving``, ``setdiv`` or ``random``."""
    if strategy == "rr":
        seq = sequence if sequence.ordering == "organ_pipe" else sequence.organ_pipe()
        return rr_split(seq, k)
    if strategy == "halving":
        return recursive_halving(sequence, PtasParams(epsilon, k))
    if strategy == "setdiv":
        return set_division(sequence, k)
    if strategy == "random":
        return random_split(sequence, k, seed)
    raise ValueError(f"unknown strategy {strategy!r}")


def arithmetic_step(values: Sequence[float], tol: float = 1e-9) -> Optional[tuple[float, float]]:
    """``(f0, delta)`` if the sorted values form an arithmetic progression."""
    v = np.sort(np.asarray(values, dtype=float))
    if v.size < 2:
        return None
    d = np.diff(v)
    if np.allclose(d, d[0], rtol=0, atol=tol * max(1.0, abs(v).max())):
        return float(v[0]), float(d[0])
    return None
