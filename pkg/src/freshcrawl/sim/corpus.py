"""Compact store of every synthetic user's posting instants."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator, Optional, Sequence

import numpy as np

from ..behavior import MINUTES_PER_DAY, GeneratorSpec, MessageHistory, UserClass, generate_messages


@dataclass
class Corpus:
    """Posting minutes of ``n`` users, concatenated user after user.

    ``ts[offsets[u]:offsets[u + 1]]`` holds user ``u``'s sorted instants.
    ``day_index[u, d]`` is the local position of the first post of user
    ``u`` at or after minute ``d * 1440``.
    """

    user_ids: list[str]
    classes: list[UserClass]
    ts: np.ndarray
    offsets: np.ndarray
    day_index: np.ndarray
    days: int

    @classmethod
    def generate(cls, specs: Sequence[GeneratorSpec], days: int) -> "Corpus":
        histories = (generate_messages(spec, days) for spec in specs)
        return cls._pack(histories, len(specs), days, [s.user_class for s in specs])

    @classmethod
    def from_histories(
        cls,
        histories: Sequence[MessageHistory],
        days: int,
        classes: Optional[Sequence[UserClass]] = None,
    ) -> "Corpus":
        """Pack histories; posts at or after ``days * 1440`` are dropped."""
        if classes is None:
            classes = [UserClass.REASONABLE_CONSTANT] * len(histories)
        return cls._pack(iter(histories), len(histories), days, list(classes))

    @classmethod
    def _pack(cls, histories: Iterator[MessageHistory], n: int, days: int, classes: list) -> "Corpus":
        # consumes one history at a time so only the packed arrays stay alive
        if days < 1:
            raise ValueError("corpus needs at least one day")
        boundaries = np.arange(days + 1, dtype=np.int64) * MINUTES_PER_DAY
        chunks, ids = [], []
        day_index = np.empty((n, days + 1), dtype=np.int32)
        offsets = np.zeros(n + 1, dtype=np.int64)
        for u, h in enumerate(histories):
            ts = h.timestamps[h.timestamps < days * MINUTES_PER_DAY]
            day_index[u] = np.searchsorted(ts, boundaries)
            offsets[u + 1] = offsets[u] + ts.size
            chunks.append(ts.astype(np.int32))
            ids.append(h.user_id)
        flat = np.concatenate(chunks) if chunks else np.empty(0, dtype=np.int32)
        return cls(ids, classes, flat, offsets, day_index, days)

    @property
    def n_users(self) -> int:
        return len(self.user_ids)

    def user_ts(self, u: int) -> np.ndarray:
        return self.ts[self.offsets[u]:self.offsets[u + 1]]

    def total_between_days(self, d0: int, d1: int) -> int:
        return int((self.day_index[:, d1] - self.day_index[:, d0]).sum())

    def counts_between_days(self, d0: int, d1: int) -> np.ndarray:
        return (self.day_index[:, d1] - self.day_index[:, d0]).astype(np.int64)

    def history(self, u: int, d0: int, d1: int) -> MessageHistory:
        lo, hi = self.day_index[u, d0], self.day_index[u, d1]
        return MessageHistory(
            self.user_ids[u], self.user_ts(u)[lo:hi].astype(np.int64),
            d0 * MINUTES_PER_DAY, d1 * MINUTES_PER_DAY,
        )

    def slot_counts(self, day: int, k: int) -> np.ndarray:
        """``(users, k)`` matrix of posts per time-of-day slot on ``day``."""
        lo = self.day_index[:, day].astype(np.int64)
        cnt = self.day_index[:, day + 1].astype(np.int64) - lo
        total = int(cnt.sum())
        if total == 0:
            return np.zeros((self.n_users, k), dtype=np.int64)
        starts = self.offsets[:-1] + lo
        before = np.cumsum(cnt) - cnt
        idx = np.repeat(starts - before, cnt) + np.arange(total)
        width = MINUTES_PER_DAY // k
        slot = (self.ts[idx].astype(np.int64) - day * MINUTES_PER_DAY) // width
        row = np.repeat(np.arange(self.n_users), cnt)
        return np.bincount(row * k + slot, minlength=self.n_users * k).reshape(self.n_users, k)
