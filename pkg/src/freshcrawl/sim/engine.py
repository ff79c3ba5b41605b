"""Discrete-event simulation of quota-limited multi-machine crawling.

Time is logical, in whole minutes. Messages posted during the warm-up
days are history: the models may learn from them but they are not
collectable. The crawl runs from the end of warm-up for ``duration``
days.
"""

from __future__ import annotations

import enum
import heapq
import logging
import math
from collections import deque
from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np

from ..behavior import (
    MINUTES_PER_DAY,
    ClassificationThresholds,
    GeneratorSpec,
    classify_user,
    slot_minutes,
)
from ..partition import FrequencySequence, rr_split, set_division
from ..scheduler import hash_schedule_batch, organ_pipe_indices
from .corpus import Corpus
from .metrics import CRAWL, DEFERRAL, MIGRATION, EventLog, SimReport, compute_metrics

log = logging.getLogger(__name__)


class Architecture(str, enum.Enum):
    CENTRALIZED = "centralized"
    DISTRIBUTED = "distributed"


class ScheduleModel(str, enum.Enum):
    POISSON = "poisson"
    HASH = "hash"
    RR = "rr"


class QuotaExhausted(RuntimeError):
    pass


@dataclass(frozen=True)
class QuotaPolicy:
    calls_per_window: int = 350
    window: int = 60  # minutes
    messages_per_call: int = 100

    def __post_init__(self):
        if min(self.calls_per_window, self.window, self.messages_per_call) < 1:
            raise ValueError("quota fields must be positive")
        if MINUTES_PER_DAY % self.window and self.window % MINUTES_PER_DAY:
            raise ValueError("window must divide a day or be a whole number of days")

    @property
    def pace(self) -> float:
        """Minutes between call starts when the quota is spread evenly."""
        return self.window / self.calls_per_window


@dataclass
class SimConfig:
    users: Union[Sequence[GeneratorSpec], Corpus]
    architecture: Architecture = Architecture.CENTRALIZED
    machines: int = 1
    schedule_model: ScheduleModel = ScheduleModel.POISSON
    quota: QuotaPolicy = field(default_factory=QuotaPolicy)
    duration: int = 30  # days
    rng_seed: int = 0
    warmup_days: int = 7
    hash_weight: float = 0.5
    hash_warm_start: bool = False  # pre-train hash profiles on warm-up days
    span_threshold: int = 720  # slots
    hash_slots: int = 24
    retention: int = 2000
    split: str = "rr"  # initial distributed split: "rr" | "setdiv"
    rr_budget: Optional[int] = None  # total RR calls; None spends the full quota
    thresholds: ClassificationThresholds = field(default_factory=ClassificationThresholds)

    def __post_init__(self):
        self.architecture = Architecture(self.architecture)
        self.schedule_model = ScheduleModel(self.schedule_model)
        if self.machines < 1:
            raise ValueError("need at least one machine")
        if self.duration <= 0:
            raise ValueError("duration must be positive")
        if self.warmup_days < 0:
            raise ValueError("warmup_days must be non-negative")
        if self.split not in ("rr", "setdiv"):
            raise ValueError(f"unknown split {self.split!r}")
        slot_minutes(self.hash_slots)

    def corpus(self) -> Corpus:
        if isinstance(self.users, Corpus):
            if self.users.days < self.warmup_days + self.duration:
                raise ValueError("corpus is shorter than warm-up plus duration")
            return self.users
        return Corpus.generate(list(self.users), self.warmup_days + self.duration)


@dataclass
class MachineState:
    machine_id: int
    quota_remaining: int
    todo_list: deque = field(default_factory=deque)
    collected: int = 0
    calls_made: int = 0
    busy_until: float = -math.inf  # end of the call in progress
    tick_scheduled: bool = False

    def load(self, now: float = math.inf) -> int:
        """To-do length, counting a call still in progress at ``now``."""
        return len(self.todo_list) + (self.busy_until > now)


@dataclass
class Migration:
    user: int
    source: int
    target: int


@dataclass
class RebalanceResult:
    migrations: list[Migration]
    deferred: list[int]


class SimState:
    """Per-run mutable state: message backlogs, machines and the event log."""

    def __init__(self, corpus: Corpus, machines: int, quota: QuotaPolicy, start: int, retention: int):
        self.corpus = corpus
        self.quota = quota
        self.retention = retention
        self.start = start
        n = corpus.n_users
        start_day = start // MINUTES_PER_DAY
        # local index of the first collectable post of each user
        self.first = corpus.day_index[:, start_day].astype(np.int64)
        self.seen = self.first.copy()
        self.stacks: list[list[list[int]]] = [[] for _ in range(n)]
        self.leftover = np.zeros(n, dtype=np.int64)
        self.last_crawl = np.full(n, float(start))
        self.lost = 0
        self.machines = [MachineState(i, quota.calls_per_window) for i in range(machines)]
        self.log = EventLog()

    def backlog(self, u: int) -> int:
        return sum(hi - lo for lo, hi in self.stacks[u])

    def accounting(self, now: int) -> dict:
        """Posted-vs-collected ledger up to ``now``."""
        posted = 0
        unseen = 0
        for u in range(self.corpus.n_users):
            hi = int(np.searchsorted(self.corpus.user_ts(u), now, side="right"))
            posted += hi - int(self.first[u])
            unseen += hi - int(self.seen[u])
        collected = sum(m.collected for m in self.machines)
        waiting = sum(self.backlog(u) for u in range(self.corpus.n_users))
        return {"posted": posted, "collected": collected, "waiting": waiting,
                "lost": self.lost, "unseen": unseen}


def crawl_user(state: SimState, machine_id: int, user_id: int, now: int) -> int:
    """One API call: fetch up to ``c`` of the user's uncollected posts, newest first.

    Posts pushed out of the visible timeline (older than the newest
    ``retention``) are dropped before fetching.
    """
    m = state.machines[machine_id]
    if m.quota_remaining < 1:
        raise QuotaExhausted(f"machine {machine_id} has no quota left")
    ts = state.corpus.user_ts(user_id)
    hi = int(np.searchsorted(ts, now, side="right"))
    stack = state.stacks[user_id]
    seen = int(state.seen[user_id])
    if hi > seen:
        if stack and stack[-1][1] == seen:
            stack[-1][1] = hi
        else:
            stack.append([seen, hi])
        state.seen[user_id] = hi

    floor = hi - state.retention
    while stack and stack[0][0] < floor:
        lo0, hi0 = stack[0]
        if hi0 <= floor:
            state.lost += hi0 - lo0
            stack.pop(0)
        else:
            state.lost += floor - lo0
            stack[0][0] = floor

    want = state.quota.messages_per_call
    fetched = 0
    lag = 0.0
    while want and stack:
        lo, top = stack[-1]
        take = min(want, top - lo)
        lag += take * now - float(ts[top - take:top].sum(dtype=np.int64))
        fetched += take
        want -= take
        if take == top - lo:
            stack.pop()
        else:
            stack[-1][1] = top - take

    m.quota_remaining -= 1
    m.calls_made += 1
    m.collected += fetched
    state.leftover[user_id] = sum(h - l for l, h in stack)
    state.last_crawl[user_id] = now
    state.log.record(now, CRAWL, machine_id, user_id, fetched, lag)
    return fetched


def assign_task_centralized(
    machines: Sequence[MachineState],
    rng: np.random.Generator,
    now: float = math.inf,
) -> int:
    """Machine with the shortest to-do list; ties broken uniformly at random."""
    if not machines:
        raise ValueError("no machines")
    loads = [m.load(now) for m in machines]
    best = min(loads)
    tied = [m.machine_id for m, n in zip(machines, loads) if n == best]
    if len(tied) == 1:
        return tied[0]
    return tied[int(rng.integers(len(tied)))]


def rebalance(machines: Sequence[MachineState], trigger: int) -> RebalanceResult:
    """Hand an exhausted machine's pending tasks to the machine with most quota left."""
    src = machines[trigger]
    if src.quota_remaining > 0 or not src.todo_list:
        return RebalanceResult([], [])
    target = max(machines, key=lambda m: (m.quota_remaining, -m.machine_id))
    if target.quota_remaining < 1:
        return RebalanceResult([], list(src.todo_list))
    moved = [Migration(u, trigger, target.machine_id) for u in src.todo_list]
    target.todo_list.extend(src.todo_list)
    src.todo_list.clear()
    return RebalanceResult(moved, [])


# event priorities at equal times
_DAY, _WINDOW, _TASK, _TICK = 0, 1, 2, 3


@dataclass
class _Planner:
    users: np.ndarray  # user indices, in planner order
    machine: Optional[int]  # owning machine (distributed) or None (centralized)
    budget: int  # calls per window
    rr_pointer: int = 0
    rr_quota: int = 0  # explicit RR budget share; 0 means spend the window budget


class Simulation:
    def __init__(self, config: SimConfig, corpus: Optional[Corpus] = None):
        self.cfg = config
        self.corpus = corpus if corpus is not None else config.corpus()
        self.start = config.warmup_days * MINUTES_PER_DAY
        self.end = self.start + config.duration * MINUTES_PER_DAY
        self.state = SimState(self.corpus, config.machines, config.quota, self.start, config.retention)
        self.rng = np.random.default_rng(config.rng_seed)
        n = self.corpus.n_users
        self.pending = np.zeros(n, dtype=bool)
        self.lam = np.zeros(n)
        self.owner = np.full(n, -1, dtype=np.int64)
        self._heap: list = []
        self._seq = 0
        self.distributed = config.architecture is Architecture.DISTRIBUTED

        self._estimate_rates(config.warmup_days)
        self.planners = self._make_planners()
        if config.schedule_model is ScheduleModel.HASH:
            self._init_hash()

    # -- setup ---------------------------------------------------------

    def _estimate_rates(self, day: int):
        if day > 0:
            self.lam = self.corpus.counts_between_days(0, day) / day

    def _make_planners(self) -> list[_Planner]:
        cfg = self.cfg
        q = cfg.quota.calls_per_window
        n = self.corpus.n_users
        if not self.distributed:
            planners = [_Planner(np.arange(n), None, q * cfg.machines)]
        else:
            seq = FrequencySequence(tuple((str(u), float(self.lam[u])) for u in range(n)))
            if cfg.split == "setdiv":
                parts = set_division(seq, cfg.machines).ids()
            else:
                parts = rr_split(seq.organ_pipe(), cfg.machines).ids()
            planners = []
            for i, ids in enumerate(parts):
                users = np.array(sorted(int(u) for u in ids), dtype=np.int64)
                self.owner[users] = i
                planners.append(_Planner(users, i, q))
        if cfg.rr_budget is not None:
            total = sum(len(p.users) for p in planners)
            shares = [cfg.rr_budget * len(p.users) // max(1, total) for p in planners]
            shares[-1] += cfg.rr_budget - sum(shares)
            for p, s in zip(planners, shares):
                p.rr_quota = s
        return planners

    def _init_hash(self):
        cfg = self.cfg
        n, k = self.corpus.n_users, cfg.hash_slots
        self.profiles = np.zeros((n, k))
        self.hash_remaining = np.zeros(n)
        self.hash_last = np.zeros(n, dtype=np.int64)
        self.active = np.zeros(n, dtype=bool)
        w = cfg.warmup_days
        if w > 0:
            for u in range(n):
                cls = classify_user(self.corpus.history(u, 0, w), cfg.thresholds)
                self.active[u] = cls.is_active
        if not cfg.hash_warm_start:
            return
        # learn profiles from warm-up history; the last warm-up day is applied
        # as "yesterday" by the first daily plan
        for day in range(max(0, w - 1)):
            counts = self.corpus.slot_counts(day, k)
            self.profiles = self.profiles * (1 - cfg.hash_weight) + counts * cfg.hash_weight

    # -- event queue ---------------------------------------------------

    def _push(self, t: int, prio: int, kind: str, payload=None):
        heapq.heappush(self._heap, (t, prio, self._seq, kind, payload))
        self._seq += 1

    def run(self) -> SimReport:
        cfg = self.cfg
        for day_t in range(self.start, self.end, MINUTES_PER_DAY):
            self._push(day_t, _DAY, "day")
        self._push(self.start, _WINDOW, "window")

        while self._heap:
            t, _, _, kind, payload = heapq.heappop(self._heap)
            if t > self.end:
                break
            if kind == "tick":
                self._tick(t, payload)
            elif kind == "task":
                planner, users = payload
                for u in users:
                    self._dispatch(t, planner, u)
            elif kind == "window":
                self._window(t)
            elif kind == "day":
                self._day(t)
        return compute_metrics(
            self.state.log, cfg.machines, elapsed=self.end - self.start, seed=cfg.rng_seed
        )

    # -- handlers ------------------------------------------------------

    def _day(self, t: int):
        day = t // MINUTES_PER_DAY
        self._estimate_rates(day)
        if self.cfg.schedule_model is ScheduleModel.HASH:
            self._plan_hash_day(t, day)

    def _window(self, t: int):
        st = self.state
        for m in st.machines:
            for u in m.todo_list:
                st.log.record(t, DEFERRAL, m.machine_id, int(u))
            m.quota_remaining = self.cfg.quota.calls_per_window
            if m.todo_list:
                self._ensure_tick(t, m)
        model = self.cfg.schedule_model
        if model is ScheduleModel.POISSON:
            for p in self.planners:
                self._plan_poisson(t, p)
        elif model is ScheduleModel.RR:
            for p in self.planners:
                self._plan_rr(t, p)
        nxt = t + self.cfg.quota.window
        if nxt < self.end:
            self._push(nxt, _WINDOW, "window")

    def _spread(self, t: int, planner: _Planner, users: Sequence[int], slots: int):
        """Queue ``users`` at evenly spaced instants across the window."""
        w = self.cfg.quota.window
        by_time: dict[int, list[int]] = {}
        for j, u in enumerate(users):
            by_time.setdefault(t + (j * w) // slots, []).append(int(u))
        for when, batch in by_time.items():
            self.pending[batch] = True
            self._push(when, _TASK, "task", (planner, batch))

    def _plan_poisson(self, t: int, p: _Planner):
        users = p.users
        busy = int(self.pending[users].sum())
        budget = p.budget - busy
        if budget <= 0:
            return
        free = users[~self.pending[users]]
        if free.size == 0:
            return
        st = self.state
        expected = self.lam[free] * (t - st.last_crawl[free]) / MINUTES_PER_DAY + st.leftover[free]
        if budget < free.size:
            # stable selection: highest expected backlog, ties by lower index
            order = np.lexsort((free, -expected))[:budget]
            picked = free[order]
        else:
            picked = free
        ranked = picked[np.lexsort((picked, self.lam[picked]))]
        pipe = [int(ranked[i]) for i in organ_pipe_indices(ranked.size)]
        self._spread(t, p, pipe, p.budget)

    def _plan_rr(self, t: int, p: _Planner):
        if p.rr_quota:
            windows = math.ceil((self.end - self.start) / self.cfg.quota.window)
            w_idx = (t - self.start) // self.cfg.quota.window
            count = (w_idx + 1) * p.rr_quota // windows - w_idx * p.rr_quota // windows
            slots = max(1, math.ceil(p.rr_quota / windows))
        else:
            count = p.budget - int(self.pending[p.users].sum())
            slots = p.budget
        if count <= 0 or p.users.size == 0:
            return
        n = p.users.size
        idx = (p.rr_pointer + np.arange(count)) % n
        p.rr_pointer = int((p.rr_pointer + count) % n)
        self._spread(t, p, p.users[idx].tolist(), max(slots, count))

    def _plan_hash_day(self, t: int, day: int):
        cfg = self.cfg
        k = cfg.hash_slots
        n = self.corpus.n_users
        if day >= 1:
            yesterday = self.corpus.slot_counts(day - 1, k).astype(float)
        else:
            yesterday = np.zeros((n, k))
        # promote instable/inactive users who posted on each of the last 7 days
        if day >= 7:
            recent = self.corpus.day_index[:, day - 7:day + 1]
            daily = np.diff(recent.astype(np.int64), axis=1)
            self.active |= (daily >= 1).all(axis=1)
        flat = np.repeat((self.lam / k)[:, None], k, axis=1)
        profiles = np.where(self.active[:, None], self.profiles, flat)
        observed = np.where(self.active[:, None], yesterday, flat)
        a, mask, rem, last = hash_schedule_batch(
            profiles, observed, cfg.quota.messages_per_call, cfg.span_threshold,
            cfg.hash_weight, self.hash_remaining, self.hash_last,
        )
        self.profiles = np.where(self.active[:, None], a, self.profiles)
        self.hash_remaining = rem
        self.hash_last = last
        width = slot_minutes(k)
        for i in range(k):
            users = np.flatnonzero(mask[:, i])
            if users.size == 0:
                continue
            when = t + (i + 1) * width
            if self.distributed:
                for p in self.planners:
                    mine = users[self.owner[users] == p.machine]
                    if mine.size:
                        self._push(when, _TASK, "task", (p, mine.tolist()))
            else:
                self._push(when, _TASK, "task", (self.planners[0], users.tolist()))

    def _dispatch(self, t: int, planner: _Planner, u: int):
        st = self.state
        if self.distributed:
            mid = planner.machine
        else:
            mid = assign_task_centralized(st.machines, self.rng, t)
        m = st.machines[mid]
        m.todo_list.append(u)
        self.pending[u] = True
        self._ensure_tick(t, m)

    def _ensure_tick(self, t: int, m: MachineState):
        if not m.tick_scheduled:
            m.tick_scheduled = True
            self._push(t, _TICK, "tick", m.machine_id)

    def _tick(self, t: int, mid: int):
        st = self.state
        m = st.machines[mid]
        m.tick_scheduled = False
        pace = self.cfg.quota.pace
        while m.todo_list and m.quota_remaining > 0:
            begin = max(m.busy_until, t)
            if begin >= t + 1:
                break
            u = m.todo_list.popleft()
            self.pending[u] = False
            crawl_user(st, mid, u, t)
            m.busy_until = begin + pace
        if not m.todo_list:
            return
        if m.quota_remaining > 0:
            self._ensure_tick(max(t + 1, math.floor(m.busy_until)), m)
        elif self.distributed:
            result = rebalance(st.machines, mid)
            for mig in result.migrations:
                st.log.record(t, MIGRATION, mig.source, mig.user)
            if result.migrations:
                self._ensure_tick(t, st.machines[result.migrations[0].target])
        # otherwise the tasks wait for the next window


def simulate(config: SimConfig, corpus: Optional[Corpus] = None) -> tuple[SimReport, Simulation]:
    sim = Simulation(config, corpus)
    return sim.run(), sim


def run_centralized(config: SimConfig) -> SimReport:
    if config.architecture is not Architecture.CENTRALIZED:
        raise ValueError("run_centralized needs a centralized config")
    return simulate(config)[0]


def run_distributed(config: SimConfig) -> SimReport:
    if config.architecture is not Architecture.DISTRIBUTED:
        raise ValueError("run_distributed needs a distributed config")
    return simulate(config)[0]


def run(config: SimConfig) -> SimReport:
    return simulate(config)[0]
