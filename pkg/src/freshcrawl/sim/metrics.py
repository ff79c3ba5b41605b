"""Event recording and run summaries."""

from __future__ import annotations

from array import array
from dataclasses import dataclass
from typing import Iterable, TextIO

import numpy as np

CRAWL, DEFERRAL, MIGRATION = 0, 1, 2
EVENT_NAMES = {CRAWL: "crawl", DEFERRAL: "deferral", MIGRATION: "migration"}

REPORT_COLUMNS = (
    "machines", "seed", "total_messages", "workload_diff", "avg_msgs_per_call",
    "freshness_minutes", "deferrals", "migrations",
)


class EventLog:
    """Column store of simulation events.

    ``count`` is messages fetched for crawls and 1 for the other kinds;
    ``lag`` is the summed collection delay in minutes of fetched messages.
    """

    def __init__(self):
        self.t = array("q")
        self.kind = array("b")
        self.machine = array("i")
        self.user = array("i")
        self.count = array("i")
        self.lag = array("d")

    def record(self, t: int, kind: int, machine: int, user: int, count: int = 1, lag: float = 0.0):
        self.t.append(t)
        self.kind.append(kind)
        self.machine.append(machine)
        self.user.append(user)
        self.count.append(count)
        self.lag.append(lag)

    def __len__(self) -> int:
        return len(self.t)

    def write_trace(self, out: TextIO, user_ids=None):
        out.write("t,event_kind,machine,user,count\n")
        for t, k, m, u, c in zip(self.t, self.kind, self.machine, self.user, self.count):
            name = user_ids[u] if user_ids is not None else u
            out.write(f"{t},{EVENT_NAMES[k]},{m},{name},{c}\n")


@dataclass(frozen=True)
class SimReport:
    total_messages: int = 0
    per_machine: tuple[tuple[int, int], ...] = ()
    workload_diff: int = 0
    elapsed_logical_time: int = 0
    freshness: float = 0.0
    avg_msgs_per_call: float = 0.0
    total_calls: int = 0
    deferrals: int = 0
    migrations: int = 0
    machines: int = 0
    seed: int = 0

    def row(self) -> dict:
        return {
            "machines": self.machines,
            "seed": self.seed,
            "total_messages": self.total_messages,
            "workload_diff": self.workload_diff,
            "avg_msgs_per_call": self.avg_msgs_per_call,
            "freshness_minutes": self.freshness,
            "deferrals": self.deferrals,
            "migrations": self.migrations,
        }

    def csv_line(self) -> str:
        return ",".join(_fmt(v) for v in self.row().values())


def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(round(v, 6))
    return str(v)


def compute_metrics(
    events: EventLog | Iterable[tuple],
    machines: int = 1,
    *,
    elapsed: int = 0,
    seed: int = 0,
) -> SimReport:
    """Aggregate raw events into a :class:`SimReport`.

    ``events`` is an :class:`EventLog` or an iterable of
    ``(t, kind, machine, user, count, lag)`` tuples.
    """
    if not isinstance(events, EventLog):
        log = EventLog()
        for ev in events:
            log.record(*ev)
        events = log
    kind = np.frombuffer(events.kind, dtype=np.int8) if len(events) else np.empty(0, np.int8)
    mach = np.frombuffer(events.machine, dtype=np.int32) if len(events) else np.empty(0, np.int32)
    count = np.frombuffer(events.count, dtype=np.int32) if len(events) else np.empty(0, np.int32)
    lag = np.frombuffer(events.lag, dtype=np.float64) if len(events) else np.empty(0)
    crawl = kind == CRAWL
    n = max(machines, int(mach.max()) + 1 if mach.size else 0)
    collected = np.bincount(mach[crawl], weights=count[crawl], minlength=n).astype(np.int64)
    calls = np.bincount(mach[crawl], minlength=n).astype(np.int64)
    total = int(collected.sum())
    total_calls = int(calls.sum())
    return SimReport(
        total_messages=total,
        per_machine=tuple((int(c), int(k)) for c, k in zip(collected, calls)),
        workload_diff=int(collected.max() - collected.min()) if n else 0,
        elapsed_logical_time=elapsed,
        freshness=float(lag[crawl].sum() / total) if total else 0.0,
        avg_msgs_per_call=total / total_calls if total_calls else 0.0,
        total_calls=total_calls,
        deferrals=int(np.count_nonzero(kind == DEFERRAL)),
        migrations=int(np.count_nonzero(kind == MIGRATION)),
        machines=machines,
        seed=seed,
    )
