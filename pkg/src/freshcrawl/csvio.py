"""CSV readers and writers for every file the command line produces or consumes.

Readers raise :class:`CsvFormatError` carrying the 1-based line number of
the offending row. Comment lines start with ``#``; writers use them for
summary values and readers return them separately.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Optional, Sequence, TextIO, Union

import numpy as np

from .behavior import MessageHistory
from .partition import PartitionAssignment
from .scheduler import CrawlSchedule, HashScheduleOutput
from .sim.metrics import REPORT_COLUMNS, SimReport

PathOrFile = Union[str, Path, TextIO]

MESSAGE_COLUMNS = ("user_id", "timestamp_minutes")
RATE_COLUMNS = ("user_id", "lambda")
FREQUENCY_COLUMNS = ("user_id", "frequency")
SCHEDULE_COLUMNS = ("position", "user_id", "crawl_time", "lambda")
HASH_INPUT_COLUMNS = ("user_id", "slot", "profile", "yesterday")
HASH_OUTPUT_COLUMNS = ("user_id", "crawl_times", "new_remaining", "updated_slots")
PARTITION_COLUMNS = ("part_index", "user_id", "frequency")


class CsvFormatError(ValueError):
    def __init__(self, message: str, line: Optional[int] = None, source: str = "<input>"):
        self.line = line
        self.source = source
        where = f"{source}:{line}" if line is not None else source
        super().__init__(f"{where}: {message}")


@dataclass
class Table:
    header: tuple[str, ...]
    rows: list[tuple[int, list[str]]]  # (line number, cells)
    comments: list[str]
    source: str


def fmt(v) -> str:
    """Shortest text that parses back to the same value."""
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def _open_read(src: PathOrFile) -> tuple[TextIO, str, bool]:
    if isinstance(src, (str, Path)):
        return open(src, newline="", encoding="utf-8"), str(src), True
    return src, getattr(src, "name", "<input>"), False


def read_table(src: PathOrFile, expected: Optional[Sequence[str]] = None) -> Table:
    """Parse a headed CSV, keeping line numbers for diagnostics."""
    fh, name, owned = _open_read(src)
    try:
        text = fh.read()
    finally:
        if owned:
            fh.close()
    header: Optional[tuple[str, ...]] = None
    rows: list[tuple[int, list[str]]] = []
    comments: list[str] = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped:
            continue
        if stripped.startswith("#"):
            comments.append(stripped[1:].strip())
            continue
        cells = [c.strip() for c in next(csv.reader([line]))]
        if header is None:
            header = tuple(cells)
            if expected is not None and header != tuple(expected):
                raise CsvFormatError(
                    f"expected header {','.join(expected)!r}, got {','.join(header)!r}", lineno, name
                )
            continue
        if len(cells) != len(header):
            raise CsvFormatError(f"expected {len(header)} fields, got {len(cells)}", lineno, name)
        rows.append((lineno, cells))
    if header is None:
        header = tuple(expected) if expected is not None else ()
    return Table(header, rows, comments, name)


def _number(cell: str, kind, what: str, line: int, source: str):
    try:
        v = kind(cell)
    except ValueError:
        raise CsvFormatError(f"{what} is not a valid {kind.__name__}: {cell!r}", line, source) from None
    if isinstance(v, float) and not math.isfinite(v):
        raise CsvFormatError(f"{what} must be finite: {cell!r}", line, source)
    return v


def _user(cell: str, line: int, source: str) -> str:
    if not cell:
        raise CsvFormatError("empty user_id", line, source)
    return cell


def _write(dst: PathOrFile, header: Sequence[str], rows: Iterable[Sequence], comments: Sequence[str] = ()):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([fmt(v) for v in r])
    for c in comments:
        buf.write(f"# {c}\n")
    text = buf.getvalue()
    if isinstance(dst, (str, Path)):
        Path(dst).write_text(text, encoding="utf-8")
    else:
        dst.write(text)


# -- messages --------------------------------------------------------------

def write_messages(dst: PathOrFile, histories: Iterable[MessageHistory]):
    """All users' posts in one file, sorted by timestamp then user id."""
    rows = [(int(t), h.user_id) for h in histories for t in h.timestamps]
    rows.sort()
    _write(dst, MESSAGE_COLUMNS, ((u, t) for t, u in rows))


def read_messages(src: PathOrFile) -> dict[str, np.ndarray]:
    table = read_table(src, MESSAGE_COLUMNS)
    per_user: dict[str, list[int]] = {}
    prev = None
    for line, (u, t) in table.rows:
        ts = _number(t, int, "timestamp_minutes", line, table.source)
        if ts < 0:
            raise CsvFormatError("timestamp_minutes must be non-negative", line, table.source)
        if prev is not None and ts < prev:
            raise CsvFormatError("rows not sorted by timestamp", line, table.source)
        prev = ts
        per_user.setdefault(_user(u, line, table.source), []).append(ts)
    return {u: np.array(v, dtype=np.int64) for u, v in per_user.items()}


# -- rates and frequencies -------------------------------------------------

def write_rates(dst: PathOrFile, rates: Mapping[str, float], column: str = "lambda"):
    _write(dst, ("user_id", column), rates.items())


def read_rates(src: PathOrFile) -> dict[str, float]:
    """``user_id,lambda`` or ``user_id,frequency``; ids must be unique."""
    table = read_table(src)
    if table.header not in (RATE_COLUMNS, FREQUENCY_COLUMNS, ()):
        raise CsvFormatError(
            f"expected header 'user_id,lambda' or 'user_id,frequency', got {','.join(table.header)!r}",
            1, table.source,
        )
    out: dict[str, float] = {}
    for line, (u, v) in table.rows:
        u = _user(u, line, table.source)
        val = _number(v, float, table.header[1], line, table.source)
        if val < 0:
            raise CsvFormatError(f"{table.header[1]} must be non-negative", line, table.source)
        if u in out:
            raise CsvFormatError(f"duplicate user_id {u!r}", line, table.source)
        out[u] = val
    return out


# -- schedules -------------------------------------------------------------

def write_schedule(dst: PathOrFile, schedule: CrawlSchedule):
    rows = (
        (j, u, schedule.crawl_time(j), schedule.rates.get(u, float("nan")))
        for j, u in enumerate(schedule.order)
    )
    _write(dst, SCHEDULE_COLUMNS, rows, [f"total_potentiality={fmt(float(schedule.total_potentiality))}"])


def read_schedule(src: PathOrFile) -> CrawlSchedule:
    table = read_table(src, SCHEDULE_COLUMNS)
    order, rates, times = [], {}, []
    for line, (pos, u, t, lam) in table.rows:
        if _number(pos, int, "position", line, table.source) != len(order):
            raise CsvFormatError("positions must run 0,1,2,...", line, table.source)
        u = _user(u, line, table.source)
        order.append(u)
        times.append(_number(t, float, "crawl_time", line, table.source))
        rates[u] = _number(lam, float, "lambda", line, table.source)
    total = _summary_value(table, "total_potentiality")
    delta = times[1] - times[0] if len(times) > 1 else 1.0
    return CrawlSchedule(tuple(order), total, delta, rates)


def _summary_fields(table: Table) -> dict[str, str]:
    fields: dict[str, str] = {}
    for c in table.comments:
        for tok in c.split():
            if "=" in tok:
                k, v = tok.split("=", 1)
                fields[k] = v
    return fields


def _summary_value(table: Table, key: str) -> float:
    fields = _summary_fields(table)
    if key not in fields:
        raise CsvFormatError(f"missing summary line '# {key}=...'", None, table.source)
    try:
        return float(fields[key])
    except ValueError:
        raise CsvFormatError(f"bad {key} value {fields[key]!r}", None, table.source) from None


# -- hash model ------------------------------------------------------------

@dataclass
class HashRow:
    user_id: str
    profile: np.ndarray
    yesterday: np.ndarray


def write_hash_input(dst: PathOrFile, rows: Sequence[HashRow]):
    out = []
    for r in rows:
        for i, (a, n) in enumerate(zip(r.profile, r.yesterday), start=1):
            out.append((r.user_id, i, float(a), float(n)))
    _write(dst, HASH_INPUT_COLUMNS, out)


def read_hash_input(src: PathOrFile) -> list[HashRow]:
    """Long format, one row per (user, slot); slots must run 1..k for every user."""
    table = read_table(src, HASH_INPUT_COLUMNS)
    users: dict[str, tuple[list[float], list[float]]] = {}
    for line, (u, slot, a, n) in table.rows:
        u = _user(u, line, table.source)
        a_list, n_list = users.setdefault(u, ([], []))
        i = _number(slot, int, "slot", line, table.source)
        if i != len(a_list) + 1:
            raise CsvFormatError(f"slot {i} out of sequence for user {u!r}", line, table.source)
        av = _number(a, float, "profile", line, table.source)
        nv = _number(n, float, "yesterday", line, table.source)
        if av < 0 or nv < 0:
            raise CsvFormatError("slot values must be non-negative", line, table.source)
        a_list.append(av)
        n_list.append(nv)
    sizes = {len(a) for a, _ in users.values()}
    if len(sizes) > 1:
        raise CsvFormatError(f"users have differing slot counts {sorted(sizes)}", None, table.source)
    return [HashRow(u, np.array(a), np.array(n)) for u, (a, n) in users.items()]


def _join(values) -> str:
    return " ".join(fmt(v) for v in values)


def write_hash_output(dst: PathOrFile, results: Sequence[tuple[str, HashScheduleOutput]]):
    rows = (
        (u, _join(o.crawl_times), float(o.new_remaining), _join(float(x) for x in o.updated_slots))
        for u, o in results
    )
    _write(dst, HASH_OUTPUT_COLUMNS, rows)


def read_hash_output(src: PathOrFile) -> list[tuple[str, HashScheduleOutput]]:
    table = read_table(src, HASH_OUTPUT_COLUMNS)
    out = []
    for line, (u, times, rem, slots) in table.rows:
        try:
            crawl = tuple(int(x) for x in times.split())
            updated = np.array([float(x) for x in slots.split()])
        except ValueError:
            raise CsvFormatError("space-separated numbers expected", line, table.source) from None
        out.append((
            _user(u, line, table.source),
            HashScheduleOutput(crawl, _number(rem, float, "new_remaining", line, table.source), updated),
        ))
    return out


# -- partitions ------------------------------------------------------------

def write_partition(dst: PathOrFile, assignment: PartitionAssignment):
    rows = ((i, u, f) for i, part in enumerate(assignment.parts) for u, f in part)
    summary = (
        f"part_sums={';'.join(fmt(float(s)) for s in assignment.part_sums)} "
        f"max_min_diff={fmt(float(assignment.max_min_diff))} "
        f"pairwise_diff={fmt(float(assignment.max_pairwise_diff))}"
    )
    if "scale" in assignment.notes:
        summary += f" scale={assignment.notes['scale']}"
    _write(dst, PARTITION_COLUMNS, rows, [summary])


def read_partition(src: PathOrFile) -> PartitionAssignment:
    table = read_table(src, PARTITION_COLUMNS)
    parts: list[list[tuple[str, float]]] = []
    for line, (idx, u, f) in table.rows:
        i = _number(idx, int, "part_index", line, table.source)
        if i < 0:
            raise CsvFormatError("part_index must be non-negative", line, table.source)
        while len(parts) <= i:
            parts.append([])
        parts[i].append((_user(u, line, table.source), _number(f, float, "frequency", line, table.source)))
    fields = _summary_fields(table)
    if "part_sums" in fields and fields["part_sums"]:
        k = len(fields["part_sums"].split(";"))
        while len(parts) < k:
            parts.append([])  # empty trailing parts leave no rows
    notes = {"scale": int(fields["scale"])} if "scale" in fields else {}
    return PartitionAssignment.build(parts, **notes)


# -- simulation reports ----------------------------------------------------

def write_reports(dst: PathOrFile, reports: Iterable[SimReport]):
    rows = sorted((r.row() for r in reports), key=lambda d: (d["machines"], d["seed"]))
    _write(dst, REPORT_COLUMNS, ([d[c] for c in REPORT_COLUMNS] for d in rows))


_REPORT_TYPES = {
    "machines": int, "seed": int, "total_messages": int, "workload_diff": int,
    "avg_msgs_per_call": float, "freshness_minutes": float, "deferrals": int, "migrations": int,
}


def read_reports(src: PathOrFile) -> list[dict]:
    table = read_table(src, REPORT_COLUMNS)
    out = []
    for line, cells in table.rows:
        out.append({
            c: _number(v, _REPORT_TYPES[c], c, line, table.source) for c, v in zip(REPORT_COLUMNS, cells)
        })
    return out
