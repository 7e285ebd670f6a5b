"""Measurement records and the daily-maximum coarse series."""

from __future__ import annotations

import csv
import io
from collections import defaultdict
from dataclasses import dataclass
from datetime import date, datetime, timezone
from typing import Iterable, Optional, TextIO

import numpy as np

from .weibull import CensoredSample

MEASUREMENT_HEADER = ("station_id", "date", "loq", "value")
COARSE_HEADER = ("day", "y_bar", "q_bar", "censored")


class IngestError(ValueError):
    """Malformed or invalid input record."""

    def __init__(self, message: str, line: Optional[int] = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


def _to_utc_date(ts) -> date:
    if isinstance(ts, datetime):
        if ts.tzinfo is not None:
            ts = ts.astimezone(timezone.utc)
        return ts.date()
    if isinstance(ts, date):
        return ts
    raise TypeError(f"expected date or datetime, got {type(ts).__name__}")


def parse_timestamp(text: str):
    text = text.strip()
    if len(text) == 10:
        return date.fromisoformat(text)
    return datetime.fromisoformat(text.replace("Z", "+00:00"))


@dataclass(frozen=True)
class Measurement:
    station_id: str
    timestamp: date | datetime
    loq: float
    value: Optional[float] = None

    def __post_init__(self):
        if not self.loq > 0:
            raise IngestError(f"loq must be positive, got {self.loq}")
        if self.value is not None and not self.value >= self.loq:
            raise IngestError(f"quantified value {self.value} below its loq {self.loq}")

    @property
    def censored(self) -> bool:
        return self.value is None

    @property
    def day(self) -> date:
        return _to_utc_date(self.timestamp)

    @property
    def x(self) -> float:
        """Value used in likelihoods: the measurement, or the loq if censored."""
        return self.loq if self.value is None else self.value


def parse_measurements(stream: TextIO | str) -> list[Measurement]:
    """Read ``station_id,date,loq,value`` CSV rows; an empty value means censored."""
    if isinstance(stream, str):
        stream = io.StringIO(stream)
    reader = csv.reader(stream)
    header = next(reader, None)
    if header is None:
        raise IngestError("empty input", 1)
    if tuple(h.strip() for h in header) != MEASUREMENT_HEADER:
        raise IngestError(f"expected header {','.join(MEASUREMENT_HEADER)}, got {','.join(header)}", 1)
    out = []
    for row in reader:
        line = reader.line_num
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != 4:
            raise IngestError(f"expected 4 fields, got {len(row)}", line)
        sid, ts, loq, value = (c.strip() for c in row)
        if not sid:
            raise IngestError("empty station_id", line)
        try:
            ts = parse_timestamp(ts)
            loq = float(loq)
            value = float(value) if value else None
        except ValueError as exc:
            raise IngestError(str(exc), line) from None
        try:
            out.append(Measurement(sid, ts, loq, value))
        except IngestError as exc:
            raise IngestError(str(exc), line) from None
    return out


def read_measurements(path) -> list[Measurement]:
    with open(path, newline="", encoding="utf-8") as fh:
        return parse_measurements(fh)


def write_measurements(ms: Iterable[Measurement], fh: TextIO) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(MEASUREMENT_HEADER)
    for m in ms:
        ts = m.timestamp.isoformat()
        w.writerow([m.station_id, ts, repr(m.loq), "" if m.value is None else repr(m.value)])


@dataclass(frozen=True)
class CoarseSeries:
    """Daily maxima ``(day, y_bar, q_bar, censored)``, days strictly increasing."""

    days: tuple
    y_bar: np.ndarray
    q_bar: np.ndarray
    censored: np.ndarray

    def __post_init__(self):
        n = len(self.days)
        if not (self.y_bar.shape == self.q_bar.shape == self.censored.shape == (n,)):
            raise ValueError("coarse series columns differ in length")
        if any(b <= a for a, b in zip(self.days, self.days[1:])):
            raise ValueError("days must be strictly increasing")

    def __len__(self) -> int:
        return len(self.days)

    def __eq__(self, other):
        if not isinstance(other, CoarseSeries):
            return NotImplemented
        return (self.days == other.days and np.array_equal(self.y_bar, other.y_bar)
                and np.array_equal(self.q_bar, other.q_bar)
                and np.array_equal(self.censored, other.censored))

    __hash__ = None

    @property
    def K(self) -> int:
        return len(self.days)

    @classmethod
    def from_arrays(cls, y_bar, q_bar, censored, days=None) -> "CoarseSeries":
        y_bar = np.asarray(y_bar, dtype=float)
        if days is None:
            days = tuple(date.fromordinal(date(2000, 1, 1).toordinal() + k) for k in range(y_bar.size))
        return cls(tuple(days), y_bar, np.asarray(q_bar, dtype=float), np.asarray(censored, dtype=bool))

    def to_sample(self, a: int = 0, b: Optional[int] = None) -> CensoredSample:
        """Entries ``(a, b]`` in 1-based terms, i.e. python slice ``[a:b]``."""
        b = len(self) if b is None else b
        return CensoredSample(self.y_bar[a:b], self.q_bar[a:b], self.censored[a:b])

    def to_csv(self, fh: TextIO) -> None:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(COARSE_HEADER)
        for d, y, q, c in zip(self.days, self.y_bar, self.q_bar, self.censored):
            w.writerow([d.isoformat(), repr(float(y)), repr(float(q)), "1" if c else "0"])

    @classmethod
    def from_csv(cls, fh: TextIO) -> "CoarseSeries":
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(h.strip() for h in header) != COARSE_HEADER:
            raise IngestError(f"expected header {','.join(COARSE_HEADER)}", 1)
        days, ys, qs, cs = [], [], [], []
        for row in reader:
            if not row:
                continue
            try:
                d, y, q, c = row
                days.append(date.fromisoformat(d))
                ys.append(float(y))
                qs.append(float(q))
                cs.append(c.strip().lower() in ("1", "true"))
            except ValueError as exc:
                raise IngestError(str(exc), reader.line_num) from None
        if not days:
            raise IngestError("coarse series is empty")
        return cls(tuple(days), np.array(ys), np.array(qs), np.array(cs, dtype=bool))


def build_coarse_series(ms: Iterable[Measurement]) -> CoarseSeries:
    """Aggregate measurements into per-day maxima.

    A day is uncensored as soon as one of its measurements is quantified;
    ``y_bar`` is then the largest quantified value.  ``q_bar`` is always the
    largest quantification limit of the day, and equals ``y_bar`` on
    censored days.
    """
    by_day: dict[date, list[Measurement]] = defaultdict(list)
    for m in ms:
        by_day[m.day].append(m)
    if not by_day:
        raise IngestError("cannot build a coarse series from no measurements")
    days = sorted(by_day)
    y = np.empty(len(days))
    q = np.empty(len(days))
    c = np.empty(len(days), dtype=bool)
    for k, d in enumerate(days):
        group = by_day[d]
        q[k] = max(m.loq for m in group)
        values = [m.value for m in group if m.value is not None]
        c[k] = not values
        y[k] = q[k] if c[k] else max(values)
    return CoarseSeries(tuple(days), y, q, c)


def filter_interval(ms: Iterable[Measurement], start: date, end: date) -> list[Measurement]:
    if start > end:
        raise ValueError(f"interval start {start} after end {end}")
    return [m for m in ms if start <= m.day <= end]


def active_stations(ms: Iterable[Measurement], start: date, end: date) -> set[str]:
    """Stations with at least one measurement in the closed interval."""
    return {m.station_id for m in filter_interval(ms, start, end)}


def station_samples(ms: Iterable[Measurement]) -> dict[str, list[Measurement]]:
    out: dict[str, list[Measurement]] = defaultdict(list)
    for m in ms:
        out[m.station_id].append(m)
    return dict(out)


def to_censored_sample(ms: list[Measurement]) -> CensoredSample:
    return CensoredSample([m.x for m in ms], [m.loq for m in ms], [m.censored for m in ms])


# Column names of the French "Naïade" surface-water analyses export.
NAIADE_COLUMNS = {
    "station": "CdStationMesureEauxSurface",
    "date": "DatePrel",
    "result": "RsAna",
    "loq": "LqAna",
    "remark": "CdRqAna",
    "parameter": "CdParametre",
}
NAIADE_QUANTIFIED = frozenset({"1"})
NAIADE_CENSORED = frozenset({"2", "7", "10"})


def _decimal(text: str) -> Optional[float]:
    text = text.strip().replace(",", ".")
    return float(text) if text else None


def parse_naiade(stream: TextIO, parameter: Optional[str] = None, *, delimiter: str = ";",
                 columns: Optional[dict] = None) -> list[Measurement]:
    """Best-effort reader for Naïade analysis exports.

    Rows with remark code 1 are quantified; codes 2, 7 and 10 are read as
    censored at the row's quantification limit (falling back to the reported
    result).  Other codes, and rows of other parameters when ``parameter``
    is given, are skipped.  Quantified values below their limit are
    raised to it, since such rows exist in the raw export.
    """
    cols = {**NAIADE_COLUMNS, **(columns or {})}
    reader = csv.DictReader(stream, delimiter=delimiter)
    missing = [cols[k] for k in ("station", "date", "result", "loq", "remark")
               if cols[k] not in (reader.fieldnames or ())]
    if missing:
        raise IngestError(f"missing columns: {', '.join(missing)}", 1)
    out = []
    for row in reader:
        line = reader.line_num
        if parameter is not None and row.get(cols["parameter"], "").strip() != parameter:
            continue
        code = row[cols["remark"]].strip()
        if code not in NAIADE_QUANTIFIED and code not in NAIADE_CENSORED:
            continue
        try:
            result = _decimal(row[cols["result"]])
            loq = _decimal(row[cols["loq"]]) or result
            ts = parse_timestamp(row[cols["date"]][:10])
        except ValueError as exc:
            raise IngestError(str(exc), line) from None
        if loq is None or not loq > 0:
            continue
        value = None
        if code in NAIADE_QUANTIFIED:
            if result is None:
                continue
            value = max(result, loq)
        out.append(Measurement(row[cols["station"]].strip(), ts, loq, value))
    return out
