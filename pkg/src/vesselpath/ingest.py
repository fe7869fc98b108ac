"""Voyage CSV ingestion and per-class summary statistics.

Input rows are ``voyage_id,timestamp,lat,lon`` with optional ``fuel_rate``
(L/h) and ``speed`` (m/s). Points are grouped by voyage, sorted by time and
thinned to one record per whole second, keeping the earliest record in each
second. Timestamps may be epoch seconds (int or float) or RFC 3339 strings.
"""
from __future__ import annotations

import csv
import io
import logging
import math
from collections import defaultdict
from dataclasses import dataclass, field
from datetime import datetime, timezone
from typing import Iterable, NamedTuple

import numpy as np

from .geo import GeoError, haversine_array, validate_latlon

log = logging.getLogger(__name__)

REQUIRED_COLUMNS = ("voyage_id", "timestamp", "lat", "lon")
OPTIONAL_COLUMNS = ("fuel_rate", "speed")


class IngestError(ValueError):
    pass


class SchemaError(IngestError):
    def __init__(self, column: str, source: str = "input"):
        super().__init__(f"{source}: missing required column {column!r}")
        self.column = column


class RowError(IngestError):
    def __init__(self, line: int, message: str):
        super().__init__(f"line {line}: {message}")
        self.line = line


def _frozen(a, dtype=np.float64):
    a = np.array(a, dtype=dtype)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Voyage:
    id: str
    t: np.ndarray = field(repr=False)
    lat: np.ndarray = field(repr=False)
    lon: np.ndarray = field(repr=False)
    fuel_rate: np.ndarray | None = field(default=None, repr=False)
    speed: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        t = _frozen(self.t)
        lat = _frozen(self.lat)
        lon = _frozen(self.lon)
        if not (t.shape == lat.shape == lon.shape and t.ndim == 1):
            raise IngestError(f"voyage {self.id!r}: channel lengths differ")
        if t.size < 2:
            raise IngestError(f"voyage {self.id!r}: needs at least 2 points")
        if not np.all(np.diff(t) > 0):
            raise IngestError(f"voyage {self.id!r}: timestamps must be strictly increasing")
        if not (np.all(np.isfinite(lat)) and np.all(np.isfinite(lon))
                and np.all(np.abs(lat) <= 90) and np.all(np.abs(lon) <= 180)):
            raise IngestError(f"voyage {self.id!r}: invalid position")
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "lat", lat)
        object.__setattr__(self, "lon", lon)
        for name in OPTIONAL_COLUMNS:
            ch = getattr(self, name)
            if ch is not None:
                ch = _frozen(ch)
                if ch.shape != t.shape:
                    raise IngestError(f"voyage {self.id!r}: {name} length differs")
                object.__setattr__(self, name, ch)

    def __len__(self):
        return self.t.shape[0]

    def __eq__(self, other):
        if not isinstance(other, Voyage):
            return NotImplemented
        same = (self.id == other.id and np.array_equal(self.t, other.t)
                and np.array_equal(self.lat, other.lat) and np.array_equal(self.lon, other.lon))
        for name in OPTIONAL_COLUMNS:
            a, b = getattr(self, name), getattr(other, name)
            if (a is None) != (b is None):
                return False
            if a is not None:
                same = same and np.array_equal(a, b, equal_nan=True)
        return same

    __hash__ = None

    @property
    def duration(self) -> float:
        return float(self.t[-1] - self.t[0])

    @property
    def distance(self) -> float:
        """Track length in meters, summed great-circle legs."""
        return float(haversine_array(self.lat[:-1], self.lon[:-1], self.lat[1:], self.lon[1:]).sum())

    def fuel_used(self) -> float | None:
        """Liters burnt, integrating the fuel-rate channel (L/h) over time."""
        if self.fuel_rate is None or np.all(np.isnan(self.fuel_rate)):
            return None
        rate = np.nan_to_num(self.fuel_rate) / 3600.0
        return float(np.sum((rate[1:] + rate[:-1]) * np.diff(self.t)) / 2.0)


@dataclass(frozen=True)
class LabeledVoyage:
    voyage: Voyage
    class_label: str


@dataclass(frozen=True)
class ClassSummary:
    class_label: str
    voyage_count: int
    mean_fuel: float | None
    mean_duration: float
    mean_distance: float
    mean_speed: float


class ParseResult(NamedTuple):
    voyages: list
    dropped: int
    skipped_rows: int


def parse_timestamp(raw: str) -> float:
    raw = raw.strip()
    try:
        return float(raw)
    except ValueError:
        pass
    txt = raw[:-1] + "+00:00" if raw.endswith(("Z", "z")) else raw
    dt = datetime.fromisoformat(txt.replace(" ", "T", 1))
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    return dt.timestamp()


def _open_text(source):
    if isinstance(source, io.TextIOBase) or hasattr(source, "read"):
        return source, False, getattr(source, "name", "input")
    return open(source, newline="", encoding="utf-8"), True, str(source)


def parse_voyages(source, lenient: bool = False) -> ParseResult:
    """Read voyages from a CSV path or text stream.

    Unparseable rows raise :class:`RowError` unless ``lenient`` is set, in
    which case they are skipped and counted. Voyages left with fewer than two
    points after one-second thinning are dropped and counted.
    """
    fh, owned, name = _open_text(source)
    try:
        reader = csv.DictReader(fh)
        cols = reader.fieldnames or []
        for col in REQUIRED_COLUMNS:
            if col not in cols:
                raise SchemaError(col, name)
        opt = [c for c in OPTIONAL_COLUMNS if c in cols]
        rows = defaultdict(list)
        order = []
        skipped = 0
        for row in reader:
            line = reader.line_num
            try:
                vid = (row["voyage_id"] or "").strip()
                if not vid:
                    raise ValueError("empty voyage_id")
                ts = parse_timestamp(row["timestamp"])
                lat = float(row["lat"])
                lon = float(row["lon"])
                validate_latlon(lat, lon)
                if not math.isfinite(ts):
                    raise ValueError(f"non-finite timestamp {row['timestamp']!r}")
                extra = tuple(_opt_float(row.get(c)) for c in opt)
            except (ValueError, TypeError, GeoError) as exc:
                if not lenient:
                    raise RowError(line, str(exc)) from None
                skipped += 1
                continue
            if vid not in rows:
                order.append(vid)
            rows[vid].append((ts, lat, lon) + extra)
    finally:
        if owned:
            fh.close()

    voyages = []
    dropped = 0
    for vid in order:
        recs = sorted(rows[vid], key=lambda r: r[0])
        kept = []
        last_bucket = None
        for r in recs:
            bucket = math.floor(r[0])
            if bucket != last_bucket:
                kept.append(r)
                last_bucket = bucket
        if len(kept) < 2:
            dropped += 1
            continue
        arr = np.array(kept, dtype=np.float64)
        chans = {c: arr[:, 3 + k] for k, c in enumerate(opt)}
        voyages.append(Voyage(vid, arr[:, 0], arr[:, 1], arr[:, 2], **chans))
    if dropped:
        log.warning("dropped %d voyage(s) with fewer than 2 points", dropped)
    return ParseResult(voyages, dropped, skipped)


def _opt_float(raw) -> float:
    if raw is None or raw.strip() == "":
        return math.nan
    return float(raw)


def _fmt(x: float) -> str:
    if isinstance(x, float) and math.isnan(x):
        return ""
    if float(x).is_integer() and abs(x) < 2**53:
        return str(int(x))
    return repr(float(x))


def write_voyages(voyages: Iterable[Voyage], dest) -> None:
    voyages = list(voyages)
    opt = [c for c in OPTIONAL_COLUMNS if any(getattr(v, c) is not None for v in voyages)]
    fh, owned, _ = (dest, False, None) if hasattr(dest, "write") else (
        open(dest, "w", newline="", encoding="utf-8"), True, None)
    try:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([*REQUIRED_COLUMNS, *opt])
        for v in voyages:
            chans = [getattr(v, c) for c in opt]
            for k in range(len(v)):
                extra = [_fmt(ch[k]) if ch is not None else "" for ch in chans]
                w.writerow([v.id, _fmt(v.t[k]), repr(float(v.lat[k])), repr(float(v.lon[k])), *extra])
    finally:
        if owned:
            fh.close()


def read_labels(source) -> dict:
    """``voyage_id,class_label`` CSV to a dict (insertion-ordered)."""
    fh, owned, name = _open_text(source)
    try:
        reader = csv.DictReader(fh)
        for col in ("voyage_id", "class_label"):
            if col not in (reader.fieldnames or []):
                raise SchemaError(col, name)
        out = {}
        for row in reader:
            vid = row["voyage_id"].strip()
            if vid in out:
                raise RowError(reader.line_num, f"duplicate voyage_id {vid!r}")
            out[vid] = row["class_label"].strip()
        return out
    finally:
        if owned:
            fh.close()


def write_labels(labels: dict, dest, column: str = "class_label") -> None:
    with open(dest, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["voyage_id", column])
        for vid, lab in labels.items():
            w.writerow([vid, lab])


def attach_labels(voyages: Iterable[Voyage], labels: dict) -> list:
    out = []
    for v in voyages:
        if v.id not in labels:
            raise IngestError(f"voyage {v.id!r} has no label")
        out.append(LabeledVoyage(v, labels[v.id]))
    return out


def class_statistics(voyages: Iterable[LabeledVoyage]) -> list:
    groups = defaultdict(list)
    for lv in voyages:
        groups[lv.class_label].append(lv.voyage)
    out = []
    for label in sorted(groups):
        vs = groups[label]
        dur = np.array([v.duration for v in vs])
        dist = np.array([v.distance for v in vs])
        fuel = [f for f in (v.fuel_used() for v in vs) if f is not None]
        out.append(ClassSummary(
            class_label=label,
            voyage_count=len(vs),
            mean_fuel=float(np.mean(fuel)) if fuel else None,
            mean_duration=float(dur.mean()),
            mean_distance=float(dist.mean()),
            mean_speed=float(np.mean(dist / dur)),
        ))
    return out


def write_statistics(stats: Iterable[ClassSummary], dest) -> None:
    with open(dest, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["class_label", "voyage_count", "mean_fuel", "mean_duration",
                    "mean_distance", "mean_speed"])
        for s in stats:
            w.writerow([s.class_label, s.voyage_count,
                        "" if s.mean_fuel is None else f"{s.mean_fuel:.6f}",
                        f"{s.mean_duration:.6f}", f"{s.mean_distance:.6f}", f"{s.mean_speed:.6f}"])
