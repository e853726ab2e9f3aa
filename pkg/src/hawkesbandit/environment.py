"""Grid world: cell partition, windowed replay of an event log, ingestion of
raw calls-for-service extracts."""
import csv
import logging
import math
from collections import Counter
from dataclasses import dataclass, field
from datetime import datetime

import numpy as np

from .hawkes import SpatioTemporalEvents, TimeWindow

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class GridSpec:
    """Equal-angle partition of a lon/lat box into ``X`` columns and ``Y`` rows."""

    lon_range: tuple = (0.0, 1.0)
    lat_range: tuple = (0.0, 1.0)
    X: int = 10
    Y: int = 10

    def __post_init__(self):
        if not (self.lon_range[1] > self.lon_range[0] and self.lat_range[1] > self.lat_range[0]):
            raise ValueError("grid ranges must satisfy max > min")
        if int(self.X) < 1 or int(self.Y) < 1:
            raise ValueError("grid needs X >= 1 and Y >= 1")

    @property
    def shape(self):
        return (int(self.X), int(self.Y))

    @property
    def n_cells(self):
        return int(self.X) * int(self.Y)

    def contains(self, lon, lat):
        lon = np.asarray(lon, dtype=float)
        lat = np.asarray(lat, dtype=float)
        return ((lon >= self.lon_range[0]) & (lon <= self.lon_range[1])
                & (lat >= self.lat_range[0]) & (lat <= self.lat_range[1]))

    def cell_ids(self, lon, lat):
        """Flat cell ids (``x * Y + y``) for arrays of points; every point must be in bounds."""
        lon = np.asarray(lon, dtype=float)
        lat = np.asarray(lat, dtype=float)
        if not np.all(self.contains(lon, lat)):
            raise ValueError("point outside the grid bounds")
        x = _bin(lon, self.lon_range, self.X)
        y = _bin(lat, self.lat_range, self.Y)
        return x * int(self.Y) + y

    def cell_xy(self, cell_id):
        return divmod(int(cell_id), int(self.Y))


def _bin(v, rng, n):
    lo, hi = rng
    # points within 1e-9 cell widths below an edge belong to the upper cell, so
    # decimal coordinates on a bin edge are not lost to rounding
    idx = np.floor((v - lo) * n / (hi - lo) + 1e-9).astype(np.int64)
    return np.clip(idx, 0, int(n) - 1)


def cell_of(lon, lat, grid):
    """Grid coordinates ``(x, y)`` of one point; the top edges fold into the last bin."""
    if not (np.isfinite(lon) and np.isfinite(lat)) or not grid.contains(lon, lat):
        raise ValueError(f"point ({lon}, {lat}) is outside the grid")
    return int(_bin(np.float64(lon), grid.lon_range, grid.X)), int(_bin(np.float64(lat), grid.lat_range, grid.Y))


@dataclass
class EventDataset:
    """Time-sorted events (seconds from ``period.start``) with coordinates."""

    t: np.ndarray
    lon: np.ndarray
    lat: np.ndarray
    period: TimeWindow

    def __post_init__(self):
        self.t = np.asarray(self.t, dtype=float)
        self.lon = np.asarray(self.lon, dtype=float)
        self.lat = np.asarray(self.lat, dtype=float)
        order = np.argsort(self.t, kind="stable")
        self.t, self.lon, self.lat = self.t[order], self.lon[order], self.lat[order]

    def __len__(self):
        return self.t.size

    @classmethod
    def from_synthetic(cls, events: SpatioTemporalEvents, horizon):
        return cls(events.t, events.x, events.y, TimeWindow(0.0, float(horizon)))

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "lon", "lat"])
            for row in zip(self.t, self.lon, self.lat):
                w.writerow([repr(float(v)) for v in row])

    @classmethod
    def from_csv(cls, path, period=None):
        with open(path, newline="") as fh:
            rows = list(csv.DictReader(fh))
        t = np.array([float(r["t"]) for r in rows])
        lon = np.array([float(r["lon"]) for r in rows])
        lat = np.array([float(r["lat"]) for r in rows])
        if period is None:
            period = TimeWindow(0.0, float(t.max()) if t.size else 0.0)
        elif not isinstance(period, TimeWindow):
            period = TimeWindow(*period)
        return cls(t, lon, lat, period)


class EndOfEpisode(Exception):
    """Raised when stepping a replay past its last visit."""


class ReplayEnvironment:
    """Replays an event log in consecutive windows ``[vW, (v+1)W)``.

    ``step`` reveals the events of the current window for the recommended
    cells only and advances the visit counter.  Ground-truth per-window counts
    for all cells are exposed through :attr:`counts` for evaluation.
    """

    def __init__(self, dataset, grid, window, n_visits=None):
        self.dataset = dataset
        self.grid = grid
        self.window = float(window)
        if self.window <= 0:
            raise ValueError("window length must be > 0")
        max_visits = int(math.floor(dataset.period.length / self.window + 1e-9))
        self.n_visits = max_visits if n_visits is None else int(n_visits)
        if self.n_visits < 1:
            raise ValueError("the dataset period is shorter than one window")
        t = dataset.t - dataset.period.start
        inside = (t >= 0) & (t < self.n_visits * self.window) & grid.contains(dataset.lon, dataset.lat)
        self._t = t[inside]
        self._visit = np.floor(self._t / self.window).astype(np.int64)
        self._cell = grid.cell_ids(dataset.lon[inside], dataset.lat[inside])
        self.counts = np.zeros((self.n_visits, grid.n_cells), dtype=np.int64)
        np.add.at(self.counts, (self._visit, self._cell), 1)
        order = np.lexsort((self._t, self._cell, self._visit))
        self._t, self._visit, self._cell = self._t[order], self._visit[order], self._cell[order]
        key = self._visit * grid.n_cells + self._cell
        self._bounds = np.searchsorted(key, np.arange(self.n_visits * grid.n_cells + 1))
        self.v = 0

    @property
    def total_events(self):
        return int(self.counts.sum())

    def reset(self):
        self.v = 0
        return self

    def visit_window(self, v=None):
        v = self.v if v is None else v
        return TimeWindow(v * self.window, (v + 1) * self.window)

    def events_in(self, v, cell):
        k = v * self.grid.n_cells + int(cell)
        return self._t[self._bounds[k]:self._bounds[k + 1]]

    def step(self, recommendation):
        """Observe the current window in the recommended cells.

        Returns ``{cell: timestamps}`` with one entry per recommended cell;
        the reward of a cell is the length of its timestamp array.
        """
        if self.v >= self.n_visits:
            raise EndOfEpisode(f"all {self.n_visits} visits used")
        obs = {int(a): self.events_in(self.v, a) for a in recommendation}
        self.v += 1
        return obs


# ---------------------------------------------------------------------------
# ingestion
# ---------------------------------------------------------------------------


@dataclass
class IngestReport:
    rows_in: int = 0
    rows_out: int = 0
    dropped: Counter = field(default_factory=Counter)
    warnings: list = field(default_factory=list)

    def as_dict(self):
        return {"rows_in": self.rows_in, "rows_out": self.rows_out,
                "dropped": dict(sorted(self.dropped.items())), "warnings": list(self.warnings)}

    def to_text(self):
        lines = [f"rows read: {self.rows_in}", f"rows kept: {self.rows_out}"]
        for reason, n in sorted(self.dropped.items()):
            lines.append(f"dropped ({reason}): {n}")
        lines.extend(f"warning: {w}" for w in self.warnings)
        return "\n".join(lines) + "\n"


DEFAULT_SCHEMA = {
    "time": "time",
    "lat": "lat",
    "lon": "lon",
    "category": "category",
    "time_format": "%Y-%m-%d %H:%M:%S",
    "delimiter": ",",
}


def _parse_date(value, fmt):
    if isinstance(value, datetime):
        return value
    try:
        return datetime.fromisoformat(value)
    except ValueError:
        return datetime.strptime(value, fmt)


def ingest(path, schema=None, filters=None, grid=None):
    """Read a delimited event log and keep the rows matching ``filters``.

    ``schema`` maps the logical fields ``time``, ``lat``, ``lon``, ``category``
    to column names and gives ``time_format`` and ``delimiter``.  ``filters``
    may hold ``category`` (case-insensitive match), ``start``/``end``
    (the period is ``[start, end)``) and ``bbox`` as
    ``((lon_min, lon_max), (lat_min, lat_max))``; ``bbox`` defaults to the grid
    bounds.  Malformed rows are counted in the report and skipped.

    Returns ``(EventDataset, IngestReport)``.
    """
    schema = {**DEFAULT_SCHEMA, **(schema or {})}
    filters = dict(filters or {})
    fmt = schema["time_format"]
    category = filters.get("category")
    if isinstance(category, str):
        category = [category]
    wanted = None if category is None else {c.strip().casefold() for c in category}
    start = _parse_date(filters["start"], fmt) if filters.get("start") else None
    end = _parse_date(filters["end"], fmt) if filters.get("end") else None
    bbox = filters.get("bbox")
    if bbox is None and grid is not None:
        bbox = (grid.lon_range, grid.lat_range)

    report = IngestReport()
    when, lons, lats = [], [], []
    with open(path, newline="", encoding="utf-8", errors="replace") as fh:
        reader = csv.DictReader(fh, delimiter=schema["delimiter"])
        missing_cols = [schema[k] for k in ("time", "lat", "lon") if schema[k] not in (reader.fieldnames or [])]
        if wanted is not None and schema["category"] not in (reader.fieldnames or []):
            missing_cols.append(schema["category"])
        if missing_cols:
            raise ValueError(f"input is missing columns: {', '.join(missing_cols)}")
        for row in reader:
            report.rows_in += 1
            if wanted is not None and (row.get(schema["category"]) or "").strip().casefold() not in wanted:
                report.dropped["category"] += 1
                continue
            raw_t = (row.get(schema["time"]) or "").strip()
            raw_lat = (row.get(schema["lat"]) or "").strip()
            raw_lon = (row.get(schema["lon"]) or "").strip()
            if not (raw_t and raw_lat and raw_lon):
                report.dropped["missing_field"] += 1
                continue
            try:
                ts = datetime.strptime(raw_t, fmt)
            except ValueError:
                report.dropped["bad_timestamp"] += 1
                continue
            try:
                lat, lon = float(raw_lat), float(raw_lon)
            except ValueError:
                report.dropped["bad_coordinate"] += 1
                continue
            if not (math.isfinite(lat) and math.isfinite(lon)):
                report.dropped["bad_coordinate"] += 1
                continue
            if (start is not None and ts < start) or (end is not None and ts >= end):
                report.dropped["date_range"] += 1
                continue
            if bbox is not None:
                (lo0, lo1), (la0, la1) = bbox
                if not (lo0 <= lon <= lo1 and la0 <= lat <= la1):
                    report.dropped["bbox"] += 1
                    continue
            when.append(ts)
            lons.append(lon)
            lats.append(lat)

    origin = start if start is not None else (min(when) if when else datetime(1970, 1, 1))
    t = np.array([(w - origin).total_seconds() for w in when], dtype=float)
    if end is not None:
        period = TimeWindow(0.0, (end - origin).total_seconds())
    else:
        period = TimeWindow(0.0, float(t.max()) if t.size else 0.0)
    report.rows_out = len(when)
    if report.rows_out == 0:
        report.warnings.append("no rows matched the filters")
        logger.warning("ingest of %s produced an empty dataset", path)
    return EventDataset(t, lons, lats, period), report
