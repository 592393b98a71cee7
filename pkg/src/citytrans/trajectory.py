"""Staypoint extraction: GPS logs -> denoised traces -> per-city corpora.

Places are cells of a regular grid laid over the city bounding box; meter
distances use a local equirectangular projection about the grid's reference
latitude, which is adequate at city scale.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import IO, Iterable, Mapping

import numpy as np

from citytrans.errors import DataError, OutOfBoundsError
from citytrans.kernels import mean_shift_modes, staypoint_runs

EARTH_RADIUS_M = 6_371_000.0
M_PER_DEG = EARTH_RADIUS_M * math.pi / 180.0

GPS_CSV_HEADER = "user_id,timestamp,longitude,latitude"

NIGHT_END_H = 8  # nighttime is 20:00-08:00 local
NIGHT_START_H = 20


@dataclass(frozen=True)
class GpsRecord:
    user_id: str
    timestamp: int  # UTC epoch seconds
    longitude: float
    latitude: float


@dataclass(frozen=True)
class GridSpec:
    """Regular grid over a city bounding box; origin is the lower-left corner."""

    origin_lon: float
    origin_lat: float
    n_cols: int
    n_rows: int
    cell_size_m: float = 1000.0
    ref_latitude: float | None = None

    def __post_init__(self):
        if self.cell_size_m <= 0:
            raise DataError("cell_size_m must be positive")
        if self.n_cols < 1 or self.n_rows < 1:
            raise DataError("grid must have at least one cell")
        if self.ref_latitude is None:
            center = self.origin_lat + (self.n_rows * self.cell_size_m / 2.0) / M_PER_DEG
            object.__setattr__(self, "ref_latitude", center)

    @property
    def n_cells(self) -> int:
        return self.n_cols * self.n_rows

    @property
    def lon_scale_m(self) -> float:
        """Meters per degree of longitude at the reference latitude."""
        return M_PER_DEG * math.cos(math.radians(self.ref_latitude))

    def to_xy(self, lon, lat):
        """Project degrees to meters east/north of the grid origin."""
        x = (np.asarray(lon, dtype=np.float64) - self.origin_lon) * self.lon_scale_m
        y = (np.asarray(lat, dtype=np.float64) - self.origin_lat) * M_PER_DEG
        return x, y

    def to_lonlat(self, x, y):
        lon = np.asarray(x, dtype=np.float64) / self.lon_scale_m + self.origin_lon
        lat = np.asarray(y, dtype=np.float64) / M_PER_DEG + self.origin_lat
        return lon, lat

    def contains_place(self, place_id: int) -> bool:
        return 0 <= place_id < self.n_cells

    def place_id(self, col: int, row: int) -> int:
        return row * self.n_cols + col

    def place_rc(self, place_id: int) -> tuple[int, int]:
        return place_id // self.n_cols, place_id % self.n_cols

    def cell_center(self, place_id: int) -> tuple[float, float]:
        row, col = self.place_rc(place_id)
        x = (col + 0.5) * self.cell_size_m
        y = (row + 0.5) * self.cell_size_m
        lon, lat = self.to_lonlat(x, y)
        return float(lon), float(lat)

    def cell_corners(self, place_id: int) -> list[tuple[float, float]]:
        """Counterclockwise corner ring (closed) of a cell, in degrees."""
        row, col = self.place_rc(place_id)
        xs = (col * self.cell_size_m, (col + 1) * self.cell_size_m)
        ys = (row * self.cell_size_m, (row + 1) * self.cell_size_m)
        ring = [(xs[0], ys[0]), (xs[1], ys[0]), (xs[1], ys[1]), (xs[0], ys[1]), (xs[0], ys[0])]
        return [tuple(map(float, self.to_lonlat(x, y))) for x, y in ring]


def assign_grid_cell(lon: float, lat: float, grid: GridSpec) -> int:
    """Map a coordinate to its unique cell index, or raise OutOfBoundsError."""
    x, y = grid.to_xy(lon, lat)
    col = math.floor(float(x) / grid.cell_size_m)
    row = math.floor(float(y) / grid.cell_size_m)
    if not (0 <= col < grid.n_cols and 0 <= row < grid.n_rows):
        raise OutOfBoundsError(
            f"coordinate ({lon}, {lat}) falls outside the grid (cell {col}, {row})"
        )
    return grid.place_id(col, row)


@dataclass(frozen=True)
class Staypoint:
    place: int
    enter_time: int  # UTC epoch seconds
    duration: int  # seconds
    longitude: float = math.nan
    latitude: float = math.nan


@dataclass
class MobilityCorpus:
    """One city's staypoint sequences plus per-place visit counts."""

    city_id: str
    grid: GridSpec
    sequences: list[tuple[str, list[Staypoint]]]
    place_visit_counts: dict[int, int]
    utc_offset_hours: float = 0.0

    @property
    def n_places(self) -> int:
        return len(self.place_visit_counts)

    def visited_places(self) -> list[int]:
        return sorted(self.place_visit_counts)


@dataclass(frozen=True)
class ParseIssue:
    line: int
    message: str


@dataclass
class ParseResult:
    records: list[GpsRecord]
    issues: list[ParseIssue] = field(default_factory=list)

    @property
    def n_rejected(self) -> int:
        return len(self.issues)


def parse_gps_records(stream: IO | Iterable[str]) -> ParseResult:
    """Parse the GPS input CSV; malformed rows are recorded, not fatal.

    Output records are grouped by user and time-sorted within each user.
    """
    records: list[GpsRecord] = []
    issues: list[ParseIssue] = []
    header_seen = False
    for lineno, raw in enumerate(stream, start=1):
        if isinstance(raw, bytes):
            raw = raw.decode("utf-8")
        line = raw.rstrip("\r\n")
        if not header_seen:
            if line != GPS_CSV_HEADER:
                raise DataError(
                    f"line 1: expected header '{GPS_CSV_HEADER}', got '{line}'"
                )
            header_seen = True
            continue
        if not line:
            continue
        parts = line.split(",")
        if len(parts) != 4:
            issues.append(ParseIssue(lineno, f"expected 4 fields, got {len(parts)}"))
            continue
        user_id = parts[0]
        try:
            ts = int(parts[1])
            lon = float(parts[2])
            lat = float(parts[3])
        except ValueError as exc:
            issues.append(ParseIssue(lineno, str(exc)))
            continue
        if not (-180.0 <= lon <= 180.0 and -90.0 <= lat <= 90.0):
            issues.append(ParseIssue(lineno, f"coordinate out of range: {lon}, {lat}"))
            continue
        if not user_id:
            issues.append(ParseIssue(lineno, "empty user_id"))
            continue
        records.append(GpsRecord(user_id, ts, lon, lat))
    records.sort(key=lambda r: (r.user_id, r.timestamp))
    return ParseResult(records, issues)


def group_by_user(records: Iterable[GpsRecord]) -> dict[str, list[GpsRecord]]:
    out: dict[str, list[GpsRecord]] = {}
    for rec in records:
        out.setdefault(rec.user_id, []).append(rec)
    return out


def mean_shift_denoise(
    points: list[tuple[float, float]],
    bandwidth_m: float,
    window: int = 0,
    ref_latitude: float | None = None,
) -> list[tuple[float, float]]:
    """Replace each (lon, lat) point by its flat-kernel mean-shift mode.

    ``window > 0`` limits each point's neighborhood to the trailing window
    (per-user recent history); the default uses all points.
    """
    if not points:
        raise DataError("mean_shift_denoise needs at least one point")
    if bandwidth_m <= 0:
        raise DataError("bandwidth must be positive")
    arr = np.asarray(points, dtype=np.float64)
    ref = float(np.mean(arr[:, 1])) if ref_latitude is None else ref_latitude
    lon_scale = M_PER_DEG * math.cos(math.radians(ref))
    xy = np.empty_like(arr)
    xy[:, 0] = arr[:, 0] * lon_scale
    xy[:, 1] = arr[:, 1] * M_PER_DEG
    modes = mean_shift_modes(xy, bandwidth_m, window=window)
    out = np.empty_like(modes)
    out[:, 0] = modes[:, 0] / lon_scale
    out[:, 1] = modes[:, 1] / M_PER_DEG
    return [(float(a), float(b)) for a, b in out]


def denoise_user_records(
    records: list[GpsRecord], bandwidth_m: float, window: int = 50
) -> list[GpsRecord]:
    """Denoise one user's trace against a sliding recent-history window."""
    if not records:
        return []
    pts = [(r.longitude, r.latitude) for r in records]
    denoised = mean_shift_denoise(pts, bandwidth_m, window=window)
    return [
        GpsRecord(r.user_id, r.timestamp, lon, lat)
        for r, (lon, lat) in zip(records, denoised)
    ]


def extract_staypoints(
    user_records: list[GpsRecord],
    spatial_m: float = 1000.0,
    temporal_s: float = 1800.0,
    grid: GridSpec | None = None,
) -> list[Staypoint]:
    """Detect staypoints for one already-denoised, time-sorted trace.

    A maximal run of consecutive records within ``spatial_m`` of the run's
    first record whose time span reaches ``temporal_s`` becomes one staypoint
    at the run's mean location. Runs whose mean location falls outside the
    grid are dropped (the corpus only represents in-city places).
    """
    if grid is None:
        raise DataError("extract_staypoints requires a GridSpec")
    n = len(user_records)
    if n == 0:
        return []
    times = np.fromiter((r.timestamp for r in user_records), dtype=np.int64, count=n)
    lons = np.fromiter((r.longitude for r in user_records), dtype=np.float64, count=n)
    lats = np.fromiter((r.latitude for r in user_records), dtype=np.float64, count=n)
    if np.any(np.diff(times) < 0):
        raise DataError("records must be sorted by timestamp")
    x, y = grid.to_xy(lons, lats)
    xy = np.stack([x, y], axis=1)
    starts, ends = staypoint_runs(times, xy, spatial_m, temporal_s)
    out: list[Staypoint] = []
    for s, e in zip(starts, ends):
        mean_lon = float(np.mean(lons[s : e + 1]))
        mean_lat = float(np.mean(lats[s : e + 1]))
        try:
            place = assign_grid_cell(mean_lon, mean_lat, grid)
        except OutOfBoundsError:
            continue
        out.append(
            Staypoint(
                place=place,
                enter_time=int(times[s]),
                duration=int(times[e] - times[s]),
                longitude=mean_lon,
                latitude=mean_lat,
            )
        )
    return out


def _daytime_overlap_s(start_s: float, end_s: float) -> float:
    """Seconds of [start, end) falling inside any local 08:00-20:00 window."""
    if end_s <= start_s:
        return 0.0
    total = 0.0
    day = math.floor(start_s / 86400.0)
    last_day = math.floor(end_s / 86400.0)
    while day <= last_day:
        w0 = day * 86400.0 + NIGHT_END_H * 3600.0
        w1 = day * 86400.0 + NIGHT_START_H * 3600.0
        total += max(0.0, min(end_s, w1) - max(start_s, w0))
        day += 1
    return total


def night_duration_s(staypoint: Staypoint, utc_offset_hours: float = 0.0) -> float:
    """Seconds of a stay spent in local nighttime (20:00-08:00)."""
    start = staypoint.enter_time + utc_offset_hours * 3600.0
    end = start + staypoint.duration
    return staypoint.duration - _daytime_overlap_s(start, end)


def estimate_home(staypoints: list[Staypoint], utc_offset_hours: float = 0.0) -> int:
    """Place with the greatest total nighttime stay duration; ties go to the
    smaller place id. Falls back to total duration when no stay touches
    nighttime hours."""
    if not staypoints:
        raise DataError("cannot estimate a home from zero staypoints")
    night: dict[int, float] = {}
    total: dict[int, float] = {}
    for sp in staypoints:
        night[sp.place] = night.get(sp.place, 0.0) + night_duration_s(sp, utc_offset_hours)
        total[sp.place] = total.get(sp.place, 0.0) + sp.duration
    tally = night if any(v > 0 for v in night.values()) else total
    return min(tally, key=lambda p: (-tally[p], p))


def build_city_corpus(
    user_staypoints: Mapping[str, list[Staypoint]],
    user_homes: Mapping[str, int],
    city_id: str,
    grid: GridSpec,
    utc_offset_hours: float = 0.0,
) -> MobilityCorpus:
    """Assemble a corpus from users whose estimated home cell is in-bounds."""
    sequences: list[tuple[str, list[Staypoint]]] = []
    counts: dict[int, int] = {}
    for user_id in sorted(user_staypoints):
        seq = user_staypoints[user_id]
        home = user_homes.get(user_id)
        if home is None or not grid.contains_place(home) or not seq:
            continue
        sequences.append((user_id, list(seq)))
        for sp in seq:
            counts[sp.place] = counts.get(sp.place, 0) + 1
    return MobilityCorpus(city_id, grid, sequences, counts, utc_offset_hours)


def corpus_from_gps(
    records: Iterable[GpsRecord],
    city_id: str,
    grid: GridSpec,
    spatial_threshold_m: float = 1000.0,
    temporal_threshold_s: float = 1800.0,
    meanshift_bandwidth_m: float = 200.0,
    denoise_window: int = 50,
    utc_offset_hours: float = 0.0,
) -> MobilityCorpus:
    """Full per-city pipeline: denoise, extract, estimate homes, assemble."""
    per_user = group_by_user(records)
    staypoints: dict[str, list[Staypoint]] = {}
    homes: dict[str, int] = {}
    for user_id, recs in per_user.items():
        if meanshift_bandwidth_m > 0:
            recs = denoise_user_records(recs, meanshift_bandwidth_m, denoise_window)
        sps = extract_staypoints(recs, spatial_threshold_m, temporal_threshold_s, grid)
        if not sps:
            continue
        staypoints[user_id] = sps
        homes[user_id] = estimate_home(sps, utc_offset_hours)
    return build_city_corpus(staypoints, homes, city_id, grid, utc_offset_hours)
