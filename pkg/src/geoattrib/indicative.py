"""Indicative attributes: function labels from land plots, street-view
quality scores, and construction age from annual impervious rasters.
"""
from __future__ import annotations

import csv
import math
import os
import re
from dataclasses import dataclass, field
from enum import Enum, IntEnum
from typing import Iterable, Optional, Sequence

import numpy as np

from .geom import Point, Polygon, centroid, point_in_polygon, polygon_area
from .vectorize import read_ascii_grid


class FunctionLabel(IntEnum):
    Residential = 0
    Commercial = 1
    PublicService = 2
    Industry = 3
    Office = 4


FUNCTION_NAMES = tuple(f.name for f in FunctionLabel)

#: Disorder categories visible from the street, in fixed report order.
DISORDER_TYPES = (
    "unkempt_facade",
    "damaged_facade",
    "illegal_temporary_building",
    "graffiti_illegal_advertisement",
    "store_poor_facade",
    "store_poor_signboard",
)
N_DISORDER_TYPES = len(DISORDER_TYPES)

SVI_YEAR_MIN, SVI_YEAR_MAX = 2014, 2023


# ---------------------------------------------------------------------------
# Function labels from AOI plots
# ---------------------------------------------------------------------------

# Plot reclassification: secondary-type keywords take precedence, then the
# primary category decides.  Plots matching neither stay unclassified.
_SECONDARY_RECLASS = (
    ("residential area", FunctionLabel.Residential),
    ("dormitor", FunctionLabel.Residential),
    ("shopping center", FunctionLabel.Commercial),
    ("market", FunctionLabel.Commercial),
    ("supermarket", FunctionLabel.Commercial),
    ("factor", FunctionLabel.Industry),
    ("office building", FunctionLabel.Office),
)

_PRIMARY_RECLASS = {
    "Shopping": FunctionLabel.Commercial,
    "Education and Training": FunctionLabel.PublicService,
    "Healthcare": FunctionLabel.PublicService,
    "Culture and Media": FunctionLabel.PublicService,
    "Sports and Fitness": FunctionLabel.PublicService,
    "Transportation Infrastructure": FunctionLabel.PublicService,
    "Government Institutions": FunctionLabel.Office,
}


def reclassify_aoi(primary_type: str, secondary_type: str = "") -> Optional[FunctionLabel]:
    """Map a plot's (primary, secondary) categories to one of the five
    building functions, or None when the plot carries no function."""
    sec = secondary_type.lower()
    if sec:
        for key, label in _SECONDARY_RECLASS:
            if key in sec:
                return label
    return _PRIMARY_RECLASS.get(primary_type)


@dataclass(eq=False)
class AoiPlot:
    polygon: Polygon
    primary_type: str
    secondary_type: str = ""
    reclass: Optional[FunctionLabel] = None

    def __post_init__(self):
        if self.reclass is None:
            self.reclass = reclassify_aoi(self.primary_type, self.secondary_type)


def assign_function_labels(buildings: Sequence[tuple[object, Polygon]],
                           plots: Sequence[AoiPlot]) -> dict:
    """Building id -> FunctionLabel or None (unlabeled).

    A building takes the function of the reclassified plot containing its
    centroid; nested/overlapping plots resolve to the smallest area.
    Buildings outside every labeled plot stay None and are excluded from
    training downstream.
    """
    labeled = [(p, polygon_area(p.polygon)) for p in plots if p.reclass is not None]
    out: dict = {}
    for bid, poly in buildings:
        c = centroid(poly)
        best: tuple[float, FunctionLabel] | None = None
        for plot, area in labeled:
            if point_in_polygon(plot.polygon, c, boundary_tol=1e-9):
                if best is None or area < best[0]:
                    best = (area, plot.reclass)
        out[bid] = best[1] if best else None
    return out


# ---------------------------------------------------------------------------
# Street-view quality (disorder scoring)
# ---------------------------------------------------------------------------

@dataclass(eq=False)
class SviObservation:
    """A street-view sampling point with its per-year image detections.

    ``images`` maps year -> list of 6-flag vectors, one per image; flag k
    is 1 when disorder type k is detected in that image.
    """

    point_id: object
    point: Point
    heading_deg: float
    images: dict[int, list[tuple[int, ...]]] = field(default_factory=dict)

    def __post_init__(self):
        for year, flag_lists in self.images.items():
            if not (SVI_YEAR_MIN <= int(year) <= SVI_YEAR_MAX):
                raise ValueError(f"SVI year {year} outside [{SVI_YEAR_MIN}, {SVI_YEAR_MAX}]")
            for flags in flag_lists:
                if len(flags) != N_DISORDER_TYPES or any(f not in (0, 1) for f in flags):
                    raise ValueError("each image needs 6 binary disorder flags")

    def years(self) -> list[int]:
        return sorted(self.images)


def load_svi_csv(path) -> list[SviObservation]:
    """Read detections from CSV columns
    (point_id, x, y, heading_deg, year, image_id, flag_k1..flag_k6)."""
    obs: dict[object, SviObservation] = {}
    with open(path, newline="") as f:
        reader = csv.DictReader(f)
        required = {"point_id", "x", "y", "heading_deg", "year", "image_id"}
        flag_cols = [f"flag_k{i}" for i in range(1, 7)]
        missing = (required | set(flag_cols)) - set(reader.fieldnames or ())
        if missing:
            raise ValueError(f"SVI csv missing columns: {sorted(missing)}")
        for row in reader:
            pid = row["point_id"]
            if pid not in obs:
                obs[pid] = SviObservation(
                    pid, Point(float(row["x"]), float(row["y"])),
                    float(row["heading_deg"]))
            flags = tuple(int(row[c]) for c in flag_cols)
            obs[pid].images.setdefault(int(row["year"]), []).append(flags)
    for o in obs.values():
        o.__post_init__()  # revalidate accumulated years/flags
    return list(obs.values())


def save_svi_csv(path, observations: Iterable[SviObservation]) -> None:
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["point_id", "x", "y", "heading_deg", "year", "image_id"]
                        + [f"flag_k{i}" for i in range(1, 7)])
        for o in observations:
            for year in sorted(o.images):
                for img_i, flags in enumerate(o.images[year]):
                    writer.writerow([o.point_id, repr(float(o.point.x)),
                                     repr(float(o.point.y)),
                                     repr(float(o.heading_deg)), year, img_i, *flags])


class QualityMode(str, Enum):
    NO_OBSERVATION_POINTS = "NoObservationPoints"
    NO_IMAGES_THAT_YEAR = "NoImagesThatYear"
    SCORE = "Score"


@dataclass(frozen=True)
class TypeScore:
    mode: QualityMode
    value: Optional[float] = None  # normalized score in [0, 1]


@dataclass(frozen=True)
class QualityResult:
    year: Optional[int]
    types: tuple[TypeScore, ...]
    total: Optional[float]  # in [0, 6] when scored

    def mode(self) -> QualityMode:
        for t in self.types:
            if t.mode is QualityMode.SCORE:
                return QualityMode.SCORE
        return self.types[0].mode


QUALITY_BUFFER_M = 100.0


def _in_buffer(building: Polygon, observations: Sequence[SviObservation],
               radius: float) -> list[SviObservation]:
    c = centroid(building)
    return [o for o in observations
            if math.hypot(o.point.x - c.x, o.point.y - c.y) <= radius]


def quality_T(building: Polygon, observations: Sequence[SviObservation],
              year: int, k: int, buffer_radius: float = QUALITY_BUFFER_M):
    """Total disorder score T for type ``k`` (0-based) in ``year``.

    T sums, over in-buffer points that have images that year, each point's
    mean flag value (sum of flags / that point's image count for the year).
    Returns (QualityMode, T or None); points without images that year are
    excluded rather than counted as zero.
    """
    if not 0 <= k < N_DISORDER_TYPES:
        raise ValueError("disorder type index out of range")
    in_buffer = _in_buffer(building, observations, buffer_radius)
    if not in_buffer:
        return QualityMode.NO_OBSERVATION_POINTS, None
    total = 0.0
    m_effective = 0
    for o in in_buffer:
        imgs = o.images.get(year, [])
        if not imgs:
            continue
        m_effective += 1
        total += sum(fl[k] for fl in imgs) / len(imgs)
    if m_effective == 0:
        return QualityMode.NO_IMAGES_THAT_YEAR, None
    return QualityMode.SCORE, total


def quality_Q(building: Polygon, observations: Sequence[SviObservation],
              year: int, buffer_radius: float = QUALITY_BUFFER_M) -> QualityResult:
    """Per-type normalized scores T/M and their total Q in [0, 6] for one
    year; M counts the in-buffer points with images that year."""
    in_buffer = _in_buffer(building, observations, buffer_radius)
    if not in_buffer:
        ts = tuple(TypeScore(QualityMode.NO_OBSERVATION_POINTS) for _ in range(N_DISORDER_TYPES))
        return QualityResult(year, ts, None)
    m_effective = sum(1 for o in in_buffer if o.images.get(year))
    if m_effective == 0:
        ts = tuple(TypeScore(QualityMode.NO_IMAGES_THAT_YEAR) for _ in range(N_DISORDER_TYPES))
        return QualityResult(year, ts, None)
    scores = []
    for k in range(N_DISORDER_TYPES):
        _, t = quality_T(building, in_buffer, year, k, buffer_radius=math.inf)
        scores.append(t / m_effective)
    return QualityResult(year, tuple(TypeScore(QualityMode.SCORE, s) for s in scores),
                         float(sum(scores)))


def quality_latest(building: Polygon, observations: Sequence[SviObservation],
                   buffer_radius: float = QUALITY_BUFFER_M) -> QualityResult:
    """Quality of the most recent year with scorable street views; the
    tri-state gap modes propagate when no year scores."""
    in_buffer = _in_buffer(building, observations, buffer_radius)
    if not in_buffer:
        ts = tuple(TypeScore(QualityMode.NO_OBSERVATION_POINTS) for _ in range(N_DISORDER_TYPES))
        return QualityResult(None, ts, None)
    years = sorted({y for o in in_buffer for y in o.images if o.images[y]})
    if not years:
        ts = tuple(TypeScore(QualityMode.NO_IMAGES_THAT_YEAR) for _ in range(N_DISORDER_TYPES))
        return QualityResult(None, ts, None)
    return quality_Q(building, in_buffer, max(years), buffer_radius=math.inf)


# ---------------------------------------------------------------------------
# Construction age from the impervious stack
# ---------------------------------------------------------------------------

AFTER_LAST_YEAR = "AF2018"
GAIA_FIRST_YEAR, GAIA_LAST_YEAR = 1985, 2018


@dataclass(eq=False)
class ImperviousStack:
    """Annual 0/1 rasters sharing one georeference, years ascending."""

    years: tuple[int, ...]
    grids: np.ndarray  # (n_years, H, W)
    xll: float
    yll: float
    cellsize: float

    def __post_init__(self):
        self.grids = np.asarray(self.grids, dtype=np.uint8)
        if self.grids.ndim != 3 or self.grids.shape[0] != len(self.years):
            raise ValueError("need one raster layer per year")
        if list(self.years) != sorted(set(self.years)):
            raise ValueError("years must be strictly ascending")

    @property
    def shape(self) -> tuple[int, int]:
        return self.grids.shape[1], self.grids.shape[2]

    def cell_at(self, x: float, y: float) -> Optional[tuple[int, int]]:
        h, w = self.shape
        col = int(math.floor((x - self.xll) / self.cellsize))
        row_from_bottom = int(math.floor((y - self.yll) / self.cellsize))
        row = h - 1 - row_from_bottom
        if 0 <= row < h and 0 <= col < w:
            return row, col
        return None

    @classmethod
    def from_directory(cls, directory, pattern: str = r"(\d{4})") -> "ImperviousStack":
        """Load one ESRI ASCII grid per year; the year is parsed from the
        file name."""
        entries = []
        for name in sorted(os.listdir(directory)):
            if not name.endswith(".asc"):
                continue
            m = re.search(pattern, name)
            if not m:
                continue
            entries.append((int(m.group(1)), os.path.join(directory, name)))
        if not entries:
            raise ValueError(f"no year-named .asc rasters in {directory}")
        entries.sort()
        grids, ref = [], None
        for year, path in entries:
            values, xll, yll, cs, nodata = read_ascii_grid(path)
            grid = (np.where(values == nodata, 0, values) > 0.5).astype(np.uint8)
            if ref is None:
                ref = (xll, yll, cs, grid.shape)
            elif ref != (xll, yll, cs, grid.shape):
                raise ValueError(f"raster {path} does not share the stack transform")
            grids.append(grid)
        years = tuple(y for y, _ in entries)
        return cls(years, np.stack(grids), ref[0], ref[1], ref[2])


def assign_age(building: Polygon, stack: ImperviousStack):
    """First year the centroid cell is impervious; AF2018 when it never is.

    Returns None when the centroid falls outside the stack extent (the
    caller flags these).
    """
    c = centroid(building)
    cell = stack.cell_at(c.x, c.y)
    if cell is None:
        return None
    series = stack.grids[:, cell[0], cell[1]]
    hits = np.nonzero(series)[0]
    if len(hits) == 0:
        return AFTER_LAST_YEAR
    return int(stack.years[hits[0]])


AGE_BIN_EDGES = (1985, 1990, 2000, 2010, 2018)
AGE_BINS = ("<=1985", "1986-1990", "1991-2000", "2001-2010", "2011-2018", AFTER_LAST_YEAR)


def age_bin(year_class) -> str:
    """Five validation bins split at 1985/1990/2000/2010/2018, with
    after-2018 buildings in their own bucket."""
    if year_class == AFTER_LAST_YEAR:
        return AFTER_LAST_YEAR
    year = int(year_class)
    if year <= 1985:
        return AGE_BINS[0]
    if year <= 1990:
        return AGE_BINS[1]
    if year <= 2000:
        return AGE_BINS[2]
    if year <= 2010:
        return AGE_BINS[3]
    if year <= 2018:
        return AGE_BINS[4]
    return AFTER_LAST_YEAR
