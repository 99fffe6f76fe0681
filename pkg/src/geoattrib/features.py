"""Multi-scale predictor variables for every building.

Feature groups mirror the prediction index system: footprint morphology,
neighborhood context, block statistics, street adjacency, urban location
(tier, functional-center distance), and POI distributions.  The registry
pins the exact feature order and categorical encodings so matrices are
reproducible artifacts.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import IntEnum
from typing import Iterable, Optional, Sequence

import numpy as np
from scipy import ndimage

from .geom import (GeometryError, Point, Polygon, Polyline, SpatialIndex,
                   alpha_shape, centroid, point_in_polygon, polygon_area,
                   polygon_polyline_distance, ring_signed_area)


class CityTier(IntEnum):
    """Administrative city hierarchy; lower value = higher rank."""

    Municipality = 1
    ProvincialCapital = 2
    PrefectureLevel = 3
    CountyLevel = 4
    NonUrban = 5


#: POI grouping used for the density predictors (19 categories).
POI_CATEGORIES = (
    "restaurants", "hotels", "shopping", "life_services", "beauty_wellness",
    "tourist_attractions", "leisure_entertainment", "sports_fitness",
    "education_training", "culture_media", "healthcare", "automotive_services",
    "transportation", "finance", "real_estate", "corporations", "government",
    "natural_features", "others",
)


# ---------------------------------------------------------------------------
# Registry and matrix
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FeatureDef:
    name: str
    kind: str  # "numeric" | "categorical"
    scale: str  # "building" | "block" | "city"
    description: str
    encoding: tuple[tuple[str, int], ...] = ()  # categorical label -> code

    def encode(self, label: str) -> tuple[int, bool]:
        """Code for a categorical label; unknown labels get the reserved
        code len(encoding) and are reported as flagged."""
        for lab, code in self.encoding:
            if lab == label:
                return code, False
        return len(self.encoding), True


@dataclass(frozen=True)
class FeatureRegistry:
    version: str
    features: tuple[FeatureDef, ...]

    def __post_init__(self):
        names = [f.name for f in self.features]
        if len(set(names)) != len(names):
            raise ValueError("duplicate feature names in registry")

    def names(self) -> list[str]:
        return [f.name for f in self.features]

    def index_of(self, name: str) -> int:
        for i, f in enumerate(self.features):
            if f.name == name:
                return i
        raise KeyError(name)

    def __len__(self) -> int:
        return len(self.features)

    def to_manifest(self) -> str:
        lines = [f"version\t{self.version}"]
        for f in self.features:
            enc = ",".join(f"{lab}={code}" for lab, code in f.encoding) or "-"
            lines.append(f"feature\t{f.name}\t{f.kind}\t{f.scale}\t{enc}\t{f.description}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_manifest(cls, text: str) -> "FeatureRegistry":
        version = None
        feats: list[FeatureDef] = []
        for line in text.splitlines():
            if not line.strip() or line.startswith("#"):
                continue
            parts = line.split("\t")
            if parts[0] == "version":
                version = parts[1]
            elif parts[0] == "feature":
                _, name, kind, scale, enc, desc = parts
                encoding = ()
                if enc != "-":
                    encoding = tuple(
                        (kv.split("=")[0], int(kv.split("=")[1])) for kv in enc.split(",")
                    )
                feats.append(FeatureDef(name, kind, scale, desc, encoding))
        if version is None:
            raise ValueError("registry manifest missing version line")
        return cls(version, tuple(feats))


@dataclass(eq=False)
class FeatureMatrix:
    """Per-building numeric rows aligned to a registry.

    ``mask`` is True where a value is missing; masked cells hold NaN and
    are the only NaNs allowed.
    """

    building_ids: list
    values: np.ndarray
    mask: np.ndarray
    registry_version: str
    flags: list[str] = field(default_factory=list)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        self.mask = np.asarray(self.mask, dtype=bool)
        if self.values.ndim != 2 or self.mask.shape != self.values.shape:
            raise ValueError("values must be 2D with a mask of the same shape")
        if self.values.shape[0] != len(self.building_ids):
            raise ValueError("row count must match building_ids")
        bad = np.isnan(self.values) & ~self.mask
        if bad.any():
            raise ValueError("NaN outside the missing-value mask")

    def to_csv(self, path, registry: FeatureRegistry) -> None:
        if registry.version != self.registry_version:
            raise ValueError("registry version mismatch")
        with open(path, "w") as f:
            f.write("building_id," + ",".join(registry.names()) + "\n")
            for i, bid in enumerate(self.building_ids):
                cells = []
                for j in range(self.values.shape[1]):
                    cells.append("" if self.mask[i, j] else repr(float(self.values[i, j])))
                f.write(str(bid) + "," + ",".join(cells) + "\n")


def _tier_encoding() -> tuple[tuple[str, int], ...]:
    return tuple((t.name, t.value - 1) for t in CityTier)


def height_registry() -> FeatureRegistry:
    """Feature set for the height model: morphology, neighborhood, block,
    street adjacency, and location."""
    f: list[FeatureDef] = []
    add = f.append
    add(FeatureDef("area_m2", "numeric", "building", "rooftop area"))
    add(FeatureDef("perimeter_m", "numeric", "building", "rooftop perimeter"))
    add(FeatureDef("vertex_count", "numeric", "building", "vertices in the rooftop outline"))
    add(FeatureDef("compactness", "numeric", "building", "4*pi*A/P^2 shape compactness"))
    add(FeatureDef("mrr_length_m", "numeric", "building", "minimum rotated rectangle long side"))
    add(FeatureDef("mrr_width_m", "numeric", "building", "minimum rotated rectangle short side"))
    add(FeatureDef("mrr_orientation_deg", "numeric", "building", "long-side bearing in [0,180)"))
    add(FeatureDef("elongation", "numeric", "building", "mrr length / width"))
    add(FeatureDef("neighbor_count", "numeric", "building", "buildings with centroid within the neighbor radius"))
    add(FeatureDef("neighbor_mean_dist_m", "numeric", "building", "mean centroid distance to neighbors"))
    add(FeatureDef("neighbor_nearest_dist_m", "numeric", "building", "distance to the nearest neighbor centroid"))
    add(FeatureDef("block_area_m2", "numeric", "block", "area of the containing block"))
    add(FeatureDef("block_building_count", "numeric", "block", "buildings in the containing block"))
    add(FeatureDef("block_coverage", "numeric", "block", "building area share of the block"))
    add(FeatureDef("block_mean_building_area_m2", "numeric", "block", "mean building footprint in the block"))
    add(FeatureDef("street_adjacent", "numeric", "building", "1 if the building faces a street"))
    add(FeatureDef("dist_to_center_m", "numeric", "city", "distance to the nearest functional center"))
    add(FeatureDef("city_tier", "categorical", "city", "administrative tier", _tier_encoding()))
    add(FeatureDef("climate_zone", "categorical", "city", "building climate zone",
                   tuple((z, i) for i, z in enumerate(CLIMATE_ZONES))))
    return FeatureRegistry("height-v1", tuple(f))


def function_registry() -> FeatureRegistry:
    """Height features plus POI distributions and 3D morphology; used by
    the function model."""
    base = height_registry()
    f = list(base.features)
    for cat in POI_CATEGORIES:
        f.append(FeatureDef(f"poi_count_{cat}", "numeric", "building",
                            f"{cat} POIs within the POI radius"))
    for cat in POI_CATEGORIES:
        f.append(FeatureDef(f"poi_density_{cat}", "numeric", "building",
                            f"kernel density of {cat} POIs at the centroid"))
    f.append(FeatureDef("height_m", "numeric", "building", "predicted or known building height"))
    f.append(FeatureDef("volume_m3", "numeric", "building", "rooftop area times height"))
    return FeatureRegistry("function-v1", tuple(f))


CLIMATE_ZONES = ("severe_cold", "cold", "hot_summer_cold_winter",
                 "hot_summer_warm_winter", "temperate", "unknown")


# ---------------------------------------------------------------------------
# Morphology
# ---------------------------------------------------------------------------

def convex_hull(points: np.ndarray) -> np.ndarray:
    """Monotone-chain convex hull, counter-clockwise, no repeated endpoint."""
    pts = np.unique(np.asarray(points, dtype=float), axis=0)
    if len(pts) < 3:
        return pts
    order = np.lexsort((pts[:, 1], pts[:, 0]))
    pts = pts[order]

    def half(hull_pts):
        hull: list[np.ndarray] = []
        for p in hull_pts:
            while len(hull) >= 2:
                o, a = hull[-2], hull[-1]
                if (a[0] - o[0]) * (p[1] - o[1]) - (a[1] - o[1]) * (p[0] - o[0]) <= 0:
                    hull.pop()
                else:
                    break
            hull.append(p)
        return hull

    lower = half(pts)
    upper = half(pts[::-1])
    return np.asarray(lower[:-1] + upper[:-1])


def min_rotated_rect(poly: Polygon) -> tuple[float, float, float]:
    """(length, width, orientation_deg) of the minimum-area rotated
    rectangle; orientation is the long-side bearing in [0, 180)."""
    hull = convex_hull(poly.exterior)
    if len(hull) < 3:
        xs, ys = poly.exterior[:, 0], poly.exterior[:, 1]
        return float(xs.max() - xs.min()), float(ys.max() - ys.min()), 0.0
    best = None
    n = len(hull)
    for i in range(n):
        dx, dy = hull[(i + 1) % n] - hull[i]
        ang = math.atan2(dy, dx)
        ca, sa = math.cos(-ang), math.sin(-ang)
        xr = hull[:, 0] * ca - hull[:, 1] * sa
        yr = hull[:, 0] * sa + hull[:, 1] * ca
        w = float(xr.max() - xr.min())
        h = float(yr.max() - yr.min())
        area = w * h
        if best is None or area < best[0] - 1e-12:
            long_side, short_side = (w, h) if w >= h else (h, w)
            long_ang = ang if w >= h else ang + math.pi / 2.0
            deg = math.degrees(long_ang) % 180.0
            best = (area, long_side, short_side, deg)
    assert best is not None
    return best[1], best[2], best[3]


def morphology_features(b: Polygon) -> dict[str, float]:
    """Footprint shape descriptors used by both prediction models."""
    area = polygon_area(b)
    ring = b.exterior
    d = np.diff(np.vstack([ring, ring[:1]]), axis=0)
    perimeter = float(np.hypot(d[:, 0], d[:, 1]).sum())
    for h in b.holes:
        dh = np.diff(np.vstack([h, h[:1]]), axis=0)
        perimeter += float(np.hypot(dh[:, 0], dh[:, 1]).sum())
    length, width, orientation = min_rotated_rect(b)
    if width <= 0:
        raise GeometryError("degenerate polygon in morphology_features")
    return {
        "area_m2": area,
        "perimeter_m": perimeter,
        "vertex_count": float(len(ring)),
        "compactness": 4.0 * math.pi * area / (perimeter * perimeter),
        "mrr_length_m": length,
        "mrr_width_m": width,
        "mrr_orientation_deg": orientation,
        "elongation": length / width,
    }


# ---------------------------------------------------------------------------
# Neighborhood
# ---------------------------------------------------------------------------

def neighbor_features(building_id, centroids: dict, index: SpatialIndex,
                      radius: float) -> dict[str, Optional[float]]:
    """Count and distances of buildings whose centroid lies within
    ``radius`` of this building's centroid (itself excluded)."""
    if radius <= 0:
        raise ValueError("radius must be positive")
    c = centroids[building_id]
    box = (c.x - radius, c.y - radius, c.x + radius, c.y + radius)
    dists = []
    for other in index.query(box):
        if other == building_id:
            continue
        o = centroids[other]
        d = math.hypot(o.x - c.x, o.y - c.y)
        if d <= radius:
            dists.append(d)
    if not dists:
        return {"neighbor_count": 0.0, "neighbor_mean_dist_m": None,
                "neighbor_nearest_dist_m": None}
    return {
        "neighbor_count": float(len(dists)),
        "neighbor_mean_dist_m": float(np.mean(dists)),
        "neighbor_nearest_dist_m": float(min(dists)),
    }


# ---------------------------------------------------------------------------
# Street adjacency
# ---------------------------------------------------------------------------

def _building_touches_ring(b: Polygon, ring: np.ndarray, tol: float = 1e-9) -> bool:
    n = len(ring)
    for i in range(n):
        p = Point(float(ring[i, 0]), float(ring[i, 1]))
        if point_in_polygon(b, p, boundary_tol=tol):
            return True
    # ring edges crossing the building boundary
    from .geom import segment_segment_distance

    ext = b.exterior
    m = len(ext)
    for i in range(n):
        a1, a2 = ring[i], ring[(i + 1) % n]
        for j in range(m):
            if segment_segment_distance(a1, a2, ext[j], ext[(j + 1) % m]) <= tol:
                return True
    return False


def _within_setback(b: Polygon, roads: Sequence[Polyline],
                    road_boxes: list[tuple[float, float, float, float]],
                    setback: float) -> bool:
    bx0, by0, bx1, by1 = b.bounds()
    for r, (rx0, ry0, rx1, ry1) in zip(roads, road_boxes):
        # bbox gap is a lower bound on the true distance
        gx = max(0.0, max(rx0 - bx1, bx0 - rx1))
        gy = max(0.0, max(ry0 - by1, by0 - ry1))
        if math.hypot(gx, gy) > setback:
            continue
        if polygon_polyline_distance(b, r) <= setback:
            return True
    return False


def street_adjacency(block_buildings: Sequence[Polygon], roads: Sequence[Polyline],
                     alpha: float = 0.01, setback: float = 100.0) -> list[bool]:
    """Street-facing flags for the buildings of one block.

    A building faces the street when it touches the concave hull of all
    block-building vertices and its nearest road is within the setback.
    Blocks with fewer than 3 buildings skip the hull test.
    """
    road_boxes = [(float(r.vertices[:, 0].min()), float(r.vertices[:, 1].min()),
                   float(r.vertices[:, 0].max()), float(r.vertices[:, 1].max()))
                  for r in roads]
    road_ok = [_within_setback(b, roads, road_boxes, setback) for b in block_buildings]
    if len(block_buildings) < 3:
        return road_ok
    pts = np.vstack([b.exterior for b in block_buildings])
    try:
        hull = alpha_shape(pts, alpha)
    except GeometryError:
        return road_ok
    ring = hull.exterior
    return [ok and _building_touches_ring(b, ring) for b, ok in zip(block_buildings, road_ok)]


# ---------------------------------------------------------------------------
# Kernel density surface and functional centers
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SurfaceGrid:
    """Cell-center evaluation grid; row 0 is the bottom (y increases with i)."""

    x0: float
    y0: float
    cell: float
    nx: int
    ny: int

    def centers(self) -> tuple[np.ndarray, np.ndarray]:
        xs = self.x0 + (np.arange(self.nx) + 0.5) * self.cell
        ys = self.y0 + (np.arange(self.ny) + 0.5) * self.cell
        return xs, ys


@dataclass(eq=False)
class DensitySurface:
    values: np.ndarray  # (ny, nx)
    grid: SurfaceGrid
    bandwidth: float
    n_points: int

    def total_mass(self) -> float:
        return float(self.values.sum() * self.grid.cell ** 2)


def gaussian_kernel(u, v):
    """Standard bivariate Gaussian kernel K(u, v) = exp(-(u^2+v^2)/2) / (2 pi)."""
    return np.exp(-0.5 * (np.asarray(u) ** 2 + np.asarray(v) ** 2)) / (2.0 * math.pi)


def kde_at(points: np.ndarray, h: float, x, y) -> np.ndarray:
    """Kernel density estimate (1/(n h^2)) sum K((x-xi)/h, (y-yi)/h)."""
    pts = np.asarray(points, dtype=float)
    n = len(pts)
    if n == 0:
        raise ValueError("empty point set")
    x = np.atleast_1d(np.asarray(x, dtype=float))
    y = np.atleast_1d(np.asarray(y, dtype=float))
    out = np.zeros(x.shape, dtype=float)
    chunk = 2048
    for s in range(0, n, chunk):
        px = pts[s : s + chunk, 0]
        py = pts[s : s + chunk, 1]
        u = (x[..., None] - px) / h
        v = (y[..., None] - py) / h
        out += gaussian_kernel(u, v).sum(axis=-1)
    return out / (n * h * h)


def kde_surface(points, h: float, grid: SurfaceGrid) -> DensitySurface:
    """Gaussian kernel density surface evaluated at cell centers."""
    if h <= 0:
        raise ValueError("bandwidth must be positive")
    pts = np.asarray([(p.x, p.y) if isinstance(p, Point) else (p[0], p[1]) for p in points],
                     dtype=float)
    if len(pts) == 0:
        raise ValueError("empty point set")
    xs, ys = grid.centers()
    gx, gy = np.meshgrid(xs, ys)
    values = kde_at(pts, h, gx, gy)
    return DensitySurface(values, grid, h, len(pts))


def functional_centers(s: DensitySurface) -> list[Point]:
    """Cells that are strict 8-neighborhood maxima with a negative-definite
    central-difference Hessian; contiguous qualifying cells collapse to
    their value-weighted mean position."""
    f = s.values
    ny, nx = f.shape
    if ny < 3 or nx < 3:
        raise ValueError("surface must be at least 3x3")
    d = s.grid.cell
    fxx = (f[1:-1, 2:] - 2 * f[1:-1, 1:-1] + f[1:-1, :-2]) / (d * d)
    fyy = (f[2:, 1:-1] - 2 * f[1:-1, 1:-1] + f[:-2, 1:-1]) / (d * d)
    fxy = (f[2:, 2:] - f[2:, :-2] - f[:-2, 2:] + f[:-2, :-2]) / (4 * d * d)
    neg_def = (fxx < 0) & (fxx * fyy - fxy * fxy > 0)

    center = f[1:-1, 1:-1]
    strict_max = np.ones_like(center, dtype=bool)
    for di in (-1, 0, 1):
        for dj in (-1, 0, 1):
            if di == 0 and dj == 0:
                continue
            strict_max &= center > f[1 + di : ny - 1 + di, 1 + dj : nx - 1 + dj]

    qual = np.zeros_like(f, dtype=bool)
    qual[1:-1, 1:-1] = neg_def & strict_max
    if not qual.any():
        return []
    labels, n = ndimage.label(qual, structure=np.ones((3, 3), dtype=int))
    xs, ys = s.grid.centers()
    out: list[Point] = []
    for k in range(1, n + 1):
        ii, jj = np.nonzero(labels == k)
        w = f[ii, jj]
        out.append(Point(float(np.average(xs[jj], weights=w)),
                         float(np.average(ys[ii], weights=w))))
    out.sort(key=lambda p: (p.x, p.y))
    return out


def distance_to_center(b: Polygon, centers: Sequence[Point]) -> Optional[float]:
    """Distance from the building centroid to the nearest functional center;
    None (missing) when no centers exist."""
    if not centers:
        return None
    c = centroid(b)
    return min(math.hypot(c.x - p.x, c.y - p.y) for p in centers)


# ---------------------------------------------------------------------------
# POI features
# ---------------------------------------------------------------------------

def poi_density_features(b: Polygon, pois: dict[str, np.ndarray], radius: float,
                         h: float = 300.0) -> dict[str, float]:
    """Per-category POI count within ``radius`` of the centroid and kernel
    density at the centroid (zero for empty categories)."""
    if radius <= 0:
        raise ValueError("radius must be positive")
    c = centroid(b)
    out: dict[str, float] = {}
    for cat in POI_CATEGORIES:
        pts = np.asarray(pois.get(cat, np.empty((0, 2))), dtype=float).reshape(-1, 2)
        if len(pts) == 0:
            out[f"poi_count_{cat}"] = 0.0
            out[f"poi_density_{cat}"] = 0.0
            continue
        dist = np.hypot(pts[:, 0] - c.x, pts[:, 1] - c.y)
        out[f"poi_count_{cat}"] = float(np.count_nonzero(dist <= radius))
        out[f"poi_density_{cat}"] = float(kde_at(pts, h, c.x, c.y)[0])
    return out


# ---------------------------------------------------------------------------
# City tier
# ---------------------------------------------------------------------------

def city_tier_assign(b: Polygon, admin_polygons: Sequence[tuple[CityTier, Polygon]]) -> CityTier:
    """Tier of the highest-ranked admin polygon containing the centroid;
    NonUrban when no polygon contains it."""
    c = centroid(b)
    best = CityTier.NonUrban
    for tier, poly in admin_polygons:
        if tier == CityTier.NonUrban:
            continue
        if point_in_polygon(poly, c, boundary_tol=1e-9) and tier.value < best.value:
            best = tier
    return best


# ---------------------------------------------------------------------------
# Assembly
# ---------------------------------------------------------------------------

@dataclass(eq=False)
class FeatureContext:
    """Immutable context layers shared by all buildings of a city."""

    blocks: list[tuple[object, Polygon]] = field(default_factory=list)
    roads: list[Polyline] = field(default_factory=list)
    pois: dict[str, np.ndarray] = field(default_factory=dict)
    admin_polygons: list[tuple[CityTier, Polygon]] = field(default_factory=list)
    climate_zones: list[tuple[str, Polygon]] = field(default_factory=list)
    functional_centers: list[Point] = field(default_factory=list)
    neighbor_radius: float = 100.0
    poi_radius: float = 300.0
    kde_bandwidth: float = 300.0
    street_alpha: float = 0.01
    street_setback: float = 100.0
    heights: dict = field(default_factory=dict)  # building id -> meters


def assemble_feature_matrix(buildings: Sequence[tuple[object, Polygon]],
                            context: FeatureContext,
                            registry: FeatureRegistry) -> FeatureMatrix:
    """One row per building in registry order.

    Missing context (no neighbors, no centers, unassigned heights) is
    masked, never silently zeroed; unknown categorical levels are encoded
    with the reserved code and recorded in ``flags``.
    """
    ids = [bid for bid, _ in buildings]
    n, d = len(buildings), len(registry)
    values = np.full((n, d), np.nan)
    mask = np.ones((n, d), dtype=bool)
    flags: list[str] = []
    if n == 0:
        return FeatureMatrix(ids, values, mask, registry.version, flags)

    names = registry.names()
    col = {name: j for j, name in enumerate(names)}

    def put(i, name, value):
        if name not in col:
            return
        j = col[name]
        if value is None:
            return  # stays masked
        values[i, j] = float(value)
        mask[i, j] = False

    cents = {bid: centroid(p) for bid, p in buildings}
    index = SpatialIndex(
        (bid, (cents[bid].x, cents[bid].y, cents[bid].x, cents[bid].y)) for bid in ids
    )

    # block assignment by centroid containment; unassigned -> singleton block
    block_of: dict[object, object] = {}
    block_members: dict[object, list[object]] = {}
    block_shape: dict[object, Optional[Polygon]] = {}
    block_index = SpatialIndex(
        (i, shape.bounds()) for i, (_, shape) in enumerate(context.blocks)
    )
    for bid, _ in buildings:
        c = cents[bid]
        chosen = None
        for k in block_index.query((c.x, c.y, c.x, c.y)):
            candidate_id, candidate_shape = context.blocks[k]
            if point_in_polygon(candidate_shape, c, boundary_tol=1e-9):
                chosen = (candidate_id, candidate_shape)
                break
        if chosen is None:
            key = ("__singleton__", bid)
            block_of[bid] = key
            block_members[key] = [bid]
            block_shape[key] = None
        else:
            key = chosen[0]
            block_of[bid] = key
            block_members.setdefault(key, []).append(bid)
            block_shape[key] = chosen[1]

    poly_of = dict(buildings)

    # street adjacency per block
    street_flag: dict[object, bool] = {}
    for key, members in block_members.items():
        flags_blk = street_adjacency([poly_of[m] for m in members], context.roads,
                                     alpha=context.street_alpha,
                                     setback=context.street_setback)
        for m, fl in zip(members, flags_blk):
            street_flag[m] = fl

    for i, (bid, poly) in enumerate(buildings):
        for name, value in morphology_features(poly).items():
            put(i, name, value)
        for name, value in neighbor_features(bid, cents, index,
                                             context.neighbor_radius).items():
            put(i, name, value)

        key = block_of[bid]
        members = block_members[key]
        bareas = [polygon_area(poly_of[m]) for m in members]
        bp = block_shape[key]
        barea = polygon_area(bp) if bp is not None else sum(bareas)
        put(i, "block_area_m2", barea)
        put(i, "block_building_count", float(len(members)))
        put(i, "block_coverage", min(1.0, sum(bareas) / barea) if barea > 0 else None)
        put(i, "block_mean_building_area_m2", float(np.mean(bareas)))
        put(i, "street_adjacent", 1.0 if street_flag[bid] else 0.0)

        put(i, "dist_to_center_m", distance_to_center(poly, context.functional_centers))

        tier = city_tier_assign(poly, context.admin_polygons)
        tdef = registry.features[col["city_tier"]] if "city_tier" in col else None
        if tdef is not None:
            code, unknown = tdef.encode(tier.name)
            if unknown:
                flags.append(f"unknown city_tier level {tier.name!r} for building {bid}")
            put(i, "city_tier", float(code))

        if "climate_zone" in col:
            zone = "unknown"
            c = cents[bid]
            for zname, zpoly in context.climate_zones:
                if point_in_polygon(zpoly, c, boundary_tol=1e-9):
                    zone = zname
                    break
            zdef = registry.features[col["climate_zone"]]
            code, unknown = zdef.encode(zone)
            if unknown:
                flags.append(f"unknown climate_zone level {zone!r} for building {bid}")
            put(i, "climate_zone", float(code))

        if any(name.startswith("poi_") for name in names):
            for name, value in poi_density_features(poly, context.pois,
                                                    context.poi_radius,
                                                    context.kde_bandwidth).items():
                put(i, name, value)

        if "height_m" in col:
            hgt = context.heights.get(bid)
            put(i, "height_m", hgt)
            if hgt is not None:
                put(i, "volume_m3", hgt * polygon_area(poly))

    return FeatureMatrix(ids, values, mask, registry.version, flags)
