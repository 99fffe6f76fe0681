"""Planar geometry primitives shared by all pipeline stages.

All coordinates are meters in a local planar projection (see
:func:`lonlat_to_local` / :func:`local_to_lonlat` for the per-city
azimuthal equidistant projection used when ingesting WGS84 data).
Operations are pure; nothing here holds mutable state.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np


class GeometryError(ValueError):
    """Raised for invalid geometric input (degenerate rings, bad radii, ...)."""


# ---------------------------------------------------------------------------
# Primitives
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Point:
    """A 2D point in meters (projected CRS)."""

    x: float
    y: float

    def __post_init__(self):
        object.__setattr__(self, "x", float(self.x))
        object.__setattr__(self, "y", float(self.y))
        if not (math.isfinite(self.x) and math.isfinite(self.y)):
            raise GeometryError(f"non-finite point coordinates ({self.x}, {self.y})")

    def distance_to(self, other: "Point") -> float:
        return math.hypot(self.x - other.x, self.y - other.y)

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y], dtype=float)


def _ring_array(vertices) -> np.ndarray:
    arr = np.asarray(
        [(v.x, v.y) if isinstance(v, Point) else (v[0], v[1]) for v in vertices],
        dtype=float,
    )
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise GeometryError("ring vertices must be 2D points")
    # Drop an explicit closing vertex; rings are stored open.
    if len(arr) > 1 and np.array_equal(arr[0], arr[-1]):
        arr = arr[:-1]
    if not np.isfinite(arr).all():
        raise GeometryError("non-finite ring coordinates")
    return arr


def ring_signed_area(ring: np.ndarray) -> float:
    """Shoelace signed area of an open ring (positive = counter-clockwise)."""
    x, y = ring[:, 0], ring[:, 1]
    return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))


def _distinct_count(ring: np.ndarray) -> int:
    return len(np.unique(ring, axis=0))


def _cross2(u: np.ndarray, v: np.ndarray) -> np.ndarray:
    """z-component of the 2D cross product; u is (2,) or (N,2), v is (N,2)."""
    u = np.asarray(u)
    if u.ndim == 1:
        return u[0] * v[..., 1] - u[1] * v[..., 0]
    return u[..., 0] * v[..., 1] - u[..., 1] * v[..., 0]


def _segments_properly_cross(ring: np.ndarray) -> bool:
    """True if any two non-adjacent edges of the ring cross at interior points."""
    n = len(ring)
    if n < 4:
        return False
    a = ring
    b = np.roll(ring, -1, axis=0)
    for i in range(n):
        # orientation tests of edge i against non-adjacent edges i+2 .. n-1
        js = np.arange(i + 2, n - 1 if i == 0 else n)
        if len(js) == 0:
            continue
        p, q = a[i], b[i]
        r, s = a[js], b[js]
        d = q - p
        d1 = _cross2(d, r - p)
        d2 = _cross2(d, s - p)
        e = s - r
        d3 = _cross2(e, p - r)
        d4 = _cross2(e, q - r)
        crossing = (np.sign(d1) * np.sign(d2) < 0) & (np.sign(d3) * np.sign(d4) < 0)
        if crossing.any():
            return True
    return False


@dataclass(eq=False)
class Polygon:
    """Simple polygon with optional holes.

    The exterior ring is stored open (no repeated closing vertex) and is
    normalized to counter-clockwise orientation; holes are normalized to
    clockwise.  Rings may share isolated vertices but must not cross.
    """

    exterior: np.ndarray
    holes: list[np.ndarray] = field(default_factory=list)

    def __init__(self, exterior, holes: Optional[Iterable] = None, validate: bool = True):
        ext = _ring_array(exterior)
        hls = [_ring_array(h) for h in (holes or [])]
        if validate:
            if _distinct_count(ext) < 3:
                raise GeometryError("exterior ring needs >= 3 distinct vertices")
            if abs(ring_signed_area(ext)) == 0.0:
                raise GeometryError("zero-area exterior ring")
            for h in hls:
                if _distinct_count(h) < 3:
                    raise GeometryError("hole ring needs >= 3 distinct vertices")
            if _segments_properly_cross(ext):
                raise GeometryError("self-intersecting exterior ring")
        if ring_signed_area(ext) < 0:
            ext = ext[::-1].copy()
        hls = [h[::-1].copy() if ring_signed_area(h) > 0 else h for h in hls]
        self.exterior = ext
        self.holes = hls

    # -- basic measures ----------------------------------------------------

    @property
    def area(self) -> float:
        return polygon_area(self)

    def bounds(self) -> tuple[float, float, float, float]:
        xs, ys = self.exterior[:, 0], self.exterior[:, 1]
        return float(xs.min()), float(ys.min()), float(xs.max()), float(ys.max())

    def rings(self) -> list[np.ndarray]:
        return [self.exterior, *self.holes]

    def translated(self, dx: float, dy: float) -> "Polygon":
        off = np.array([dx, dy])
        return Polygon(self.exterior + off, [h + off for h in self.holes], validate=False)

    def contains_point(self, p: Point, boundary_tol: float = 0.0) -> bool:
        return point_in_polygon(self, p, boundary_tol=boundary_tol)


@dataclass(eq=False)
class Polyline:
    """Ordered vertex chain, at least two vertices."""

    vertices: np.ndarray

    def __init__(self, vertices):
        arr = np.asarray(
            [(v.x, v.y) if isinstance(v, Point) else (v[0], v[1]) for v in vertices],
            dtype=float,
        )
        if len(arr) < 2:
            raise GeometryError("polyline needs >= 2 vertices")
        if not np.isfinite(arr).all():
            raise GeometryError("non-finite polyline coordinates")
        self.vertices = arr

    def length(self) -> float:
        d = np.diff(self.vertices, axis=0)
        return float(np.hypot(d[:, 0], d[:, 1]).sum())


# ---------------------------------------------------------------------------
# Area / centroid / point queries
# ---------------------------------------------------------------------------

def polygon_area(p: Polygon) -> float:
    """Shoelace area of the exterior minus the holes, in square meters."""
    area = ring_signed_area(p.exterior)
    for h in p.holes:
        area += ring_signed_area(h)  # holes are CW, signed area negative
    if area <= 0:
        raise GeometryError("polygon area is not positive")
    return area


def centroid(p: Polygon) -> Point:
    """Area-weighted centroid of the polygon (holes subtract)."""

    def ring_moments(ring: np.ndarray) -> tuple[float, float, float]:
        x, y = ring[:, 0], ring[:, 1]
        xn, yn = np.roll(x, -1), np.roll(y, -1)
        cross = x * yn - xn * y
        a = 0.5 * float(cross.sum())
        cx = float(((x + xn) * cross).sum()) / 6.0
        cy = float(((y + yn) * cross).sum()) / 6.0
        return a, cx, cy

    a_tot, cx_tot, cy_tot = 0.0, 0.0, 0.0
    for ring in p.rings():
        a, cx, cy = ring_moments(ring)
        a_tot += a
        cx_tot += cx
        cy_tot += cy
    if a_tot <= 0:
        raise GeometryError("cannot take centroid of zero-area polygon")
    return Point(cx_tot / a_tot, cy_tot / a_tot)


def _point_segment_distance(px, py, ax, ay, bx, by) -> tuple[float, float, float]:
    """Distance from (px,py) to segment a-b; returns (dist, qx, qy)."""
    dx, dy = bx - ax, by - ay
    ll = dx * dx + dy * dy
    if ll == 0.0:
        return math.hypot(px - ax, py - ay), ax, ay
    t = max(0.0, min(1.0, ((px - ax) * dx + (py - ay) * dy) / ll))
    qx, qy = ax + t * dx, ay + t * dy
    return math.hypot(px - qx, py - qy), qx, qy


def segment_segment_distance(a1, a2, b1, b2) -> float:
    """Minimum distance between segments a1-a2 and b1-b2 (2-tuples/arrays)."""
    a1 = np.asarray(a1, float); a2 = np.asarray(a2, float)
    b1 = np.asarray(b1, float); b2 = np.asarray(b2, float)
    da, db = a2 - a1, b2 - b1
    d1 = _cross2(da, (b1 - a1)[None])[0]
    d2 = _cross2(da, (b2 - a1)[None])[0]
    d3 = _cross2(db, (a1 - b1)[None])[0]
    d4 = _cross2(db, (a2 - b1)[None])[0]
    if (np.sign(d1) * np.sign(d2) < 0) and (np.sign(d3) * np.sign(d4) < 0):
        return 0.0
    cands = (
        _point_segment_distance(a1[0], a1[1], b1[0], b1[1], b2[0], b2[1])[0],
        _point_segment_distance(a2[0], a2[1], b1[0], b1[1], b2[0], b2[1])[0],
        _point_segment_distance(b1[0], b1[1], a1[0], a1[1], a2[0], a2[1])[0],
        _point_segment_distance(b2[0], b2[1], a1[0], a1[1], a2[0], a2[1])[0],
    )
    return min(cands)


def polygon_polyline_distance(p: Polygon, line: Polyline) -> float:
    """Minimum distance from the polygon's exterior boundary to the polyline
    (0 when they cross or the polyline enters the polygon)."""
    ring = p.exterior
    n = len(ring)
    v = line.vertices
    if point_in_polygon(p, Point(float(v[0, 0]), float(v[0, 1]))):
        return 0.0
    best = math.inf
    for i in range(n):
        a1, a2 = ring[i], ring[(i + 1) % n]
        for j in range(len(v) - 1):
            d = segment_segment_distance(a1, a2, v[j], v[j + 1])
            if d < best:
                best = d
                if best == 0.0:
                    return 0.0
    return best


def nearest_point_on_ring(p: Polygon, q: Point) -> Point:
    """Closest point to ``q`` on the polygon's exterior boundary.

    Ties are broken by the lowest segment index for reproducibility.
    """
    ring = p.exterior
    best: tuple[float, float, float] | None = None
    n = len(ring)
    for i in range(n):
        ax, ay = ring[i]
        bx, by = ring[(i + 1) % n]
        d, qx, qy = _point_segment_distance(q.x, q.y, ax, ay, bx, by)
        if best is None or d < best[0] - 1e-15:
            best = (d, qx, qy)
    assert best is not None
    return Point(best[1], best[2])


def point_in_polygon(p: Polygon, q: Point, boundary_tol: float = 0.0) -> bool:
    """Even-odd point-in-polygon test; boundary points count as inside
    when within ``boundary_tol`` of any boundary segment."""
    if boundary_tol > 0.0:
        for ring in p.rings():
            n = len(ring)
            for i in range(n):
                ax, ay = ring[i]
                bx, by = ring[(i + 1) % n]
                d, _, _ = _point_segment_distance(q.x, q.y, ax, ay, bx, by)
                if d <= boundary_tol:
                    return True
    inside = False
    for ring in p.rings():
        x, y = ring[:, 0], ring[:, 1]
        xn, yn = np.roll(x, -1), np.roll(y, -1)
        crosses = ((y > q.y) != (yn > q.y))
        if crosses.any():
            xi = x[crosses] + (q.y - y[crosses]) * (xn[crosses] - x[crosses]) / (yn[crosses] - y[crosses])
            inside ^= bool(np.count_nonzero(xi > q.x) % 2)
    return inside


# ---------------------------------------------------------------------------
# Douglas-Peucker simplification
# ---------------------------------------------------------------------------

def _dp_keep_mask(pts: np.ndarray, tolerance: float) -> np.ndarray:
    """Boolean keep-mask for open chain simplification (endpoints kept)."""
    n = len(pts)
    keep = np.zeros(n, dtype=bool)
    keep[0] = keep[-1] = True
    stack = [(0, n - 1)]
    while stack:
        i, j = stack.pop()
        if j - i < 2:
            continue
        a, b = pts[i], pts[j]
        seg = pts[i + 1 : j]
        d = b - a
        ll = float(d @ d)
        if ll == 0.0:
            dist = np.hypot(seg[:, 0] - a[0], seg[:, 1] - a[1])
        else:
            t = np.clip(((seg - a) @ d) / ll, 0.0, 1.0)
            proj = a + t[:, None] * d
            dist = np.hypot(seg[:, 0] - proj[:, 0], seg[:, 1] - proj[:, 1])
        k = int(np.argmax(dist))
        if dist[k] > tolerance:
            m = i + 1 + k
            keep[m] = True
            stack.append((i, m))
            stack.append((m, j))
    return keep


def simplify_chain(pts: np.ndarray, tolerance: float) -> np.ndarray:
    """Douglas-Peucker on an open chain of vertices."""
    if tolerance < 0:
        raise GeometryError("tolerance must be >= 0")
    if tolerance == 0 or len(pts) <= 2:
        return pts.copy()
    return pts[_dp_keep_mask(pts, tolerance)]


def simplify_ring(ring: np.ndarray, tolerance: float) -> np.ndarray:
    """Douglas-Peucker on a closed ring.

    The ring is anchored at vertex 0 and the vertex farthest from it
    (lowest index on ties), the two halves are simplified independently,
    and the result is guaranteed to keep >= 3 distinct vertices.
    """
    if tolerance < 0:
        raise GeometryError("tolerance must be >= 0")
    n = len(ring)
    if tolerance == 0 or n <= 3:
        return ring.copy()
    d0 = np.hypot(ring[:, 0] - ring[0, 0], ring[:, 1] - ring[0, 1])
    far = int(np.argmax(d0))
    if far == 0:  # all vertices coincide with v0
        return ring.copy()
    first = simplify_chain(ring[: far + 1], tolerance)
    closed = np.vstack([ring[far:], ring[:1]])
    second = simplify_chain(closed, tolerance)
    out = np.vstack([first[:-1], second[:-1]])
    if _distinct_count(out) < 3:
        # ring collapsed to a chord; restore the most deviant remaining vertex
        kept = {0, far}
        best_i, best_d = -1, -1.0
        a, b = ring[0], ring[far]
        for i in range(n):
            if i in kept:
                continue
            d, _, _ = _point_segment_distance(ring[i, 0], ring[i, 1], a[0], a[1], b[0], b[1])
            if d > best_d:
                best_i, best_d = i, d
        idx = sorted(kept | {best_i})
        out = ring[idx]
    return out


def simplify_dp(line, tolerance: float):
    """Douglas-Peucker simplification of a :class:`Polyline` or ring array.

    Polylines keep their endpoints; raw (N,2) arrays are treated as closed
    rings and stay closed with at least 3 vertices.
    """
    if isinstance(line, Polyline):
        return Polyline(simplify_chain(line.vertices, tolerance))
    return simplify_ring(np.asarray(line, dtype=float), tolerance)


# ---------------------------------------------------------------------------
# Buffer
# ---------------------------------------------------------------------------

#: Circular arcs are approximated with this many segments per quadrant.
#: The inscribed arc chords fall short of the true circle by at most
#: r * (1 - cos(pi / (4 * quad_segs))), about 0.0012 * r at 16.
BUFFER_QUAD_SEGS = 16


def buffer_chord_error(radius: float, quad_segs: int = BUFFER_QUAD_SEGS) -> float:
    """Maximum inward deviation of the arc approximation from a true circle."""
    return radius * (1.0 - math.cos(math.pi / (4.0 * quad_segs)))


def buffer(g, radius: float, quad_segs: int = BUFFER_QUAD_SEGS) -> Polygon:
    """Minkowski dilation of a point or polygon by ``radius`` meters.

    Point buffers are regular 4*quad_segs-gons built directly; polygon
    buffers delegate the offset construction to shapely with the same
    arc resolution.
    """
    if radius <= 0:
        raise GeometryError("buffer radius must be positive")
    n = 4 * quad_segs
    if isinstance(g, Point):
        ang = 2.0 * math.pi * np.arange(n) / n
        ring = np.stack([g.x + radius * np.cos(ang), g.y + radius * np.sin(ang)], axis=1)
        return Polygon(ring, validate=False)
    if isinstance(g, Polygon):
        import shapely.geometry as sgeom

        shp = sgeom.Polygon(g.exterior, [h for h in g.holes])
        out = shp.buffer(radius, quad_segs=quad_segs)
        return from_shapely(out)
    raise GeometryError(f"cannot buffer {type(g).__name__}")


def to_shapely(p: Polygon):
    import shapely.geometry as sgeom

    return sgeom.Polygon(p.exterior, [h for h in p.holes])


def from_shapely(shp) -> Polygon:
    import shapely.geometry as sgeom

    if isinstance(shp, sgeom.MultiPolygon):
        shp = max(shp.geoms, key=lambda g: g.area)
    return Polygon(
        np.asarray(shp.exterior.coords)[:-1],
        [np.asarray(r.coords)[:-1] for r in shp.interiors],
        validate=False,
    )


# ---------------------------------------------------------------------------
# Alpha shape (concave hull)
# ---------------------------------------------------------------------------

def _circumradius(a, b, c) -> float:
    la = math.dist(b, c)
    lb = math.dist(a, c)
    lc = math.dist(a, b)
    s = 0.5 * (la + lb + lc)
    area_sq = s * (s - la) * (s - lb) * (s - lc)
    if area_sq <= 0:
        return math.inf
    return la * lb * lc / (4.0 * math.sqrt(area_sq))


def alpha_shape(points: Sequence[Point] | np.ndarray, alpha: float) -> Polygon:
    """Concave hull of a point set by Delaunay triangle peeling.

    Starting from the Delaunay triangulation (whose union is the convex
    hull), boundary triangles with circumradius >= 1/alpha are peeled off
    outside-in, but only while every input point stays on or inside the
    boundary.  As alpha -> 0 nothing is peeled and the convex hull is
    returned.
    """
    from scipy.spatial import Delaunay, QhullError

    if alpha <= 0:
        raise GeometryError("alpha must be positive")
    pts = np.asarray(
        [(p.x, p.y) if isinstance(p, Point) else (p[0], p[1]) for p in points],
        dtype=float,
    )
    if len(pts) < 3:
        raise GeometryError("alpha shape needs >= 3 points")
    try:
        tri = Delaunay(pts)
    except QhullError as exc:
        raise GeometryError("alpha shape input is degenerate (collinear points?)") from exc
    if tri.simplices.size == 0:
        raise GeometryError("alpha shape input is degenerate (collinear points?)")

    simplices = [tuple(s) for s in tri.simplices]
    alive = [True] * len(simplices)
    radii = [_circumradius(pts[s[0]], pts[s[1]], pts[s[2]]) for s in simplices]
    threshold = 1.0 / alpha

    def edges_of(s):
        a, b, c = s
        return [tuple(sorted((a, b))), tuple(sorted((b, c))), tuple(sorted((a, c)))]

    edge_owners: dict[tuple[int, int], list[int]] = {}
    for ti, s in enumerate(simplices):
        for e in edges_of(s):
            edge_owners.setdefault(e, []).append(ti)

    def boundary_edges() -> dict[tuple[int, int], int]:
        out = {}
        for e, owners in edge_owners.items():
            live = [t for t in owners if alive[t]]
            if len(live) == 1:
                out[e] = live[0]
        return out

    while True:
        bnd = boundary_edges()
        bnd_vertices = set()
        for (u, v) in bnd:
            bnd_vertices.add(u)
            bnd_vertices.add(v)
        # candidate boundary triangles, largest circumradius first
        cands = sorted(
            {t for t in bnd.values() if radii[t] >= threshold},
            key=lambda t: (-radii[t], t),
        )
        peeled = False
        for t in cands:
            tri_edges = edges_of(simplices[t])
            own_bnd = [e for e in tri_edges if e in bnd and bnd[e] == t]
            if len(own_bnd) != 1:
                continue  # avoid splitting the shape or orphaning points
            opposite = (set(simplices[t]) - set(own_bnd[0])).pop()
            if opposite in bnd_vertices:
                continue  # peeling would pinch the boundary
            alive[t] = False
            peeled = True
            break
        if not peeled:
            break

    # Assemble the boundary into a ring.
    bnd = boundary_edges()
    adj: dict[int, list[int]] = {}
    for (u, v) in bnd:
        adj.setdefault(u, []).append(v)
        adj.setdefault(v, []).append(u)
    start = min(adj)
    ring_idx = [start]
    prev, cur = -1, start
    while True:
        nxts = [w for w in adj[cur] if w != prev]
        nxt = nxts[0] if nxts else prev
        if nxt == start:
            break
        ring_idx.append(nxt)
        prev, cur = cur, nxt
        if len(ring_idx) > len(bnd) + 1:
            raise GeometryError("alpha shape boundary failed to close")
    return Polygon(pts[ring_idx])


# ---------------------------------------------------------------------------
# View side selection (SVI matching rule)
# ---------------------------------------------------------------------------

LEFT = "Left"
RIGHT = "Right"


def select_view_side(heading_deg: float, svi_point: Point, observation_point: Point) -> Optional[str]:
    """Which side of a camera heading an observation point falls on.

    ``heading_deg`` is degrees clockwise from north.  The signed angle from
    the heading vector to the svi->observation vector, normalized to
    (-180, 180], selects Right for [45, 135], Left for [-135, -45], and
    None otherwise (including coincident points).
    """
    if not 0.0 <= heading_deg < 360.0:
        raise GeometryError("heading must be in [0, 360)")
    dx = observation_point.x - svi_point.x
    dy = observation_point.y - svi_point.y
    if dx == 0.0 and dy == 0.0:
        return None
    # bearing of the observation vector, degrees clockwise from north
    bearing = math.degrees(math.atan2(dx, dy)) % 360.0
    delta = (bearing - heading_deg + 180.0) % 360.0 - 180.0
    if delta == -180.0:
        delta = 180.0
    if 45.0 <= delta <= 135.0:
        return RIGHT
    if -135.0 <= delta <= -45.0:
        return LEFT
    return None


# ---------------------------------------------------------------------------
# Spatial index
# ---------------------------------------------------------------------------

class SpatialIndex:
    """Immutable STR-packed bounding-box tree.

    Build once from (id, box) entries; queries return the sorted, unique
    ids of entries whose box intersects the query box.
    """

    _LEAF_SIZE = 16

    def __init__(self, entries: Iterable[tuple[object, tuple[float, float, float, float]]]):
        items = list(entries)
        self._ids = [i for i, _ in items]
        self._boxes = np.asarray([b for _, b in items], dtype=float).reshape(-1, 4)
        self._nodes: list[tuple[np.ndarray, np.ndarray]] = []
        if len(items) == 0:
            return
        # Sort-Tile-Recursive packing: sort by x-center into vertical slices,
        # then by y-center within each slice.
        cx = (self._boxes[:, 0] + self._boxes[:, 2]) / 2
        cy = (self._boxes[:, 1] + self._boxes[:, 3]) / 2
        n = len(items)
        order = np.lexsort((cy, cx))
        slice_count = max(1, math.ceil(math.sqrt(n / self._LEAF_SIZE)))
        per_slice = math.ceil(n / slice_count)
        leaf_members: list[np.ndarray] = []
        for s in range(0, n, per_slice):
            sl = order[s : s + per_slice]
            sl = sl[np.argsort(cy[sl], kind="stable")]
            for k in range(0, len(sl), self._LEAF_SIZE):
                leaf_members.append(sl[k : k + self._LEAF_SIZE])
        for members in leaf_members:
            bb = self._boxes[members]
            mbr = np.array([bb[:, 0].min(), bb[:, 1].min(), bb[:, 2].max(), bb[:, 3].max()])
            self._nodes.append((mbr, members))

    def query(self, box: tuple[float, float, float, float]) -> list:
        """Ids of all entries whose bounding box intersects ``box``."""
        x0, y0, x1, y1 = box
        hits: set = set()
        for mbr, members in self._nodes:
            if mbr[0] > x1 or mbr[2] < x0 or mbr[1] > y1 or mbr[3] < y0:
                continue
            bb = self._boxes[members]
            ok = (bb[:, 0] <= x1) & (bb[:, 2] >= x0) & (bb[:, 1] <= y1) & (bb[:, 3] >= y0)
            for m in members[ok]:
                hits.add(self._ids[m])
        try:
            return sorted(hits)
        except TypeError:
            return sorted(hits, key=repr)

    def __len__(self) -> int:
        return len(self._ids)


def index_build(items: Iterable[tuple[object, tuple[float, float, float, float]]]) -> SpatialIndex:
    return SpatialIndex(items)


def index_query(index: SpatialIndex, box: tuple[float, float, float, float]) -> list:
    return index.query(box)


# ---------------------------------------------------------------------------
# Local projection (WGS84 <-> local azimuthal equidistant)
# ---------------------------------------------------------------------------

EARTH_RADIUS_M = 6371008.8


def lonlat_to_local(lon, lat, origin_lon: float, origin_lat: float):
    """Project WGS84 degrees to meters in an azimuthal equidistant frame
    centered on (origin_lon, origin_lat).  Accepts scalars or arrays."""
    lam = np.radians(np.asarray(lon, dtype=float))
    phi = np.radians(np.asarray(lat, dtype=float))
    lam0, phi0 = math.radians(origin_lon), math.radians(origin_lat)
    cos_c = np.sin(phi0) * np.sin(phi) + np.cos(phi0) * np.cos(phi) * np.cos(lam - lam0)
    cos_c = np.clip(cos_c, -1.0, 1.0)
    c = np.arccos(cos_c)
    with np.errstate(invalid="ignore", divide="ignore"):
        k = np.where(c > 0, c / np.sin(c), 1.0)
    x = EARTH_RADIUS_M * k * np.cos(phi) * np.sin(lam - lam0)
    y = EARTH_RADIUS_M * k * (np.cos(phi0) * np.sin(phi) - np.sin(phi0) * np.cos(phi) * np.cos(lam - lam0))
    return x, y


def local_to_lonlat(x, y, origin_lon: float, origin_lat: float):
    """Inverse of :func:`lonlat_to_local`."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    lam0, phi0 = math.radians(origin_lon), math.radians(origin_lat)
    rho = np.hypot(x, y)
    c = rho / EARTH_RADIUS_M
    sin_c, cos_c = np.sin(c), np.cos(c)
    safe_rho = np.where(rho > 0, rho, 1.0)
    phi = np.arcsin(np.clip(cos_c * math.sin(phi0) + y * sin_c * math.cos(phi0) / safe_rho, -1.0, 1.0))
    lam = lam0 + np.arctan2(x * sin_c, safe_rho * math.cos(phi0) * cos_c - y * math.sin(phi0) * sin_c)
    return np.degrees(lam), np.degrees(phi)
