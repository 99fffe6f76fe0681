"""Tile-wise rooftop mask vectorization and segmentation scoring.

Binary masks come in as ESRI ASCII grids, one per tile; each 4-connected
foreground component becomes a polygon traced along pixel edges (holes
preserved), polygons are simplified, and buildings split across tile
boundaries are re-joined by the seam repair pass.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Optional, Protocol

import numpy as np
from scipy import ndimage

from .geom import Point, Polygon, centroid, simplify_ring

FOUR_CONNECTED = np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]], dtype=int)


# ---------------------------------------------------------------------------
# Grids and masks
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TileGrid:
    """Uniform tiling of a map extent. ``origin`` is the lower-left corner;
    tile (row, col) counts up and to the right from there."""

    origin: Point
    tile_size_px: int
    pixel_size: float
    rows: int
    cols: int

    @property
    def tile_size_m(self) -> float:
        return self.tile_size_px * self.pixel_size

    def tile_bounds(self, row: int, col: int) -> tuple[float, float, float, float]:
        t = self.tile_size_m
        x0 = self.origin.x + col * t
        y0 = self.origin.y + row * t
        return (x0, y0, x0 + t, y0 + t)

    def tile_of(self, x: float, y: float) -> tuple[int, int]:
        t = self.tile_size_m
        col = min(self.cols - 1, max(0, int((x - self.origin.x) / t)))
        row = min(self.rows - 1, max(0, int((y - self.origin.y) / t)))
        return row, col


def tile_extent(extent: tuple[float, float, float, float], tile_size_px: int = 500,
                pixel_size: float = 1.0) -> TileGrid:
    """Minimal tile grid covering ``extent`` = (x0, y0, x1, y1)."""
    x0, y0, x1, y1 = extent
    if x1 <= x0 or y1 <= y0:
        raise ValueError("empty extent")
    if tile_size_px <= 0 or pixel_size <= 0:
        raise ValueError("tile_size_px and pixel_size must be positive")
    t = tile_size_px * pixel_size
    cols = math.ceil((x1 - x0) / t)
    rows = math.ceil((y1 - y0) / t)
    return TileGrid(Point(x0, y0), tile_size_px, pixel_size, rows, cols)


@dataclass(eq=False)
class BinaryMask:
    """Row-major 0/1 grid with an affine georeference.

    Row 0 is the top of the raster; pixel (r, c) covers
    x in [xll + c*cs, xll + (c+1)*cs], y in [yll + (H-1-r)*cs, yll + (H-r)*cs].
    """

    grid: np.ndarray
    xll: float
    yll: float
    cellsize: float

    def __post_init__(self):
        g = np.asarray(self.grid)
        if g.ndim != 2:
            raise ValueError("mask grid must be 2D")
        vals = np.unique(g)
        if not np.isin(vals, (0, 1)).all():
            raise ValueError("mask values must be 0 or 1")
        self.grid = g.astype(np.uint8)

    @property
    def height(self) -> int:
        return self.grid.shape[0]

    @property
    def width(self) -> int:
        return self.grid.shape[1]

    def foreground_count(self) -> int:
        return int(self.grid.sum())


def write_ascii_grid(path, values: np.ndarray, xll: float, yll: float,
                     cellsize: float, nodata: int = -9999) -> None:
    values = np.asarray(values)
    with open(path, "w") as f:
        f.write(f"ncols {values.shape[1]}\n")
        f.write(f"nrows {values.shape[0]}\n")
        f.write(f"xllcorner {xll!r}\n")
        f.write(f"yllcorner {yll!r}\n")
        f.write(f"cellsize {cellsize!r}\n")
        f.write(f"NODATA_value {nodata}\n")
        for row in values:
            f.write(" ".join(str(int(v)) if float(v).is_integer() else repr(float(v)) for v in row))
            f.write("\n")


def read_ascii_grid(path) -> tuple[np.ndarray, float, float, float, float]:
    """Read an ESRI ASCII grid; returns (values, xll, yll, cellsize, nodata)."""
    header: dict[str, float] = {}
    header_keys = ("ncols", "nrows", "xllcorner", "yllcorner", "cellsize", "nodata_value")
    with open(path) as f:
        body_start = None
        while True:
            pos = f.tell()
            line = f.readline()
            if not line:
                break
            parts = line.split()
            if parts and parts[0].lower() in header_keys and len(parts) == 2:
                header[parts[0].lower()] = float(parts[1])
            elif parts:
                body_start = pos
                break
        if body_start is None:
            raise ValueError(f"ASCII grid has no data rows: {path}")
        f.seek(body_start)
        values = np.loadtxt(f, dtype=float, ndmin=2)
    for req in ("ncols", "nrows", "xllcorner", "yllcorner", "cellsize"):
        if req not in header:
            raise ValueError(f"ASCII grid missing header field {req!r}: {path}")
    if values.shape != (int(header["nrows"]), int(header["ncols"])):
        raise ValueError(
            f"ASCII grid body {values.shape} does not match header "
            f"({int(header['nrows'])}, {int(header['ncols'])}): {path}"
        )
    return (values, header["xllcorner"], header["yllcorner"], header["cellsize"],
            header.get("nodata_value", -9999.0))


def load_mask(path) -> BinaryMask:
    values, xll, yll, cs, nodata = read_ascii_grid(path)
    grid = np.where(values == nodata, 0, values)
    return BinaryMask((grid > 0.5).astype(np.uint8), xll, yll, cs)


def save_mask(path, mask: BinaryMask) -> None:
    write_ascii_grid(path, mask.grid, mask.xll, mask.yll, mask.cellsize)


class Segmenter(Protocol):
    """Anything that produces the binary rooftop mask for a tile.

    Stands in for the neural segmentation model; this package only ships
    the precomputed-mask reader below.
    """

    def run(self, row: int, col: int) -> BinaryMask: ...


class MaskFileSegmenter:
    """Reads precomputed per-tile masks named by a row/col template."""

    def __init__(self, directory, template: str = "tile_{row}_{col}.asc"):
        self.directory = directory
        self.template = template

    def run(self, row: int, col: int) -> BinaryMask:
        import os

        return load_mask(os.path.join(self.directory, self.template.format(row=row, col=col)))


# ---------------------------------------------------------------------------
# Mask -> polygons
# ---------------------------------------------------------------------------

def _trace_rings(comp: np.ndarray) -> list[np.ndarray]:
    """Rings of a component as integer vertex arrays with collinear runs merged."""
    h, w = comp.shape
    padded = np.zeros((h + 2, w + 2), dtype=bool)
    padded[1:-1, 1:-1] = comp
    inner = padded[1:-1, 1:-1]
    up = padded[:-2, 1:-1]
    down = padded[2:, 1:-1]
    left = padded[1:-1, :-2]
    right = padded[1:-1, 2:]

    edges: dict[tuple[int, int], dict[tuple[int, int], tuple[int, int]]] = {}

    def add(a, d, b):
        edges.setdefault(a, {})[d] = b

    for r, c in zip(*np.nonzero(inner & ~up)):
        add((int(c), int(r)), (1, 0), (int(c) + 1, int(r)))
    for r, c in zip(*np.nonzero(inner & ~right)):
        add((int(c) + 1, int(r)), (0, 1), (int(c) + 1, int(r) + 1))
    for r, c in zip(*np.nonzero(inner & ~down)):
        add((int(c) + 1, int(r) + 1), (-1, 0), (int(c), int(r) + 1))
    for r, c in zip(*np.nonzero(inner & ~left)):
        add((int(c), int(r) + 1), (0, -1), (int(c), int(r)))

    rings: list[np.ndarray] = []
    starts = sorted(edges)
    for start in starts:
        while edges.get(start):
            d0 = sorted(edges[start])[0]
            verts: list[tuple[int, int]] = [start]
            dirs: list[tuple[int, int]] = []
            cur = edges[start].pop(d0)
            if not edges[start]:
                del edges[start]
            prev_d = d0
            dirs.append(d0)
            while cur != start:
                out = edges[cur]
                if len(out) == 1:
                    nd = next(iter(out))
                else:
                    rt = (-prev_d[1], prev_d[0])  # right turn in screen coords
                    nd = rt if rt in out else sorted(out)[0]
                nxt = out.pop(nd)
                if not out:
                    del edges[cur]
                if nd == prev_d:
                    verts.append(cur)  # provisional; merged below
                else:
                    verts.append(cur)
                dirs.append(nd)
                prev_d = nd
                cur = nxt
            # merge collinear runs (incl. across the closure at verts[0])
            n = len(verts)
            keep = [i for i in range(n) if dirs[i] != dirs[i - 1]]
            ring = [verts[i] for i in keep]
            if len(ring) >= 3:
                rings.append(np.asarray(ring, dtype=float))
    return rings


def mask_to_polygons(mask: BinaryMask, simplify_tolerance: Optional[float] = None) -> list[Polygon]:
    """One polygon per 4-connected foreground component.

    Boundaries trace pixel edges and preserve holes; rings are then
    Douglas-Peucker simplified (default tolerance 0.5 * cellsize, 0 keeps
    the exact pixel outline).
    """
    if simplify_tolerance is None:
        simplify_tolerance = 0.5 * mask.cellsize
    labels, n = ndimage.label(mask.grid, structure=FOUR_CONNECTED)
    polys: list[Polygon] = []
    if n == 0:
        return polys
    slices = ndimage.find_objects(labels)
    h = mask.height
    cs = mask.cellsize
    for comp_id, sl in enumerate(slices, start=1):
        sub = labels[sl] == comp_id
        r_off, c_off = sl[0].start, sl[1].start
        rings_px = _trace_rings(sub)
        rings_geo = []
        for ring in rings_px:
            gx = mask.xll + (ring[:, 0] + c_off) * cs
            gy = mask.yll + (h - (ring[:, 1] + r_off)) * cs
            rings_geo.append(np.stack([gx, gy], axis=1))
        areas = [abs(0.5 * np.sum(r[:, 0] * np.roll(r[:, 1], -1) - np.roll(r[:, 0], -1) * r[:, 1]))
                 for r in rings_geo]
        ext_i = int(np.argmax(areas))
        exterior = rings_geo[ext_i]
        holes = [r for i, r in enumerate(rings_geo) if i != ext_i]
        if simplify_tolerance > 0:
            exterior = simplify_ring(exterior, simplify_tolerance)
            holes = [simplify_ring(hh, simplify_tolerance) for hh in holes]
        polys.append(Polygon(exterior, holes, validate=False))
    return polys


def rasterize_polygons(polys: Iterable[Polygon], xll: float, yll: float,
                       cellsize: float, width: int, height: int) -> BinaryMask:
    """Even-odd rasterization of polygons at pixel centers."""
    grid = np.zeros((height, width), dtype=np.uint8)
    for poly in polys:
        edges = []
        for ring in poly.rings():
            a = ring
            b = np.roll(ring, -1, axis=0)
            edges.append(np.concatenate([a, b], axis=1))
        e = np.concatenate(edges, axis=0)  # columns: x1 y1 x2 y2
        x0b, y0b, x1b, y1b = poly.bounds()
        r_min = max(0, int(math.floor((yll + height * cellsize - y1b) / cellsize - 0.5)))
        r_max = min(height - 1, int(math.ceil((yll + height * cellsize - y0b) / cellsize + 0.5)))
        for r in range(r_min, r_max + 1):
            yc = yll + (height - r - 0.5) * cellsize
            y1, y2 = e[:, 1], e[:, 3]
            crossing = (y1 > yc) != (y2 > yc)
            if not crossing.any():
                continue
            x1, x2 = e[crossing, 0], e[crossing, 2]
            ey1, ey2 = y1[crossing], y2[crossing]
            xs = np.sort(x1 + (yc - ey1) * (x2 - x1) / (ey2 - ey1))
            for k in range(0, len(xs) - 1, 2):
                c0 = math.ceil((xs[k] - xll) / cellsize - 0.5)
                c1 = math.ceil((xs[k + 1] - xll) / cellsize - 0.5)
                if c1 > c0:
                    grid[r, max(0, c0):min(width, c1)] = 1
    return BinaryMask(grid, xll, yll, cellsize)


# ---------------------------------------------------------------------------
# Seam repair
# ---------------------------------------------------------------------------

def _strip_intervals(poly: Polygon, axis: int, line: float, half_width: float) -> list[tuple[float, float]]:
    """Projections (onto the seam axis) of exterior-boundary portions lying
    within ``half_width`` of the seam line. ``axis`` 0 = vertical seam
    (x == line), 1 = horizontal seam (y == line)."""
    ring = poly.exterior
    a = ring
    b = np.roll(ring, -1, axis=0)
    lo, hi = line - half_width, line + half_width
    intervals: list[tuple[float, float]] = []
    for (x1, y1), (x2, y2) in zip(a, b):
        c1, c2 = (x1, x2) if axis == 0 else (y1, y2)
        p1, p2 = (y1, y2) if axis == 0 else (x1, x2)
        if c1 == c2:
            if lo <= c1 <= hi:
                t0, t1 = 0.0, 1.0
            else:
                continue
        else:
            ta = (lo - c1) / (c2 - c1)
            tb = (hi - c1) / (c2 - c1)
            t0, t1 = max(0.0, min(ta, tb)), min(1.0, max(ta, tb))
            if t0 >= t1:
                continue
        q0 = p1 + t0 * (p2 - p1)
        q1 = p1 + t1 * (p2 - p1)
        if q0 != q1:
            intervals.append((min(q0, q1), max(q0, q1)))
    return _merge_intervals(intervals)


def _merge_intervals(intervals: list[tuple[float, float]]) -> list[tuple[float, float]]:
    if not intervals:
        return []
    intervals = sorted(intervals)
    out = [intervals[0]]
    for s, e in intervals[1:]:
        if s <= out[-1][1]:
            out[-1] = (out[-1][0], max(out[-1][1], e))
        else:
            out.append((s, e))
    return out


def _interval_overlap(a: list[tuple[float, float]], b: list[tuple[float, float]]) -> float:
    total = 0.0
    for s1, e1 in a:
        for s2, e2 in b:
            total += max(0.0, min(e1, e2) - max(s1, s2))
    return total


def _interval_length(a: list[tuple[float, float]]) -> float:
    return sum(e - s for s, e in a)


def repair_seams(polys: list[Polygon], grid: TileGrid, seam_buffer: float = 2.0,
                 edge_similarity: float = 0.5) -> list[Polygon]:
    """Union buildings split across tile boundaries.

    A pair of polygons from different tiles is merged when their exterior
    boundary portions inside the seam strip, projected onto the seam axis,
    overlap by at least ``edge_similarity`` of the shorter portion.
    """
    if seam_buffer <= 0:
        raise ValueError("seam_buffer must be positive")
    if not (0 < edge_similarity <= 1):
        raise ValueError("edge_similarity must be in (0, 1]")
    n = len(polys)
    if n < 2:
        return list(polys)

    tiles = [grid.tile_of(centroid(p).x, centroid(p).y) for p in polys]
    bounds = [p.bounds() for p in polys]
    parent = list(range(n))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    def union(i, j):
        ri, rj = find(i), find(j)
        if ri != rj:
            parent[max(ri, rj)] = min(ri, rj)

    seams = [(0, grid.origin.x + j * grid.tile_size_m) for j in range(1, grid.cols)]
    seams += [(1, grid.origin.y + i * grid.tile_size_m) for i in range(1, grid.rows)]

    for axis, line in seams:
        near = []
        for i, (x0, y0, x1, y1) in enumerate(bounds):
            lo = x0 if axis == 0 else y0
            hi = x1 if axis == 0 else y1
            if lo <= line + seam_buffer and hi >= line - seam_buffer:
                near.append(i)
        cache: dict[int, list[tuple[float, float]]] = {}
        for ai in range(len(near)):
            for bi in range(ai + 1, len(near)):
                i, j = near[ai], near[bi]
                if tiles[i] == tiles[j]:
                    continue
                if i not in cache:
                    cache[i] = _strip_intervals(polys[i], axis, line, seam_buffer)
                if j not in cache:
                    cache[j] = _strip_intervals(polys[j], axis, line, seam_buffer)
                li, lj = _interval_length(cache[i]), _interval_length(cache[j])
                if li <= 0 or lj <= 0:
                    continue
                overlap = _interval_overlap(cache[i], cache[j])
                if overlap / min(li, lj) >= edge_similarity:
                    union(i, j)

    groups: dict[int, list[int]] = {}
    for i in range(n):
        groups.setdefault(find(i), []).append(i)

    from shapely.ops import unary_union

    from .geom import from_shapely, to_shapely

    out: list[Polygon] = []
    for i in range(n):
        root = find(i)
        members = groups[root]
        if len(members) == 1:
            out.append(polys[i])
        elif i == root:
            merged = unary_union([to_shapely(polys[m]) for m in members])
            if merged.geom_type == "MultiPolygon":
                # bridge sub-buffer gaps left by simplification
                delta = seam_buffer / 2.0
                merged = merged.buffer(delta, join_style=2).buffer(-delta, join_style=2)
            out.append(from_shapely(merged))
    return out


# ---------------------------------------------------------------------------
# Segmentation metrics
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SegConfusion:
    """Pixel counts with 'building' as the positive class."""

    tp: int
    fp: int
    fn: int
    tn: int

    def __post_init__(self):
        if min(self.tp, self.fp, self.fn, self.tn) < 0:
            raise ValueError("confusion counts must be non-negative")

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn


def seg_confusion(pred: BinaryMask, truth: BinaryMask) -> SegConfusion:
    if pred.grid.shape != truth.grid.shape:
        raise ValueError(f"mask dimensions differ: {pred.grid.shape} vs {truth.grid.shape}")
    p = pred.grid.astype(bool)
    t = truth.grid.astype(bool)
    return SegConfusion(
        tp=int(np.count_nonzero(p & t)),
        fp=int(np.count_nonzero(p & ~t)),
        fn=int(np.count_nonzero(~p & t)),
        tn=int(np.count_nonzero(~p & ~t)),
    )


@dataclass(frozen=True)
class SegMetrics:
    precision: float
    recall: float
    f1: float
    accuracy: float
    iou_building: float
    iou_background: float
    miou: float
    zero_denominator_flags: tuple[str, ...] = ()


def _ratio(num: float, den: float, name: str, flags: list[str]) -> float:
    if den == 0:
        flags.append(name)
        return 0.0
    return num / den


def seg_metrics(c: SegConfusion) -> SegMetrics:
    """Precision/recall/F1/accuracy plus per-class IoU and their mean.

    Metrics with a zero denominator come back as 0 and are named in
    ``zero_denominator_flags`` so reports stay finite.
    """
    flags: list[str] = []
    precision = _ratio(c.tp, c.tp + c.fp, "precision", flags)
    recall = _ratio(c.tp, c.tp + c.fn, "recall", flags)
    f1 = _ratio(2 * precision * recall, precision + recall, "f1", flags)
    accuracy = _ratio(c.tp + c.tn, c.total, "accuracy", flags)
    iou_b = _ratio(c.tp, c.tp + c.fp + c.fn, "iou_building", flags)
    iou_bg = _ratio(c.tn, c.tn + c.fn + c.fp, "iou_background", flags)
    miou = (iou_b + iou_bg) / 2.0
    return SegMetrics(precision, recall, f1, accuracy, iou_b, iou_bg, miou, tuple(flags))
