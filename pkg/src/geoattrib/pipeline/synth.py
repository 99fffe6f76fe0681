"""Seeded synthetic city generation.

Produces a block-grid city with ground-truth multi-attribute buildings
plus every context layer the pipeline ingests: roads, blocks, AOI plots,
POIs, admin tier polygons, street-view detections, an annual impervious
stack, rooftop truth masks, and a noisy "segmenter output" mask set.
Everything derives from one seed; identical seeds give identical bytes.
"""
from __future__ import annotations

import math
import os
from dataclasses import dataclass, field

import numpy as np

from ..features import CityTier, POI_CATEGORIES
from ..geom import Point, Polygon, Polyline, centroid, polygon_area
from ..indicative import (AFTER_LAST_YEAR, DISORDER_TYPES, FunctionLabel,
                          GAIA_FIRST_YEAR, GAIA_LAST_YEAR, SviObservation,
                          save_svi_csv)
from ..vectorize import (BinaryMask, rasterize_polygons, save_mask, tile_extent)
from .config import PipelineConfig
from .vectorio import save_vector, write_text_atomic


@dataclass(frozen=True)
class SynthParams:
    n_buildings: int = 2000
    extent: float = 2800.0
    block_pitch: float = 100.0
    road_halfwidth: float = 6.0
    plot_fraction: float = 0.85     # blocks that get a labeled AOI plot
    label_fraction: float = 0.7     # buildings with known floor counts
    svi_spacing: float = 60.0
    mask_flip_rate: float = 0.0002
    pixel_size: float = 1.0
    tile_size_px: int = 500
    floor_height: float = 3.0

    @classmethod
    def from_config(cls, cfg: PipelineConfig) -> "SynthParams":
        return cls(
            n_buildings=cfg.synth_n_buildings,
            extent=cfg.synth_extent,
            block_pitch=cfg.synth_block_pitch,
            plot_fraction=cfg.synth_plot_fraction,
            label_fraction=cfg.synth_label_fraction,
            svi_spacing=cfg.synth_svi_spacing,
            mask_flip_rate=cfg.synth_mask_flip_rate,
            pixel_size=cfg.pixel_size,
            tile_size_px=cfg.tile_size_px,
            floor_height=cfg.floor_height,
        )


@dataclass(eq=False)
class TruthBuilding:
    id: str
    polygon: Polygon
    tier: CityTier
    floors: int
    height: float
    function: FunctionLabel
    age: object  # int year or AF2018
    labeled: bool
    block_key: tuple[int, int] = (0, 0)


@dataclass(eq=False)
class SyntheticCity:
    params: SynthParams
    seed: int
    buildings: list[TruthBuilding] = field(default_factory=list)
    roads: list[Polyline] = field(default_factory=list)
    blocks: list[tuple[str, Polygon]] = field(default_factory=list)
    plots: list[tuple[str, Polygon, str, str]] = field(default_factory=list)  # id, poly, primary, secondary
    admin: list[tuple[CityTier, Polygon]] = field(default_factory=list)
    pois: dict[str, np.ndarray] = field(default_factory=dict)
    svi: list[SviObservation] = field(default_factory=list)
    block_disorder: dict[tuple[int, int], np.ndarray] = field(default_factory=dict)
    impervious_years: tuple[int, ...] = ()
    impervious_grid: np.ndarray | None = None  # per-cell first impervious year
    impervious_cell: float = 10.0


_PLOT_TYPES = {
    FunctionLabel.Residential: ("Real Estate", "Residential Areas"),
    FunctionLabel.Commercial: ("Shopping", "Shopping Centers"),
    FunctionLabel.PublicService: ("Education and Training", "Universities"),
    FunctionLabel.Industry: ("Corporations and Enterprises", "Factories and Mines"),
    FunctionLabel.Office: ("Real Estate", "Office Buildings"),
}

# characteristic POI categories per block function
_FUNCTION_POIS = {
    FunctionLabel.Residential: ("life_services", "restaurants", "education_training"),
    FunctionLabel.Commercial: ("shopping", "restaurants", "finance", "hotels"),
    FunctionLabel.PublicService: ("healthcare", "education_training", "culture_media",
                                  "sports_fitness"),
    FunctionLabel.Industry: ("corporations", "automotive_services", "transportation"),
    FunctionLabel.Office: ("corporations", "finance", "government", "life_services"),
}

# tier-dependent height model: floors = base + a*log(area/150) + b*compactness
#                                     + c*(1 - dist_center/extent) + noise
_TIER_HEIGHT = {
    CityTier.Municipality: (12.0, 6.0, -4.0, 14.0, 3.0),
    CityTier.ProvincialCapital: (8.0, 4.5, -2.0, 8.0, 2.2),
    CityTier.PrefectureLevel: (5.0, 3.0, 2.0, 3.0, 1.5),
    CityTier.CountyLevel: (3.0, 1.5, 3.0, -2.0, 1.0),
    CityTier.NonUrban: (1.5, 0.5, 1.0, -0.5, 0.5),
}

_FUNCTION_MIX = (
    (FunctionLabel.Residential, 0.52),
    (FunctionLabel.Commercial, 0.12),
    (FunctionLabel.PublicService, 0.14),
    (FunctionLabel.Industry, 0.08),
    (FunctionLabel.Office, 0.14),
)


def _tier_rings(extent: float) -> list[tuple[CityTier, Polygon]]:
    def box(frac: float) -> Polygon:
        half = extent * frac / 2.0
        cx = cy = extent / 2.0
        return Polygon([(cx - half, cy - half), (cx + half, cy - half),
                        (cx + half, cy + half), (cx - half, cy + half)])

    return [
        (CityTier.Municipality, box(0.25)),
        (CityTier.ProvincialCapital, box(0.45)),
        (CityTier.PrefectureLevel, box(0.65)),
        (CityTier.CountyLevel, box(0.85)),
    ]


def _tier_of(x: float, y: float, extent: float) -> CityTier:
    cx = cy = extent / 2.0
    half = max(abs(x - cx), abs(y - cy)) / extent * 2.0
    if half <= 0.25:
        return CityTier.Municipality
    if half <= 0.45:
        return CityTier.ProvincialCapital
    if half <= 0.65:
        return CityTier.PrefectureLevel
    if half <= 0.85:
        return CityTier.CountyLevel
    return CityTier.NonUrban


def synth_city(seed: int, params: SynthParams) -> SyntheticCity:
    rng = np.random.default_rng(seed)
    city = SyntheticCity(params, seed)
    extent = params.extent
    pitch = params.block_pitch
    n_cells = int(extent // pitch)
    half_road = params.road_halfwidth

    # roads: full grid lines
    for i in range(n_cells + 1):
        c = i * pitch
        if c > extent:
            break
        city.roads.append(Polyline([(0.0, c), (extent, c)]))
        city.roads.append(Polyline([(c, 0.0), (c, extent)]))

    # blocks between roads
    block_cells = []
    for bi in range(n_cells):
        for bj in range(n_cells):
            x0, y0 = bj * pitch + half_road, bi * pitch + half_road
            x1, y1 = (bj + 1) * pitch - half_road, (bi + 1) * pitch - half_road
            poly = Polygon([(x0, y0), (x1, y0), (x1, y1), (x0, y1)])
            city.blocks.append((f"blk_{bi}_{bj}", poly))
            block_cells.append((bi, bj, x0, y0, x1, y1))

    # per-block function and AOI plots
    block_fn: dict[tuple[int, int], FunctionLabel] = {}
    labels, weights = zip(*_FUNCTION_MIX)
    for (bi, bj, x0, y0, x1, y1) in block_cells:
        cx, cy = (x0 + x1) / 2.0, (y0 + y1) / 2.0
        tier = _tier_of(cx, cy, extent)
        w = np.asarray(weights, dtype=float)
        # commercial/office concentrate downtown, industry at the edge
        if tier in (CityTier.Municipality, CityTier.ProvincialCapital):
            w = w * np.asarray([0.7, 1.8, 1.0, 0.3, 1.9])
        elif tier is CityTier.NonUrban:
            w = w * np.asarray([1.4, 0.5, 0.8, 2.2, 0.4])
        w = w / w.sum()
        fn = labels[int(rng.choice(len(labels), p=w))]
        block_fn[(bi, bj)] = fn
        if rng.random() < params.plot_fraction:
            primary, secondary = _PLOT_TYPES[fn]
            plot_poly = Polygon([(x0, y0), (x1, y0), (x1, y1), (x0, y1)])
            city.plots.append((f"plot_{bi}_{bj}", plot_poly, primary, secondary))

    city.admin = _tier_rings(extent)

    # buildings on a jittered sub-grid inside each block
    sub = 2  # 2x2 building slots per block
    slot = (pitch - 2 * half_road) / sub
    order = rng.permutation(len(block_cells))
    count = 0
    center = extent / 2.0
    max_dist = math.hypot(center, center)
    for oi in order:
        if count >= params.n_buildings:
            break
        bi, bj, x0, y0, x1, y1 = block_cells[oi]
        fn = block_fn[(bi, bj)]
        for si in range(sub):
            for sj in range(sub):
                if count >= params.n_buildings:
                    break
                if rng.random() < 0.25:
                    continue  # leave some slots empty
                sx0 = x0 + sj * slot
                sy0 = y0 + si * slot
                w = rng.uniform(0.35, 0.8) * slot
                l = rng.uniform(0.35, 0.8) * slot
                cx = sx0 + slot / 2 + rng.uniform(-0.05, 0.05) * slot
                cy = sy0 + slot / 2 + rng.uniform(-0.05, 0.05) * slot
                ang = rng.uniform(-0.12, 0.12)
                ca, sa = math.cos(ang), math.sin(ang)
                hw, hl = w / 2, l / 2
                corners = np.asarray([(-hw, -hl), (hw, -hl), (hw, hl), (-hw, hl)])
                rot = corners @ np.array([[ca, sa], [-sa, ca]])
                poly = Polygon(rot + np.array([cx, cy]))
                tier = _tier_of(cx, cy, extent)
                area = polygon_area(poly)
                per = morph_perimeter(poly)
                compact = 4 * math.pi * area / (per * per)
                dist = math.hypot(cx - center, cy - center)
                base, a, b, c, sigma = _TIER_HEIGHT[tier]
                floors = (base + a * math.log(area / 150.0 + 0.2)
                          + b * compact + c * (1.0 - dist / max_dist)
                          + sigma * rng.normal())
                floors = int(np.clip(round(floors), 1, 45))
                # age grows outward; a sliver of the rim is newer than 2018
                age_frac = dist / max_dist + 0.08 * rng.normal()
                if age_frac > 0.97:
                    age = AFTER_LAST_YEAR
                else:
                    year = GAIA_FIRST_YEAR + age_frac * (GAIA_LAST_YEAR - GAIA_FIRST_YEAR)
                    age = int(np.clip(round(year), GAIA_FIRST_YEAR, GAIA_LAST_YEAR))
                city.buildings.append(TruthBuilding(
                    id=f"b{count:05d}", polygon=poly, tier=tier, floors=floors,
                    height=floors * params.floor_height, function=fn, age=age,
                    labeled=bool(rng.random() < params.label_fraction),
                    block_key=(bi, bj),
                ))
                count += 1

    # per-block disorder rates drive both SVI flags and truth quality
    for (bi, bj, x0, y0, x1, y1) in block_cells:
        cx, cy = (x0 + x1) / 2.0, (y0 + y1) / 2.0
        dist = math.hypot(cx - center, cy - center) / max_dist
        base_rate = np.clip(0.05 + 0.45 * dist + 0.1 * rng.normal(), 0.0, 0.85)
        rates = np.clip(base_rate * rng.uniform(0.3, 1.3, size=len(DISORDER_TYPES)), 0.0, 0.9)
        city.block_disorder[(bi, bj)] = rates

    # POIs clustered by block function
    poi_points: dict[str, list[tuple[float, float]]] = {c: [] for c in POI_CATEGORIES}
    for (bi, bj, x0, y0, x1, y1) in block_cells:
        fn = block_fn[(bi, bj)]
        cats = _FUNCTION_POIS[fn]
        n_poi = int(rng.integers(2, 9))
        for _ in range(n_poi):
            cat = cats[int(rng.integers(0, len(cats)))] if rng.random() < 0.8 else \
                POI_CATEGORIES[int(rng.integers(0, len(POI_CATEGORIES)))]
            poi_points[cat].append((rng.uniform(x0, x1), rng.uniform(y0, y1)))
    city.pois = {c: np.asarray(v, dtype=float).reshape(-1, 2)
                 for c, v in poi_points.items()}

    # SVI observations along roads, heading follows the road
    pid = 0
    years_all = np.arange(2014, 2024)
    for road in city.roads:
        (ax, ay), (bx, by) = road.vertices[0], road.vertices[-1]
        length = math.hypot(bx - ax, by - ay)
        n_pts = int(length // params.svi_spacing)
        heading = math.degrees(math.atan2(bx - ax, by - ay)) % 360.0
        for k in range(1, n_pts):
            t = k * params.svi_spacing / length
            px, py = ax + t * (bx - ax), ay + t * (by - ay)
            if rng.random() < 0.2:
                continue  # coverage gaps
            n_years = int(rng.integers(1, 4))
            years = sorted(rng.choice(years_all, size=n_years, replace=False).tolist())
            bi = min(int(py // pitch), n_cells - 1)
            bj = min(int(px // pitch), n_cells - 1)
            rates = city.block_disorder.get((bi, bj), np.zeros(len(DISORDER_TYPES)))
            images: dict[int, list[tuple[int, ...]]] = {}
            for year in years:
                n_img = int(rng.integers(1, 4))
                images[int(year)] = [
                    tuple(int(rng.random() < r) for r in rates) for _ in range(n_img)
                ]
            city.svi.append(SviObservation(f"svi{pid:05d}", Point(px, py), heading, images))
            pid += 1

    # impervious stack: first-appearance year per cell; building centroid
    # cells carry exactly the building's truth year
    cell = city.impervious_cell
    gw = int(math.ceil(extent / cell))
    year_grid = np.full((gw, gw), np.inf)
    # roads urbanize with the surrounding rings
    for gi in range(gw):
        for gj in range(gw):
            gx, gy = (gj + 0.5) * cell, (gw - gi - 0.5) * cell
            dist = math.hypot(gx - center, gy - center) / max_dist
            if dist < 0.9:
                year_grid[gi, gj] = min(
                    GAIA_LAST_YEAR,
                    GAIA_FIRST_YEAR + int(dist * (GAIA_LAST_YEAR - GAIA_FIRST_YEAR)) + 2)
    for b in city.buildings:
        c = centroid(b.polygon)
        gj = int(c.x // cell)
        gi = gw - 1 - int(c.y // cell)
        if not (0 <= gi < gw and 0 <= gj < gw):
            continue
        year_grid[gi, gj] = np.inf if b.age == AFTER_LAST_YEAR else float(b.age)
    city.impervious_years = tuple(range(GAIA_FIRST_YEAR, GAIA_LAST_YEAR + 1))
    city.impervious_grid = year_grid
    return city


def morph_perimeter(poly: Polygon) -> float:
    ring = poly.exterior
    d = np.diff(np.vstack([ring, ring[:1]]), axis=0)
    return float(np.hypot(d[:, 0], d[:, 1]).sum())


def _write_png_stub(path, rng: np.random.Generator) -> None:
    """Tiny gray PNG standing in for a street-view crop."""
    from PIL import Image

    shade = int(rng.integers(90, 170))
    img = Image.new("RGB", (64, 48), (shade, shade, shade))
    img.save(path, format="PNG")


def write_synth_city(city: SyntheticCity, cfg: PipelineConfig) -> dict:
    """Persist every layer in the pipeline's input formats under
    ``cfg.workdir``/synth; returns the path map."""
    params = city.params
    base = os.path.join(cfg.workdir, "synth")
    os.makedirs(base, exist_ok=True)
    lon0, lat0 = cfg.origin_lon, cfg.origin_lat
    paths = {}

    def fc(name, items):
        p = os.path.join(base, name)
        save_vector(p, items, lon0, lat0)
        paths[name] = p
        return p

    fc("truth.geojson", [
        (b.id, b.polygon, {
            "floors": b.floors, "height": round(b.height, 6),
            "func": b.function.name,
            "age": b.age if isinstance(b.age, str) else int(b.age),
            "tier": b.tier.name, "labeled": bool(b.labeled),
            "q_expected": round(float(np.sum(city.block_disorder[b.block_key]))
                                if b.block_key in city.block_disorder else 0.0, 6),
        }) for b in city.buildings])
    fc("baidu_like.geojson", [
        (b.id, b.polygon, {"floors": b.floors})
        for b in city.buildings if b.labeled])
    fc("roads.geojson", [
        (f"road_{i}", r, {}) for i, r in enumerate(city.roads)])
    fc("blocks.geojson", [(bid, poly, {}) for bid, poly in city.blocks])
    fc("aoi.geojson", [
        (pid, poly, {"primary_type": primary, "secondary_type": secondary})
        for pid, poly, primary, secondary in city.plots])
    fc("admin.geojson", [
        (f"admin_{tier.name}", poly, {"tier": tier.name})
        for tier, poly in city.admin])

    # POIs
    poi_path = os.path.join(base, "pois.csv")
    lines = ["category,x,y"]
    for cat in POI_CATEGORIES:
        for x, y in city.pois.get(cat, np.empty((0, 2))):
            lines.append(f"{cat},{float(x)!r},{float(y)!r}")
    write_text_atomic(poi_path, "\n".join(lines) + "\n")
    paths["pois.csv"] = poi_path

    # SVI detections + image stubs
    svi_path = os.path.join(base, "svi.csv")
    save_svi_csv(svi_path, city.svi)
    paths["svi.csv"] = svi_path
    img_dir = os.path.join(base, "svi_images")
    os.makedirs(img_dir, exist_ok=True)
    img_rng = np.random.default_rng(city.seed + 7)
    for o in city.svi:
        _write_png_stub(os.path.join(img_dir, f"{o.point_id}.png"), img_rng)
    paths["svi_images"] = img_dir

    # impervious stack
    imp_dir = os.path.join(base, "impervious")
    os.makedirs(imp_dir, exist_ok=True)
    grid = city.impervious_grid
    for year in city.impervious_years:
        layer = (grid <= year).astype(np.uint8)
        save_mask(os.path.join(imp_dir, f"gaia_{year}.asc"),
                  BinaryMask(layer, 0.0, 0.0, city.impervious_cell))
    paths["impervious"] = imp_dir

    # truth masks per tile, plus the noisy "segmenter prediction" masks
    grid_spec = tile_extent((0.0, 0.0, params.extent, params.extent),
                            params.tile_size_px, params.pixel_size)
    truth_dir = os.path.join(base, "masks_truth")
    pred_dir = os.path.join(base, "masks_pred")
    os.makedirs(truth_dir, exist_ok=True)
    os.makedirs(pred_dir, exist_ok=True)
    noise_rng = np.random.default_rng(city.seed + 13)
    polys = [b.polygon for b in city.buildings]
    boxes = [p.bounds() for p in polys]
    for row in range(grid_spec.rows):
        for col in range(grid_spec.cols):
            tx0, ty0, tx1, ty1 = grid_spec.tile_bounds(row, col)
            local = [p for p, (bx0, by0, bx1, by1) in zip(polys, boxes)
                     if bx0 < tx1 and bx1 > tx0 and by0 < ty1 and by1 > ty0]
            px = params.tile_size_px
            mask = rasterize_polygons(local, tx0, ty0, params.pixel_size, px, px)
            save_mask(os.path.join(truth_dir, f"tile_{row}_{col}.asc"), mask)
            noisy = mask.grid.copy()
            if params.mask_flip_rate > 0:
                flips = noise_rng.random(noisy.shape) < params.mask_flip_rate
                noisy = np.where(flips, 1 - noisy, noisy)
            save_mask(os.path.join(pred_dir, f"tile_{row}_{col}.asc"),
                      BinaryMask(noisy, tx0, ty0, params.pixel_size))
    paths["masks_truth"] = truth_dir
    paths["masks_pred"] = pred_dir
    paths["tile_grid"] = f"{grid_spec.rows}x{grid_spec.cols}"
    return paths
