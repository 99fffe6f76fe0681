"""Stage orchestration: every stage reads upstream artifacts from the
workdir, writes its outputs atomically, and records a provenance report
(input hashes, seed, config hash, wall time).
"""
from __future__ import annotations

import csv
import hashlib
import json
import math
import os
import time
from typing import Optional

import numpy as np

from .. import __version__
from ..ensemble import (BaggedConfig, GbtParams, PartitionedModel, cls_metrics,
                        predict_ensemble, prepare_features, reg_metrics,
                        SplitPlan, train_partitioned, uncertainty)
from ..features import (CityTier, FeatureContext, FeatureMatrix, FeatureRegistry,
                        POI_CATEGORIES, SurfaceGrid, assemble_feature_matrix,
                        functional_centers, function_registry, height_registry,
                        kde_surface)
from ..geom import Point, Polygon, centroid, point_in_polygon, polygon_area
from ..indicative import (AFTER_LAST_YEAR, AGE_BINS, AoiPlot, FunctionLabel,
                          ImperviousStack, QualityMode, age_bin, assign_age,
                          assign_function_labels, load_svi_csv, quality_latest)
from ..vectorize import (MaskFileSegmenter, load_mask, mask_to_polygons,
                         repair_seams, seg_confusion, seg_metrics, tile_extent)
from .config import PipelineConfig, config_hash
from .vectorio import load_vector, save_vector, write_json_atomic, write_text_atomic

STAGES = ("synth", "vectorize", "features", "train-height", "predict-height",
          "train-function", "predict-function", "quality", "age", "evaluate")


class DependencyError(RuntimeError):
    pass


def _p(cfg: PipelineConfig, *parts) -> str:
    return os.path.join(cfg.workdir, *parts)


def _require(cfg: PipelineConfig, path: str, producing_stage: str) -> str:
    if not os.path.exists(path):
        raise DependencyError(
            f"missing artifact {path!r}: run stage '{producing_stage}' first")
    return path


def _sha256(path: str) -> str:
    h = hashlib.sha256()
    if os.path.isdir(path):
        for name in sorted(os.listdir(path)):
            h.update(name.encode())
            sub = os.path.join(path, name)
            if os.path.isfile(sub):
                with open(sub, "rb") as f:
                    h.update(f.read())
    else:
        with open(path, "rb") as f:
            h.update(f.read())
    return h.hexdigest()


def _report(cfg: PipelineConfig, stage: str, inputs: list[str], outputs: list[str],
            t0: float, extra: Optional[dict] = None) -> dict:
    rep = {
        "stage": stage,
        "seed": cfg.seed,
        "config_hash": config_hash(cfg),
        "package_version": __version__,
        "input_hashes": {p: _sha256(p) for p in inputs},
        "outputs": outputs,
        "wall_time_s": round(time.time() - t0, 3),
    }
    if extra:
        rep.update(extra)
    write_json_atomic(_p(cfg, "reports", f"{stage}.json"), rep)
    return rep


# ---------------------------------------------------------------------------
# Stage implementations
# ---------------------------------------------------------------------------

def _stage_synth(cfg: PipelineConfig) -> dict:
    from .synth import SynthParams, synth_city, write_synth_city

    t0 = time.time()
    city = synth_city(cfg.seed, SynthParams.from_config(cfg))
    paths = write_synth_city(city, cfg)
    outs = [p for p in paths.values() if isinstance(p, str) and os.path.exists(p)]
    return _report(cfg, "synth", [], outs, t0,
                   {"n_buildings": len(city.buildings), "tile_grid": paths["tile_grid"]})


def _stage_vectorize(cfg: PipelineConfig) -> dict:
    t0 = time.time()
    pred_dir = _require(cfg, _p(cfg, "synth", "masks_pred"), "synth")
    grid = tile_extent((0.0, 0.0, cfg.synth_extent, cfg.synth_extent),
                       cfg.tile_size_px, cfg.pixel_size)
    segmenter = MaskFileSegmenter(pred_dir)
    polys: list[Polygon] = []
    for row in range(grid.rows):
        for col in range(grid.cols):
            mask = segmenter.run(row, col)
            for poly in mask_to_polygons(mask, cfg.simplify_tolerance):
                if polygon_area(poly) >= cfg.min_building_area:
                    polys.append(poly)
    repaired = repair_seams(polys, grid, cfg.seam_buffer, cfg.edge_similarity)
    out = _p(cfg, "vectorize", "buildings.geojson")
    save_vector(out, [(f"v{i:05d}", p, {}) for i, p in enumerate(repaired)],
                cfg.origin_lon, cfg.origin_lat)
    return _report(cfg, "vectorize", [pred_dir], [out], t0,
                   {"n_raw": len(polys), "n_buildings": len(repaired)})


def _load_buildings(cfg: PipelineConfig) -> list[tuple[object, Polygon]]:
    path = _require(cfg, _p(cfg, "vectorize", "buildings.geojson"), "vectorize")
    return [(fid, geom) for fid, geom, _ in
            load_vector(path, cfg.origin_lon, cfg.origin_lat)]


def _load_context(cfg: PipelineConfig, heights: Optional[dict] = None) -> FeatureContext:
    base = _p(cfg, "synth")
    blocks = [(fid, geom) for fid, geom, _ in
              load_vector(_require(cfg, os.path.join(base, "blocks.geojson"), "synth"),
                          cfg.origin_lon, cfg.origin_lat)]
    roads = [geom for _, geom, _ in
             load_vector(_require(cfg, os.path.join(base, "roads.geojson"), "synth"),
                         cfg.origin_lon, cfg.origin_lat)]
    admin = [(CityTier[props["tier"]], geom) for _, geom, props in
             load_vector(_require(cfg, os.path.join(base, "admin.geojson"), "synth"),
                         cfg.origin_lon, cfg.origin_lat)]
    pois: dict[str, list] = {c: [] for c in POI_CATEGORIES}
    with open(_require(cfg, os.path.join(base, "pois.csv"), "synth"), newline="") as f:
        for row in csv.DictReader(f):
            pois.setdefault(row["category"], []).append((float(row["x"]), float(row["y"])))
    poi_arrays = {c: np.asarray(v, dtype=float).reshape(-1, 2) for c, v in pois.items()}

    all_pois = [p for c in POI_CATEGORIES for p in pois.get(c, [])]
    centers = []
    if all_pois:
        pts = np.asarray(all_pois)
        pad = 5 * cfg.kde_bandwidth
        x0, y0 = pts[:, 0].min() - pad, pts[:, 1].min() - pad
        x1, y1 = pts[:, 0].max() + pad, pts[:, 1].max() + pad
        nx = max(3, int(math.ceil((x1 - x0) / cfg.kde_cell)))
        ny = max(3, int(math.ceil((y1 - y0) / cfg.kde_cell)))
        surface = kde_surface(pts, cfg.kde_bandwidth, SurfaceGrid(x0, y0, cfg.kde_cell, nx, ny))
        centers = functional_centers(surface)
    return FeatureContext(
        blocks=blocks, roads=roads, pois=poi_arrays, admin_polygons=admin,
        functional_centers=centers, neighbor_radius=cfg.neighbor_radius,
        poi_radius=cfg.poi_radius, kde_bandwidth=cfg.kde_bandwidth,
        street_alpha=cfg.street_alpha, street_setback=cfg.street_setback,
        heights=heights or {},
    )


def _save_matrix(cfg: PipelineConfig, name: str, matrix: FeatureMatrix,
                 registry: FeatureRegistry) -> list[str]:
    mpath = _p(cfg, "features", f"{name}_matrix.csv")
    rpath = _p(cfg, "features", f"{name}_registry.txt")
    os.makedirs(_p(cfg, "features"), exist_ok=True)
    tmp = mpath + ".tmp"
    matrix.to_csv(tmp, registry)
    os.replace(tmp, mpath)
    write_text_atomic(rpath, registry.to_manifest())
    return [mpath, rpath]


def _load_matrix(cfg: PipelineConfig, name: str, producing_stage: str
                 ) -> tuple[FeatureMatrix, FeatureRegistry]:
    mpath = _require(cfg, _p(cfg, "features", f"{name}_matrix.csv"), producing_stage)
    rpath = _require(cfg, _p(cfg, "features", f"{name}_registry.txt"), producing_stage)
    with open(rpath) as f:
        registry = FeatureRegistry.from_manifest(f.read())
    ids, rows, mask = [], [], []
    with open(mpath, newline="") as f:
        reader = csv.reader(f)
        header = next(reader)
        assert header[0] == "building_id"
        for row in reader:
            ids.append(row[0])
            vals = [float(c) if c != "" else float("nan") for c in row[1:]]
            rows.append(vals)
            mask.append([c == "" for c in row[1:]])
    values = np.asarray(rows, dtype=float).reshape(len(ids), len(registry))
    return (FeatureMatrix(ids, values, np.asarray(mask, dtype=bool).reshape(values.shape),
                          registry.version), registry)


def _stage_features(cfg: PipelineConfig) -> dict:
    t0 = time.time()
    buildings = _load_buildings(cfg)
    context = _load_context(cfg)
    registry = height_registry()
    matrix = assemble_feature_matrix(buildings, context, registry)
    outs = _save_matrix(cfg, "height", matrix, registry)
    inputs = [_p(cfg, "vectorize", "buildings.geojson"), _p(cfg, "synth", "pois.csv")]
    return _report(cfg, "features", inputs, outs, t0,
                   {"n_rows": len(matrix.building_ids), "n_features": len(registry)})


def _match_to_truth(cfg: PipelineConfig, buildings, truth_path: str,
                    producing_stage: str = "synth") -> dict:
    """vectorized building id -> truth feature (id, properties) by centroid
    containment."""
    truth = load_vector(_require(cfg, truth_path, producing_stage),
                        cfg.origin_lon, cfg.origin_lat)
    from ..geom import SpatialIndex

    index = SpatialIndex((i, geom.bounds()) for i, (_, geom, _) in enumerate(truth))
    out = {}
    for bid, poly in buildings:
        c = centroid(poly)
        for k in index.query((c.x, c.y, c.x, c.y)):
            tid, tgeom, tprops = truth[k]
            if point_in_polygon(tgeom, c, boundary_tol=1e-9):
                out[bid] = (tid, tprops)
                break
    return out


def _bagged_config(cfg: PipelineConfig) -> BaggedConfig:
    return BaggedConfig(n_members=cfg.ensemble_members, master_seed=cfg.seed,
                        grid=cfg.grid_params(),
                        validation_fraction=cfg.validation_fraction)


def _tiers_for(matrix: FeatureMatrix, registry: FeatureRegistry) -> list[CityTier]:
    j = registry.index_of("city_tier")
    encoding = dict((code, name) for name, code in registry.features[j].encoding)
    return [CityTier[encoding[int(v)]] for v in matrix.values[:, j]]


def _stage_train_height(cfg: PipelineConfig) -> dict:
    t0 = time.time()
    matrix, registry = _load_matrix(cfg, "height", "features")
    buildings = _load_buildings(cfg)
    labels = _match_to_truth(cfg, buildings, _p(cfg, "synth", "baidu_like.geojson"))
    floors = {bid: props["floors"] for bid, (tid, props) in labels.items()}

    row_ids = list(matrix.building_ids)
    keep = [i for i, bid in enumerate(row_ids) if bid in floors]
    if len(keep) < 10:
        raise DependencyError("too few labeled buildings to train the height model")
    X = prepare_features(matrix)[keep]
    y = np.asarray([floors[row_ids[i]] * cfg.floor_height for i in keep])
    all_tiers = _tiers_for(matrix, registry)
    tiers = [all_tiers[i] for i in keep]

    plan = SplitPlan(cfg.seed, cfg.test_fraction, cfg.validation_fraction)
    train_pos, test_pos = plan.split_test(list(range(len(y))))
    model = train_partitioned(X[train_pos], y[train_pos],
                              [tiers[i] for i in train_pos], "regression",
                              _bagged_config(cfg), min_samples=cfg.min_tier_samples)
    os.makedirs(_p(cfg, "models"), exist_ok=True)
    out = _p(cfg, "models", "height_model.json")
    write_json_atomic(out, model.to_dict())
    split_out = _p(cfg, "models", "height_split.json")
    write_json_atomic(split_out, {
        "building_ids": [row_ids[i] for i in keep],
        "train_rows": train_pos, "test_rows": test_pos,
    })
    inputs = [_p(cfg, "features", "height_matrix.csv"), _p(cfg, "synth", "baidu_like.geojson")]
    return _report(cfg, "train-height", inputs, [out, split_out], t0,
                   {"n_labeled": len(keep), "n_train": len(train_pos),
                    "n_test": len(test_pos),
                    "fallback_tiers": [t.name for t in model.fallback_tiers]})


def _predict_heights(cfg: PipelineConfig, matrix: FeatureMatrix,
                     registry: FeatureRegistry) -> tuple[np.ndarray, np.ndarray, list[CityTier]]:
    path = _require(cfg, _p(cfg, "models", "height_model.json"), "train-height")
    with open(path) as f:
        model = PartitionedModel.from_dict(json.load(f))
    X = prepare_features(matrix)
    tiers = _tiers_for(matrix, registry)
    preds = np.zeros(len(X))
    member_matrix = np.zeros((len(X), len(model.combined.members)))
    tier_vals = np.asarray([t.value for t in tiers])
    for tier in CityTier:
        rows = np.nonzero(tier_vals == tier.value)[0]
        if len(rows) == 0:
            continue
        ens = model.model_for(tier)
        agg, members = predict_ensemble(ens, X[rows], return_members=True)
        preds[rows] = agg
        member_matrix[rows] = members
    return preds, member_matrix, tiers


def _stage_predict_height(cfg: PipelineConfig) -> dict:
    t0 = time.time()
    matrix, registry = _load_matrix(cfg, "height", "features")
    preds, members, tiers = _predict_heights(cfg, matrix, registry)
    truth_floors = {}
    buildings = _load_buildings(cfg)
    for bid, (tid, props) in _match_to_truth(
            cfg, buildings, _p(cfg, "synth", "baidu_like.geojson")).items():
        truth_floors[bid] = props["floors"]

    rows = []
    for i, bid in enumerate(matrix.building_ids):
        mean = float(preds[i])
        mrow = members[i]
        if bid in truth_floors and truth_floors[bid] > 0:
            truth_h = truth_floors[bid] * cfg.floor_height
            re = np.abs(mrow - truth_h) / truth_h
            re_min, re_max, re_basis = float(re.min()), float(re.max()), "truth"
        else:
            spread = np.abs(mrow - mean) / max(mean, 1e-9)
            re_min, re_max, re_basis = float(spread.min()), float(spread.max()), "spread"
        rows.append({"id": bid, "height": round(max(mean, cfg.floor_height), 6),
                     "h_re_min": round(re_min, 6), "h_re_max": round(re_max, 6),
                     "re_basis": re_basis, "tier": tiers[i].name})
    out = _p(cfg, "predict", "heights.json")
    write_json_atomic(out, {"rows": rows})
    return _report(cfg, "predict-height",
                   [_p(cfg, "features", "height_matrix.csv"),
                    _p(cfg, "models", "height_model.json")], [out], t0,
                   {"n_rows": len(rows)})


def _load_heights(cfg: PipelineConfig) -> dict:
    path = _require(cfg, _p(cfg, "predict", "heights.json"), "predict-height")
    with open(path) as f:
        doc = json.load(f)
    return {r["id"]: r for r in doc["rows"]}


def _stage_train_function(cfg: PipelineConfig) -> dict:
    t0 = time.time()
    buildings = _load_buildings(cfg)
    heights = {bid: r["height"] for bid, r in _load_heights(cfg).items()}
    context = _load_context(cfg, heights=heights)
    registry = function_registry()
    matrix = assemble_feature_matrix(buildings, context, registry)
    outs = _save_matrix(cfg, "function", matrix, registry)

    plots_raw = load_vector(_require(cfg, _p(cfg, "synth", "aoi.geojson"), "synth"),
                            cfg.origin_lon, cfg.origin_lat)
    plots = [AoiPlot(geom, props.get("primary_type", ""), props.get("secondary_type", ""))
             for _, geom, props in plots_raw]
    labels = assign_function_labels(buildings, plots)

    row_ids = list(matrix.building_ids)
    keep = [i for i, bid in enumerate(row_ids) if labels.get(bid) is not None]
    if len(keep) < 10:
        raise DependencyError("too few labeled buildings to train the function model")
    X = prepare_features(matrix)[keep]
    y = np.asarray([labels[row_ids[i]].value for i in keep], dtype=int)
    all_tiers = _tiers_for(matrix, registry)
    tiers = [all_tiers[i] for i in keep]

    plan = SplitPlan(cfg.seed, cfg.test_fraction, cfg.validation_fraction)
    train_pos, test_pos = plan.split_test(list(range(len(y))))
    model = train_partitioned(X[train_pos], y[train_pos],
                              [tiers[i] for i in train_pos], "classification",
                              _bagged_config(cfg), n_classes=len(FunctionLabel),
                              min_samples=cfg.min_tier_samples)
    out = _p(cfg, "models", "function_model.json")
    write_json_atomic(out, model.to_dict())
    split_out = _p(cfg, "models", "function_split.json")
    write_json_atomic(split_out, {
        "building_ids": [row_ids[i] for i in keep],
        "train_rows": train_pos, "test_rows": test_pos,
    })
    return _report(cfg, "train-function",
                   [_p(cfg, "synth", "aoi.geojson"), _p(cfg, "predict", "heights.json")],
                   outs + [out, split_out], t0,
                   {"n_labeled": len(keep),
                    "fallback_tiers": [t.name for t in model.fallback_tiers]})


def _stage_predict_function(cfg: PipelineConfig) -> dict:
    t0 = time.time()
    matrix, registry = _load_matrix(cfg, "function", "train-function")
    path = _require(cfg, _p(cfg, "models", "function_model.json"), "train-function")
    with open(path) as f:
        model = PartitionedModel.from_dict(json.load(f))
    X = prepare_features(matrix)
    tiers = _tiers_for(matrix, registry)
    tier_vals = np.asarray([t.value for t in tiers])
    preds = np.zeros(len(X), dtype=int)
    vote_share = np.zeros(len(X))
    for tier in CityTier:
        rows = np.nonzero(tier_vals == tier.value)[0]
        if len(rows) == 0:
            continue
        ens = model.model_for(tier)
        agg, members = predict_ensemble(ens, X[rows], return_members=True)
        preds[rows] = agg.astype(int)
        votes = (members == agg[:, None]).mean(axis=1)
        vote_share[rows] = votes
    rows_out = [{"id": bid, "func": FunctionLabel(int(preds[i])).name,
                 "func_vote": round(float(vote_share[i]), 6)}
                for i, bid in enumerate(matrix.building_ids)]
    out = _p(cfg, "predict", "functions.json")
    write_json_atomic(out, {"rows": rows_out})
    return _report(cfg, "predict-function",
                   [_p(cfg, "features", "function_matrix.csv"), path], [out], t0,
                   {"n_rows": len(rows_out)})


def _stage_quality(cfg: PipelineConfig) -> dict:
    t0 = time.time()
    buildings = _load_buildings(cfg)
    observations = load_svi_csv(_require(cfg, _p(cfg, "synth", "svi.csv"), "synth"))
    obs_xy = np.asarray([(o.point.x, o.point.y) for o in observations]).reshape(-1, 2)
    rows = []
    for bid, poly in buildings:
        c = centroid(poly)
        if len(obs_xy):
            near = np.hypot(obs_xy[:, 0] - c.x, obs_xy[:, 1] - c.y) <= cfg.quality_buffer
            subset = [observations[i] for i in np.nonzero(near)[0]]
        else:
            subset = []
        result = quality_latest(poly, subset, cfg.quality_buffer)
        entry = {"id": bid, "q_year": result.year,
                 "q_total": None if result.total is None else round(result.total, 6)}
        for k, ts in enumerate(result.types):
            entry[f"q_k{k + 1}"] = (round(ts.value, 6) if ts.mode is QualityMode.SCORE
                                    else ts.mode.value)
        rows.append(entry)
    out = _p(cfg, "predict", "quality.json")
    write_json_atomic(out, {"rows": rows})
    return _report(cfg, "quality",
                   [_p(cfg, "synth", "svi.csv"),
                    _p(cfg, "vectorize", "buildings.geojson")], [out], t0,
                   {"n_rows": len(rows)})


def _stage_age(cfg: PipelineConfig) -> dict:
    t0 = time.time()
    buildings = _load_buildings(cfg)
    stack = ImperviousStack.from_directory(
        _require(cfg, _p(cfg, "synth", "impervious"), "synth"))
    rows = []
    for bid, poly in buildings:
        age = assign_age(poly, stack)
        rows.append({"id": bid,
                     "age": age if age is None or isinstance(age, str) else int(age),
                     "age_bin": None if age is None else age_bin(age)})
    out = _p(cfg, "predict", "ages.json")
    write_json_atomic(out, {"rows": rows})
    return _report(cfg, "age",
                   [_p(cfg, "synth", "impervious"),
                    _p(cfg, "vectorize", "buildings.geojson")], [out], t0,
                   {"n_rows": len(rows)})


def _stage_evaluate(cfg: PipelineConfig) -> dict:
    """Final FeatureCollection assembly plus metric tables (CSV)."""
    t0 = time.time()
    buildings = _load_buildings(cfg)
    heights = _load_heights(cfg)
    with open(_require(cfg, _p(cfg, "predict", "functions.json"), "predict-function")) as f:
        functions = {r["id"]: r for r in json.load(f)["rows"]}
    with open(_require(cfg, _p(cfg, "predict", "quality.json"), "quality")) as f:
        quality = {r["id"]: r for r in json.load(f)["rows"]}
    with open(_require(cfg, _p(cfg, "predict", "ages.json"), "age")) as f:
        ages = {r["id"]: r for r in json.load(f)["rows"]}

    features = []
    for bid, poly in buildings:
        h = heights.get(bid, {})
        fn = functions.get(bid, {})
        q = quality.get(bid, {})
        a = ages.get(bid, {})
        props = {
            "height": h.get("height"), "h_re_min": h.get("h_re_min"),
            "h_re_max": h.get("h_re_max"),
            "func": fn.get("func"), "func_vote": fn.get("func_vote"),
            "age": a.get("age"), "age_bin": a.get("age_bin"),
            "q_total": q.get("q_total"), "q_year": q.get("q_year"),
            "tier": h.get("tier"), "city_id": cfg.city_id,
        }
        for k in range(1, 7):
            props[f"q_k{k}"] = q.get(f"q_k{k}")
        features.append((bid, poly, props))
    out_fc = _p(cfg, "predict", "buildings_attributed.geojson")
    save_vector(out_fc, features, cfg.origin_lon, cfg.origin_lat)

    # --- metric tables ---
    os.makedirs(_p(cfg, "evaluate"), exist_ok=True)
    outs = [out_fc]

    # segmentation metrics per tile (Eqs. 3-8)
    grid = tile_extent((0.0, 0.0, cfg.synth_extent, cfg.synth_extent),
                       cfg.tile_size_px, cfg.pixel_size)
    seg_rows = []
    for row in range(grid.rows):
        for col in range(grid.cols):
            pred = load_mask(os.path.join(_p(cfg, "synth", "masks_pred"),
                                          f"tile_{row}_{col}.asc"))
            truth = load_mask(os.path.join(_p(cfg, "synth", "masks_truth"),
                                           f"tile_{row}_{col}.asc"))
            m = seg_metrics(seg_confusion(pred, truth))
            seg_rows.append([row, col, m.precision, m.recall, m.f1, m.accuracy,
                             m.iou_building, m.iou_background, m.miou])
    seg_path = _p(cfg, "evaluate", "segmentation_metrics.csv")
    _write_csv(seg_path, ["tile_row", "tile_col", "precision", "recall", "f1",
                          "accuracy", "iou_building", "iou_background", "miou"], seg_rows)
    outs.append(seg_path)

    # height regression metrics + uncertainty on the held-out test split
    matrix, registry = _load_matrix(cfg, "height", "features")
    with open(_require(cfg, _p(cfg, "models", "height_split.json"), "train-height")) as f:
        split = json.load(f)
    labels = _match_to_truth(cfg, buildings, _p(cfg, "synth", "baidu_like.geojson"))
    floors = {bid: props["floors"] for bid, (tid, props) in labels.items()}
    preds, members, tiers = _predict_heights(cfg, matrix, registry)
    id_pos = {bid: i for i, bid in enumerate(matrix.building_ids)}
    test_ids = [split["building_ids"][i] for i in split["test_rows"]]
    test_rows = [id_pos[b] for b in test_ids if b in id_pos and b in floors]
    reg_path = _p(cfg, "evaluate", "height_metrics.csv")
    unc_path = _p(cfg, "evaluate", "height_uncertainty.csv")
    if len(test_rows) >= 2:
        y_true = np.asarray([floors[matrix.building_ids[i]] * cfg.floor_height
                             for i in test_rows])
        m = reg_metrics(y_true, preds[test_rows])
        _write_csv(reg_path, ["rmse", "mae", "r2", "r2_defined"],
                   [[m.rmse, m.mae, m.r2, m.r2_defined]])
        recs, bins = uncertainty([matrix.building_ids[i] for i in test_rows],
                                 y_true, members[test_rows])
        _write_csv(unc_path,
                   ["bin_lower", "bin_upper", "count", "mean_ae_min", "mean_ae_max",
                    "mean_re_min", "mean_re_max"],
                   [[b.lower, b.upper, b.count, b.mean_ae_min, b.mean_ae_max,
                     b.mean_re_min, b.mean_re_max] for b in bins])
        outs += [reg_path, unc_path]

    # function metrics on its held-out split
    fn_split_path = _p(cfg, "models", "function_split.json")
    if os.path.exists(fn_split_path):
        fmatrix, fregistry = _load_matrix(cfg, "function", "train-function")
        with open(fn_split_path) as f:
            fsplit = json.load(f)
        truth_fn = {}
        for bid, (tid, props) in _match_to_truth(
                cfg, buildings, _p(cfg, "synth", "truth.geojson")).items():
            truth_fn[bid] = props.get("func")
        fid_pos = {bid: i for i, bid in enumerate(fmatrix.building_ids)}
        ftest_ids = [fsplit["building_ids"][i] for i in fsplit["test_rows"]]
        rows_eval = [(b, fid_pos[b]) for b in ftest_ids
                     if b in fid_pos and truth_fn.get(b) is not None]
        if len(rows_eval) >= 2:
            y_true = np.asarray([FunctionLabel[truth_fn[b]].value for b, _ in rows_eval])
            y_pred = np.asarray([FunctionLabel[functions[b]["func"]].value
                                 for b, _ in rows_eval])
            cm = cls_metrics(y_true, y_pred, len(FunctionLabel))
            frows = [[FunctionLabel(k).name, cm.precision[k], cm.recall[k], cm.f1[k]]
                     for k in range(len(FunctionLabel))]
            frows.append(["macro", cm.macro_precision, cm.macro_recall, cm.macro_f1])
            fpath = _p(cfg, "evaluate", "function_metrics.csv")
            _write_csv(fpath, ["class", "precision", "recall", "f1"], frows)
            outs.append(fpath)

    # age-bin agreement against truth
    truth_all = _match_to_truth(cfg, buildings, _p(cfg, "synth", "truth.geojson"))
    agree, n_age = 0, 0
    for bid, a in ages.items():
        if a["age"] is None or bid not in truth_all:
            continue
        t_age = truth_all[bid][1].get("age")
        if t_age is None:
            continue
        n_age += 1
        if age_bin(a["age"]) == age_bin(t_age):
            agree += 1
    age_path = _p(cfg, "evaluate", "age_metrics.csv")
    _write_csv(age_path, ["n", "bin_agreement"],
               [[n_age, agree / n_age if n_age else ""]])
    outs.append(age_path)

    # quality correlation against the generator's expected disorder totals
    q_pred, q_true = [], []
    for bid, q in quality.items():
        if q["q_total"] is None or bid not in truth_all:
            continue
        exp = truth_all[bid][1].get("q_expected")
        if exp is None:
            continue
        q_pred.append(q["q_total"])
        q_true.append(exp)
    q_path = _p(cfg, "evaluate", "quality_metrics.csv")
    if len(q_pred) >= 2 and np.std(q_true) > 0 and np.std(q_pred) > 0:
        r = float(np.corrcoef(q_pred, q_true)[0, 1])
        _write_csv(q_path, ["n", "pearson_r", "r2"], [[len(q_pred), r, r * r]])
    else:
        _write_csv(q_path, ["n", "pearson_r", "r2"], [[len(q_pred), "", ""]])
    outs.append(q_path)

    inputs = [_p(cfg, "predict", "heights.json"), _p(cfg, "predict", "functions.json"),
              _p(cfg, "predict", "quality.json"), _p(cfg, "predict", "ages.json")]
    return _report(cfg, "evaluate", inputs, outs, t0, {"n_buildings": len(features)})


def _write_csv(path, header, rows) -> None:
    lines = [",".join(header)]
    for row in rows:
        cells = []
        for v in row:
            if isinstance(v, float):
                cells.append(repr(v))
            else:
                cells.append(str(v))
        lines.append(",".join(cells))
    write_text_atomic(path, "\n".join(lines) + "\n")


_STAGE_FUNCS = {
    "synth": _stage_synth,
    "vectorize": _stage_vectorize,
    "features": _stage_features,
    "train-height": _stage_train_height,
    "predict-height": _stage_predict_height,
    "train-function": _stage_train_function,
    "predict-function": _stage_predict_function,
    "quality": _stage_quality,
    "age": _stage_age,
    "evaluate": _stage_evaluate,
}


def run_stage(cfg: PipelineConfig, stage: str) -> dict:
    """Run one pipeline stage; outputs are written atomically and the
    returned report includes input hashes, seed and wall time."""
    if stage not in _STAGE_FUNCS:
        raise ValueError(f"unknown stage {stage!r}; expected one of {STAGES}")
    os.makedirs(cfg.workdir, exist_ok=True)
    return _STAGE_FUNCS[stage](cfg)
