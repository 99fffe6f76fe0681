"""FeatureCollection I/O with WGS84 storage and local-meter processing.

Files follow the RFC 7946 structure: polygons store closed lon/lat rings;
on load everything is reprojected into the city's azimuthal-equidistant
frame, and back on save.  Geometry round-trips within 1e-9 degrees.
"""
from __future__ import annotations

import json
import os
import tempfile
from typing import Iterable, Optional

import numpy as np

from ..geom import Polygon, Polyline, local_to_lonlat, lonlat_to_local


class VectorFormatError(ValueError):
    pass


def _ring_to_lonlat(ring: np.ndarray, origin_lon: float, origin_lat: float) -> list:
    lon, lat = local_to_lonlat(ring[:, 0], ring[:, 1], origin_lon, origin_lat)
    coords = [[float(a), float(b)] for a, b in zip(lon, lat)]
    coords.append(coords[0])
    return coords


def _ring_from_lonlat(coords, origin_lon: float, origin_lat: float,
                      where: str) -> np.ndarray:
    if not isinstance(coords, list) or len(coords) < 3:
        raise VectorFormatError(f"{where}: ring needs >= 3 coordinates")
    arr = np.asarray(coords, dtype=float)
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise VectorFormatError(f"{where}: ring coordinates must be [lon, lat] pairs")
    if np.array_equal(arr[0], arr[-1]):
        arr = arr[:-1]
    if len(arr) < 3:
        raise VectorFormatError(f"{where}: ring needs >= 3 distinct vertices")
    x, y = lonlat_to_local(arr[:, 0], arr[:, 1], origin_lon, origin_lat)
    return np.stack([x, y], axis=1)


def save_vector(path, features: Iterable[tuple[object, object, dict]],
                origin_lon: float, origin_lat: float) -> None:
    """Write (id, geometry, properties) triples as a FeatureCollection.

    Geometries may be Polygon or Polyline (written as LineString); writes
    are atomic (temp file + rename).
    """
    out = {"type": "FeatureCollection", "features": []}
    for fid, geom, props in features:
        if isinstance(geom, Polygon):
            gj = {
                "type": "Polygon",
                "coordinates": [_ring_to_lonlat(geom.exterior, origin_lon, origin_lat)]
                + [_ring_to_lonlat(h, origin_lon, origin_lat) for h in geom.holes],
            }
        elif isinstance(geom, Polyline):
            lon, lat = local_to_lonlat(geom.vertices[:, 0], geom.vertices[:, 1],
                                       origin_lon, origin_lat)
            gj = {"type": "LineString",
                  "coordinates": [[float(a), float(b)] for a, b in zip(lon, lat)]}
        else:
            raise VectorFormatError(f"unsupported geometry {type(geom).__name__}")
        out["features"].append(
            {"type": "Feature", "id": fid, "geometry": gj, "properties": props})
    write_json_atomic(path, out)


def load_vector(path, origin_lon: float, origin_lat: float
                ) -> list[tuple[object, object, dict]]:
    """Read a FeatureCollection into (id, geometry, properties) triples in
    local meters.  Malformed features raise with their index."""
    with open(path) as f:
        try:
            doc = json.load(f)
        except json.JSONDecodeError as exc:
            raise VectorFormatError(f"{path}: not valid JSON ({exc})") from exc
    if doc.get("type") != "FeatureCollection" or "features" not in doc:
        raise VectorFormatError(f"{path}: expected a FeatureCollection")
    out = []
    for i, feat in enumerate(doc["features"]):
        where = f"{path}: feature {i}"
        if feat.get("type") != "Feature" or "geometry" not in feat:
            raise VectorFormatError(f"{where}: expected a Feature with geometry")
        geom = feat["geometry"]
        gtype = geom.get("type")
        if gtype == "Polygon":
            rings = geom.get("coordinates") or []
            if not rings:
                raise VectorFormatError(f"{where}: empty polygon")
            exterior = _ring_from_lonlat(rings[0], origin_lon, origin_lat, where)
            holes = [_ring_from_lonlat(r, origin_lon, origin_lat, where)
                     for r in rings[1:]]
            try:
                shape = Polygon(exterior, holes)
            except ValueError as exc:
                raise VectorFormatError(f"{where}: {exc}") from exc
        elif gtype == "LineString":
            coords = np.asarray(geom.get("coordinates") or [], dtype=float)
            if coords.ndim != 2 or len(coords) < 2:
                raise VectorFormatError(f"{where}: LineString needs >= 2 points")
            x, y = lonlat_to_local(coords[:, 0], coords[:, 1], origin_lon, origin_lat)
            shape = Polyline(np.stack([x, y], axis=1))
        else:
            raise VectorFormatError(f"{where}: unsupported geometry type {gtype!r}")
        out.append((feat.get("id", i), shape, feat.get("properties") or {}))
    return out


def write_json_atomic(path, doc) -> None:
    """Serialize JSON to a temp file and rename into place."""
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as f:
            json.dump(doc, f, sort_keys=True, separators=(",", ":"))
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_text_atomic(path, text: str) -> None:
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as f:
            f.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
