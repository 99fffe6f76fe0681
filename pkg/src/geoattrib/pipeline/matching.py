"""Match street-view points to buildings for the manual audit."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from ..geom import Point, Polygon, nearest_point_on_ring, select_view_side
from ..indicative import SviObservation


@dataclass(frozen=True)
class AuditTask:
    task_id: int
    building_id: object
    point_id: object
    side: str  # "Left" | "Right"
    svi_point: Point
    observation_point: Point
    heading_deg: float
    image_year: Optional[int]


def match_svi_to_buildings(buildings: Sequence[tuple[object, Polygon]],
                           observations: Sequence[SviObservation],
                           max_distance: float = 100.0) -> list[AuditTask]:
    """One audit task per building with a usable street view.

    For each building: take the closest street-view point (by distance to
    the building outline) within ``max_distance``, set the observation
    point to the nearest outline point, and pick the image side from the
    heading/observation angle; buildings whose angle selects no side, or
    with no point in range, produce no task.
    """
    tasks: list[AuditTask] = []
    tid = 0
    obs_xy = np.asarray([(o.point.x, o.point.y) for o in observations]).reshape(-1, 2)
    for bid, poly in buildings:
        x0, y0, x1, y1 = poly.bounds()
        if len(obs_xy) == 0:
            continue
        # bbox prefilter: outline distance is at least the bbox distance
        dx = np.maximum(0.0, np.maximum(x0 - obs_xy[:, 0], obs_xy[:, 0] - x1))
        dy = np.maximum(0.0, np.maximum(y0 - obs_xy[:, 1], obs_xy[:, 1] - y1))
        candidates = np.nonzero(np.hypot(dx, dy) <= max_distance)[0]
        best: tuple[float, SviObservation, Point] | None = None
        for i in candidates:
            obs = observations[i]
            near = nearest_point_on_ring(poly, obs.point)
            d = math.hypot(near.x - obs.point.x, near.y - obs.point.y)
            if d <= max_distance and (best is None or d < best[0] - 1e-12):
                best = (d, obs, near)
        if best is None:
            continue
        _, obs, observation_point = best
        side = select_view_side(obs.heading_deg, obs.point, observation_point)
        if side is None:
            continue
        years_with_images = [y for y in obs.years() if obs.images[y]]
        tasks.append(AuditTask(
            task_id=tid, building_id=bid, point_id=obs.point_id, side=side,
            svi_point=obs.point, observation_point=observation_point,
            heading_deg=obs.heading_deg,
            image_year=max(years_with_images) if years_with_images else None,
        ))
        tid += 1
    return tasks
