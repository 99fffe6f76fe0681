"""Per-building prediction uncertainty from member spread.

For every building with true value T and member predictions P_j:
AE_j = |P_j - T| and RE_j = |P_j - T| / T; the [min, max] ranges over
members quantify the estimate's stability.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class UncertaintyRecord:
    building_id: object
    truth: float
    ae_range: tuple[float, float]
    re_range: tuple[float, float] | None  # None when truth <= 0 (RE undefined)


@dataclass(frozen=True)
class UncertaintyBin:
    lower: float
    upper: float
    count: int
    mean_ae_min: float
    mean_ae_max: float
    mean_re_min: float
    mean_re_max: float


def relative_error(truth: float, prediction: float) -> float:
    """|P - T| / T; requires a positive truth value."""
    if truth <= 0:
        raise ValueError("relative error needs a positive truth value")
    return abs(prediction - truth) / truth


def uncertainty(building_ids, truths, member_predictions,
                bin_width: float = 5.0) -> tuple[list[UncertaintyRecord], list[UncertaintyBin]]:
    """Per-building AE/RE ranges plus a summary binned by true value.

    ``member_predictions`` has one row per building and one column per
    member.  Buildings with non-positive truth get AE ranges only (RE is
    undefined there and left as None); they are excluded from RE bin means.
    """
    truths = np.asarray(truths, dtype=float)
    P = np.asarray(member_predictions, dtype=float)
    ids = list(building_ids)
    if P.shape[0] != len(ids) or len(truths) != len(ids):
        raise ValueError("ids, truths and prediction rows must align")
    records: list[UncertaintyRecord] = []
    for i, bid in enumerate(ids):
        ae = np.abs(P[i] - truths[i])
        ae_range = (float(ae.min()), float(ae.max()))
        if truths[i] > 0:
            re = ae / truths[i]
            re_range = (float(re.min()), float(re.max()))
        else:
            re_range = None
        records.append(UncertaintyRecord(bid, float(truths[i]), ae_range, re_range))

    bins: list[UncertaintyBin] = []
    if len(records):
        top = float(truths.max())
        edges = np.arange(0.0, top + bin_width, bin_width)
        for lo in edges:
            hi = lo + bin_width
            sel = [r for r in records if lo <= r.truth < hi]
            if not sel:
                continue
            re_sel = [r for r in sel if r.re_range is not None]
            bins.append(UncertaintyBin(
                lower=float(lo), upper=float(hi), count=len(sel),
                mean_ae_min=float(np.mean([r.ae_range[0] for r in sel])),
                mean_ae_max=float(np.mean([r.ae_range[1] for r in sel])),
                mean_re_min=float(np.mean([r.re_range[0] for r in re_sel])) if re_sel else 0.0,
                mean_re_max=float(np.mean([r.re_range[1] for r in re_sel])) if re_sel else 0.0,
            ))
    return records, bins
