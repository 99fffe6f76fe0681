"""Regression and classification accuracy metrics."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class RegMetrics:
    rmse: float
    mae: float
    r2: float
    r2_defined: bool = True


def reg_metrics(y, y_hat) -> RegMetrics:
    """RMSE, MAE and R^2.

    R^2 = 1 - SS_res/SS_tot; a zero-variance target leaves it undefined
    (reported as 0 with r2_defined False) instead of +-inf.
    """
    y = np.asarray(y, dtype=float)
    y_hat = np.asarray(y_hat, dtype=float)
    if y.shape != y_hat.shape or y.ndim != 1 or len(y) < 2:
        raise ValueError("need two equal-length vectors of >= 2 values")
    err = y - y_hat
    rmse = float(np.sqrt(np.mean(err ** 2)))
    mae = float(np.mean(np.abs(err)))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    if ss_tot == 0.0:
        return RegMetrics(rmse, mae, 0.0, r2_defined=False)
    r2 = 1.0 - float(np.sum(err ** 2)) / ss_tot
    return RegMetrics(rmse, mae, r2)


@dataclass(frozen=True)
class ClsMetrics:
    precision: tuple[float, ...]
    recall: tuple[float, ...]
    f1: tuple[float, ...]
    macro_precision: float
    macro_recall: float
    macro_f1: float
    accuracy: float
    absent_classes: tuple[int, ...] = ()


def cls_metrics(y, y_hat, n_classes: int) -> ClsMetrics:
    """One-vs-rest precision/recall/F1 per class plus macro averages.

    Classes absent from both truth and prediction score 0 and are listed
    in ``absent_classes``.
    """
    y = np.asarray(y, dtype=int)
    y_hat = np.asarray(y_hat, dtype=int)
    if y.shape != y_hat.shape or y.ndim != 1:
        raise ValueError("label vectors must have identical 1D shape")
    if (y.min(initial=0) < 0 or y_hat.min(initial=0) < 0
            or y.max(initial=-1) >= n_classes or y_hat.max(initial=-1) >= n_classes):
        raise ValueError("labels out of range")
    precision, recall, f1 = [], [], []
    absent: list[int] = []
    for k in range(n_classes):
        tp = int(np.count_nonzero((y == k) & (y_hat == k)))
        fp = int(np.count_nonzero((y != k) & (y_hat == k)))
        fn = int(np.count_nonzero((y == k) & (y_hat != k)))
        if tp + fp + fn == 0:
            absent.append(k)
        p = tp / (tp + fp) if tp + fp else 0.0
        r = tp / (tp + fn) if tp + fn else 0.0
        f = 2 * p * r / (p + r) if p + r else 0.0
        precision.append(p)
        recall.append(r)
        f1.append(f)
    accuracy = float(np.mean(y == y_hat)) if len(y) else 0.0
    return ClsMetrics(
        tuple(precision), tuple(recall), tuple(f1),
        float(np.mean(precision)), float(np.mean(recall)), float(np.mean(f1)),
        accuracy, tuple(absent),
    )
