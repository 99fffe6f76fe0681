"""Per-tier partition models next to an all-data combination model."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..features import CityTier
from .bagging import BaggedConfig, BaggedEnsemble, predict_ensemble, train_bagged

MIN_TIER_SAMPLES = 200


@dataclass(eq=False)
class PartitionedModel:
    """One ensemble per city tier plus the combination ensemble trained on
    everything; tiers that fell back to the combination model are listed
    in ``fallback_tiers``."""

    combined: BaggedEnsemble
    per_tier: dict[CityTier, BaggedEnsemble] = field(default_factory=dict)
    fallback_tiers: tuple[CityTier, ...] = ()

    def model_for(self, tier: CityTier) -> BaggedEnsemble:
        return self.per_tier.get(tier, self.combined)

    def predict(self, X: np.ndarray, tiers) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        tiers = list(tiers)
        if len(tiers) != len(X):
            raise ValueError("one tier per row required")
        out = np.zeros(len(X), dtype=float)
        order = np.asarray([t.value for t in tiers])
        for tier in CityTier:
            sel = np.nonzero(order == tier.value)[0]
            if len(sel) == 0:
                continue
            out[sel] = predict_ensemble(self.model_for(tier), X[sel])
        return out

    def to_dict(self) -> dict:
        return {
            "combined": self.combined.to_dict(),
            "per_tier": {t.name: e.to_dict() for t, e in self.per_tier.items()},
            "fallback_tiers": [t.name for t in self.fallback_tiers],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PartitionedModel":
        return cls(
            combined=BaggedEnsemble.from_dict(d["combined"]),
            per_tier={CityTier[k]: BaggedEnsemble.from_dict(v)
                      for k, v in d["per_tier"].items()},
            fallback_tiers=tuple(CityTier[k] for k in d["fallback_tiers"]),
        )


def train_partitioned(X: np.ndarray, y: np.ndarray, tiers, task: str,
                      config: BaggedConfig, n_classes: int | None = None,
                      min_samples: int = MIN_TIER_SAMPLES) -> PartitionedModel:
    """Train tier models on their tier's rows and the combination model on
    all rows; tiers below ``min_samples`` rows fall back to the combination
    model and are flagged."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y)
    tiers = list(tiers)
    if len(tiers) != len(y):
        raise ValueError("one tier per row required")
    combined = train_bagged(X, y, task, config, n_classes=n_classes,
                            partition_label="Combined")
    per_tier: dict[CityTier, BaggedEnsemble] = {}
    fallback: list[CityTier] = []
    tier_values = np.asarray([t.value for t in tiers])
    for tier in CityTier:
        rows = np.nonzero(tier_values == tier.value)[0]
        if len(rows) == 0:
            continue
        if len(rows) < min_samples:
            fallback.append(tier)
            continue
        per_tier[tier] = train_bagged(
            X[rows], y[rows], task, config, n_classes=n_classes,
            partition_label=tier.name)
    return PartitionedModel(combined, per_tier, tuple(fallback))
