"""Gradient boosting over the exact-greedy trees in :mod:`tree`.

Squared-error regression boosts on residuals with mean-value leaves;
K-class classification boosts one tree per class per round on softmax
residuals with Newton-step leaf values.
"""
from __future__ import annotations

from dataclasses import dataclass, field, asdict

import numpy as np

from .tree import Presort, Tree, build_tree

SQUARED_ERROR = "squared_error"
SOFTMAX = "softmax"


@dataclass(frozen=True)
class GbtParams:
    max_depth: int = 6
    rounds: int = 100
    learning_rate: float = 0.1
    min_child_weight: int = 1
    subsample: float = 1.0

    def __post_init__(self):
        if self.max_depth < 1 or self.rounds < 1:
            raise ValueError("max_depth and rounds must be >= 1")
        if not (0.0 < self.learning_rate <= 1.0):
            raise ValueError("learning_rate must be in (0, 1]")
        if not (0.0 < self.subsample <= 1.0):
            raise ValueError("subsample must be in (0, 1]")
        if self.min_child_weight < 1:
            raise ValueError("min_child_weight must be >= 1")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(eq=False)
class GbtModel:
    """Boosted-tree model; prediction = base + learning_rate * sum(trees),
    per class for the softmax objective."""

    objective: str
    params: GbtParams
    base_score: np.ndarray  # shape () for regression, (K,) for softmax
    trees: list = field(default_factory=list)  # regression: [Tree]; softmax: [[Tree]*K]
    n_features: int = 0
    n_classes: int = 1
    train_loss: list[float] = field(default_factory=list)

    def predict(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.shape[1] != self.n_features:
            raise ValueError(f"expected {self.n_features} features, got {X.shape[1]}")
        if self.objective == SQUARED_ERROR:
            out = np.full(len(X), float(self.base_score))
            for t in self.trees:
                out += self.params.learning_rate * t.predict(X)
            return out
        scores = self.decision_scores(X)
        return np.argmax(scores, axis=1)

    def decision_scores(self, X: np.ndarray) -> np.ndarray:
        """Raw per-class scores (softmax objective only)."""
        if self.objective != SOFTMAX:
            raise ValueError("decision_scores is only defined for classification")
        X = np.asarray(X, dtype=float)
        scores = np.tile(np.asarray(self.base_score, dtype=float), (len(X), 1))
        for round_trees in self.trees:
            for k, t in enumerate(round_trees):
                scores[:, k] += self.params.learning_rate * t.predict(X)
        return scores

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        s = self.decision_scores(X)
        s = s - s.max(axis=1, keepdims=True)
        e = np.exp(s)
        return e / e.sum(axis=1, keepdims=True)

    def to_dict(self) -> dict:
        if self.objective == SQUARED_ERROR:
            trees = [t.to_dict() for t in self.trees]
        else:
            trees = [[t.to_dict() for t in rnd] for rnd in self.trees]
        return {
            "objective": self.objective,
            "params": self.params.to_dict(),
            "base_score": np.asarray(self.base_score).tolist(),
            "trees": trees,
            "n_features": self.n_features,
            "n_classes": self.n_classes,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "GbtModel":
        objective = d["objective"]
        if objective == SQUARED_ERROR:
            trees = [Tree.from_dict(t) for t in d["trees"]]
        else:
            trees = [[Tree.from_dict(t) for t in rnd] for rnd in d["trees"]]
        return cls(
            objective=objective,
            params=GbtParams(**d["params"]),
            base_score=np.asarray(d["base_score"], dtype=float),
            trees=trees,
            n_features=int(d["n_features"]),
            n_classes=int(d["n_classes"]),
        )


def _subsample_rows(n: int, fraction: float, rng: np.random.Generator) -> np.ndarray | None:
    if fraction >= 1.0:
        return None
    k = max(1, int(round(fraction * n)))
    return np.sort(rng.permutation(n)[:k])


def train_gbt(X: np.ndarray, y: np.ndarray, params: GbtParams,
              objective: str = SQUARED_ERROR, n_classes: int | None = None,
              seed: int = 0) -> GbtModel:
    """Fit a boosted-tree model.

    Regression starts from the target mean and fits each round's tree to
    the residuals; training squared error is recorded per round and is
    non-increasing when subsample == 1.  Classification starts from log
    class priors and fits per-class trees to softmax residuals.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y)
    if len(X) != len(y) or len(X) == 0:
        raise ValueError("X and y must be non-empty and the same length")
    if not np.isfinite(X).all():
        raise ValueError("features must be finite")
    presorted = Presort(X)
    rng = np.random.default_rng(seed)

    if objective == SQUARED_ERROR:
        y = y.astype(float)
        if not np.isfinite(y).all():
            raise ValueError("targets must be finite")
        base = float(np.mean(y))
        model = GbtModel(SQUARED_ERROR, params, np.asarray(base),
                         n_features=X.shape[1], n_classes=1)
        current = np.full(len(y), base)
        for _ in range(params.rounds):
            rows = _subsample_rows(len(y), params.subsample, rng)
            residual = y - current
            tree, leaf = build_tree(X, residual, params.max_depth,
                                    params.min_child_weight, presorted, rows)
            current = current + params.learning_rate * tree.value[leaf]
            model.trees.append(tree)
            model.train_loss.append(float(np.mean((y - current) ** 2)))
        return model

    if objective == SOFTMAX:
        labels = y.astype(int)
        if labels.min() < 0:
            raise ValueError("class labels must be non-negative integers")
        K = n_classes if n_classes is not None else int(labels.max()) + 1
        onehot = np.zeros((len(labels), K))
        onehot[np.arange(len(labels)), labels] = 1.0
        prior = np.clip(onehot.mean(axis=0), 1e-12, None)
        base = np.log(prior)
        model = GbtModel(SOFTMAX, params, base, n_features=X.shape[1], n_classes=K)
        scores = np.tile(base, (len(labels), 1))
        for _ in range(params.rounds):
            rows = _subsample_rows(len(labels), params.subsample, rng)
            shifted = scores - scores.max(axis=1, keepdims=True)
            e = np.exp(shifted)
            proba = e / e.sum(axis=1, keepdims=True)
            residual = onehot - proba
            round_trees: list[Tree] = []
            for k in range(K):
                r = residual[:, k]
                tree, leaf = build_tree(X, r, params.max_depth,
                                        params.min_child_weight, presorted, rows)
                # Newton step per leaf: (K-1)/K * sum r / sum |r|(1-|r|)
                n_nodes = len(tree.value)
                num = np.zeros(n_nodes)
                den = np.zeros(n_nodes)
                if rows is None:
                    valid = np.ones(len(r), dtype=bool)
                else:
                    valid = np.zeros(len(r), dtype=bool)
                    valid[rows] = True
                lv = leaf[valid]
                rv = r[valid]
                np.add.at(num, lv, rv)
                np.add.at(den, lv, np.abs(rv) * (1.0 - np.abs(rv)))
                newton = np.zeros(n_nodes)
                ok = den > 1e-12
                newton[ok] = (K - 1) / K * num[ok] / den[ok]
                tree.value = newton
                scores[:, k] += params.learning_rate * newton[leaf]
                round_trees.append(tree)
            model.trees.append(round_trees)
            shifted = scores - scores.max(axis=1, keepdims=True)
            logp = shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))
            model.train_loss.append(float(-logp[np.arange(len(labels)), labels].mean()))
        return model

    raise ValueError(f"unknown objective {objective!r}")
