"""Bootstrap aggregation over boosted-tree members.

Every member trains on a with-replacement resample of the training rows
with a seed derived from (master seed, member index); hyperparameters are
grid-searched once per ensemble on a held-out validation split.
"""
from __future__ import annotations

import hashlib
import itertools
import json
from dataclasses import dataclass, field

import numpy as np

from .gbt import SOFTMAX, SQUARED_ERROR, GbtModel, GbtParams, train_gbt
from .metrics import cls_metrics, reg_metrics

SERIAL_FORMAT = "geoattrib-ensemble/1"


def derive_seed(master_seed: int, token) -> int:
    """Stable 63-bit seed from a master seed and a member token."""
    digest = hashlib.sha256(f"geoattrib:{master_seed}:{token}".encode()).digest()
    return int.from_bytes(digest[:8], "little") >> 1


def bootstrap_sample(ids, seed: int) -> list:
    """Multiset of len(ids) draws with replacement, deterministic per seed."""
    ids = list(ids)
    if not ids:
        raise ValueError("cannot bootstrap an empty id list")
    rng = np.random.default_rng(seed)
    idx = rng.integers(0, len(ids), size=len(ids))
    return [ids[i] for i in idx]


@dataclass(frozen=True)
class SplitPlan:
    """Test split held fixed across iterations; each iteration re-splits the
    remainder into validation and training parts."""

    master_seed: int
    test_fraction: float = 0.10
    validation_fraction: float = 0.20
    iterations: int = 100

    def split_test(self, ids) -> tuple[list, list]:
        ids = list(ids)
        rng = np.random.default_rng(derive_seed(self.master_seed, "test"))
        order = rng.permutation(len(ids))
        n_test = int(round(self.test_fraction * len(ids)))
        test = sorted(order[:n_test].tolist())
        rest = sorted(order[n_test:].tolist())
        return [ids[i] for i in rest], [ids[i] for i in test]

    def iteration_split(self, pool_ids, iteration: int) -> tuple[list, list]:
        pool = list(pool_ids)
        rng = np.random.default_rng(derive_seed(self.master_seed, f"iter:{iteration}"))
        order = rng.permutation(len(pool))
        n_val = int(round(self.validation_fraction * len(pool)))
        val = sorted(order[:n_val].tolist())
        train = sorted(order[n_val:].tolist())
        return [pool[i] for i in train], [pool[i] for i in val]


def default_grid() -> list[GbtParams]:
    """max_depth {3, 6} x rounds {100, 300} x learning_rate {0.1} x subsample {1.0}."""
    combos = itertools.product((3, 6), (100, 300), (0.1,), (1.0,))
    return [GbtParams(max_depth=d, rounds=r, learning_rate=lr, subsample=s)
            for d, r, lr, s in combos]


def grid_search(X: np.ndarray, y: np.ndarray, grid: list[GbtParams],
                train_idx, val_idx, task: str,
                n_classes: int | None = None, seed: int = 0) -> GbtParams:
    """Best params by validation MAE (regression) or macro-F1
    (classification); ties keep the earliest grid entry."""
    if not grid:
        raise ValueError("empty parameter grid")
    if len(grid) == 1:
        return grid[0]
    X = np.asarray(X, dtype=float)
    y = np.asarray(y)
    ti = np.asarray(train_idx, dtype=int)
    vi = np.asarray(val_idx, dtype=int)
    best: tuple[float, int] | None = None
    for gi, params in enumerate(grid):
        model = train_gbt(X[ti], y[ti],
                          params,
                          objective=SQUARED_ERROR if task == "regression" else SOFTMAX,
                          n_classes=n_classes, seed=derive_seed(seed, f"grid:{gi}"))
        pred = model.predict(X[vi])
        if task == "regression":
            score = reg_metrics(y[vi].astype(float), pred).mae
        else:
            score = -cls_metrics(y[vi].astype(int), pred,
                                 n_classes or int(np.max(y)) + 1).macro_f1
        if best is None or score < best[0] - 1e-15:
            best = (score, gi)
    assert best is not None
    return grid[best[1]]


@dataclass(frozen=True)
class BaggedConfig:
    n_members: int = 100
    master_seed: int = 0
    grid: tuple[GbtParams, ...] = ()
    validation_fraction: float = 0.20

    def __post_init__(self):
        if self.n_members < 1:
            raise ValueError("need at least one member")


@dataclass(eq=False)
class BaggedEnsemble:
    task: str  # "regression" | "classification"
    members: list[GbtModel]
    member_seeds: list[int]
    params: GbtParams
    partition_label: str = "Combined"
    n_classes: int = 1
    registry_version: str = ""

    def to_dict(self) -> dict:
        return {
            "format": SERIAL_FORMAT,
            "task": self.task,
            "partition_label": self.partition_label,
            "n_classes": self.n_classes,
            "registry_version": self.registry_version,
            "params": self.params.to_dict(),
            "member_seeds": self.member_seeds,
            "members": [m.to_dict() for m in self.members],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))

    @classmethod
    def from_dict(cls, d: dict) -> "BaggedEnsemble":
        if d.get("format") != SERIAL_FORMAT:
            raise ValueError(f"unsupported ensemble format {d.get('format')!r}")
        return cls(
            task=d["task"],
            members=[GbtModel.from_dict(m) for m in d["members"]],
            member_seeds=list(d["member_seeds"]),
            params=GbtParams(**d["params"]),
            partition_label=d["partition_label"],
            n_classes=int(d["n_classes"]),
            registry_version=d.get("registry_version", ""),
        )

    @classmethod
    def from_json(cls, text: str) -> "BaggedEnsemble":
        return cls.from_dict(json.loads(text))


def prepare_features(matrix, fill: str = "median") -> np.ndarray:
    """Dense feature array from a FeatureMatrix; masked cells are imputed
    with the column median of observed values (0 when a column is entirely
    missing)."""
    values = np.array(matrix.values, dtype=float, copy=True)
    mask = np.asarray(matrix.mask, dtype=bool)
    if fill != "median":
        raise ValueError("only median imputation is supported")
    for j in range(values.shape[1]):
        col_missing = mask[:, j]
        if not col_missing.any():
            continue
        observed = values[~col_missing, j]
        values[col_missing, j] = float(np.median(observed)) if len(observed) else 0.0
    return values


def train_bagged(X: np.ndarray, y: np.ndarray, task: str, config: BaggedConfig,
                 n_classes: int | None = None,
                 partition_label: str = "Combined") -> BaggedEnsemble:
    """Train ``config.n_members`` boosted-tree members on bootstrap resamples.

    Hyperparameters come from one grid search on an internal validation
    split (iteration 0 of the split plan); every member then trains on its
    own with-replacement resample of all provided rows.
    """
    if task not in ("regression", "classification"):
        raise ValueError("task must be 'regression' or 'classification'")
    X = np.asarray(X, dtype=float)
    y = np.asarray(y)
    grid = list(config.grid) or default_grid()
    if len(grid) > 1:
        plan = SplitPlan(config.master_seed,
                         test_fraction=0.0,
                         validation_fraction=config.validation_fraction)
        tr, va = plan.iteration_split(list(range(len(y))), 0)
        params = grid_search(X, y, grid, tr, va, task, n_classes,
                             seed=config.master_seed)
    else:
        params = grid[0]

    members: list[GbtModel] = []
    seeds: list[int] = []
    objective = SQUARED_ERROR if task == "regression" else SOFTMAX
    all_rows = list(range(len(y)))
    for j in range(config.n_members):
        seed_j = derive_seed(config.master_seed, j)
        rows = bootstrap_sample(all_rows, seed_j)
        members.append(train_gbt(X[rows], y[rows], params, objective=objective,
                                 n_classes=n_classes, seed=seed_j))
        seeds.append(seed_j)
    k = n_classes if n_classes is not None else (
        int(np.max(y)) + 1 if task == "classification" else 1)
    return BaggedEnsemble(task, members, seeds, params,
                          partition_label=partition_label, n_classes=k)


def predict_ensemble(ensemble: BaggedEnsemble, X: np.ndarray,
                     return_members: bool = False):
    """Aggregate member predictions.

    Regression averages members; classification takes the majority vote of
    member argmax classes, ties resolving to the lowest class index.
    Set ``return_members`` for the (n_rows, n_members) member matrix too.
    """
    X = np.asarray(X, dtype=float)
    per_member = np.stack([m.predict(X) for m in ensemble.members], axis=1)
    if ensemble.task == "regression":
        agg = per_member.mean(axis=1)
    else:
        votes = np.zeros((len(X), ensemble.n_classes), dtype=int)
        for j in range(per_member.shape[1]):
            votes[np.arange(len(X)), per_member[:, j].astype(int)] += 1
        agg = np.argmax(votes, axis=1)  # argmax takes the lowest index on ties
    if return_members:
        return agg, per_member
    return agg
