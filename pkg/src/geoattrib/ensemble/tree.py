"""Exact-greedy regression trees, built level-wise with presorted features.

The builder fits a tree to a gradient vector by variance reduction:
gain(split) = S_L^2/C_L + S_R^2/C_R - S^2/C over gradient sums S and row
counts C.  Like classic CART, a node splits on the best candidate even at
zero gain (pure-gradient nodes stop); ties resolve to the lowest feature
index, then the lowest threshold, so rebuilds are bit-for-bit reproducible.

Rows live in per-feature orders that are value-sorted within contiguous
node blocks; a split stably partitions each feature's block in place, so
nothing is ever re-sorted after the initial presort.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(eq=False)
class Tree:
    """Flat array representation; feature == -1 marks a leaf."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    max_depth: int

    def leaf_of(self, X: np.ndarray) -> np.ndarray:
        node = np.zeros(len(X), dtype=np.int64)
        for _ in range(self.max_depth + 1):
            feat = self.feature[node]
            rows = np.nonzero(feat >= 0)[0]
            if len(rows) == 0:
                break
            f = feat[rows]
            go_left = X[rows, f] <= self.threshold[node[rows]]
            node[rows] = np.where(go_left, self.left[node[rows]], self.right[node[rows]])
        return node

    def predict(self, X: np.ndarray) -> np.ndarray:
        return self.value[self.leaf_of(X)]

    def to_dict(self) -> dict:
        return {
            "feature": self.feature.tolist(),
            "threshold": self.threshold.tolist(),
            "left": self.left.tolist(),
            "right": self.right.tolist(),
            "value": self.value.tolist(),
            "max_depth": self.max_depth,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Tree":
        return cls(
            feature=np.asarray(d["feature"], dtype=np.int64),
            threshold=np.asarray(d["threshold"], dtype=float),
            left=np.asarray(d["left"], dtype=np.int64),
            right=np.asarray(d["right"], dtype=np.int64),
            value=np.asarray(d["value"], dtype=float),
            max_depth=int(d["max_depth"]),
        )


class Presort:
    """Per-feature sort order and sorted values, reusable across rounds."""

    def __init__(self, X: np.ndarray):
        self.X = np.ascontiguousarray(X, dtype=float)
        self.order = np.argsort(self.X, kind="stable", axis=0).T.copy()  # (f, n)
        self.sorted_values = np.take_along_axis(
            np.ascontiguousarray(self.X.T), self.order, axis=1)  # (f, n)


def build_tree(X: np.ndarray, grad: np.ndarray, max_depth: int,
               min_child_weight: int = 1,
               presorted: Presort | None = None,
               rows: np.ndarray | None = None) -> tuple[Tree, np.ndarray]:
    """Fit a regression tree to ``grad`` and return (tree, leaf_of_row).

    ``presorted`` lets a boosting loop sort once per dataset; ``rows``
    restricts the fit to a subset (row subsampling) while excluded rows
    still receive leaf assignments for prediction.  Leaf values are the
    mean gradient of the training rows they hold.
    """
    X = np.asarray(X, dtype=float)
    n, f = X.shape
    ps = presorted if presorted is not None else Presort(X)
    ORD = ps.order.copy()
    XS = ps.sorted_values.copy()

    if rows is None:
        in_sample = np.ones(n, dtype=bool)
        n_valid = n
    else:
        in_sample = np.zeros(n, dtype=bool)
        in_sample[np.asarray(rows, dtype=int)] = True
        for fi in range(f):
            m = in_sample[ORD[fi]]
            ORD[fi] = np.concatenate([ORD[fi][m], ORD[fi][~m]])
            XS[fi] = np.concatenate([XS[fi][m], XS[fi][~m]])
        n_valid = int(in_sample.sum())

    feature: list[int] = [-1]
    threshold: list[float] = [0.0]
    left: list[int] = [0]
    right: list[int] = [0]
    node_of = np.zeros(n, dtype=np.int64)

    # contiguous row blocks [s, e) of the currently growable nodes
    blocks: list[tuple[int, int, int]] = [(0, 0, n_valid)] if n_valid else []
    arange_n = np.arange(n)

    for _depth in range(max_depth):
        if not blocks:
            break
        g0 = grad[ORD[0]]
        cum1 = np.cumsum(g0)
        cum2 = np.cumsum(g0 * g0)

        def block_sums(s: int, e: int) -> tuple[float, float]:
            lo1 = cum1[s - 1] if s > 0 else 0.0
            lo2 = cum2[s - 1] if s > 0 else 0.0
            return float(cum1[e - 1] - lo1), float(cum2[e - 1] - lo2)

        splittable: list[tuple[int, int, int]] = []
        for nid, s, e in blocks:
            if e - s < 2 * min_child_weight:
                continue
            s1, s2 = block_sums(s, e)
            if s2 - s1 * s1 / (e - s) <= 1e-14:
                continue  # pure gradient
            splittable.append((nid, s, e))
        if not splittable:
            break

        start_pos = np.zeros(n, dtype=np.int64)
        end_pos = np.ones(n, dtype=np.int64)
        for _nid, s, e in splittable:
            start_pos[s:e] = s
            end_pos[s:e] = e

        # candidate validity shared by all features (counts are order-free)
        c_left = (arange_n - start_pos + 1).astype(float)
        c_right = (end_pos - arange_n - 1).astype(float)
        cand1d = ((arange_n + 1 < end_pos)
                  & (c_left >= min_child_weight) & (c_right >= min_child_weight))

        G = grad[ORD]                     # (f, n)
        CUM = np.cumsum(G, axis=1)
        CUM0 = CUM - G
        base = CUM0[:, start_pos]
        s_left = CUM - base
        s_total = CUM[:, end_pos - 1] - base
        s_right = s_total - s_left

        # parent term s_total^2/c_total is constant per node: argmax-neutral
        gain = s_left * s_left / np.maximum(c_left, 1.0)
        gain += s_right * s_right / np.maximum(c_right, 1.0)
        cand_fd = np.empty((f, n), dtype=bool)
        cand_fd[:] = cand1d
        cand_fd[:, :-1] &= XS[:, 1:] != XS[:, :-1]
        gain[~cand_fd] = -np.inf

        next_blocks: list[tuple[int, int, int]] = []
        for nid, s, e in splittable:
            sl = gain[:, s:e]
            k = int(np.argmax(sl))
            if sl.flat[k] == -np.inf:
                continue
            fi, pos = divmod(k, e - s)
            pos += s
            thr = float((XS[fi, pos] + XS[fi, pos + 1]) / 2.0)
            li = len(feature)
            ri = li + 1
            feature[nid] = fi
            threshold[nid] = thr
            left[nid] = li
            right[nid] = ri
            feature.extend([-1, -1])
            threshold.extend([0.0, 0.0])
            left.extend([li, ri])
            right.extend([li, ri])

            go_left = X[:, fi] <= thr
            for fj in range(f):
                sub = ORD[fj, s:e]
                m = go_left[sub]
                ORD[fj, s:e] = np.concatenate([sub[m], sub[~m]])
                xsub = XS[fj, s:e]
                XS[fj, s:e] = np.concatenate([xsub[m], xsub[~m]])
            k_left = s + int(go_left[ORD[0, s:e]].sum())
            node_of[ORD[0, s:k_left]] = li
            node_of[ORD[0, k_left:e]] = ri
            next_blocks.append((li, s, k_left))
            next_blocks.append((ri, k_left, e))
        blocks = next_blocks

    # leaf values: mean gradient of in-sample rows per leaf
    n_nodes = len(feature)
    sums = np.bincount(node_of[in_sample], weights=grad[in_sample], minlength=n_nodes)
    counts = np.bincount(node_of[in_sample], minlength=n_nodes)
    values = np.zeros(n_nodes)
    nz = counts > 0
    values[nz] = sums[nz] / counts[nz]

    tree = Tree(
        feature=np.asarray(feature, dtype=np.int64),
        threshold=np.asarray(threshold, dtype=float),
        left=np.asarray(left, dtype=np.int64),
        right=np.asarray(right, dtype=np.int64),
        value=values,
        max_depth=max_depth,
    )
    leaf = tree.leaf_of(X)
    return tree, leaf
