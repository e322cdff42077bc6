"""Random forest on CART trees, for regression and classification.

Trees are grown on bootstrap samples with per-node feature subsampling;
splits minimize within-node variance (regression) or Gini impurity
(classification) using sort-plus-prefix-sum scans. Per-tree generators are
derived deterministically from (seed, tree_index), so a fixed seed yields
a bit-identical forest.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Literal, Sequence

import numpy as np

from .errors import TooFewPointsError

__all__ = ["RandomForestModel", "train_random_forest"]

Mode = Literal["regression", "classification"]

_MIN_GAIN = 1e-12


class _Node:
    __slots__ = ("feature", "threshold", "left", "right", "value")

    def __init__(self, value=None):
        self.feature = -1
        self.threshold = 0.0
        self.left = None
        self.right = None
        self.value = value


def _best_split_regression(v: np.ndarray, y: np.ndarray, min_leaf: int):
    order = np.argsort(v, kind="stable")
    sv = v[order]
    sy = y[order]
    n = len(sv)
    positions = np.arange(min_leaf, n - min_leaf + 1)
    if len(positions) == 0:
        return None
    valid = positions[sv[positions - 1] < sv[positions]]
    if len(valid) == 0:
        return None
    c1 = np.cumsum(sy)
    c2 = np.cumsum(sy * sy)
    n_l = valid.astype(np.float64)
    s_l = c1[valid - 1]
    q_l = c2[valid - 1]
    n_r = n - n_l
    s_r = c1[-1] - s_l
    q_r = c2[-1] - q_l
    cost = (q_l - s_l * s_l / n_l) + (q_r - s_r * s_r / n_r)
    best = int(np.argmin(cost))
    i = int(valid[best])
    threshold = 0.5 * (sv[i - 1] + sv[i])
    return float(cost[best]), threshold


def _best_split_gini(v: np.ndarray, onehot: np.ndarray, min_leaf: int):
    order = np.argsort(v, kind="stable")
    sv = v[order]
    n = len(sv)
    positions = np.arange(min_leaf, n - min_leaf + 1)
    if len(positions) == 0:
        return None
    valid = positions[sv[positions - 1] < sv[positions]]
    if len(valid) == 0:
        return None
    counts = np.cumsum(onehot[order], axis=0)
    left = counts[valid - 1]
    total = counts[-1]
    right = total[None, :] - left
    n_l = valid.astype(np.float64)
    n_r = n - n_l
    # Minimizing weighted Gini == minimizing n - sum(left^2)/n_l - sum(right^2)/n_r.
    cost = n - (left * left).sum(axis=1) / n_l - (right * right).sum(axis=1) / n_r
    best = int(np.argmin(cost))
    i = int(valid[best])
    threshold = 0.5 * (sv[i - 1] + sv[i])
    return float(cost[best]), threshold


def _grow(
    X: np.ndarray,
    y: np.ndarray,
    onehot: np.ndarray | None,
    idx: np.ndarray,
    depth: int,
    *,
    mode: Mode,
    max_depth: int | None,
    min_leaf: int,
    mtry: int,
    rng: np.random.Generator,
) -> _Node:
    y_node = y[idx]

    def leaf() -> _Node:
        if mode == "regression":
            return _Node(value=float(y_node.mean()))
        counts = onehot[idx].sum(axis=0)
        return _Node(value=int(np.argmax(counts)))

    if len(idx) < 2 * min_leaf or len(idx) < 2:
        return leaf()
    if max_depth is not None and depth >= max_depth:
        return leaf()
    if np.all(y_node == y_node[0]):
        return leaf()

    if mode == "regression":
        s = y_node.sum()
        parent_cost = float((y_node * y_node).sum() - s * s / len(idx))
    else:
        counts = onehot[idx].sum(axis=0)
        parent_cost = float(len(idx) - (counts * counts).sum() / len(idx))

    p = X.shape[1]
    features = rng.choice(p, size=min(mtry, p), replace=False)
    best = None  # (cost, feature, threshold)
    for f in features:
        v = X[idx, f]
        if mode == "regression":
            found = _best_split_regression(v, y_node, min_leaf)
        else:
            found = _best_split_gini(v, onehot[idx], min_leaf)
        if found is None:
            continue
        cost, threshold = found
        if best is None or cost < best[0]:
            best = (cost, int(f), threshold)

    if best is None or parent_cost - best[0] <= _MIN_GAIN:
        return leaf()

    _, feature, threshold = best
    mask = X[idx, feature] <= threshold
    node = _Node()
    node.feature = feature
    node.threshold = threshold
    node.left = _grow(
        X, y, onehot, idx[mask], depth + 1,
        mode=mode, max_depth=max_depth, min_leaf=min_leaf, mtry=mtry, rng=rng,
    )
    node.right = _grow(
        X, y, onehot, idx[~mask], depth + 1,
        mode=mode, max_depth=max_depth, min_leaf=min_leaf, mtry=mtry, rng=rng,
    )
    return node


def _predict_tree(node: _Node, row: np.ndarray):
    while node.feature >= 0:
        node = node.left if row[node.feature] <= node.threshold else node.right
    return node.value


@dataclass(frozen=True)
class RandomForestModel:
    mode: Mode
    trees: tuple[_Node, ...]
    classes: tuple[str, ...] | None
    n_features: int

    def predict(self, X: np.ndarray):
        X = np.asarray(X, dtype=np.float64)
        if self.mode == "regression":
            preds = np.zeros(len(X))
            for tree in self.trees:
                preds += [_predict_tree(tree, row) for row in X]
            return preds / len(self.trees)
        votes = np.zeros((len(X), len(self.classes)), dtype=np.int64)
        for tree in self.trees:
            for i, row in enumerate(X):
                votes[i, _predict_tree(tree, row)] += 1
        # argmax takes the first maximum; classes are sorted, so ties break
        # to the lexicographically smallest label.
        return [self.classes[i] for i in votes.argmax(axis=1)]


def train_random_forest(
    features: np.ndarray,
    targets: Sequence,
    n_trees: int = 100,
    mode: Mode = "regression",
    seed: int = 0,
    max_depth: int | None = None,
    min_leaf: int = 1,
    mtry: int | None = None,
    bootstrap: bool = True,
) -> RandomForestModel:
    """Train a forest of CART trees on bootstrap samples.

    Feature subsampling defaults to sqrt(p) for classification and
    ceil(p/3) for regression.
    """
    X = np.asarray(features, dtype=np.float64)
    n, p = X.shape
    if n < 2:
        raise TooFewPointsError(f"need at least 2 training rows, got {n}")

    classes: tuple[str, ...] | None = None
    onehot = None
    if mode == "classification":
        labels = list(targets)
        classes = tuple(sorted(set(labels)))
        index = {c: i for i, c in enumerate(classes)}
        y = np.array([index[c] for c in labels], dtype=np.float64)
        onehot = np.zeros((n, len(classes)))
        onehot[np.arange(n), y.astype(int)] = 1.0
    else:
        y = np.asarray(targets, dtype=np.float64)

    if mtry is None:
        mtry = max(1, int(math.sqrt(p))) if mode == "classification" else max(
            1, math.ceil(p / 3)
        )

    trees = []
    for t in range(n_trees):
        rng = np.random.default_rng([seed, t])
        idx = rng.integers(0, n, n) if bootstrap else np.arange(n)
        trees.append(
            _grow(
                X, y, onehot, np.asarray(idx), 0,
                mode=mode, max_depth=max_depth, min_leaf=min_leaf, mtry=mtry, rng=rng,
            )
        )
    return RandomForestModel(mode=mode, trees=tuple(trees), classes=classes, n_features=p)
