"""Gini trees: DecisionStump, CartTree and a bagged RandomForest.

Split rule shared by all three: ``x[feature] <= threshold`` goes left, the
threshold sits midway between adjacent distinct values, and a split is only
taken when it lowers the weighted Gini impurity. Among equally good splits
the one with the widest gap between its two neighbouring values wins, so a
clean cut through real mass beats one through 1e-80 kernel tails; remaining
ties go to feature order, then threshold order.
"""
from __future__ import annotations

import math

import numpy as np

from .base import AlgorithmId, register

_TOL = 1e-12


def _best_split(X: np.ndarray, y1h: np.ndarray, features: np.ndarray, min_leaf: int):
    """Best admissible split over ``features`` or None.

    Returns (feature, threshold). Works on all candidate features at once:
    cumulative class counts along each feature's sort order give every
    left/right partition's Gini in one shot.
    """
    n = X.shape[0]
    if n < 2 * min_leaf or len(features) == 0:
        return None
    Xs = X[:, features]
    order = np.argsort(Xs, axis=0, kind="stable")
    V = np.take_along_axis(Xs, order, axis=0)
    cum = np.cumsum(y1h[order], axis=0)[:-1]            # (n-1, m, K) left counts
    total = y1h.sum(axis=0)
    n_left = np.arange(1, n, dtype=np.float64)[:, None]
    n_right = n - n_left
    right = total[None, None, :] - cum
    q = (cum ** 2).sum(axis=2) / n_left + (right ** 2).sum(axis=2) / n_right
    valid = V[:-1] < V[1:]
    sizes_ok = (n_left >= min_leaf) & (n_right >= min_leaf)
    valid &= sizes_ok
    if not valid.any():
        return None
    q_parent = float((total ** 2).sum() / n)
    q = np.where(valid, q, -np.inf)
    best = q.max()
    if (best - q_parent) / n <= _TOL:
        return None
    # feature-major scan so ties go to the earlier feature, then lower value
    hits = np.argwhere((q >= best - _TOL * n).T)
    gaps = V[hits[:, 1] + 1, hits[:, 0]] - V[hits[:, 1], hits[:, 0]]
    j, p = hits[int(np.argmax(gaps))]
    lo, hi = V[p, j], V[p + 1, j]
    thr = (lo + hi) / 2.0
    if not thr < hi:
        thr = lo
    return int(features[j]), float(thr)


def grow_tree(X: np.ndarray, y: np.ndarray, n_classes: int, *, min_leaf: int = 1,
              max_depth: int | None = None, max_features: int | None = None,
              rng: np.random.Generator | None = None) -> dict[str, np.ndarray]:
    """Grow one tree; returns flat node arrays (children -1 mark leaves)."""
    d = X.shape[1]
    y1h = np.eye(n_classes)[y]
    feature, threshold, left, right, counts = [], [], [], [], []

    def new_node(idx):
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        counts.append(y1h[idx].sum(axis=0))
        return len(feature) - 1

    root = new_node(np.arange(len(y)))
    stack = [(root, np.arange(len(y)), 0)]
    while stack:
        node, idx, depth = stack.pop()
        if max_depth is not None and depth >= max_depth:
            continue
        if np.count_nonzero(counts[node]) <= 1:
            continue
        Xn, Yn = X[idx], y1h[idx]
        if max_features is None:
            split = _best_split(Xn, Yn, np.arange(d), min_leaf)
        else:
            # keep drawing feature batches until one admits a split
            perm = rng.permutation(d)
            split = None
            for start in range(0, d, max_features):
                split = _best_split(Xn, Yn, perm[start:start + max_features], min_leaf)
                if split is not None:
                    break
        if split is None:
            continue
        f, thr = split
        go_left = Xn[:, f] <= thr
        li, ri = idx[go_left], idx[~go_left]
        feature[node], threshold[node] = f, thr
        left[node] = new_node(li)
        right[node] = new_node(ri)
        stack.append((right[node], ri, depth + 1))
        stack.append((left[node], li, depth + 1))

    counts_arr = np.array(counts)
    return {
        "feature": np.array(feature, dtype=np.int64),
        "threshold": np.array(threshold, dtype=np.float64),
        "left": np.array(left, dtype=np.int64),
        "right": np.array(right, dtype=np.int64),
        "value": counts_arr / counts_arr.sum(axis=1, keepdims=True),
    }


def apply_tree(tree: dict[str, np.ndarray], X: np.ndarray) -> np.ndarray:
    """Leaf index reached by every row of X."""
    node = np.zeros(X.shape[0], dtype=np.int64)
    rows = np.arange(X.shape[0])
    feature, threshold, left, right = tree["feature"], tree["threshold"], tree["left"], tree["right"]
    active = left[node] >= 0
    while active.any():
        r, nd = rows[active], node[active]
        go_left = X[r, feature[nd]] <= threshold[nd]
        node[r] = np.where(go_left, left[nd], right[nd])
        active = left[node] >= 0
    return node


@register(AlgorithmId.CartTree)
class CartTree:
    hyperparameters = {"criterion": "gini", "max_depth": None, "min_leaf": 2}

    def fit(self, X, y, n_classes, rng):
        return grow_tree(X, y, n_classes, min_leaf=self.hyperparameters["min_leaf"])

    def scores(self, params, X):
        return params["value"][apply_tree(params, X)]


@register(AlgorithmId.DecisionStump)
class DecisionStump:
    hyperparameters = {"criterion": "gini", "max_depth": 1, "min_leaf": 1}

    def fit(self, X, y, n_classes, rng):
        return grow_tree(X, y, n_classes, min_leaf=1, max_depth=1)

    def scores(self, params, X):
        return params["value"][apply_tree(params, X)]


@register(AlgorithmId.RandomForest)
class RandomForest:
    hyperparameters = {"n_trees": 100, "max_features": "sqrt", "min_leaf": 1,
                       "max_depth": None, "bootstrap": True}

    def fit(self, X, y, n_classes, rng):
        n, d = X.shape
        mtry = max(1, int(math.isqrt(d)))
        trees = []
        for _ in range(self.hyperparameters["n_trees"]):
            boot = rng.integers(0, n, size=n)
            tree = grow_tree(X[boot], y[boot], n_classes, min_leaf=1, max_features=mtry, rng=rng)
            # only each leaf's vote matters for the forest
            trees.append({
                "feature": tree["feature"],
                "threshold": tree["threshold"],
                "left": tree["left"],
                "right": tree["right"],
                "vote": np.argmax(tree["value"], axis=1).astype(np.int64),
            })
        return {"trees": trees, "n_classes": int(n_classes)}

    def scores(self, params, X):
        k = params["n_classes"]
        votes = np.zeros((X.shape[0], k))
        rows = np.arange(X.shape[0])
        for tree in params["trees"]:
            votes[rows, tree["vote"][apply_tree(tree, X)]] += 1.0
        return votes / len(params["trees"])
