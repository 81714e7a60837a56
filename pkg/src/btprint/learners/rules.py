from __future__ import annotations

import numpy as np

from .base import AlgorithmId, register


def _one_hot_scores(labels: np.ndarray, n_classes: int) -> np.ndarray:
    return np.eye(n_classes)[labels]


def _oner_buckets(values: np.ndarray, y: np.ndarray, n_classes: int, min_bucket: int):
    """Holte's interval rule for one numeric feature.

    Returns (thresholds, bucket_labels, training_errors).
    """
    order = np.argsort(values, kind="stable")
    v, c = values[order], y[order]
    uniq, starts = np.unique(v, return_index=True)
    ends = np.append(starts[1:], len(v))
    groups = [np.bincount(c[s:e], minlength=n_classes) for s, e in zip(starts, ends)]

    buckets = []   # (first group, last group, counts)
    i, m = 0, len(groups)
    while i < m:
        counts = np.zeros(n_classes, dtype=np.int64)
        first = i
        while i < m:
            counts += groups[i]
            i += 1
            if counts.max() >= min_bucket:
                major = int(np.argmax(counts))
                # absorb following groups made only of the majority class
                while i < m and groups[i].sum() == groups[i][major]:
                    counts += groups[i]
                    i += 1
                break
        buckets.append([first, i - 1, counts])

    merged = [buckets[0]]
    for b in buckets[1:]:
        if int(np.argmax(b[2])) == int(np.argmax(merged[-1][2])):
            merged[-1][1] = b[1]
            merged[-1][2] = merged[-1][2] + b[2]
        else:
            merged.append(b)

    thresholds = np.array([(uniq[a[1]] + uniq[b[0]]) / 2.0 for a, b in zip(merged, merged[1:])])
    labels = np.array([int(np.argmax(b[2])) for b in merged], dtype=np.int64)
    errors = int(sum(b[2].sum() - b[2].max() for b in merged))
    return thresholds, labels, errors


@register(AlgorithmId.OneR)
class OneR:
    """Single-feature interval rule, picked by training error."""

    hyperparameters = {"min_bucket": 6}

    def fit(self, X, y, n_classes, rng):
        best = None
        for j in range(X.shape[1]):
            thresholds, labels, errors = _oner_buckets(X[:, j], y, n_classes,
                                                       self.hyperparameters["min_bucket"])
            if best is None or errors < best[0]:
                best = (errors, j, thresholds, labels)
        _, j, thresholds, labels = best
        return {"feature": int(j), "thresholds": thresholds.astype(np.float64),
                "labels": labels, "n_classes": int(n_classes)}

    def scores(self, params, X):
        bucket = np.searchsorted(params["thresholds"], X[:, params["feature"]], side="left")
        return _one_hot_scores(params["labels"][bucket], params["n_classes"])


def _bins(values: np.ndarray, thresholds: np.ndarray) -> np.ndarray:
    # bin = number of thresholds strictly below the value
    return np.searchsorted(thresholds, values, side="left")


def _loo_accuracy(keys: np.ndarray, y: np.ndarray, n_classes: int) -> float:
    """Leave-one-out accuracy of a lookup table keyed by ``keys``."""
    cells, inv = np.unique(keys, return_inverse=True)
    counts = np.zeros((len(cells), n_classes), dtype=np.int64)
    np.add.at(counts, (inv, y), 1)
    rows = np.arange(len(y))
    own = counts[inv]
    own[rows, y] -= 1
    glob = np.bincount(y, minlength=n_classes)[None, :] - np.eye(n_classes, dtype=np.int64)[y]
    pred = np.where(own.sum(axis=1) > 0, np.argmax(own, axis=1), np.argmax(glob, axis=1))
    return float(np.mean(pred == y))


@register(AlgorithmId.DecisionTable)
class DecisionTable:
    """Lookup table over a greedily chosen feature subset.

    Each feature is cut at its training quartiles; features are added one at
    a time while leave-one-out accuracy of the table improves. Unseen cells
    back off to shorter prefixes of the subset, then to the majority class.
    """

    hyperparameters = {"bins": 4, "max_features": 6, "search": "greedy-forward",
                       "evaluation": "leave-one-out"}

    def fit(self, X, y, n_classes, rng):
        k = self.hyperparameters["bins"]
        qs = np.arange(1, k) / k
        cuts = [np.unique(np.quantile(X[:, j], qs)) for j in range(X.shape[1])]
        binned = np.column_stack([_bins(X[:, j], cuts[j]) for j in range(X.shape[1])])

        selected: list[int] = []
        keys = np.zeros(len(y), dtype=np.int64)
        score = _loo_accuracy(keys, y, n_classes)
        while len(selected) < self.hyperparameters["max_features"]:
            best_j, best_score = None, score
            for j in range(X.shape[1]):
                if j in selected or len(cuts[j]) == 0:
                    continue
                s = _loo_accuracy(keys * k + binned[:, j], y, n_classes)
                if s > best_score:
                    best_j, best_score = j, s
            if best_j is None:
                break
            selected.append(best_j)
            keys = keys * k + binned[:, best_j]
            score = best_score

        params = {"features": np.array(selected, dtype=np.int64),
                  "default": int(np.argmax(np.bincount(y, minlength=n_classes))),
                  "n_classes": int(n_classes),
                  "cuts": [cuts[j] for j in selected], "tables": []}
        prefix = np.zeros(len(y), dtype=np.int64)
        for col in selected:
            prefix = prefix * k + binned[:, col]
            cells, inv = np.unique(prefix, return_inverse=True)
            counts = np.zeros((len(cells), n_classes), dtype=np.int64)
            np.add.at(counts, (inv, y), 1)
            params["tables"].append({"keys": cells.astype(np.int64),
                                     "labels": np.argmax(counts, axis=1).astype(np.int64)})
        return params

    def scores(self, params, X):
        k = self.hyperparameters["bins"]
        labels = np.full(X.shape[0], params["default"], dtype=np.int64)
        prefix = np.zeros(X.shape[0], dtype=np.int64)
        for col, cut, table in zip(params["features"], params["cuts"], params["tables"]):
            prefix = prefix * k + _bins(X[:, col], cut)
            pos = np.searchsorted(table["keys"], prefix)
            pos_c = np.minimum(pos, len(table["keys"]) - 1)
            hit = table["keys"][pos_c] == prefix
            # a deeper match overrides the shallower one; a miss keeps the back-off
            labels = np.where(hit, table["labels"][pos_c], labels)
        return _one_hot_scores(labels, params["n_classes"])
