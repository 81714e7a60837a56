from __future__ import annotations

import numpy as np
from scipy.special import logsumexp

from .base import AlgorithmId, register


def _softmax_rows(logits: np.ndarray) -> np.ndarray:
    return np.exp(logits - logsumexp(logits, axis=1, keepdims=True))


@register(AlgorithmId.GaussianNaiveBayes)
class GaussianNaiveBayes:
    """Per-class, per-bin normal likelihoods.

    Variances get ``var_smoothing`` times the largest feature variance added,
    so bins that are constant inside a class do not produce zero variance.
    """

    hyperparameters = {"var_smoothing": 1e-9}

    def fit(self, X, y, n_classes, rng):
        eps = self.hyperparameters["var_smoothing"] * max(float(X.var(axis=0).max()), 1e-300)
        means = np.zeros((n_classes, X.shape[1]))
        variances = np.zeros((n_classes, X.shape[1]))
        priors = np.zeros(n_classes)
        for k in range(n_classes):
            Xk = X[y == k]
            means[k] = Xk.mean(axis=0)
            variances[k] = Xk.var(axis=0) + eps
            priors[k] = len(Xk) / len(X)
        return {"mean": means, "var": variances, "log_prior": np.log(priors)}

    def scores(self, params, X):
        mean, var = params["mean"], params["var"]
        ll = -0.5 * (np.log(2 * np.pi * var)[None, :, :]
                     + (X[:, None, :] - mean[None, :, :]) ** 2 / var[None, :, :]).sum(axis=2)
        return _softmax_rows(ll + params["log_prior"][None, :])


@register(AlgorithmId.MultinomialNaiveBayes)
class MultinomialNaiveBayes:
    """Bins as word counts: a signature counts ``pseudo_count`` draws spread over its bins."""

    hyperparameters = {"alpha": 1.0, "pseudo_count": 300.0}

    def fit(self, X, y, n_classes, rng):
        alpha = self.hyperparameters["alpha"]
        counts = X * self.hyperparameters["pseudo_count"]
        log_theta = np.zeros((n_classes, X.shape[1]))
        priors = np.zeros(n_classes)
        for k in range(n_classes):
            ck = counts[y == k].sum(axis=0) + alpha
            log_theta[k] = np.log(ck) - np.log(ck.sum())
            priors[k] = np.count_nonzero(y == k) / len(y)
        return {"log_theta": log_theta, "log_prior": np.log(priors)}

    def scores(self, params, X):
        counts = X * self.hyperparameters["pseudo_count"]
        return _softmax_rows(counts @ params["log_theta"].T + params["log_prior"][None, :])
