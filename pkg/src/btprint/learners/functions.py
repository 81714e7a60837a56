"""Linear models and a one-hidden-layer perceptron.

All three standardise features internally with training-set statistics; the
scaling is part of the fitted parameters.
"""
from __future__ import annotations

import numpy as np
from scipy.special import expit, logsumexp

from .base import AlgorithmId, register


def _standardizer(X: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    mean = X.mean(axis=0)
    scale = X.std(axis=0)
    scale[scale < 1e-12] = 1.0
    return mean, scale


def _augment(Z: np.ndarray) -> np.ndarray:
    return np.hstack([Z, np.ones((Z.shape[0], 1))])


def _normalize_log(logp: np.ndarray) -> np.ndarray:
    return np.exp(logp - logsumexp(logp, axis=1, keepdims=True))


def _accelerated_descent(grad, w0: np.ndarray, step: float, n_iter: int) -> np.ndarray:
    """Nesterov's accelerated gradient with a fixed 1/L step."""
    w = w0.copy()
    v = w0.copy()
    t = 1.0
    for _ in range(n_iter):
        w_next = v - step * grad(v)
        t_next = (1.0 + np.sqrt(1.0 + 4.0 * t * t)) / 2.0
        v = w_next + ((t - 1.0) / t_next) * (w_next - w)
        w, t = w_next, t_next
    return w


def _ovr_targets(y: np.ndarray, n_classes: int) -> np.ndarray:
    return np.where(np.eye(n_classes)[y] > 0, 1.0, -1.0)


@register(AlgorithmId.LogisticRegression)
class LogisticRegression:
    hyperparameters = {"scheme": "one-vs-rest", "n_iter": 500, "l2": 1e-4}

    def fit(self, X, y, n_classes, rng):
        mean, scale = _standardizer(X)
        A = _augment((X - mean) / scale)
        T = _ovr_targets(y, n_classes)
        n = A.shape[0]
        lam = self.hyperparameters["l2"]
        lipschitz = np.linalg.norm(A, 2) ** 2 / (4.0 * n) + lam

        def grad(W):
            margins = T * (A @ W)
            G = -(A.T @ (T * expit(-margins))) / n
            G[:-1] += lam * W[:-1]
            return G

        W = _accelerated_descent(grad, np.zeros((A.shape[1], n_classes)), 1.0 / lipschitz,
                                 self.hyperparameters["n_iter"])
        return {"mean": mean, "scale": scale, "weights": W}

    def scores(self, params, X):
        Z = _augment((X - params["mean"]) / params["scale"]) @ params["weights"]
        # per-class log sigmoid, renormalised across the one-vs-rest models
        return _normalize_log(-np.logaddexp(0.0, -Z))


def platt_fit(f: np.ndarray, positive: np.ndarray, ridge: float = 1e-8,
              max_iter: int = 100) -> tuple[float, float]:
    """Sigmoid P(positive | f) = 1 / (1 + exp(a*f + b)) by damped Newton.

    Hard 0/1 targets with a small ridge on the slope, as Weka's SMO does when
    it fits logistic models to the SVM outputs; the ridge keeps ``a`` finite
    on separable data.
    """
    t = positive.astype(np.float64)
    n_pos = float(t.sum())
    n_neg = float(len(f) - n_pos)
    a, b = 0.0, float(np.log((n_neg + 1.0) / (n_pos + 1.0)))
    min_step, eps = 1e-10, 1e-7

    def objective(a_, b_):
        z = f * a_ + b_
        nll = t * np.logaddexp(0.0, z) + (1.0 - t) * np.logaddexp(0.0, -z)
        return float(nll.sum()) + 0.5 * ridge * a_ * a_

    fval = objective(a, b)
    for _ in range(max_iter):
        z = f * a + b
        p = expit(-z)
        d2 = p * (1.0 - p)
        h11 = ridge + float(np.dot(f * f, d2))
        h22 = 1e-12 + float(d2.sum())
        h21 = float(np.dot(f, d2))
        d1 = t - p
        g1, g2 = float(np.dot(f, d1)) + ridge * a, float(d1.sum())
        if abs(g1) < eps and abs(g2) < eps:
            break
        det = h11 * h22 - h21 * h21
        da = -(h22 * g1 - h21 * g2) / det
        db = -(-h21 * g1 + h11 * g2) / det
        gd = g1 * da + g2 * db
        step = 1.0
        while step >= min_step:
            na, nb = a + step * da, b + step * db
            nf = objective(na, nb)
            if nf < fval + 1e-4 * step * gd:
                a, b, fval = na, nb, nf
                break
            step /= 2.0
        else:
            break
    return a, b


@register(AlgorithmId.LinearSvmOvR)
class LinearSvmOvR:
    """One-vs-rest linear SVM (squared hinge) with Platt-scaled margins."""

    hyperparameters = {"scheme": "one-vs-rest", "n_iter": 500, "l2": 1e-3,
                       "loss": "squared_hinge", "calibration": "platt"}

    def fit(self, X, y, n_classes, rng):
        mean, scale = _standardizer(X)
        A = _augment((X - mean) / scale)
        T = _ovr_targets(y, n_classes)
        n = A.shape[0]
        lam = self.hyperparameters["l2"]
        lipschitz = 2.0 * np.linalg.norm(A, 2) ** 2 / n + lam

        def grad(W):
            slack = np.maximum(0.0, 1.0 - T * (A @ W))
            G = -2.0 * (A.T @ (T * slack)) / n
            G[:-1] += lam * W[:-1]
            return G

        W = _accelerated_descent(grad, np.zeros((A.shape[1], n_classes)), 1.0 / lipschitz,
                                 self.hyperparameters["n_iter"])
        F = A @ W
        platt = np.array([platt_fit(F[:, k], y == k) for k in range(n_classes)])
        return {"mean": mean, "scale": scale, "weights": W, "platt": platt}

    def scores(self, params, X):
        F = _augment((X - params["mean"]) / params["scale"]) @ params["weights"]
        z = F * params["platt"][:, 0][None, :] + params["platt"][:, 1][None, :]
        return _normalize_log(-np.logaddexp(0.0, z))


@register(AlgorithmId.MlpOneHidden)
class MlpOneHidden:
    """tanh hidden layer, softmax output, cross-entropy, Adam on mini-batches."""

    hyperparameters = {"hidden": 32, "epochs": 200, "step": 0.01, "batch_size": 32,
                       "optimizer": "adam", "activation": "tanh"}

    def fit(self, X, y, n_classes, rng):
        hp = self.hyperparameters
        mean, scale = _standardizer(X)
        Z = (X - mean) / scale
        n, d = Z.shape
        h = hp["hidden"]
        lim1, lim2 = np.sqrt(6.0 / (d + h)), np.sqrt(6.0 / (h + n_classes))
        params = [rng.uniform(-lim1, lim1, (d, h)), np.zeros(h),
                  rng.uniform(-lim2, lim2, (h, n_classes)), np.zeros(n_classes)]
        m = [np.zeros_like(p) for p in params]
        v = [np.zeros_like(p) for p in params]
        beta1, beta2, eps = 0.9, 0.999, 1e-8
        Y = np.eye(n_classes)[y]
        t = 0
        for _ in range(hp["epochs"]):
            order = rng.permutation(n)
            for start in range(0, n, hp["batch_size"]):
                b = order[start:start + hp["batch_size"]]
                W1, b1, W2, b2 = params
                H = np.tanh(Z[b] @ W1 + b1)
                P = _normalize_log(H @ W2 + b2)
                dO = (P - Y[b]) / len(b)
                dH = (dO @ W2.T) * (1.0 - H * H)
                grads = [Z[b].T @ dH, dH.sum(axis=0), H.T @ dO, dO.sum(axis=0)]
                t += 1
                for i, g in enumerate(grads):
                    m[i] = beta1 * m[i] + (1 - beta1) * g
                    v[i] = beta2 * v[i] + (1 - beta2) * g * g
                    mhat = m[i] / (1 - beta1 ** t)
                    vhat = v[i] / (1 - beta2 ** t)
                    params[i] = params[i] - hp["step"] * mhat / (np.sqrt(vhat) + eps)
        W1, b1, W2, b2 = params
        return {"mean": mean, "scale": scale, "W1": W1, "b1": b1, "W2": W2, "b2": b2}

    def scores(self, params, X):
        Z = (X - params["mean"]) / params["scale"]
        H = np.tanh(Z @ params["W1"] + params["b1"])
        return _normalize_log(H @ params["W2"] + params["b2"])
