"""L1-penalized logistic regression, ridge-stabilized logistic regression, linear SVM."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import RadpipeError


@dataclass
class LinearModel:
    w: np.ndarray
    b: float
    kind: str  # "lasso" | "logistic" | "svm"

    def decision_function(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        return X @ self.w + self.b

    def predict(self, X: np.ndarray) -> np.ndarray:
        return (self.decision_function(X) > 0).astype(np.int64)


def _check_xy(X, y) -> tuple[np.ndarray, np.ndarray]:
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] != y.shape[0]:
        raise ValueError(f"X has shape {X.shape} but y has {y.shape[0]} entries")
    if X.shape[0] < 2 or len(np.unique(y)) < 2:
        raise RadpipeError("need at least two samples covering both classes")
    return X, y


def _softplus(z: np.ndarray) -> np.ndarray:
    return np.logaddexp(0.0, z)


def _sigmoid(z: np.ndarray) -> np.ndarray:
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def logistic_loss(X: np.ndarray, y: np.ndarray, w: np.ndarray, b: float) -> float:
    z = X @ w + b
    return float(np.mean(_softplus(z) - y * z))


def logistic_grad(X: np.ndarray, y: np.ndarray, w: np.ndarray, b: float) -> tuple[np.ndarray, float]:
    r = _sigmoid(X @ w + b) - y
    return X.T @ r / len(y), float(r.mean())


def _lipschitz_bound(X: np.ndarray) -> float:
    # 1/4 * largest eigenvalue of [X 1]^T [X 1] / n, bounded by the Frobenius norm.
    return 0.25 * (np.sum(X * X) / X.shape[0] + 1.0)


def _soft_threshold(v: np.ndarray, t: float) -> np.ndarray:
    return np.sign(v) * np.maximum(np.abs(v) - t, 0.0)


def lambda_max(X, y) -> float:
    """Smallest L1 weight at which the all-zero coefficient vector is optimal."""
    X, y = _check_xy(X, y)
    r = y.mean() - y
    return float(np.max(np.abs(X.T @ r / len(y)), initial=0.0))


def _intercept_only(y: np.ndarray) -> float:
    p = y.mean()
    return float(np.log(p / (1.0 - p)))


def fit_lasso(X, y, lam: float, tol: float = 1e-7, max_iter: int = 10_000,
              warm_start: LinearModel | None = None) -> LinearModel:
    """Minimize mean logistic loss + lam * ||w||_1 (intercept unpenalized).

    Accelerated proximal gradient with backtracking and function-value
    restarts. Stops once the largest coordinate change made by a proximal
    step falls below ``tol``.
    """
    X, y = _check_xy(X, y)
    if lam < 0:
        raise ValueError("lambda must be >= 0")
    n, p = X.shape
    if p == 0 or lam >= lambda_max(X, y):
        return LinearModel(np.zeros(p), _intercept_only(y), "lasso")

    def smooth(z):
        return float(np.mean(_softplus(z) - y * z))

    if warm_start is not None:
        w, b = warm_start.w.astype(np.float64).copy(), float(warm_start.b)
    else:
        w, b = np.zeros(p), _intercept_only(y)
    step = 1.0 / _lipschitz_bound(X)
    vw, vb = w.copy(), b
    theta = 1.0
    f_prev = smooth(X @ w + b) + lam * np.abs(w).sum()
    for _ in range(max_iter):
        zv = X @ vw + vb
        f_v = smooth(zv)
        r = _sigmoid(zv) - y
        gw, gb = X.T @ r / n, float(r.mean())
        while True:
            nw = _soft_threshold(vw - step * gw, step * lam)
            nb = vb - step * gb
            dw, db = nw - vw, nb - vb
            zn = X @ nw + nb
            f_n = smooth(zn)
            bound = f_v + gw @ dw + gb * db + (dw @ dw + db * db) / (2 * step)
            if f_n <= bound + 1e-15:
                break
            step *= 0.5
        change = max(np.max(np.abs(dw), initial=0.0), abs(db))
        f_new = f_n + lam * np.abs(nw).sum()
        if f_new > f_prev:
            # Momentum overshot: restart from the last iterate.
            vw, vb, theta = w.copy(), b, 1.0
            continue
        theta_next = 0.5 * (1 + np.sqrt(1 + 4 * theta * theta))
        mom = (theta - 1) / theta_next
        vw = nw + mom * (nw - w)
        vb = nb + mom * (nb - b)
        w, b, theta, f_prev = nw, nb, theta_next, f_new
        if change < tol:
            break
    return LinearModel(w, float(b), "lasso")


def kkt_residual(model: LinearModel, X, y, lam: float) -> float:
    """Largest violation of the Lasso optimality conditions."""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    gw, gb = logistic_grad(X, y, model.w, model.b)
    nz = model.w != 0
    viol = np.where(nz, np.abs(gw + lam * np.sign(model.w)), np.maximum(np.abs(gw) - lam, 0.0))
    return float(max(np.max(viol, initial=0.0), abs(gb)))


def select_features(model: LinearModel, threshold: float = 1e-10) -> list[int]:
    if model.kind != "lasso":
        raise ValueError(f"feature selection needs a lasso model, got {model.kind!r}")
    return [int(j) for j in np.flatnonzero(np.abs(model.w) > threshold)]


def fit_logistic(X, y, l2: float = 1e-4, tol: float = 1e-6, max_iter: int = 200_000) -> LinearModel:
    """Minimize mean logistic loss + l2 * ||w||^2 / 2 until the gradient norm is below ``tol``.

    Nesterov-accelerated full-batch gradient descent with backtracking and
    gradient-based restarts.
    """
    X, y = _check_xy(X, y)
    n, p = X.shape

    def f(w, b):
        return logistic_loss(X, y, w, b) + 0.5 * l2 * (w @ w)

    def grad(w, b):
        gw, gb = logistic_grad(X, y, w, b)
        return gw + l2 * w, gb

    w, b = np.zeros(p), _intercept_only(y)
    vw, vb = w.copy(), b
    theta = 1.0
    step = 1.0 / (_lipschitz_bound(X) + l2)
    for _ in range(max_iter):
        gw, gb = grad(vw, vb)
        if np.sqrt(gw @ gw + gb * gb) < tol:
            w, b = vw, vb
            break
        f_v = f(vw, vb)
        while True:
            nw, nb = vw - step * gw, vb - step * gb
            if f(nw, nb) <= f_v - 0.5 * step * (gw @ gw + gb * gb) + 1e-15:
                break
            step *= 0.5
        theta_next = 0.5 * (1 + np.sqrt(1 + 4 * theta * theta))
        mom = (theta - 1) / theta_next
        if gw @ (nw - w) + gb * (nb - b) > 0:
            theta_next, mom = 1.0, 0.0
        vw, vb = nw + mom * (nw - w), nb + mom * (nb - b)
        w, b, theta = nw, nb, theta_next
    return LinearModel(w, float(b), "logistic")


def svm_objective(X, y_pm, w, b, lam: float) -> float:
    X = np.asarray(X, dtype=np.float64)
    margins = y_pm * (X @ w + b)
    return float(0.5 * lam * (w @ w) + np.mean(np.maximum(0.0, 1.0 - margins)))


def _to_pm(y) -> np.ndarray:
    y = np.asarray(y)
    vals = set(np.unique(y).tolist())
    if vals <= {0, 1}:
        return np.where(y == 1, 1.0, -1.0)
    if vals <= {-1, 1}:
        return y.astype(np.float64)
    raise ValueError("SVM labels must be in {0, 1} or {-1, +1}")


def fit_svm(X, y, lam: float = 1e-2, epochs: int = 200, seed: int = 0) -> LinearModel:
    """Primal linear SVM by stochastic subgradient steps of size 1/(lam t).

    Each epoch visits every sample once in a seeded random order. Rows are
    put in a canonical order first, so the fit does not depend on how the
    caller ordered the samples. The returned model averages the iterates of
    the second half of training.
    """
    X = np.asarray(X, dtype=np.float64)
    y = _to_pm(y)
    if X.shape[0] != y.shape[0]:
        raise ValueError("X and y disagree on the number of samples")
    if len(np.unique(y)) < 2:
        raise RadpipeError("need samples from both classes")
    if lam <= 0:
        raise ValueError("lambda must be > 0")
    order = np.lexsort(np.column_stack([X, y]).T[::-1])
    X, y = X[order], y[order]
    n, p = X.shape
    rng = np.random.default_rng(seed)
    w = np.zeros(p)
    b = 0.0
    avg_w = np.zeros(p)
    avg_b = 0.0
    n_avg = 0
    total = epochs * n
    t = 0
    for _ in range(epochs):
        for i in rng.permutation(n):
            t += 1
            eta = 1.0 / (lam * t)
            xi, yi = X[i], y[i]
            viol = yi * (xi @ w + b) < 1.0
            w *= 1.0 - eta * lam
            if viol:
                w += (eta * yi) * xi
                b += eta * yi
            if 2 * t > total:
                n_avg += 1
                avg_w += (w - avg_w) / n_avg
                avg_b += (b - avg_b) / n_avg
    return LinearModel(avg_w, float(avg_b), "svm")


def fit_svm_reference(X, y, lam: float = 1e-2, iters: int = 5000,
                      scales=(0.25, 0.5, 1.0, 2.0, 4.0)) -> LinearModel:
    """Full-batch subgradient descent over a grid of step scales; keeps the best objective seen."""
    X = np.asarray(X, dtype=np.float64)
    y = _to_pm(y)
    best = (np.inf, np.zeros(X.shape[1]), 0.0)
    for scale in scales:
        w, b = np.zeros(X.shape[1]), 0.0
        for t in range(1, iters + 1):
            margins = y * (X @ w + b)
            active = margins < 1.0
            gw = lam * w - (X[active].T @ y[active]) / len(y)
            gb = -y[active].sum() / len(y)
            eta = scale / (lam * t)
            w = w - eta * gw
            b = b - eta * gb
            obj = svm_objective(X, y, w, b, lam)
            if obj < best[0]:
                best = (obj, w.copy(), b)
    return LinearModel(best[1], float(best[2]), "svm")
