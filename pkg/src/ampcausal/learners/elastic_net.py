from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import DataError


@dataclass
class LinearModel:
    intercept: float
    coefficients: np.ndarray
    lam: float
    alpha_mix: float
    converged: bool = True
    n_iter: int = 0
    objective_history: list[float] = field(default_factory=list)

    def predict(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.ndim != 2 or X.shape[1] != self.coefficients.shape[0]:
            raise DataError(f"expected {self.coefficients.shape[0]} features, got shape {X.shape}")
        return self.intercept + X @ self.coefficients


def soft_threshold(z: float, gamma: float) -> float:
    if z > gamma:
        return z - gamma
    if z < -gamma:
        return z + gamma
    return 0.0


def elastic_net_objective(X, y, intercept, beta, lam, alpha_mix) -> float:
    r = y - intercept - X @ beta
    n = X.shape[0]
    penalty = lam * (alpha_mix * np.abs(beta).sum() + 0.5 * (1.0 - alpha_mix) * beta @ beta)
    return float(r @ r / (2 * n) + penalty)


def fit_elastic_net(
    X,
    y,
    lam: float = 1e-3,
    alpha_mix: float = 0.5,
    tol: float = 1e-10,
    max_iter: int = 10_000,
    fit_intercept: bool = True,
) -> LinearModel:
    """Cyclic coordinate descent on

        (1/2n)||y - b0 - X b||^2 + lam * (alpha_mix ||b||_1 + (1 - alpha_mix)/2 ||b||_2^2)

    with an unpenalised intercept. Stops when the largest coefficient change
    in a sweep drops below ``tol``; hitting ``max_iter`` sets ``converged=False``.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if X.ndim != 2 or y.ndim != 1 or X.shape[0] != y.shape[0] or X.shape[0] < 1 or X.shape[1] < 1:
        raise DataError(f"incompatible shapes X{X.shape}, y{y.shape}")
    if not (np.isfinite(X).all() and np.isfinite(y).all()):
        raise DataError("non-finite values in elastic-net input")
    if lam < 0 or not 0.0 <= alpha_mix <= 1.0:
        raise ValueError("need lam >= 0 and alpha_mix in [0, 1]")

    n, p = X.shape
    if fit_intercept:
        x_mean, y_mean = X.mean(axis=0), y.mean()
    else:
        x_mean, y_mean = np.zeros(p), 0.0
    Xc = X - x_mean
    yc = y - y_mean
    col_sq = (Xc * Xc).sum(axis=0) / n
    l1 = lam * alpha_mix
    l2 = lam * (1.0 - alpha_mix)

    beta = np.zeros(p)
    resid = yc.copy()
    history = [elastic_net_objective(Xc, yc, 0.0, beta, lam, alpha_mix)]
    converged = False
    sweeps = 0
    for sweeps in range(1, max_iter + 1):
        max_step = 0.0
        for j in range(p):
            denom = col_sq[j] + l2
            if denom == 0.0:
                continue
            old = beta[j]
            rho = Xc[:, j] @ resid / n + col_sq[j] * old
            new = soft_threshold(rho, l1) / denom
            if new != old:
                resid -= Xc[:, j] * (new - old)
                beta[j] = new
                max_step = max(max_step, abs(new - old))
        history.append(elastic_net_objective(Xc, yc, 0.0, beta, lam, alpha_mix))
        if max_step < tol:
            converged = True
            break
    intercept = float(y_mean - x_mean @ beta) if fit_intercept else 0.0
    return LinearModel(intercept, beta, lam, alpha_mix, converged, sweeps, history)
