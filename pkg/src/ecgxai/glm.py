"""Ridge logistic regression, permutation importance, Spearman rank correlation, nested LRT."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import stats
from scipy.special import expit

from .exceptions import ShapeError, UndefinedMetricError

DEV_TOL = 1e-8
GRAD_TOL = 1e-8
MAX_ITER = 100


@dataclass
class LRModel:
    weights: np.ndarray
    intercept: float
    lambda_ridge: float
    feature_names: list[str] = field(default_factory=list)
    converged: bool = True
    n_iter: int = 0

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=float)
        if not self.feature_names:
            self.feature_names = [f"x{j}" for j in range(self.weights.size)]
        if len(self.feature_names) != self.weights.size:
            raise ShapeError("one feature name per weight required")
        if not np.all(np.isfinite(self.weights)) or not math.isfinite(self.intercept):
            raise ValueError("non-finite logistic regression coefficients")

    @property
    def n_features(self) -> int:
        return self.weights.size

    def to_dict(self) -> dict:
        return {
            "weights": self.weights.tolist(),
            "intercept": self.intercept,
            "lambda_ridge": self.lambda_ridge,
            "feature_names": list(self.feature_names),
            "converged": self.converged,
            "n_iter": self.n_iter,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "LRModel":
        return cls(np.asarray(d["weights"]), float(d["intercept"]), float(d["lambda_ridge"]),
                   list(d["feature_names"]), bool(d.get("converged", True)), int(d.get("n_iter", 0)))


def _check(F, y=None):
    F = np.asarray(F, dtype=float)
    if F.ndim == 1:
        F = F[:, None]
    if y is None:
        return F
    y = np.asarray(y, dtype=float).ravel()
    if len(y) != len(F):
        raise ShapeError(f"{len(F)} feature rows but {len(y)} labels")
    return F, y


def log_likelihood(w: np.ndarray, b: float, F, y) -> float:
    """Bernoulli log-likelihood, computed stably from the logits."""
    z = F @ w + b
    return float(np.sum(y * z - np.logaddexp(0.0, z)))


def _penalized_grad(w, b, F, y, lam):
    r = y - expit(F @ w + b)
    return np.concatenate([F.T @ r - lam * w, [r.sum()]])


def lr_fit(F, y, lam: float = 1.0, feature_names=None, max_iter: int = MAX_ITER) -> LRModel:
    """Maximize ``loglik(w, b) - lam/2 ||w||^2`` by Newton (IRLS) steps.

    The intercept is not penalized. Iteration stops once the deviance
    changes by less than 1e-8 and the gradient is below 1e-8, or after
    ``max_iter`` steps, in which case a warning is raised and the model is
    flagged as not converged.
    """
    F, y = _check(F, y)
    N, d = F.shape
    if lam < 0:
        raise ValueError("ridge penalty must be non-negative")
    if lam == 0 and N <= d:
        raise ValueError(f"unpenalized fit needs more rows than features ({N} <= {d})")
    A = np.hstack([F, np.ones((N, 1))])
    pen = np.full(d + 1, float(lam))
    pen[-1] = 0.0
    theta = np.zeros(d + 1)
    dev = -2.0 * log_likelihood(theta[:d], theta[d], F, y) + lam * theta[:d] @ theta[:d]
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        p = expit(A @ theta)
        W = p * (1.0 - p)
        grad = A.T @ (y - p) - pen * theta
        H = (A * W[:, None]).T @ A + np.diag(pen)
        try:
            step = np.linalg.solve(H, grad)
        except np.linalg.LinAlgError:
            step = np.linalg.lstsq(H, grad, rcond=None)[0]
        # halve the step until the penalized deviance does not grow
        for _ in range(30):
            cand = theta + step
            new_dev = -2.0 * log_likelihood(cand[:d], cand[d], F, y) + lam * cand[:d] @ cand[:d]
            if new_dev <= dev + 1e-12 * max(1.0, abs(dev)):
                break
            step = step / 2.0
        theta = cand
        change = abs(dev - new_dev)
        dev = new_dev
        g = _penalized_grad(theta[:d], theta[d], F, y, lam)
        if change < DEV_TOL and np.max(np.abs(g)) < GRAD_TOL:
            converged = True
            break
    if not converged:
        warnings.warn(f"IRLS did not converge in {max_iter} iterations", RuntimeWarning)
    names = list(feature_names) if feature_names is not None else None
    return LRModel(theta[:d].copy(), float(theta[d]), float(lam), names or [], converged, it)


def lr_predict(model: LRModel, F) -> np.ndarray | float:
    """``sigmoid(w . f + b)`` for one feature vector or a matrix of rows."""
    F = np.asarray(F, dtype=float)
    single = F.ndim == 1
    F2 = F[None, :] if single else F
    if F2.shape[1] != model.n_features:
        raise ShapeError(f"model has {model.n_features} features, input has {F2.shape[1]}")
    p = expit(F2 @ model.weights + model.intercept)
    return float(p[0]) if single else p


def log_loss(model: LRModel, F, y) -> float:
    F, y = _check(F, y)
    return -log_likelihood(model.weights, model.intercept, F, y) / len(y)


def permutation_importance(model: LRModel, F, y, repeats: int = 10, seed: int = 0) -> np.ndarray:
    """Mean relative increase in log-loss when one column is shuffled."""
    F, y = _check(F, y)
    base = log_loss(model, F, y)
    rng = np.random.default_rng(seed)
    out = np.zeros(F.shape[1])
    for j in range(F.shape[1]):
        acc = 0.0
        for _ in range(repeats):
            Fp = F.copy()
            Fp[:, j] = F[rng.permutation(len(F)), j]
            acc += (log_loss(model, Fp, y) - base) / base
        out[j] = acc / repeats
    return out


def spearman(x, y) -> tuple[float, float]:
    """Rank correlation with mid-ranks and a two-sided t-approximation p-value."""
    x = np.asarray(x, dtype=float).ravel()
    y = np.asarray(y, dtype=float).ravel()
    if x.size != y.size:
        raise ShapeError("x and y differ in length")
    n = x.size
    if n < 3:
        raise ValueError("spearman needs at least 3 pairs")
    rx, ry = stats.rankdata(x), stats.rankdata(y)
    if np.ptp(rx) == 0 or np.ptp(ry) == 0:
        raise UndefinedMetricError("spearman undefined for constant input")
    rho = float(np.clip(np.corrcoef(rx, ry)[0, 1], -1.0, 1.0))
    if abs(rho) >= 1.0:
        return rho, 0.0
    t = rho * math.sqrt((n - 2) / (1.0 - rho * rho))
    return rho, float(2.0 * stats.t.sf(abs(t), n - 2))


def _columns(model: LRModel, names: list[str]) -> list[int]:
    index = {n: i for i, n in enumerate(names)}
    missing = [n for n in model.feature_names if n not in index]
    if missing:
        raise ValueError(f"features {missing} not present in the feature table")
    return [index[n] for n in model.feature_names]


def lrt(model_reduced: LRModel, model_full: LRModel, F, y, alpha: float = 0.05,
        n_tests: int = 5, feature_names=None) -> dict:
    """Likelihood-ratio test of nested logistic models with a chi-squared(2) reference.

    ``F`` holds every column used by either model; ``feature_names`` labels
    them (defaults to the full model's names). The statistic is clamped at
    zero and the Bonferroni level is ``alpha / n_tests``.
    """
    F, y = _check(F, y)
    names = list(feature_names) if feature_names is not None else list(model_full.feature_names)
    if not set(model_reduced.feature_names) <= set(model_full.feature_names):
        raise ValueError("reduced model features are not a subset of the full model's")
    cr, cf = _columns(model_reduced, names), _columns(model_full, names)
    ll_r = log_likelihood(model_reduced.weights, model_reduced.intercept, F[:, cr], y)
    ll_f = log_likelihood(model_full.weights, model_full.intercept, F[:, cf], y)
    lam = max(0.0, 2.0 * (ll_f - ll_r))
    p = chi2_2_survival(lam)
    return {"lambda_lr": lam, "p_value": p, "reject": bool(p < alpha / n_tests),
            "loglik_reduced": ll_r, "loglik_full": ll_f}


def chi2_2_survival(x: float) -> float:
    return math.exp(-max(float(x), 0.0) / 2.0)


def nested_lrt(F_reduced, F_extra, y, alpha: float = 0.05, n_tests: int = 5) -> dict:
    """Fit both nested models unpenalized on the same rows and test them."""
    Fr = _check(F_reduced)
    Fe = _check(F_extra)
    dr, de = Fr.shape[1], Fe.shape[1]
    names = [f"f{j}" for j in range(dr)] + [f"extra{j}" for j in range(de)]
    full_F = np.hstack([Fr, Fe])
    reduced = lr_fit(Fr, y, 0.0, names[:dr])
    full = lr_fit(full_F, y, 0.0, names)
    return lrt(reduced, full, full_F, y, alpha, n_tests)
