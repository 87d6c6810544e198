"""SMOTE oversampling followed by edited-nearest-neighbour cleaning."""

from __future__ import annotations

import numpy as np


def _sq_dists(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    d = (A * A).sum(1)[:, None] + (B * B).sum(1)[None, :] - 2.0 * A @ B.T
    return np.maximum(d, 0.0)


def _neighbours(X: np.ndarray, k: int) -> np.ndarray:
    """Indices of the k nearest other rows (stable order on distance ties)."""
    d = _sq_dists(X, X)
    np.fill_diagonal(d, np.inf)
    return np.argsort(d, axis=1, kind="stable")[:, :k]


def smote(X, y, k: int = 5, seed: int = 0, gap: float | None = None):
    """Add minority samples on segments towards random minority neighbours.

    Enough synthetic points are drawn to equalize the class counts; the
    originals come first in the output. ``gap`` pins the interpolation
    position (0 = base point, 1 = neighbour) and is meant for tests.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y).astype(int)
    counts = np.bincount(y, minlength=2)
    minority = int(np.argmin(counts))
    n_new = int(counts.max() - counts.min())
    if n_new == 0:
        return X.copy(), y.copy()
    Xm = X[y == minority]
    if len(Xm) < 2:
        raise ValueError("SMOTE needs at least 2 minority samples")
    k = min(k, len(Xm) - 1)
    rng = np.random.default_rng(seed)
    nn = _neighbours(Xm, k)
    base = rng.integers(len(Xm), size=n_new)
    pick = nn[base, rng.integers(k, size=n_new)]
    u = rng.uniform(size=(n_new, 1)) if gap is None else np.full((n_new, 1), float(gap))
    synth = Xm[base] + u * (Xm[pick] - Xm[base])
    return np.vstack([X, synth]), np.concatenate([y, np.full(n_new, minority)])


def enn(X, y, k: int = 3):
    """Drop every point whose label disagrees with the majority of its k neighbours."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y).astype(int)
    if len(X) <= k:
        return X.copy(), y.copy()
    votes = y[_neighbours(X, k)].sum(axis=1)
    majority = (2 * votes > k).astype(int)
    # an even k can tie; a tie never removes a point
    tie = 2 * votes == k
    keep = (majority == y) | tie
    return X[keep], y[keep]


def smoteenn(X, y, seed: int = 0, k_smote: int = 5, k_enn: int = 3):
    """SMOTE then ENN, deterministic for a given seed."""
    Xs, ys = smote(X, y, k=k_smote, seed=seed)
    return enn(Xs, ys, k=k_enn)
