"""Chi-squared saliency maps and ROAR occlusion curves."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import erfc

from .convnet import Conv1DNet, model_forward, predict
from .evalmetrics import auroc
from .exceptions import ShapeError
from .inversion import reconstruct


@dataclass
class SaliencyMap:
    phi: np.ndarray
    sigma_hat: float


def chi2_survival(z) -> np.ndarray:
    """P(chi2_1 > z^2) = erfc(|z| / sqrt 2)."""
    return erfc(np.abs(np.asarray(z, dtype=float)) / math.sqrt(2.0))


def saliency_map(X, X_rec) -> SaliencyMap:
    """Survival probability of the standardized reconstruction discrepancy.

    One noise scale is estimated over every lead and sample of the record
    (``ddof=1`` sum of squares). Values near 1 mark samples the network
    carried through to its deepest layer.
    """
    X = np.asarray(X, dtype=float)
    X_rec = np.asarray(X_rec, dtype=float)
    if X.shape != X_rec.shape:
        raise ShapeError(f"record {X.shape} and reconstruction {X_rec.shape} differ")
    diff = X - X_rec
    n = diff.size
    sigma = math.sqrt(float(np.sum(diff * diff)) / (n - 1)) if n > 1 else 0.0
    if sigma == 0.0:
        return SaliencyMap(np.ones_like(X), 0.0)
    return SaliencyMap(chi2_survival(diff / sigma), sigma)


def instance_saliency(net: Conv1DNet, x, fill: str = "zero") -> tuple[SaliencyMap, np.ndarray]:
    """Forward, invert and score one record; returns the map and the reconstruction."""
    values = np.asarray(getattr(x, "values", x), dtype=float)
    _, trace = model_forward(net, values)
    rec = reconstruct(net, trace, fill)
    return saliency_map(values, rec), rec


def occlude(X, phi, fraction: float, mode: str = "salient", seed: int = 0):
    """Zero the ``ceil(fraction * N)`` most salient (or random) entries.

    Salient ranking is global over the record, largest phi first, ties in
    row-major position order. Accepts a :class:`TimeSeriesInstance` or an
    array; returns the same kind.
    """
    if not 0.0 <= fraction <= 1.0:
        raise ValueError(f"fraction must lie in [0, 1], got {fraction}")
    values = np.asarray(getattr(X, "values", X), dtype=float)
    phi = np.asarray(getattr(phi, "phi", phi), dtype=float)
    if phi.shape != values.shape:
        raise ShapeError(f"saliency {phi.shape} does not match record {values.shape}")
    N = values.size
    k = math.ceil(fraction * N - 1e-12)
    if mode == "salient":
        order = np.argsort(-phi.ravel(), kind="stable")[:k]
    elif mode == "random":
        order = np.random.default_rng(seed).choice(N, size=k, replace=False)
    else:
        raise ValueError(f"mode must be 'salient' or 'random', got {mode!r}")
    out = values.copy().ravel()
    out[order] = 0.0
    out = out.reshape(values.shape)
    if hasattr(X, "with_values"):
        return X.with_values(out)
    return out


def roar_curve(net: Conv1DNet, X, y, fractions, maps=None, seed: int = 0) -> list[dict]:
    """AUROC of the fixed net on occluded copies, salient vs random, per fraction.

    ``maps`` may carry precomputed saliency arrays (one per record).
    """
    X = np.asarray(getattr(X, "values", X), dtype=float)
    y = np.asarray(y).astype(int)
    if len(X) == 0:
        raise ValueError("empty dataset part")
    if maps is None:
        maps = [instance_saliency(net, x)[0].phi for x in X]
    rows = []
    for fi, frac in enumerate(fractions):
        sal = np.stack([occlude(x, m, frac, "salient") for x, m in zip(X, maps)])
        rnd = np.stack([occlude(x, m, frac, "random", seed=seed + 7919 * fi + i)
                        for i, (x, m) in enumerate(zip(X, maps))])
        rows.append({
            "fraction": float(frac),
            "auroc_salient": auroc(predict(net, sal), y),
            "auroc_random": auroc(predict(net, rnd), y),
        })
    return rows
