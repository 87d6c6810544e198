"""Salient-segment features: K-shape centroids, presence scores, RBF kernel PCA."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.spatial.distance import pdist

from .exceptions import ShapeError


def most_salient_segment(X, phi, L: int) -> np.ndarray:
    """Window of length ``L`` with the largest saliency averaged over leads and time.

    Ties resolve to the earliest start.
    """
    X = np.asarray(getattr(X, "values", X), dtype=float)
    phi = np.asarray(getattr(phi, "phi", phi), dtype=float)
    if phi.shape != X.shape:
        raise ShapeError(f"saliency {phi.shape} does not match record {X.shape}")
    if not 1 <= L <= X.shape[1]:
        raise ValueError(f"segment length {L} outside 1..{X.shape[1]}")
    col = phi.mean(axis=0)
    sums = sliding_window_view(col, L).sum(axis=-1)
    t = int(np.argmax(sums))
    return X[:, t:t + L].copy()


def znorm(x, axis=-1) -> np.ndarray:
    """Zero mean, unit (population) sd along ``axis``; constant rows become zeros."""
    x = np.asarray(x, dtype=float)
    mu = x.mean(axis=axis, keepdims=True)
    sd = x.std(axis=axis, keepdims=True)
    safe = np.where(sd > 0, sd, 1.0)
    return np.where(sd > 0, (x - mu) / safe, 0.0)


def _cross_corr(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """cc[..., s + m - 1] = sum_t a[t] b[t + s] for s in -(m-1)..(m-1)."""
    m = a.shape[-1]
    nfft = 1 << (2 * m - 1).bit_length()
    full = np.fft.irfft(np.fft.rfft(b, nfft) * np.conj(np.fft.rfft(a, nfft)), nfft)
    return np.concatenate([full[..., nfft - (m - 1):], full[..., :m]], axis=-1)


def _ncc(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Per-lead normalized cross-correlation; zero-norm leads give zeros."""
    na = np.linalg.norm(a, axis=-1)
    nb = np.linalg.norm(b, axis=-1)
    denom = na * nb
    cc = _cross_corr(a, b)
    with np.errstate(invalid="ignore", divide="ignore"):
        out = cc / denom[..., None]
    return np.where(denom[..., None] > 0, out, 0.0)


def sbd(a, b, max_shift: int | None = None) -> tuple[float, int]:
    """Shape-based distance ``1 - max_s NCC(a, b, s)`` and the maximizing shift.

    The shift ``s`` pairs ``a[t]`` with ``b[t + s]``. Zero-norm input gives
    distance 1 and shift 0. ``max_shift`` restricts the scan to ``|s| <= max_shift``.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape or a.ndim != 1:
        raise ShapeError("sbd takes two 1-D sequences of equal length")
    if not np.linalg.norm(a) or not np.linalg.norm(b):
        return 1.0, 0
    ncc = _ncc(a, b)
    return _best_shift(ncc, a.size, max_shift, n_leads=1)


def _best_shift(total: np.ndarray, m: int, max_shift, n_leads: int) -> tuple[float, int]:
    shifts = np.arange(-(m - 1), m)
    if max_shift is not None:
        keep = np.abs(shifts) <= max_shift
        total, shifts = total[keep], shifts[keep]
    i = int(np.argmax(total))
    return float(n_leads - total[i]), int(shifts[i])


def multilead_sbd(a, b, max_shift: int | None = None) -> tuple[float, int]:
    """Summed per-lead SBD at the single shift maximizing the summed NCC."""
    a = np.atleast_2d(np.asarray(a, dtype=float))
    b = np.atleast_2d(np.asarray(b, dtype=float))
    if a.shape != b.shape:
        raise ShapeError(f"shapes differ: {a.shape} vs {b.shape}")
    total = _ncc(a, b).sum(axis=0)
    return _best_shift(total, a.shape[1], max_shift, n_leads=a.shape[0])


def shift_series(x: np.ndarray, s: int) -> np.ndarray:
    """``out[t] = x[t + s]`` with zero fill."""
    out = np.zeros_like(x)
    m = x.shape[-1]
    if s >= 0:
        out[..., :m - s] = x[..., s:]
    else:
        out[..., -s:] = x[..., :m + s]
    return out


@dataclass
class ShapeCentroid:
    values: np.ndarray  # (n_leads, L_samples), z-normalized per lead
    L_seconds: float
    cluster_id: int
    member_count: int


@dataclass
class KShapeResult:
    centroids: list[ShapeCentroid]
    labels: np.ndarray
    objective_history: list[float] = field(default_factory=list)
    n_iter: int = 0
    converged: bool = False

    def __iter__(self):
        return iter(self.centroids)

    def __len__(self):
        return len(self.centroids)


def _extract_shape(members: np.ndarray, prev: np.ndarray) -> np.ndarray:
    """Centroid of z-normalized members (n, L, m) aligned to ``prev`` (L, m)."""
    if members.shape[0] == 0:
        return prev.copy()
    if np.any(prev):
        aligned = np.stack([shift_series(x, multilead_sbd(prev, x)[1]) for x in members])
    else:
        aligned = members
    aligned = znorm(aligned)
    n, L, m = aligned.shape
    out = np.zeros((L, m))
    for lead in range(L):
        Xl = aligned[:, lead, :]
        Xc = Xl - Xl.mean(axis=1, keepdims=True)  # X Q with Q the centring matrix
        if not np.any(Xc):
            continue
        _, _, vt = np.linalg.svd(Xc, full_matrices=False)
        c = vt[0]
        ref = prev[lead]
        if np.any(ref):
            if c @ ref < 0:
                c = -c
        elif (Xl @ c).sum() < 0:
            c = -c
        out[lead] = c
    return znorm(out)


def _assign(segments, centroids):
    d = np.array([[multilead_sbd(c, x)[0] for c in centroids] for x in segments])
    return d.argmin(axis=1), d


def _seeded_labels(X: np.ndarray, K: int, rng) -> np.ndarray:
    """Pick K seed segments by squared-distance sampling, label by nearest seed."""
    N = len(X)
    seeds = [int(rng.integers(N))]
    d = np.array([multilead_sbd(X[seeds[0]], x)[0] for x in X])
    for _ in range(1, K):
        w = np.maximum(d, 0.0) ** 2
        j = int(rng.choice(N, p=w / w.sum())) if w.sum() > 0 else int(rng.integers(N))
        seeds.append(j)
        d = np.minimum(d, [multilead_sbd(X[j], x)[0] for x in X])
    D = np.array([[multilead_sbd(X[i], x)[0] for i in seeds] for x in X])
    labels = D.argmin(axis=1)
    labels[seeds] = np.arange(K)  # every cluster starts non-empty
    return labels


def kshape_fit(segments, K: int, seed: int = 0, max_iter: int = 100,
               L_seconds: float = 1.0, init_labels=None, init: str = "++") -> KShapeResult:
    """K-shape clustering of multi-lead segments.

    Alternates centroid refinement and nearest-centroid assignment under
    the multi-lead shape-based distance until the assignment stops
    changing. Initial labels come from ``init_labels`` if given, else from
    distance-weighted seeding (``init="++"``) or a seeded random balanced
    assignment (``init="random"``).
    """
    X = znorm(np.asarray(segments, dtype=float))
    if X.ndim == 2:
        X = X[:, None, :]
    N = X.shape[0]
    if not 0 < K <= N:
        raise ValueError(f"K must lie in 1..{N}, got {K}")
    rng = np.random.default_rng(seed)
    if init_labels is None and init == "random":
        labels = rng.permutation(np.arange(N) % K)
    elif init_labels is None and init == "++":
        labels = _seeded_labels(X, K, rng)
    elif init_labels is None:
        raise ValueError(f"unknown init {init!r}")
    else:
        labels = np.asarray(init_labels, dtype=int).copy()
    cents = np.zeros((K,) + X.shape[1:])
    history: list[float] = []
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        cents = np.stack([_extract_shape(X[labels == k], cents[k]) for k in range(K)])
        new, d = _assign(X, cents)
        # reseed empty clusters with the worst-fitting points
        for k in range(K):
            if not np.any(new == k):
                own = d[np.arange(N), new]
                counts = np.bincount(new, minlength=K)
                for j in np.argsort(-own, kind="stable"):
                    if counts[new[j]] > 1:
                        new[j] = k
                        break
        history.append(float(d[np.arange(N), new].sum()))
        if np.array_equal(new, labels):
            converged = True
            break
        labels = new
    centroids = [
        ShapeCentroid(cents[k], L_seconds, k, int(np.sum(labels == k))) for k in range(K)
    ]
    return KShapeResult(centroids, labels, history, it, converged)


def presence(X, centroid, block: int = 512) -> float:
    """Minimum over offsets t of the entrywise L1 distance to ``centroid``."""
    X = np.atleast_2d(np.asarray(getattr(X, "values", X), dtype=float))
    C = np.atleast_2d(np.asarray(getattr(centroid, "values", centroid), dtype=float))
    if C.shape[0] != X.shape[0]:
        raise ShapeError(f"centroid has {C.shape[0]} leads, record has {X.shape[0]}")
    L = C.shape[1]
    if L > X.shape[1]:
        raise ValueError(f"centroid length {L} exceeds record length {X.shape[1]}")
    win = sliding_window_view(X, L, axis=1)  # (leads, n_windows, L)
    best = np.inf
    for start in range(0, win.shape[1], block):
        chunk = win[:, start:start + block, :]
        d = np.abs(chunk - C[:, None, :]).sum(axis=(0, 2))
        best = min(best, float(d.min()))
    return best


def presence_matrix(records, centroids) -> np.ndarray:
    """(N, K) presence of every centroid in every record."""
    return np.array([[presence(x, c) for c in centroids] for x in records])


@dataclass
class KPCAModel:
    mean: np.ndarray
    scale: np.ndarray
    train: np.ndarray  # standardized training rows
    gamma: float
    alphas: np.ndarray  # (N, K) eigenvectors / sqrt(eigenvalue)
    eigenvalues: np.ndarray
    train_projection: np.ndarray

    @property
    def n_components(self) -> int:
        return self.alphas.shape[1]


def rbf_kernel(A, B, gamma: float) -> np.ndarray:
    d = (A * A).sum(1)[:, None] + (B * B).sum(1)[None, :] - 2.0 * A @ B.T
    return np.exp(-gamma * np.maximum(d, 0.0))


def auto_gamma(Z: np.ndarray) -> float:
    """1 / (2 median^2) of pairwise distances; 1 when the median is zero."""
    if len(Z) < 2:
        return 1.0
    med = float(np.median(pdist(Z)))
    return 1.0 / (2.0 * med * med) if med > 0 else 1.0


def kpca_fit(F, gamma="auto", n_components: int | None = None) -> KPCAModel:
    """RBF kernel PCA on z-scored columns; as many components as columns by default."""
    F = np.atleast_2d(np.asarray(F, dtype=float))
    N, d = F.shape
    K = d if n_components is None else n_components
    if N < K:
        raise ValueError(f"need at least {K} rows, got {N}")
    mean = F.mean(axis=0)
    scale = F.std(axis=0)
    scale = np.where(scale > 0, scale, 1.0)
    Z = (F - mean) / scale
    if gamma == "auto":
        gamma = auto_gamma(Z)
    gamma = float(gamma)
    if gamma <= 0:
        raise ValueError("gamma must be positive")
    Kmat = rbf_kernel(Z, Z, gamma)
    one = np.full((N, N), 1.0 / N)
    Kc = Kmat - one @ Kmat - Kmat @ one + one @ Kmat @ one
    Kc = 0.5 * (Kc + Kc.T)
    vals, vecs = np.linalg.eigh(Kc)
    order = np.argsort(vals)[::-1][:K]
    vals, vecs = vals[order], vecs[:, order]
    # deterministic sign: largest-magnitude entry positive
    flip = np.sign(vecs[np.argmax(np.abs(vecs), axis=0), np.arange(K)])
    vecs = vecs * np.where(flip == 0, 1.0, flip)
    alphas = np.zeros_like(vecs)
    good = vals > 1e-12 * max(vals.max(), 1e-300)
    alphas[:, good] = vecs[:, good] / np.sqrt(vals[good])
    model = KPCAModel(mean, scale, Z, gamma, alphas, vals, np.zeros((N, K)))
    model.train_projection = kpca_transform(model, F)
    return model


def kpca_transform(model: KPCAModel, F) -> np.ndarray:
    F = np.atleast_2d(np.asarray(F, dtype=float))
    Z = (F - model.mean) / model.scale
    Ktr = rbf_kernel(model.train, model.train, model.gamma)
    Knew = rbf_kernel(Z, model.train, model.gamma)
    col_mean = Ktr.mean(axis=0)
    Kc = Knew - col_mean[None, :] - Knew.mean(axis=1, keepdims=True) + Ktr.mean()
    return Kc @ model.alphas


@dataclass
class FeatureSet:
    presence: np.ndarray  # (N, K)
    kpca: np.ndarray  # (N, K)
    model: KPCAModel


def extract_features(records, centroids, kpca_model: KPCAModel | None = None) -> FeatureSet:
    """Presence of every centroid, then the RBF-KPCA projection.

    Without ``kpca_model`` one is fitted on these records (use this only on
    the training portion and pass the model for every other portion).
    """
    centroids = list(centroids)
    if not centroids:
        raise ValueError("no centroids given")
    P = presence_matrix(records, centroids)
    if kpca_model is None:
        kpca_model = kpca_fit(P)
        proj = kpca_model.train_projection
    else:
        proj = kpca_transform(kpca_model, P)
    return FeatureSet(P, proj, kpca_model)
