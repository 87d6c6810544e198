"""Deconvolutional inversion of the CNN block stack.

Reconstruction starts at the deepest pooled maps and undoes each block in
reverse: switch unpooling, ReLU used as its own inverse, transposed
convolution with the trained kernel.
"""

from __future__ import annotations

import numpy as np

from .convnet import Conv1DLayer, Conv1DNet, ForwardTrace, conv1d_transpose
from .exceptions import ShapeError


def _unpool_row(p: np.ndarray, s: np.ndarray, length: int, fill: str) -> np.ndarray:
    m = p.size
    pos = 2 * np.arange(m) + s
    if fill == "zero":
        out = np.zeros(2 * m)
        out[pos] = p
        return out[:length]
    out = np.interp(np.arange(2 * m), pos, p)
    out[pos] = p
    hi = np.repeat(np.maximum(p, 0.0), 2)
    free = np.ones(2 * m, dtype=bool)
    free[pos] = False
    out[free] = np.clip(out[free], 0.0, hi[free])
    return out[:length]


FILLS = ("zero", "interp")


def unpool(pooled, switches, target_len: int, fill: str = "zero") -> np.ndarray:
    """Put each pooled value back at its recorded maximum position.

    With ``fill="zero"`` the other sample of every pair is zero. With
    ``fill="interp"`` it is linearly interpolated between the neighbouring
    placed maxima (nearest value at the edges) and clamped to
    ``[0, max(pooled value of its pair, 0)]``. ``target_len`` may be one
    short of ``2 * m`` when the forward pass padded an odd length.
    """
    if fill not in FILLS:
        raise ValueError(f"fill must be one of {FILLS}, got {fill!r}")
    p = np.asarray(pooled, dtype=float)
    s = np.asarray(switches)
    if p.shape != s.shape:
        raise ShapeError(f"pooled {p.shape} and switches {s.shape} differ")
    if s.size and not np.isin(s, (0, 1)).all():
        raise ValueError("switch values must be 0 or 1")
    m = p.shape[-1]
    if target_len not in (2 * m, 2 * m - 1):
        raise ShapeError(f"target length {target_len} incompatible with {m} pooled samples")
    flat_p = p.reshape(-1, m)
    flat_s = s.reshape(-1, m)
    out = np.stack([_unpool_row(pp, ss, target_len, fill) for pp, ss in zip(flat_p, flat_s)])
    return out.reshape(*p.shape[:-1], target_len)


def inverse_relu(x) -> np.ndarray:
    return np.maximum(np.asarray(x, dtype=float), 0.0)


def transpose_conv1d(g, layer: Conv1DLayer) -> np.ndarray:
    """Transposed convolution; the exact adjoint of the forward convolution."""
    return conv1d_transpose(g, layer)


def reconstruct(net: Conv1DNet, trace: ForwardTrace, fill: str = "zero") -> np.ndarray:
    """Map the deepest pooled maps of ``trace`` back to input space.

    ``fill`` chooses how unpooling treats the non-maximum sample of each pair
    (see :func:`unpool`).
    Returns an array with the input's shape: ``(n_leads, n_samples)`` for a
    single-record trace, else ``(batch, n_leads, n_samples)``.
    """
    if len(trace.blocks) != len(net.layers):
        raise ShapeError(f"trace has {len(trace.blocks)} blocks, net has {len(net.layers)}")
    h = trace.blocks[-1].pooled
    for layer, bt in zip(reversed(net.layers), reversed(trace.blocks)):
        if bt.pooled.shape != h.shape or bt.pre.shape[1] != layer.out_features:
            raise ShapeError("trace does not match the net")
        h = unpool(h, bt.switches, bt.activated.shape[-1], fill)
        h = inverse_relu(h)
        h = transpose_conv1d(h, layer)
    h = h[..., :trace.n_samples]
    return h[0] if h.shape[0] == 1 else h


def per_tap_orthogonal_kernel(n_features: int, taps: int, rng) -> np.ndarray:
    """Random kernel for which transposed convolution exactly inverts convolution.

    Output channels are ``taps * n_features``: each tap writes through its own
    orthogonal block into a private output subspace, followed by a random
    rotation. Then ``sum_r W_r^T W_{r+d} = delta_{d,0} I`` for every lag d.
    """
    out = taps * n_features
    V, _ = np.linalg.qr(rng.normal(size=(out, out)))
    w = np.zeros((out, taps, n_features))
    for r in range(taps):
        U, _ = np.linalg.qr(rng.normal(size=(n_features, n_features)))
        w[r * n_features:(r + 1) * n_features, r, :] = U / np.sqrt(taps)
    return np.einsum("io,ork->irk", V, w)


def inversion_defect(layer: Conv1DLayer) -> float:
    """Largest deviation of ``sum_r W_r^T W_{r+d}`` from ``delta_{d,0} I`` over lags d.

    Zero means transposed convolution undoes convolution exactly away from
    the zero-padded edges.
    """
    W = layer.weights
    taps, c = layer.taps, layer.in_features
    worst = 0.0
    for d in range(-(taps - 1), taps):
        acc = np.zeros((c, c))
        for r in range(taps):
            if 0 <= r + d < taps:
                acc += W[:, r, :].T @ W[:, r + d, :]
        if d == 0:
            acc -= np.eye(c)
        worst = max(worst, float(np.abs(acc).max()))
    return worst
