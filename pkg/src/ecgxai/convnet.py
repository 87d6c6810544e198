"""Semi-orthogonal 1-D CNN in numpy.

Blocks are ``conv -> ReLU -> maxpool(2)``; the deepest pooled maps are
flattened into a single sigmoid unit. Kernels are stored as
``(out_features, taps, in_features)`` with ``taps = 2R + 1`` and are kept
semi-orthogonal (rows of the ``out x taps*in`` matricization orthonormal)
by a few projection steps after every optimizer update.
"""

from __future__ import annotations

import itertools
import json
import logging
import warnings
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .exceptions import InfeasibleConstraintError, ShapeError
from .resample import enn, smote

logger = logging.getLogger(__name__)

ORTHO_TOL = 1e-3
UPDATE_SPEED = 0.125  # step on (MM^T - I)M is 4 * UPDATE_SPEED = 1/2
SPECTRAL_GUARD = 1.1


@dataclass
class Conv1DLayer:
    weights: np.ndarray  # (out, taps, in)

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=float)
        if self.weights.ndim != 3 or self.weights.shape[1] % 2 == 0:
            raise ShapeError(f"weights must be (out, 2R+1, in), got {self.weights.shape}")

    @property
    def out_features(self) -> int:
        return self.weights.shape[0]

    @property
    def taps(self) -> int:
        return self.weights.shape[1]

    @property
    def in_features(self) -> int:
        return self.weights.shape[2]

    @property
    def R(self) -> int:
        return self.taps // 2

    def matrix(self) -> np.ndarray:
        """Matricization M[i, r*in + k] = w[i, r, k]."""
        return self.weights.reshape(self.out_features, -1)


def _as_batch(x: np.ndarray) -> tuple[np.ndarray, bool]:
    x = np.asarray(x, dtype=float)
    if x.ndim == 2:
        return x[None], True
    if x.ndim != 3:
        raise ShapeError(f"expected (features, n) or (batch, features, n), got {x.shape}")
    return x, False


def _im2col(x: np.ndarray, R: int) -> np.ndarray:
    """(B, in, n) -> (B*n, taps*in) with column index r*in + k."""
    B, c, n = x.shape
    xp = np.pad(x, ((0, 0), (0, 0), (R, R)))
    win = sliding_window_view(xp, 2 * R + 1, axis=2)  # (B, in, n, taps)
    return np.ascontiguousarray(win.transpose(0, 2, 3, 1)).reshape(B * n, -1)


def _conv_cols(cols: np.ndarray, layer: Conv1DLayer, B: int, n: int) -> np.ndarray:
    out = cols @ layer.matrix().T
    return out.reshape(B, n, layer.out_features).transpose(0, 2, 1)


def conv1d_forward(x, layer: Conv1DLayer) -> np.ndarray:
    """Same-length convolution with zero padding.

    ``out[i, j] = sum_{r,k} w[i, r, k] * x[k, j + r - R]``. Accepts a single
    ``(in, n)`` map or a ``(batch, in, n)`` stack.
    """
    xb, single = _as_batch(x)
    if xb.shape[1] != layer.in_features:
        raise ShapeError(f"layer expects {layer.in_features} input features, got {xb.shape[1]}")
    B, _, n = xb.shape
    out = _conv_cols(_im2col(xb, layer.R), layer, B, n)
    return out[0] if single else out


def conv1d_transpose(g, layer: Conv1DLayer) -> np.ndarray:
    """Adjoint of :func:`conv1d_forward`: ``y[k, j] = sum_{r,i} w[i, r, k] g[i, j - r + R]``."""
    gb, single = _as_batch(g)
    if gb.shape[1] != layer.out_features:
        raise ShapeError(f"layer emits {layer.out_features} features, got {gb.shape[1]}")
    B, _, n = gb.shape
    dcols = gb.transpose(0, 2, 1).reshape(B * n, -1) @ layer.matrix()
    out = _col2im(dcols, B, n, layer.R, layer.in_features)
    return out[0] if single else out


def _col2im(dcols: np.ndarray, B: int, n: int, R: int, c: int) -> np.ndarray:
    d = dcols.reshape(B, n, 2 * R + 1, c)
    xp = np.zeros((B, c, n + 2 * R))
    for r in range(2 * R + 1):
        xp[:, :, r:r + n] += d[:, :, r, :].transpose(0, 2, 1)
    return xp[:, :, R:R + n]


def maxpool_forward(x) -> tuple[np.ndarray, np.ndarray]:
    """Pool pairs of samples; switch 1 marks the right element (ties go left).

    An odd-length input is padded with one trailing zero first.
    """
    x = np.asarray(x, dtype=float)
    if x.shape[-1] % 2:
        pad = [(0, 0)] * (x.ndim - 1) + [(0, 1)]
        x = np.pad(x, pad)
    left, right = x[..., 0::2], x[..., 1::2]
    switches = (right > left).astype(np.int8)
    return np.where(switches == 1, right, left), switches


def semi_orth_residual(layer) -> float:
    """Frobenius norm of M M^T - I for the kernel matricization M."""
    M = _matrix_of(layer)
    if M.shape[0] > M.shape[1]:
        raise InfeasibleConstraintError(
            f"{M.shape[0]} output features exceed the {M.shape[1]} columns of the kernel"
        )
    return float(np.linalg.norm(M @ M.T - np.eye(M.shape[0])))


def _matrix_of(layer) -> np.ndarray:
    if isinstance(layer, Conv1DLayer):
        return layer.matrix()
    w = np.asarray(layer, dtype=float)
    return w.reshape(w.shape[0], -1)


def semi_orth_project(layer: Conv1DLayer, iters: int, history: list | None = None) -> Conv1DLayer:
    """Push the kernel towards M M^T = I with the quadratically convergent update.

    Each step is ``M <- M - 4 * UPDATE_SPEED * (M M^T - I) M`` with update
    speed 1/8. M is first rescaled to unit spectral norm when its
    norm exceeds 1.1, which keeps the iteration inside its basin. Residuals
    before the first and after each step are appended to ``history``.
    """
    M = layer.matrix().copy()
    out, cols = M.shape
    if out > cols:
        raise InfeasibleConstraintError(
            f"{out} output features exceed the {cols} columns of the kernel"
        )
    spec = np.linalg.norm(M, 2)
    if spec > SPECTRAL_GUARD:
        M /= spec
    eye = np.eye(out)
    nu = 4.0 * UPDATE_SPEED
    if history is not None:
        history.append(float(np.linalg.norm(M @ M.T - eye)))
    for _ in range(iters):
        P = M @ M.T - eye
        M -= nu * (P @ M)
        if history is not None:
            history.append(float(np.linalg.norm(M @ M.T - eye)))
    return Conv1DLayer(M.reshape(layer.weights.shape))


@dataclass
class NetConfig:
    n_filters: int
    kernel_size: int
    deepness: int
    n_leads: int
    n_samples: int

    @property
    def padded_len(self) -> int:
        step = 2 ** self.deepness
        return -(-self.n_samples // step) * step

    @property
    def head_len(self) -> int:
        return self.n_filters * (self.padded_len // 2 ** self.deepness)

    def feasible(self) -> bool:
        return self.n_filters <= self.kernel_size * self.n_leads


@dataclass
class Conv1DNet:
    config: NetConfig
    layers: list[Conv1DLayer]
    head_w: np.ndarray
    head_b: float = 0.0

    def n_params(self) -> int:
        return sum(layer.weights.size for layer in self.layers) + self.head_w.size + 1

    def params(self) -> list[np.ndarray]:
        return [layer.weights for layer in self.layers] + [self.head_w, np.array([self.head_b])]

    def set_params(self, params: list[np.ndarray]) -> None:
        for layer, w in zip(self.layers, params[:-2]):
            layer.weights = w
        self.head_w = params[-2]
        self.head_b = float(params[-1][0])

    def copy(self) -> "Conv1DNet":
        return Conv1DNet(
            NetConfig(**asdict(self.config)),
            [Conv1DLayer(layer.weights.copy()) for layer in self.layers],
            self.head_w.copy(),
            self.head_b,
        )

    def max_residual(self) -> float:
        return max(semi_orth_residual(layer) for layer in self.layers)


def init_net(config: NetConfig, seed: int = 0, zero_head: bool = False) -> Conv1DNet:
    """Random net whose conv kernels start semi-orthogonal.

    ``zero_head`` starts the dense head at zero instead of Glorot-uniform.
    """
    if config.kernel_size % 2 == 0:
        raise ValueError("kernel_size must be odd")
    rng = np.random.default_rng(seed)
    layers = []
    in_f = config.n_leads
    for _ in range(config.deepness):
        w = rng.normal(size=(config.n_filters, config.kernel_size, in_f))
        layer = Conv1DLayer(w)
        M = layer.matrix()
        layer = Conv1DLayer((M / np.linalg.norm(M, 2)).reshape(w.shape))
        layers.append(semi_orth_project(layer, 30))
        in_f = config.n_filters
    head_w = np.zeros(config.head_len) if zero_head else rng.uniform(
        -np.sqrt(6.0 / (config.head_len + 1)), np.sqrt(6.0 / (config.head_len + 1)),
        size=config.head_len)
    return Conv1DNet(config, layers, head_w, 0.0)


@dataclass
class BlockTrace:
    pre: np.ndarray
    activated: np.ndarray
    pooled: np.ndarray
    switches: np.ndarray


@dataclass
class ForwardTrace:
    """Per-block maps of one forward pass (batched: leading axis is the record)."""

    inputs: np.ndarray
    blocks: list[BlockTrace]
    n_samples: int
    logits: np.ndarray
    cols: list[np.ndarray] = field(default_factory=list, repr=False)

    @property
    def scores(self) -> np.ndarray:
        return _sigmoid(self.logits)

    def item(self, b: int) -> "ForwardTrace":
        """Trace of a single record from a batched trace."""
        return ForwardTrace(
            self.inputs[b:b + 1],
            [BlockTrace(t.pre[b:b + 1], t.activated[b:b + 1], t.pooled[b:b + 1],
                        t.switches[b:b + 1]) for t in self.blocks],
            self.n_samples,
            self.logits[b:b + 1],
        )


def _sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * np.asarray(z)))


def _input_array(net: Conv1DNet, x) -> np.ndarray:
    values = getattr(x, "values", x)
    xb, _ = _as_batch(values)
    cfg = net.config
    if xb.shape[1] != cfg.n_leads or xb.shape[2] != cfg.n_samples:
        raise ShapeError(
            f"net expects ({cfg.n_leads}, {cfg.n_samples}) inputs, got {xb.shape[1:]}"
        )
    pad = cfg.padded_len - cfg.n_samples
    if pad:
        xb = np.pad(xb, ((0, 0), (0, 0), (0, pad)))
    return xb


def forward_batch(net: Conv1DNet, X, keep_cols: bool = False) -> ForwardTrace:
    xb = _input_array(net, X)
    B = xb.shape[0]
    h = xb
    blocks, cols_cache = [], []
    for layer in net.layers:
        n = h.shape[2]
        cols = _im2col(h, layer.R)
        pre = _conv_cols(cols, layer, B, n)
        act = np.maximum(pre, 0.0)
        pooled, sw = maxpool_forward(act)
        blocks.append(BlockTrace(pre, act, pooled, sw))
        if keep_cols:
            cols_cache.append(cols)
        h = pooled
    logits = h.reshape(B, -1) @ net.head_w + net.head_b
    return ForwardTrace(xb, blocks, net.config.n_samples, logits, cols_cache)


def model_forward(net: Conv1DNet, x) -> tuple[float, ForwardTrace]:
    """Score one record and keep the trace needed for inversion."""
    trace = forward_batch(net, x)
    if trace.logits.shape[0] != 1:
        raise ShapeError("model_forward takes a single record; use predict for batches")
    return float(trace.scores[0]), trace


def predict(net: Conv1DNet, X, batch_size: int = 64) -> np.ndarray:
    X = np.asarray(getattr(X, "values", X), dtype=float)
    if X.ndim == 2:
        X = X[None]
    out = [forward_batch(net, X[i:i + batch_size]).scores for i in range(0, len(X), batch_size)]
    return np.concatenate(out) if out else np.zeros(0)


def bce_loss(logits: np.ndarray, y: np.ndarray) -> float:
    # softplus form of -[y log p + (1-y) log(1-p)]
    return float(np.mean(np.logaddexp(0.0, logits) - y * logits))


def loss_and_grads(net: Conv1DNet, X, y) -> tuple[float, list[np.ndarray]]:
    """Mean binary cross-entropy and its gradient for every parameter."""
    y = np.asarray(y, dtype=float)
    tr = forward_batch(net, X, keep_cols=True)
    B = y.size
    loss = bce_loss(tr.logits, y)
    dlogit = (_sigmoid(tr.logits) - y) / B
    deep = tr.blocks[-1].pooled
    g_head_w = dlogit @ deep.reshape(B, -1)
    g_head_b = np.array([dlogit.sum()])
    d = np.outer(dlogit, net.head_w).reshape(deep.shape)
    g_layers = [None] * len(net.layers)
    for li in range(len(net.layers) - 1, -1, -1):
        layer, bt, cols = net.layers[li], tr.blocks[li], tr.cols[li]
        n = bt.activated.shape[2]
        dact = np.zeros_like(bt.activated)
        dact[..., 0::2] = d * (bt.switches == 0)
        dact[..., 1::2] = d * (bt.switches == 1)
        dpre = dact * (bt.pre > 0)
        dpre_flat = dpre.transpose(0, 2, 1).reshape(B * n, -1)
        g_layers[li] = (dpre_flat.T @ cols).reshape(layer.weights.shape)
        if li > 0:
            d = _col2im(dpre_flat @ layer.matrix(), B, n, layer.R, layer.in_features)
    return loss, g_layers + [g_head_w, g_head_b]


@dataclass
class TrainConfig:
    lr0: float = 1e-3
    decay: float = 1e-7
    max_epochs: int = 10000
    patience: int = 5
    batch_size: int = 32
    seed: int = 0
    min_delta: float = 1e-6
    proj_iters: int = 4
    resample: bool = True
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def validate(self) -> None:
        for name in ("lr0", "max_epochs", "patience", "batch_size", "proj_iters"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.decay < 0:
            raise ValueError("decay must be non-negative")


class Adam:
    def __init__(self, params, beta1=0.9, beta2=0.999, eps=1e-8):
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.t = 0

    def step(self, params, grads, lr):
        self.t += 1
        c1 = 1 - self.beta1 ** self.t
        c2 = 1 - self.beta2 ** self.t
        out = []
        for i, (p, g) in enumerate(zip(params, grads)):
            self.m[i] = self.beta1 * self.m[i] + (1 - self.beta1) * g
            self.v[i] = self.beta2 * self.v[i] + (1 - self.beta2) * g * g
            out.append(p - lr * (self.m[i] / c1) / (np.sqrt(self.v[i] / c2) + self.eps))
        return out


def fit_arrays(net: Conv1DNet, X_train, y_train, X_val, y_val,
               cfg: TrainConfig) -> tuple[Conv1DNet, dict]:
    """Train on given arrays with ADAM, projection and early stopping.

    Returns a copy of ``net`` holding the weights of the best validation
    epoch, plus the loss history.
    """
    cfg.validate()
    if len(X_train) == 0 or len(X_val) == 0:
        raise ValueError("training and validation sets must be non-empty")
    rng = np.random.default_rng(cfg.seed)
    net = net.copy()
    opt = Adam(net.params(), cfg.beta1, cfg.beta2, cfg.eps)
    y_train = np.asarray(y_train, dtype=float)
    y_val = np.asarray(y_val, dtype=float)

    def val_loss():
        return bce_loss(np.concatenate([
            forward_batch(net, X_val[i:i + 64]).logits for i in range(0, len(X_val), 64)
        ]), y_val)

    history = {"train_loss": [], "val_loss": [], "lr": []}
    best = (val_loss(), net.copy(), 0)
    stale = 0
    for epoch in range(cfg.max_epochs):
        lr = cfg.lr0 / (1.0 + cfg.decay * epoch)
        order = rng.permutation(len(X_train))
        batch_losses = []
        for start in range(0, len(order), cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            loss, grads = loss_and_grads(net, X_train[idx], y_train[idx])
            batch_losses.append(loss * len(idx))
            net.set_params(opt.step(net.params(), grads, lr))
            net.layers = [semi_orth_project(layer, cfg.proj_iters) for layer in net.layers]
        vl = val_loss()
        history["train_loss"].append(float(np.sum(batch_losses) / len(order)))
        history["val_loss"].append(vl)
        history["lr"].append(lr)
        if vl < best[0] - cfg.min_delta:
            best = (vl, net.copy(), epoch + 1)
            stale = 0
        else:
            stale += 1
            if stale >= cfg.patience:
                break
    history["best_epoch"] = best[2]
    history["epochs_run"] = len(history["val_loss"])
    logger.debug("trained %d epochs, best %d (val loss %.4f)",
                 history["epochs_run"], best[2], best[0])
    return best[1], history


def resample_records(X: np.ndarray, y: np.ndarray, seed: int):
    """SMOTEENN on flattened records.

    If the cleaning step would leave a single class, the SMOTE output is
    used unchanged (with a warning) so training still sees both classes.
    """
    flat = X.reshape(len(X), -1)
    Xs, ys = smote(flat, y, seed=seed)
    Xe, ye = enn(Xs, ys)
    if np.unique(ye).size < 2:
        warnings.warn("edited nearest neighbours removed a whole class; keeping SMOTE output",
                      RuntimeWarning, stacklevel=2)
        Xe, ye = Xs, ys
    return Xe.reshape(-1, *X.shape[1:]), ye


def train(net: Conv1DNet, data, cfg: TrainConfig, fold: int) -> tuple[Conv1DNet, dict]:
    """Train on all folds but ``fold``, validate on ``fold``.

    The training portion is rebalanced with SMOTEENN (on flattened records)
    when ``cfg.resample`` is set.
    """
    train_idx, val_idx = data.fold_indices(fold)
    if len(train_idx) == 0 or len(val_idx) == 0:
        raise ValueError(f"fold {fold} leaves an empty training or validation set")
    X, y = data.arrays()
    Xtr, ytr = X[train_idx], y[train_idx]
    if cfg.resample:
        Xtr, ytr = resample_records(Xtr, ytr, cfg.seed)
    return fit_arrays(net, Xtr, ytr, X[val_idx], y[val_idx], cfg)


DEFAULT_GRID = {"filters": [8, 16, 32], "kernel": [3, 5, 9], "deepness": [2, 3, 4]}


def select_best(results: list[dict]) -> dict:
    """Highest mean 3MCS; ties go to fewer parameters, then the smaller kernel."""
    usable = [r for r in results if r.get("status") == "ok"]
    if not usable:
        raise ValueError("no feasible configuration in the grid")
    return min(usable, key=lambda r: (-r["summary"]["3mcs"]["mean"], r["n_params"], r["kernel"]))


def grid_search(data, grid: dict | None = None, cfg: TrainConfig | None = None,
                folds: list[int] | None = None, seed: int = 0) -> dict:
    """Cross-validated search over filters x kernel size x deepness.

    Every feasible cell is trained once per fold; validation scores give
    AUROC/AUPRC/MCC/3MCS (MCC after isotonic calibration at 0.5). Cells with
    more filters than ``kernel * n_leads`` cannot be semi-orthogonal and are
    reported as infeasible.
    """
    from .evalmetrics import evaluate, summarize

    grid = DEFAULT_GRID if grid is None else grid
    cfg = cfg or TrainConfig()
    cells = list(itertools.product(grid["filters"], grid["kernel"], grid["deepness"]))
    if not cells:
        raise ValueError("empty grid")
    X, y = data.arrays()
    folds = list(range(data.n_folds)) if folds is None else folds
    results = []
    for filters, kernel, deepness in cells:
        config = NetConfig(filters, kernel, deepness, X.shape[1], X.shape[2])
        row = {"filters": filters, "kernel": kernel, "deepness": deepness}
        if not config.feasible():
            results.append({**row, "status": "infeasible", "n_params": None})
            continue
        per_fold = []
        net0 = init_net(config, seed)
        for f in folds:
            net, _ = train(net0, data, cfg, f)
            _, val_idx = data.fold_indices(f)
            per_fold.append(evaluate(predict(net, X[val_idx]), y[val_idx]))
        results.append({**row, "status": "ok", "n_params": net0.n_params(),
                        "per_fold": per_fold, "summary": summarize(per_fold)})
        logger.info("grid cell %s: 3MCS %.3f", row, results[-1]["summary"]["3mcs"]["mean"])
    return {"results": results, "best": select_best(results)}


def save_model(net: Conv1DNet, path, history: dict | None = None) -> None:
    doc = {
        "config": asdict(net.config),
        "layers": [layer.weights.tolist() for layer in net.layers],
        "head_w": net.head_w.tolist(),
        "head_b": net.head_b,
        "history": history or {},
    }
    Path(path).write_text(json.dumps(doc))


def load_model(path) -> tuple[Conv1DNet, dict]:
    doc = json.loads(Path(path).read_text())
    net = Conv1DNet(
        NetConfig(**doc["config"]),
        [Conv1DLayer(np.array(w)) for w in doc["layers"]],
        np.array(doc["head_w"], dtype=float),
        float(doc["head_b"]),
    )
    return net, doc.get("history", {})
