"""Late fusion of the two modality classifiers.

Two routes:

* confidence ensembling: a convex combination of per-modality class
  probabilities, with the weight chosen by exhaustive grid search on the
  validation split;
* a trainable fusion head: a fully connected network over concatenated
  1024-d embeddings (hidden sizes 1024, 1024, 512, ReLU), trained with
  label-smoothing-capable softmax cross-entropy and Adam, all implemented
  here in plain numpy with f64 accumulation so gradients can be verified
  against finite differences.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import (
    BadMagic,
    EmptyValidation,
    NonFiniteInput,
    ShapeMismatch,
    TruncatedFile,
    VersionUnsupported,
)
from .rng import Rng, derive_seed, uniform_array

MLP_DIMS = (1024, 1024, 1024, 512, 2)
GRID_STEPS = 100  # weight grid 0.00, 0.01, ..., 1.00

CHECKPOINT_MAGIC = b"BVML"
CHECKPOINT_VERSION = 1


# --- confidence ensembling -------------------------------------------------

def ensemble_probs(p2d, p3d, w_2d: float) -> np.ndarray:
    """Per-class convex combination; w_3d is 1 - w_2d."""
    p2d = np.asarray(p2d, dtype=np.float64)
    p3d = np.asarray(p3d, dtype=np.float64)
    return w_2d * p2d + (1.0 - w_2d) * p3d


def _macc_from_preds(labels: np.ndarray, preds: np.ndarray) -> float:
    """Mean accuracy over the classes present in `labels`."""
    accs = []
    for cls in (0, 1):
        sel = labels == cls
        if sel.any():
            accs.append(float((preds[sel] == cls).mean()))
    return sum(accs) / len(accs)


def search_weights(p2d: np.ndarray, p3d: np.ndarray,
                   labels: np.ndarray) -> tuple[float, float]:
    """Grid search w_2d over {0.00 .. 1.00}; maximise validation MAcc.

    Ties resolve to the smallest w_2d (ascending scan, strict improvement).
    Returns (w_2d, achieved MAcc).
    """
    p2d = np.asarray(p2d, dtype=np.float64)
    p3d = np.asarray(p3d, dtype=np.float64)
    labels = np.asarray(labels)
    if p2d.shape != p3d.shape or p2d.ndim != 2 or p2d.shape[1] != 2:
        raise ShapeMismatch(
            f"probability arrays must both be (n, 2); got {p2d.shape} "
            f"and {p3d.shape}")
    if len(labels) == 0:
        raise EmptyValidation("weight search needs a non-empty validation set")
    best_w, best_m = 0.0, -1.0
    for k in range(GRID_STEPS + 1):
        w = k / GRID_STEPS
        mix = ensemble_probs(p2d, p3d, w)
        preds = (mix[:, 1] > mix[:, 0]).astype(np.int64)
        m = _macc_from_preds(labels, preds)
        if m > best_m:
            best_m, best_w = m, w
    return best_w, best_m


# --- the fusion head -------------------------------------------------------

@dataclass
class MlpParams:
    dims: tuple[int, ...]
    weights: list[np.ndarray]  # per layer, (out, in) f64
    biases: list[np.ndarray]  # per layer, (out,) f64

    def clone(self) -> "MlpParams":
        return MlpParams(self.dims, [w.copy() for w in self.weights],
                         [b.copy() for b in self.biases])


def init_params(seed: int, dims: tuple[int, ...] = MLP_DIMS) -> MlpParams:
    """Fan-in-scaled uniform weights U(-sqrt(6/fan_in), +), zero biases."""
    weights, biases = [], []
    for layer, (n_in, n_out) in enumerate(zip(dims[:-1], dims[1:])):
        bound = np.sqrt(6.0 / n_in)
        u = uniform_array(derive_seed(seed, f"init:w{layer}"), n_out * n_in)
        weights.append(((2.0 * u - 1.0) * bound).reshape(n_out, n_in))
        biases.append(np.zeros(n_out, dtype=np.float64))
    return MlpParams(tuple(dims), weights, biases)


def mlp_forward(params: MlpParams, x: np.ndarray
                ) -> tuple[np.ndarray, list[np.ndarray]]:
    """Hidden layers affine + ReLU, output layer affine only.

    x is (batch, dims[0]) or (dims[0],).  Returns (logits, cache); the
    cache holds each layer's input activation for the backward pass.
    """
    single = x.ndim == 1
    a = np.atleast_2d(np.asarray(x, dtype=np.float64))
    if a.shape[1] != params.dims[0]:
        raise ShapeMismatch(f"input width {a.shape[1]}, "
                            f"network expects {params.dims[0]}")
    if not np.isfinite(a).all():
        raise NonFiniteInput("network input contains NaN or infinity")
    cache = []
    last = len(params.weights) - 1
    for i, (w, b) in enumerate(zip(params.weights, params.biases)):
        cache.append(a)
        z = a @ w.T + b
        a = z if i == last else np.maximum(z, 0.0)
    logits = a[0] if single else a
    return logits, cache


def softmax(logits: np.ndarray) -> np.ndarray:
    z = np.atleast_2d(logits)
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    p = e / e.sum(axis=1, keepdims=True)
    return p[0] if logits.ndim == 1 else p


def softmax_ce_loss(logits: np.ndarray, targets: np.ndarray,
                    smoothing: float = 0.0
                    ) -> tuple[float, np.ndarray]:
    """Mean label-smoothed cross-entropy and its gradient w.r.t. logits.

    The target distribution puts 1 - smoothing on the true class and
    smoothing on the other.  Softmax subtracts the max logit first, so
    extreme logits cannot overflow.  dlogits already includes the 1/batch
    factor of the mean.
    """
    single = logits.ndim == 1
    z = np.atleast_2d(np.asarray(logits, dtype=np.float64))
    y = np.atleast_1d(np.asarray(targets, dtype=np.int64))
    if z.shape[0] != y.shape[0] or z.shape[1] != 2:
        raise ShapeMismatch(f"logits {z.shape} vs targets {y.shape}")
    n = z.shape[0]
    t = np.full((n, 2), smoothing, dtype=np.float64)
    t[np.arange(n), y] = 1.0 - smoothing
    shifted = z - z.max(axis=1, keepdims=True)
    log_q = shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    loss = float(-(t * log_q).sum() / n)
    dlogits = (np.exp(log_q) - t) / n
    return loss, (dlogits[0] * n if single else dlogits)


def mlp_backward(params: MlpParams, cache: list[np.ndarray],
                 dlogits: np.ndarray
                 ) -> tuple[list[np.ndarray], list[np.ndarray]]:
    """Exact reverse-mode gradients for the mean-batch loss."""
    d = np.atleast_2d(dlogits)
    if len(cache) != len(params.weights):
        raise ShapeMismatch("cache does not match the network depth")
    if d.shape[1] != params.dims[-1]:
        raise ShapeMismatch(f"dlogits width {d.shape[1]}, "
                            f"output width {params.dims[-1]}")
    d_weights = [np.empty(0)] * len(params.weights)
    d_biases = [np.empty(0)] * len(params.biases)
    for i in range(len(params.weights) - 1, -1, -1):
        a_in = cache[i]
        d_weights[i] = d.T @ a_in
        d_biases[i] = d.sum(axis=0)
        if i > 0:
            da = d @ params.weights[i]
            # ReLU output is positive exactly where its input was, so the
            # cached activation doubles as the gate
            d = da * (a_in > 0.0)
    return d_weights, d_biases


@dataclass
class AdamState:
    lr: float = 1e-6
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: list[np.ndarray] = field(default_factory=list)
    v: list[np.ndarray] = field(default_factory=list)


def adam_init(params: MlpParams, lr: float = 1e-6) -> AdamState:
    arrays = params.weights + params.biases
    return AdamState(lr=lr,
                     m=[np.zeros_like(a) for a in arrays],
                     v=[np.zeros_like(a) for a in arrays])


def adam_step(params: MlpParams, d_weights: list[np.ndarray],
              d_biases: list[np.ndarray], state: AdamState) -> None:
    """Standard bias-corrected Adam update, in place."""
    grads = d_weights + d_biases
    arrays = params.weights + params.biases
    if len(grads) != len(arrays):
        raise ShapeMismatch("gradient list does not match parameter list")
    state.step += 1
    t = state.step
    for i, (p, g) in enumerate(zip(arrays, grads)):
        if p.shape != g.shape:
            raise ShapeMismatch(f"parameter {i}: {p.shape} vs grad {g.shape}")
        state.m[i] = state.beta1 * state.m[i] + (1 - state.beta1) * g
        state.v[i] = state.beta2 * state.v[i] + (1 - state.beta2) * g * g
        m_hat = state.m[i] / (1 - state.beta1 ** t)
        v_hat = state.v[i] / (1 - state.beta2 ** t)
        p -= state.lr * m_hat / (np.sqrt(v_hat) + state.eps)


def predict_fusion(params: MlpParams, x: np.ndarray) -> np.ndarray:
    logits, _ = mlp_forward(params, x)
    return softmax(logits)


# --- training loop ---------------------------------------------------------

@dataclass
class TrainConfig:
    epochs: int = 10
    batch_size: int = 128
    label_smoothing: float = 0.0
    seed: int = 0
    lr: float = 1e-6
    instance: int = 0


@dataclass
class EpochLog:
    epoch: int
    train_loss: float
    val_oacc: float
    val_macc: float
    val_acc_high: float
    val_acc_low: float


def _eval_arrays(params: MlpParams, x: np.ndarray, y: np.ndarray
                 ) -> tuple[float, float, float, float]:
    """(oacc, macc, acc_high, acc_low); macc over present classes."""
    preds = np.empty(len(y), dtype=np.int64)
    for i in range(0, len(y), 512):
        probs = predict_fusion(params, x[i:i + 512])
        preds[i:i + 512] = np.argmax(probs, axis=1)
    oacc = float((preds == y).mean())
    accs = {}
    for cls in (0, 1):
        sel = y == cls
        if sel.any():
            accs[cls] = float((preds[sel] == cls).mean())
    macc = sum(accs.values()) / len(accs)
    return oacc, macc, accs.get(1, float("nan")), accs.get(0, float("nan"))


def train_fusion(x_train: np.ndarray, y_train: np.ndarray,
                 x_val: np.ndarray, y_val: np.ndarray,
                 cfg: TrainConfig) -> tuple[MlpParams, list[EpochLog]]:
    """Mini-batch training; returns the epoch with the best validation MAcc.

    The shuffle order for epoch e comes from its own named stream, so the
    log is bit-reproducible for a fixed seed.  With epochs=0 the function
    returns the freshly initialised parameters and an empty log.
    """
    if len(x_val) == 0:
        raise EmptyValidation("validation split is empty")
    if len(x_train) == 0:
        raise EmptyValidation("training split is empty")
    x_train = np.asarray(x_train, dtype=np.float64)
    x_val = np.asarray(x_val, dtype=np.float64)
    y_train = np.asarray(y_train, dtype=np.int64)
    y_val = np.asarray(y_val, dtype=np.int64)

    params = init_params(cfg.seed, MLP_DIMS)
    state = adam_init(params, lr=cfg.lr)
    best = params.clone()
    best_macc = -1.0
    log: list[EpochLog] = []
    n = len(y_train)
    for epoch in range(1, cfg.epochs + 1):
        order = list(range(n))
        Rng.stream(cfg.seed, f"epoch:{epoch}").shuffle(order)
        order = np.asarray(order, dtype=np.int64)
        total_loss = 0.0
        for i in range(0, n, cfg.batch_size):
            idx = order[i:i + cfg.batch_size]
            xb, yb = x_train[idx], y_train[idx]
            logits, cache = mlp_forward(params, xb)
            loss, dlogits = softmax_ce_loss(logits, yb, cfg.label_smoothing)
            d_w, d_b = mlp_backward(params, cache, dlogits)
            adam_step(params, d_w, d_b, state)
            total_loss += loss * len(idx)
        oacc, macc, acc_h, acc_l = _eval_arrays(params, x_val, y_val)
        log.append(EpochLog(epoch=epoch, train_loss=total_loss / n,
                            val_oacc=oacc, val_macc=macc,
                            val_acc_high=acc_h, val_acc_low=acc_l))
        if macc > best_macc:
            best_macc = macc
            best = params.clone()
    return (best if log else params), log


def write_training_log(log: list[EpochLog], path: str | Path) -> None:
    lines = ["epoch,train_loss,val_oacc,val_macc,val_acc_high,val_acc_low"]
    for row in log:
        lines.append(f"{row.epoch},{row.train_loss:.6f},{row.val_oacc:.6f},"
                     f"{row.val_macc:.6f},{row.val_acc_high:.6f},"
                     f"{row.val_acc_low:.6f}")
    Path(path).write_text("\n".join(lines) + "\n")


# --- checkpoints -----------------------------------------------------------

def save_params(params: MlpParams, path: str | Path) -> None:
    """Little-endian: magic, version u16, then per layer
    (out u32, in u32, weights row-major f64, bias f64)."""
    buf = bytearray()
    buf += CHECKPOINT_MAGIC
    buf += struct.pack("<H", CHECKPOINT_VERSION)
    for w, b in zip(params.weights, params.biases):
        out_dim, in_dim = w.shape
        buf += struct.pack("<II", out_dim, in_dim)
        buf += np.ascontiguousarray(w, dtype="<f8").tobytes()
        buf += np.ascontiguousarray(b, dtype="<f8").tobytes()
    Path(path).write_bytes(bytes(buf))


def load_params(path: str | Path) -> MlpParams:
    data = Path(path).read_bytes()
    src = str(path)
    if len(data) < 6:
        raise TruncatedFile(f"{src}: shorter than a checkpoint header")
    if data[0:4] != CHECKPOINT_MAGIC:
        raise BadMagic(f"{src}: magic {data[0:4]!r} is not {CHECKPOINT_MAGIC!r}")
    (version,) = struct.unpack_from("<H", data, 4)
    if version != CHECKPOINT_VERSION:
        raise VersionUnsupported(f"{src}: checkpoint version {version}")
    pos = 6
    weights, biases = [], []
    while pos < len(data):
        if pos + 8 > len(data):
            raise TruncatedFile(f"{src}: layer header cut off at byte {pos}")
        out_dim, in_dim = struct.unpack_from("<II", data, pos)
        pos += 8
        need = 8 * (out_dim * in_dim + out_dim)
        if pos + need > len(data):
            raise TruncatedFile(f"{src}: layer payload cut off at byte {pos}")
        w = np.frombuffer(data, dtype="<f8", count=out_dim * in_dim,
                          offset=pos).reshape(out_dim, in_dim)
        pos += 8 * out_dim * in_dim
        b = np.frombuffer(data, dtype="<f8", count=out_dim, offset=pos)
        pos += 8 * out_dim
        weights.append(w.astype(np.float64))
        biases.append(b.astype(np.float64))
    if not weights:
        raise TruncatedFile(f"{src}: checkpoint holds no layers")
    dims = (weights[0].shape[1],) + tuple(w.shape[0] for w in weights)
    return MlpParams(dims, weights, biases)
