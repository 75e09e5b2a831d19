"""Weight-sharing classifier over graph signals, with exact analytic gradients.

Architecture: stacked graph-signal layers sharing one transformation tensor,
global average pooling (signal mode) or a per-vertex head (vertex mode),
fully-connected layer, softmax. The temperature of the shared row softmax is
annealed geometrically during training so the relaxed tensor converges to
one-hot rows.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field

import numpy as np

from .errors import TrainingDivergedError
from .graph import Graph, write_edge_list
from .transforms import (EdgeLogits, HardTransforms, Schedule, SoftTransforms,
                         harden, soften, soften_backward, temperature_at)

EPS_LOG = 1e-12


@dataclass
class GSLayerParams:
    """One graph-signal layer: filter weights (K, C_in, C_out) and bias (C_out,)."""

    w: np.ndarray
    b: np.ndarray


@dataclass
class Model:
    gsl_layers: list[GSLayerParams]
    fc_weight: np.ndarray  # (C_last, num_classes)
    fc_bias: np.ndarray    # (num_classes,)
    mode: str = "signal"   # "signal" (pooled) | "vertex" (per-vertex head)

    @property
    def num_classes(self) -> int:
        return self.fc_bias.shape[0]

    def param_arrays(self) -> list[np.ndarray]:
        out = []
        for layer in self.gsl_layers:
            out.extend([layer.w, layer.b])
        out.extend([self.fc_weight, self.fc_bias])
        return out


@dataclass
class Grads:
    layers: list[tuple[np.ndarray, np.ndarray]]
    fc_weight: np.ndarray
    fc_bias: np.ndarray
    logits: np.ndarray

    def arrays(self) -> list[np.ndarray]:
        out = []
        for dw, db in self.layers:
            out.extend([dw, db])
        out.extend([self.fc_weight, self.fc_bias, self.logits])
        return out


def build_model(in_channels: int, hidden: tuple[int, ...], num_classes: int,
                k: int, mode: str, rng: np.random.Generator) -> Model:
    """Fan-in-scaled uniform weight init, zero biases."""
    if num_classes < 2:
        raise ValueError("need at least 2 classes")
    if not hidden:
        raise ValueError("need at least one graph-signal layer")
    layers = []
    c_in = in_channels
    for c_out in hidden:
        bound = 1.0 / np.sqrt(k * c_in)
        layers.append(GSLayerParams(
            w=rng.uniform(-bound, bound, size=(k, c_in, c_out)),
            b=np.zeros(c_out)))
        c_in = c_out
    bound = 1.0 / np.sqrt(c_in)
    fc_w = rng.uniform(-bound, bound, size=(c_in, num_classes))
    return Model(layers, fc_w, np.zeros(num_classes), mode)


def _relu(z: np.ndarray) -> np.ndarray:
    return np.maximum(z, 0.0)


def _softmax(z: np.ndarray) -> np.ndarray:
    m = z.max(axis=-1, keepdims=True)
    e = np.exp(z - m)
    return e / e.sum(axis=-1, keepdims=True)


def _slices_T(soft: SoftTransforms):
    return [soft.sparse(k).T.tocsr() for k in range(soft.k)]


def _slices(soft: SoftTransforms):
    return [soft.sparse(k) for k in range(soft.k)]


def _apply_stack(mats, x: np.ndarray) -> np.ndarray:
    """Apply each sparse N x N matrix to a (B, N, C) batch; returns (K, B, N, C)."""
    b, n, c = x.shape
    flat = x.transpose(1, 0, 2).reshape(n, b * c)
    out = np.empty((len(mats), b, n, c))
    for k, m in enumerate(mats):
        out[k] = (m @ flat).reshape(n, b, c).transpose(1, 0, 2)
    return out


def gsl_forward(x: np.ndarray, s_soft: SoftTransforms, layer: GSLayerParams,
                activation: str = "relu") -> np.ndarray:
    """sigma( sum_{k, c_in} w[k, c_in, :] * (S_k^T x[:, c_in]) + b )."""
    x = np.asarray(x, dtype=float)
    if x.ndim != 2 or x.shape[1] != layer.w.shape[1]:
        raise ValueError(f"expected input of shape (N, {layer.w.shape[1]}), got {x.shape}")
    u = _apply_stack(_slices_T(s_soft), x[None])
    z = np.einsum("kbnc,kcd->bnd", u, layer.w)[0] + layer.b
    if activation == "relu":
        return _relu(z)
    if activation == "identity":
        return z
    raise ValueError(f"unknown activation {activation!r}")


def global_average_pool(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim != 2 or x.shape[0] < 1:
        raise ValueError("expected a non-empty (N, C) matrix")
    return x.mean(axis=0)


def _forward_batch(xb: np.ndarray, soft: SoftTransforms, model: Model):
    """Forward pass on a (B, N, C_in) batch; returns (probs, cache)."""
    mats_t = _slices_T(soft)
    h = xb
    layer_cache = []
    last = len(model.gsl_layers) - 1
    for li, layer in enumerate(model.gsl_layers):
        if h.shape[2] != layer.w.shape[1]:
            raise ValueError(
                f"layer {li}: input has {h.shape[2]} channels, expected {layer.w.shape[1]}")
        u = _apply_stack(mats_t, h)
        z = np.einsum("kbnc,kcd->bnd", u, layer.w) + layer.b
        a = _relu(z) if li < last else z
        layer_cache.append((h, u, z))
        h = a
    if not np.all(np.isfinite(h)):
        raise FloatingPointError("non-finite activations after graph-signal layers")
    if model.mode == "signal":
        pooled = h.mean(axis=1)                      # (B, C)
        logits = pooled @ model.fc_weight + model.fc_bias
    else:
        pooled = h                                   # (B, N, C)
        logits = h @ model.fc_weight + model.fc_bias  # (B, N, cls)
    probs = _softmax(logits)
    cache = {"layers": layer_cache, "h": h, "pooled": pooled, "probs": probs}
    return probs, cache


def model_forward(x: np.ndarray, model: Model, params: EdgeLogits, t: float):
    """Class probabilities for one sample: a vector (signal mode) or (N, cls) matrix."""
    soft = soften(params, t)
    probs, _ = _forward_batch(np.asarray(x, dtype=float)[None], soft, model)
    return probs[0]


def cross_entropy(probs: np.ndarray, y: int) -> float:
    probs = np.asarray(probs, dtype=float)
    if probs.ndim != 1:
        raise ValueError("expected a probability vector")
    if not 0 <= y < len(probs):
        raise ValueError(f"label {y} out of range")
    return float(-np.log(max(probs[y], EPS_LOG)))


def _loss_grad_output(probs: np.ndarray, yb: np.ndarray, mode: str):
    """Mean cross-entropy and its gradient w.r.t. the fc logits.

    Signal mode: yb is (B,) class indices. Vertex mode: yb is (B, N) with -1
    marking vertices excluded from the loss.
    """
    if mode == "signal":
        b = len(yb)
        picked = probs[np.arange(b), yb]
        loss = float(-np.log(np.maximum(picked, EPS_LOG)).mean())
        dlogits = probs.copy()
        dlogits[np.arange(b), yb] -= 1.0
        dlogits /= b
        correct = (probs.argmax(axis=1) == yb).mean()
        return loss, dlogits, float(correct)
    mask = yb >= 0
    count = int(mask.sum())
    if count == 0:
        raise ValueError("no labeled vertices in batch")
    picked = probs[mask, yb[mask]]
    loss = float(-np.log(np.maximum(picked, EPS_LOG)).mean())
    dlogits = np.zeros_like(probs)
    dlogits[mask] = probs[mask]
    dlogits[mask, yb[mask]] -= 1.0
    dlogits /= count
    correct = (probs[mask].argmax(axis=1) == yb[mask]).mean()
    return loss, dlogits, float(correct)


def _backward_batch(xb, yb, soft, model, params, cache):
    """Exact gradients of the mean cross-entropy over the batch."""
    loss, dlogits, acc = _loss_grad_output(cache["probs"], yb, model.mode)
    if model.mode == "signal":
        dfc_w = cache["pooled"].T @ dlogits
        dfc_b = dlogits.sum(axis=0)
        dpooled = dlogits @ model.fc_weight.T          # (B, C)
        n = xb.shape[1]
        dh = np.repeat(dpooled[:, None, :], n, axis=1) / n
    else:
        h = cache["h"]
        dfc_w = np.einsum("bnc,bnd->cd", h, dlogits)
        dfc_b = dlogits.sum(axis=(0, 1))
        dh = dlogits @ model.fc_weight.T               # (B, N, C)

    mats = _slices(soft)
    src, dst = soft.index.src, soft.index.dst
    dprobs = np.zeros_like(soft.probs)
    layer_grads: list[tuple[np.ndarray, np.ndarray]] = []
    last = len(model.gsl_layers) - 1
    for li in range(last, -1, -1):
        layer = model.gsl_layers[li]
        x_in, u, z = cache["layers"][li]
        dz = dh if li == last else dh * (z > 0)
        dw = np.einsum("kbnc,bnd->kcd", u, dz)
        db = dz.sum(axis=(0, 1))
        g = np.einsum("bnd,kcd->kbnc", dz, layer.w)    # (K, B, N, C_in)
        for k in range(soft.k):
            dprobs[k] += np.einsum("bec,bec->e", x_in[:, src, :], g[k][:, dst, :])
        if li > 0:
            dh = np.zeros_like(x_in)
            b, n, c = x_in.shape
            for k in range(soft.k):
                flat = g[k].transpose(1, 0, 2).reshape(n, b * c)
                dh += (mats[k] @ flat).reshape(n, b, c).transpose(1, 0, 2)
        layer_grads.append((dw, db))
        if not all(np.isfinite(a).all() for a in (dw, db)):
            raise FloatingPointError(f"non-finite gradient in graph-signal layer {li}")
    layer_grads.reverse()
    dlog = soften_backward(params, soft, dprobs)
    return loss, acc, Grads(layer_grads, dfc_w, dfc_b, dlog)


def backward(x: np.ndarray, y, model: Model, params: EdgeLogits, t: float) -> Grads:
    """Gradients of the cross-entropy loss for one sample w.r.t. all parameters."""
    soft = soften(params, t)
    xb = np.asarray(x, dtype=float)[None]
    yb = np.asarray([y]) if model.mode == "signal" else np.asarray(y)[None]
    _, cache = _forward_batch(xb, soft, model)
    _, _, grads = _backward_batch(xb, yb, soft, model, params, cache)
    return grads


class SGD:
    def __init__(self, lr: float):
        self.lr = lr

    def step(self, params: list[np.ndarray], grads: list[np.ndarray]):
        for p, g in zip(params, grads):
            p -= self.lr * g

    def state_arrays(self) -> dict[str, np.ndarray]:
        return {}


class Adam:
    def __init__(self, lr: float, beta1: float = 0.9, beta2: float = 0.999,
                 eps: float = 1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.t = 0
        self.m: list[np.ndarray] | None = None
        self.v: list[np.ndarray] | None = None

    def step(self, params: list[np.ndarray], grads: list[np.ndarray]):
        if self.m is None:
            self.m = [np.zeros_like(p) for p in params]
            self.v = [np.zeros_like(p) for p in params]
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        for i, (p, g) in enumerate(zip(params, grads)):
            self.m[i] = b1 * self.m[i] + (1 - b1) * g
            self.v[i] = b2 * self.v[i] + (1 - b2) * g * g
            m_hat = self.m[i] / (1 - b1 ** self.t)
            v_hat = self.v[i] / (1 - b2 ** self.t)
            p -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)

    def state_arrays(self) -> dict[str, np.ndarray]:
        out = {"adam_t": np.asarray(self.t)}
        for i, (m, v) in enumerate(zip(self.m or [], self.v or [])):
            out[f"adam_m{i}"] = m
            out[f"adam_v{i}"] = v
        return out


@dataclass
class TrainConfig:
    schedule: Schedule
    lr: float = 1e-3
    logit_lr: float | None = None  # transform logits; defaults to lr
    batch_size: int = 32
    optimizer: str = "adam"
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    seed: int = 0
    k: int = 5
    hidden: tuple[int, ...] = (32, 64)
    logit_scale: float = 0.01

    def __post_init__(self):
        if self.lr < 0:
            raise ValueError("learning rate must be nonnegative")
        if self.batch_size < 1:
            raise ValueError("batch size must be >= 1")
        if self.optimizer not in ("adam", "sgd"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")


@dataclass
class HistoryRow:
    step: int
    temperature: float
    train_loss: float
    train_acc: float
    val_acc: float


def _eval_split(model, params, dataset, idx, t, batch_size=256):
    """Mean loss and accuracy over the given sample/vertex indices."""
    soft = soften(params, t)
    if model.mode == "vertex":
        xb = dataset.signals[0][None]
        probs, _ = _forward_batch(xb, soft, model)
        labels = dataset.labels[idx]
        p = probs[0][idx]
        picked = np.maximum(p[np.arange(len(idx)), labels], EPS_LOG)
        return float(-np.log(picked).mean()), float((p.argmax(axis=1) == labels).mean())
    losses, correct = [], 0
    for lo in range(0, len(idx), batch_size):
        chunk = idx[lo:lo + batch_size]
        xb = np.stack([dataset.signals[i] for i in chunk])
        yb = dataset.labels[chunk]
        probs, _ = _forward_batch(xb, soft, model)
        picked = np.maximum(probs[np.arange(len(chunk)), yb], EPS_LOG)
        losses.append(-np.log(picked).sum())
        correct += int((probs.argmax(axis=1) == yb).sum())
    return float(np.sum(losses) / len(idx)), correct / len(idx)


def train(dataset, graph: Graph, config: TrainConfig):
    """Anneal the shared temperature over s_total optimizer steps.

    Returns (model, edge_logits, hard_transforms, history). Deterministic
    for a fixed config (seed included).
    """
    if not dataset.splits["train"].size:
        raise ValueError("empty training split")
    rng = np.random.default_rng(config.seed)
    in_channels = dataset.signals[0].shape[1]
    model = build_model(in_channels, tuple(config.hidden), dataset.num_classes,
                        config.k, dataset.mode, rng)
    params = EdgeLogits.init(graph, config.k, rng, scale=config.logit_scale)
    logit_lr = config.lr if config.logit_lr is None else config.logit_lr
    if config.optimizer == "adam":
        opt = Adam(config.lr, config.beta1, config.beta2, config.adam_eps)
        opt_logits = Adam(logit_lr, config.beta1, config.beta2, config.adam_eps)
    else:
        opt = SGD(config.lr)
        opt_logits = SGD(logit_lr)
    sched = config.schedule
    train_idx = dataset.splits["train"]
    val_idx = dataset.splits.get("val", train_idx)
    model_arrays = model.param_arrays()

    history: list[HistoryRow] = []

    def record(step):
        t = temperature_at(step, sched)
        tl, ta = _eval_split(model, params, dataset, train_idx, t)
        _, va = _eval_split(model, params, dataset, val_idx, t)
        history.append(HistoryRow(step, t, tl, ta, va))

    record(0)
    step = 0
    if dataset.mode == "vertex":
        x_full = dataset.signals[0]
        y_full = np.full(x_full.shape[0], -1, dtype=np.int64)
        y_full[train_idx] = dataset.labels[train_idx]
        eval_every = max(1, sched.s_total // 20)
        while step < sched.s_total:
            t = temperature_at(step, sched)
            soft = soften(params, t)
            xb = x_full[None]
            _, cache = _forward_batch(xb, soft, model)
            loss, _, grads = _backward_batch(xb, y_full[None], soft, model, params, cache)
            if not np.isfinite(loss):
                raise TrainingDivergedError(step)
            arrs = grads.arrays()
            opt.step(model_arrays, arrs[:-1])
            opt_logits.step([params.logits], [arrs[-1]])
            step += 1
            if step % eval_every == 0 or step == sched.s_total:
                record(step)
    else:
        while step < sched.s_total:
            order = rng.permutation(train_idx)
            for lo in range(0, len(order), config.batch_size):
                if step >= sched.s_total:
                    break
                chunk = order[lo:lo + config.batch_size]
                xb = np.stack([dataset.signals[i] for i in chunk])
                yb = dataset.labels[chunk]
                t = temperature_at(step, sched)
                soft = soften(params, t)
                _, cache = _forward_batch(xb, soft, model)
                loss, _, grads = _backward_batch(xb, yb, soft, model, params, cache)
                if not np.isfinite(loss):
                    raise TrainingDivergedError(step)
                arrs = grads.arrays()
                opt.step(model_arrays, arrs[:-1])
                opt_logits.step([params.logits], [arrs[-1]])
                step += 1
            record(step)
    hard = harden(params)
    return model, params, hard, history


CHECKPOINT_VERSION = 1


def graph_hash(graph: Graph) -> str:
    return hashlib.sha256(write_edge_list(graph).encode()).hexdigest()


def save_checkpoint(path, model: Model, params: EdgeLogits, graph: Graph,
                    step: int, sched: Schedule, opt=None):
    meta = {
        "version": CHECKPOINT_VERSION,
        "mode": model.mode,
        "k": params.k,
        "num_layers": len(model.gsl_layers),
        "graph_hash": graph_hash(graph),
        "step": step,
        "t_init": sched.t_init,
        "t_final": sched.t_final,
        "s_total": sched.s_total,
    }
    arrays = {"meta": np.frombuffer(json.dumps(meta).encode(), dtype=np.uint8)}
    for i, layer in enumerate(model.gsl_layers):
        arrays[f"w{i}"] = layer.w
        arrays[f"b{i}"] = layer.b
    arrays["fc_weight"] = model.fc_weight
    arrays["fc_bias"] = model.fc_bias
    arrays["logits"] = params.logits
    if opt is not None:
        arrays.update(opt.state_arrays())
    np.savez(path, **arrays)


def load_checkpoint(path, graph: Graph):
    """Returns (model, edge_logits, step, schedule); the graph must match the hash."""
    with np.load(path) as data:
        meta = json.loads(bytes(data["meta"]).decode())
        if meta["version"] != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {meta['version']}")
        if meta["graph_hash"] != graph_hash(graph):
            raise ValueError("checkpoint was trained on a different graph")
        layers = [GSLayerParams(data[f"w{i}"].copy(), data[f"b{i}"].copy())
                  for i in range(meta["num_layers"])]
        model = Model(layers, data["fc_weight"].copy(), data["fc_bias"].copy(),
                      meta["mode"])
        from .transforms import edge_index
        idx = edge_index(graph)
        params = EdgeLogits(graph, meta["k"], data["logits"].copy(), idx)
        sched = Schedule(meta["t_init"], meta["t_final"], meta["s_total"])
        return model, params, meta["step"], sched
