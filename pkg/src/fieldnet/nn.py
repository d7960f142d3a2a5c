"""Real-domain training engine.

Forward/backward for the conv/dense/pool layer set with plain SGD, L2
regularization and step decay.  Activations cover ReLU, the scaled ReLU,
the square function and the integer polynomial x^2 + a*x.  Everything is
float64 and deterministic under a fixed seed.
"""

from __future__ import annotations

import base64
import json
import math
from dataclasses import dataclass, field, replace
from typing import Callable, List, Optional, Sequence, Tuple, Union

import numpy as np

from . import data as data_mod


class GradientExplosionError(RuntimeError):
    """Non-finite loss or gradient encountered during training."""


# --- activations -----------------------------------------------------------


@dataclass(frozen=True)
class ReLU:
    pass


@dataclass(frozen=True)
class ScaledReLU:
    c: int

    def __post_init__(self):
        if not isinstance(self.c, int) or self.c < 2 or self.c % 2 != 0:
            raise ValueError(f"scaled ReLU constant must be a positive even int, got {self.c}")


@dataclass(frozen=True)
class Square:
    pass


@dataclass(frozen=True)
class Poly:
    a: int

    def __post_init__(self):
        if not isinstance(self.a, int) or self.a < 1:
            raise ValueError(f"poly activation parameter must be an int >= 1, got {self.a}")


ActivationKind = Union[ReLU, ScaledReLU, Square, Poly]


def activation_forward(kind: ActivationKind, x):
    if isinstance(kind, ReLU):
        return np.maximum(x, 0)
    if isinstance(kind, ScaledReLU):
        return np.maximum(kind.c * x, 0)
    if isinstance(kind, Square):
        return x * x
    if isinstance(kind, Poly):
        return x * x + kind.a * x
    raise TypeError(f"unknown activation {kind!r}")


def activation_backward(kind: ActivationKind, x):
    # subgradient 0 at the ReLU kink
    if isinstance(kind, ReLU):
        return (x > 0) * 1.0
    if isinstance(kind, ScaledReLU):
        return kind.c * ((x > 0) * 1.0)
    if isinstance(kind, Square):
        return 2.0 * x
    if isinstance(kind, Poly):
        return 2.0 * x + kind.a
    raise TypeError(f"unknown activation {kind!r}")


# --- layer specs ------------------------------------------------------------


@dataclass(frozen=True)
class Conv2D:
    out_channels: int
    kernel: int
    stride: int = 1
    padding: Union[int, str] = "same"  # int, "same" or "valid"

    def __post_init__(self):
        if self.out_channels < 1 or self.kernel < 1 or self.stride < 1:
            raise ValueError("conv dims must be positive")

    def pad(self) -> int:
        if self.padding == "same":
            return (self.kernel - 1) // 2
        if self.padding == "valid":
            return 0
        return int(self.padding)


@dataclass(frozen=True)
class Dense:
    out_dim: int

    def __post_init__(self):
        if self.out_dim < 1:
            raise ValueError("dense output dim must be positive")


@dataclass(frozen=True)
class Pool:
    kind: str  # max | mean | sum
    window: int
    stride: Optional[int] = None
    padding: int = 0

    def __post_init__(self):
        if self.kind not in ("max", "mean", "sum"):
            raise ValueError(f"pool kind must be max/mean/sum, got {self.kind!r}")
        if self.window < 1:
            raise ValueError("pool window must be positive")

    def eff_stride(self) -> int:
        return self.window if self.stride is None else self.stride


@dataclass(frozen=True)
class GlobalAvgPool:
    pass


@dataclass(frozen=True)
class Activation:
    act: ActivationKind


@dataclass(frozen=True)
class Dropout:
    rate: float

    def __post_init__(self):
        if not 0.0 <= self.rate < 1.0:
            raise ValueError(f"dropout rate must be in [0, 1), got {self.rate}")


@dataclass(frozen=True)
class Flatten:
    pass


LayerSpec = Union[Conv2D, Dense, Pool, GlobalAvgPool, Activation, Dropout, Flatten]


def layer_output_shape(spec: LayerSpec, in_shape: Tuple[int, ...]) -> Tuple[int, ...]:
    if isinstance(spec, Conv2D):
        if len(in_shape) != 3:
            raise ValueError(f"conv needs (C,H,W) input, got {in_shape}")
        c, h, w = in_shape
        p = spec.pad()
        ho = (h + 2 * p - spec.kernel) // spec.stride + 1
        wo = (w + 2 * p - spec.kernel) // spec.stride + 1
        if ho < 1 or wo < 1:
            raise ValueError(f"conv output collapsed: {in_shape} -> ({ho},{wo})")
        return (spec.out_channels, ho, wo)
    if isinstance(spec, Dense):
        if len(in_shape) != 1:
            raise ValueError(f"dense needs flat input, got {in_shape}")
        return (spec.out_dim,)
    if isinstance(spec, Pool):
        if len(in_shape) != 3:
            raise ValueError(f"pool needs (C,H,W) input, got {in_shape}")
        c, h, w = in_shape
        s = spec.eff_stride()
        ho = (h + 2 * spec.padding - spec.window) // s + 1
        wo = (w + 2 * spec.padding - spec.window) // s + 1
        if ho < 1 or wo < 1:
            raise ValueError(f"pool output collapsed: {in_shape}")
        return (c, ho, wo)
    if isinstance(spec, GlobalAvgPool):
        if len(in_shape) != 3:
            raise ValueError(f"global pool needs (C,H,W) input, got {in_shape}")
        return (in_shape[0],)
    if isinstance(spec, (Activation, Dropout)):
        return in_shape
    if isinstance(spec, Flatten):
        return (int(np.prod(in_shape)),)
    raise TypeError(f"unknown layer {spec!r}")


def output_shapes(layers: Sequence[LayerSpec], input_shape: Tuple[int, ...]) -> List[Tuple[int, ...]]:
    """Output shape after each layer; raises with the layer index on mismatch."""
    shapes = []
    cur = tuple(input_shape)
    for i, spec in enumerate(layers):
        try:
            cur = layer_output_shape(spec, cur)
        except ValueError as e:
            raise ValueError(f"layer {i} ({type(spec).__name__}): {e}") from None
        shapes.append(cur)
    return shapes


@dataclass
class Model:
    layers: List[LayerSpec]
    params: List[Optional[dict]]  # {"w": ..., "b": ...} for conv/dense, else None
    input_shape: Tuple[int, ...]


def build_model(
    layers: Sequence[LayerSpec],
    input_shape: Tuple[int, ...],
    seed: int = 0,
    init_gain: float = math.sqrt(2.0),
) -> Model:
    """Kaiming-uniform fan-in init; biases start at zero."""
    rng = np.random.default_rng(seed)
    shapes = output_shapes(layers, input_shape)
    params: List[Optional[dict]] = []
    cur = tuple(input_shape)
    for spec, out in zip(layers, shapes):
        if isinstance(spec, Conv2D):
            fan_in = cur[0] * spec.kernel * spec.kernel
            bound = init_gain * math.sqrt(3.0 / fan_in)
            w = rng.uniform(-bound, bound, size=(spec.out_channels, cur[0], spec.kernel, spec.kernel))
            params.append({"w": w, "b": np.zeros(spec.out_channels)})
        elif isinstance(spec, Dense):
            fan_in = cur[0]
            bound = init_gain * math.sqrt(3.0 / fan_in)
            w = rng.uniform(-bound, bound, size=(fan_in, spec.out_dim))
            params.append({"w": w, "b": np.zeros(spec.out_dim)})
        else:
            params.append(None)
        cur = out
    return Model(list(layers), params, tuple(input_shape))


# --- shared window machinery (dtype-preserving so the integer engines can
# reuse it) ------------------------------------------------------------------


def pad2d(x: np.ndarray, pad: int, fill=0):
    if pad == 0:
        return x
    n, c, h, w = x.shape
    out = np.full((n, c, h + 2 * pad, w + 2 * pad), fill, dtype=x.dtype)
    out[:, :, pad : pad + h, pad : pad + w] = x
    return out


def im2col(x: np.ndarray, kernel: int, stride: int, pad: int):
    """(N,C,H,W) -> (N, C*k*k, L) patch matrix; returns (cols, Ho, Wo)."""
    xp = pad2d(x, pad)
    n, c, h, w = xp.shape
    ho = (h - kernel) // stride + 1
    wo = (w - kernel) // stride + 1
    win = np.empty((n, c, kernel, kernel, ho, wo), dtype=x.dtype)
    for i in range(kernel):
        for j in range(kernel):
            win[:, :, i, j] = xp[:, :, i : i + stride * ho : stride, j : j + stride * wo : stride]
    return win.reshape(n, c * kernel * kernel, ho * wo), ho, wo


def col2im(dcols: np.ndarray, x_shape, kernel: int, stride: int, pad: int, ho: int, wo: int):
    n, c, h, w = x_shape
    dwin = dcols.reshape(n, c, kernel, kernel, ho, wo)
    dxp = np.zeros((n, c, h + 2 * pad, w + 2 * pad), dtype=dcols.dtype)
    for i in range(kernel):
        for j in range(kernel):
            dxp[:, :, i : i + stride * ho : stride, j : j + stride * wo : stride] += dwin[:, :, i, j]
    if pad == 0:
        return dxp
    return dxp[:, :, pad : pad + h, pad : pad + w]


def pool_windows(x: np.ndarray, window: int, stride: int, pad: int, fill=0):
    """(N,C,H,W) -> (N, C, window*window, Ho, Wo) stack of window entries."""
    xp = pad2d(x, pad, fill)
    n, c, h, w = xp.shape
    ho = (h - window) // stride + 1
    wo = (w - window) // stride + 1
    stack = np.empty((n, c, window * window, ho, wo), dtype=x.dtype)
    k = 0
    for i in range(window):
        for j in range(window):
            stack[:, :, k] = xp[:, :, i : i + stride * ho : stride, j : j + stride * wo : stride]
            k += 1
    return stack, ho, wo


def pool_scatter(dstack: np.ndarray, x_shape, window: int, stride: int, pad: int, ho: int, wo: int):
    n, c, h, w = x_shape
    dxp = np.zeros((n, c, h + 2 * pad, w + 2 * pad), dtype=dstack.dtype)
    k = 0
    for i in range(window):
        for j in range(window):
            dxp[:, :, i : i + stride * ho : stride, j : j + stride * wo : stride] += dstack[:, :, k]
            k += 1
    if pad == 0:
        return dxp
    return dxp[:, :, pad : pad + h, pad : pad + w]


# --- forward / backward ------------------------------------------------------


def forward(
    model: Model,
    batch: np.ndarray,
    mode: str = "eval",
    rng: Optional[np.random.Generator] = None,
):
    """Run the layer stack; returns (logits, caches) for backward().

    Dropout is active only in train mode (inverted scaling, eval is the
    identity) and consumes the supplied rng.
    """
    if mode not in ("train", "eval"):
        raise ValueError(f"mode must be train or eval, got {mode!r}")
    if tuple(batch.shape[1:]) != model.input_shape:
        raise ValueError(
            f"batch shape {batch.shape[1:]} does not match model input {model.input_shape}"
        )
    if rng is None:
        rng = np.random.default_rng(0)
    x = batch
    caches = []
    for i, (spec, prm) in enumerate(zip(model.layers, model.params)):
        if isinstance(spec, Conv2D):
            cols, ho, wo = im2col(x, spec.kernel, spec.stride, spec.pad())
            wmat = prm["w"].reshape(spec.out_channels, -1)
            y = np.matmul(wmat[None], cols) + prm["b"][:, None]
            caches.append(("conv", x.shape, cols, ho, wo))
            x = y.reshape(x.shape[0], spec.out_channels, ho, wo)
        elif isinstance(spec, Dense):
            if x.ndim != 2:
                raise ValueError(f"layer {i} (Dense): input must be flat, got shape {x.shape}")
            caches.append(("dense", x))
            x = x @ prm["w"] + prm["b"]
        elif isinstance(spec, Pool):
            fill = -np.inf if spec.kind == "max" else 0.0
            stack, ho, wo = pool_windows(x, spec.window, spec.eff_stride(), spec.padding, fill)
            if spec.kind == "max":
                arg = stack.argmax(axis=2)
                caches.append(("pool", x.shape, arg, ho, wo))
                x = stack.max(axis=2)
            else:
                caches.append(("pool", x.shape, None, ho, wo))
                x = stack.sum(axis=2)
                if spec.kind == "mean":
                    x = x / (spec.window * spec.window)
        elif isinstance(spec, GlobalAvgPool):
            caches.append(("gap", x.shape))
            x = x.mean(axis=(2, 3))
        elif isinstance(spec, Activation):
            caches.append(("act", x))
            x = activation_forward(spec.act, x)
        elif isinstance(spec, Dropout):
            if mode == "train" and spec.rate > 0.0:
                mask = (rng.random(x.shape) >= spec.rate) / (1.0 - spec.rate)
                caches.append(("dropout", mask))
                x = x * mask
            else:
                caches.append(("dropout", None))
        elif isinstance(spec, Flatten):
            caches.append(("flatten", x.shape))
            x = x.reshape(x.shape[0], -1)
        else:
            raise TypeError(f"layer {i}: unknown spec {spec!r}")
    return x, caches


def loss_softmax_xent(logits: np.ndarray, labels: np.ndarray):
    """Mean cross-entropy with max-subtraction; returns (loss, dlogits)."""
    n, k = logits.shape
    labels = np.asarray(labels)
    if labels.min(initial=0) < 0 or labels.max(initial=0) >= k:
        raise ValueError(f"label out of range [0, {k})")
    shifted = logits - logits.max(axis=1, keepdims=True)
    expo = np.exp(shifted)
    probs = expo / expo.sum(axis=1, keepdims=True)
    nll = -(shifted[np.arange(n), labels] - np.log(expo.sum(axis=1)))
    loss = float(nll.mean())
    dlogits = probs.copy()
    dlogits[np.arange(n), labels] -= 1.0
    return loss, dlogits / n


def backward(model: Model, caches, dlogits: np.ndarray):
    """Gradients for every parameterized layer, aligned with model.params."""
    grads: List[Optional[dict]] = [None] * len(model.layers)
    dx = dlogits
    for i in range(len(model.layers) - 1, -1, -1):
        spec, prm, cache = model.layers[i], model.params[i], caches[i]
        if isinstance(spec, Conv2D):
            _, x_shape, cols, ho, wo = cache
            n = x_shape[0]
            dyf = dx.reshape(n, spec.out_channels, ho * wo)
            wmat = prm["w"].reshape(spec.out_channels, -1)
            dw = np.matmul(dyf, cols.transpose(0, 2, 1)).sum(axis=0)
            db = dyf.sum(axis=(0, 2))
            dcols = np.matmul(wmat.T[None], dyf)
            dx = col2im(dcols, x_shape, spec.kernel, spec.stride, spec.pad(), ho, wo)
            grads[i] = {"w": dw.reshape(prm["w"].shape), "b": db}
        elif isinstance(spec, Dense):
            _, x = cache
            grads[i] = {"w": x.T @ dx, "b": dx.sum(axis=0)}
            dx = dx @ prm["w"].T
        elif isinstance(spec, Pool):
            _, x_shape, arg, ho, wo = cache
            area = spec.window * spec.window
            if spec.kind == "max":
                sel = np.arange(area)[None, None, :, None, None] == arg[:, :, None]
                dstack = sel * dx[:, :, None]
            elif spec.kind == "mean":
                dstack = np.broadcast_to(dx[:, :, None] / area, dx.shape[:2] + (area,) + dx.shape[2:]).copy()
            else:
                dstack = np.broadcast_to(dx[:, :, None], dx.shape[:2] + (area,) + dx.shape[2:]).copy()
            dx = pool_scatter(dstack, x_shape, spec.window, spec.eff_stride(), spec.padding, ho, wo)
        elif isinstance(spec, GlobalAvgPool):
            _, x_shape = cache
            _, _, h, w = x_shape
            dx = np.broadcast_to(dx[:, :, None, None] / (h * w), x_shape).copy()
        elif isinstance(spec, Activation):
            _, x = cache
            dx = dx * activation_backward(spec.act, x)
        elif isinstance(spec, Dropout):
            _, mask = cache
            if mask is not None:
                dx = dx * mask
        elif isinstance(spec, Flatten):
            _, x_shape = cache
            dx = dx.reshape(x_shape)
    return grads


# --- SGD ---------------------------------------------------------------------


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float
    epochs: int
    batch_size: int = 125
    l2_lambda: float = 0.0
    lr_decay_factor: float = 1.0
    lr_decay_epochs: tuple = ()
    seed: int = 0
    lr_grid: Optional[tuple] = None

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")
        if not 0 < self.lr_decay_factor <= 1:
            raise ValueError("lr_decay_factor must be in (0, 1]")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        object.__setattr__(self, "lr_decay_epochs", tuple(self.lr_decay_epochs))
        if self.lr_grid is not None:
            object.__setattr__(self, "lr_grid", tuple(self.lr_grid))


def lr_at(config: TrainConfig, epoch: int) -> float:
    """Learning rate at a (1-based) epoch: decayed once per passed milestone."""
    lr = config.learning_rate
    for e in sorted(config.lr_decay_epochs):
        if epoch >= e:
            lr *= config.lr_decay_factor
    return lr


def sgd_step(model: Model, grads, config: TrainConfig, epoch: int) -> Model:
    """w <- w - lr*(g + lambda*w); biases are exempt from L2."""
    lr = lr_at(config, epoch)
    lam = config.l2_lambda
    for i, (prm, g) in enumerate(zip(model.params, grads)):
        if prm is None or g is None:
            continue
        if not (np.isfinite(g["w"]).all() and np.isfinite(g["b"]).all()):
            raise GradientExplosionError(
                f"non-finite gradient at layer {i} ({type(model.layers[i]).__name__})"
            )
        prm["w"] -= lr * (g["w"] + lam * prm["w"])
        prm["b"] -= lr * g["b"]
    return model


def evaluate(model: Model, ds: data_mod.Dataset, batch_size: int = 256) -> float:
    """Argmax accuracy in [0, 1]."""
    correct = 0
    for xb, yb in data_mod.batches(ds, batch_size, shuffle=False):
        logits, _ = forward(model, xb, mode="eval")
        correct += int((logits.argmax(axis=1) == yb).sum())
    return correct / len(ds)


def train(
    model: Model,
    train_ds: data_mod.Dataset,
    test_ds: data_mod.Dataset,
    config: TrainConfig,
):
    """SGD training loop; returns (model, per-epoch history).

    History rows: {epoch, train_loss, train_acc, test_acc, lr}.  train_loss
    and train_acc are accumulated over the epoch's own batches.  Fully
    deterministic given config.seed.
    """
    dropout_rng = np.random.default_rng(config.seed)
    history = []
    for epoch in range(1, config.epochs + 1):
        lr = lr_at(config, epoch)
        shuffle_seed = config.seed * 1_000_003 + epoch
        losses = []
        correct = 0
        for xb, yb in data_mod.batches(train_ds, config.batch_size, seed=shuffle_seed):
            logits, caches = forward(model, xb, mode="train", rng=dropout_rng)
            loss, dlogits = loss_softmax_xent(logits, yb)
            if not math.isfinite(loss):
                raise GradientExplosionError(f"non-finite loss at epoch {epoch}")
            correct += int((logits.argmax(axis=1) == yb).sum())
            losses.append(loss)
            grads = backward(model, caches, dlogits)
            sgd_step(model, grads, config, epoch)
        history.append(
            {
                "epoch": epoch,
                "train_loss": float(np.mean(losses)) if losses else float("nan"),
                "train_acc": correct / len(train_ds),
                "test_acc": evaluate(model, test_ds),
                "lr": lr,
            }
        )
    return model, history


def lr_search(
    model_builder: Callable[[], Model],
    train_ds: data_mod.Dataset,
    test_ds: data_mod.Dataset,
    config: TrainConfig,
    grid: Optional[Sequence[float]] = None,
    budget_epochs: int = 1,
) -> float:
    """Train one model per learning rate, return the best by final test
    accuracy; ties break toward the smaller rate; diverged candidates are
    never selected."""
    grid = tuple(grid if grid is not None else (config.lr_grid or ()))
    if not grid:
        raise ValueError("learning-rate grid is empty")
    results = []
    for lr in grid:
        cfg = replace(config, learning_rate=lr, epochs=budget_epochs, lr_grid=None)
        try:
            _, hist = train(model_builder(), train_ds, test_ds, cfg)
            results.append((lr, hist[-1]["test_acc"]))
        except GradientExplosionError:
            results.append((lr, None))
    alive = [(lr, acc) for lr, acc in results if acc is not None]
    if not alive:
        raise RuntimeError(f"all learning-rate candidates diverged: {grid}")
    alive.sort(key=lambda t: (-t[1], t[0]))
    return alive[0][0]


# --- serialization -----------------------------------------------------------

MODEL_FORMAT_VERSION = 1


def _encode_f64(a: np.ndarray) -> dict:
    a = np.ascontiguousarray(a, dtype="<f8")
    return {"shape": list(a.shape), "data": base64.b64encode(a.tobytes()).decode("ascii")}


def _decode_f64(d: dict) -> np.ndarray:
    raw = base64.b64decode(d["data"])
    return np.frombuffer(raw, dtype="<f8").reshape(d["shape"]).copy()


def activation_to_dict(act: ActivationKind) -> dict:
    if isinstance(act, ReLU):
        return {"activation": "relu"}
    if isinstance(act, ScaledReLU):
        return {"activation": "scaled_relu", "c": act.c}
    if isinstance(act, Square):
        return {"activation": "square"}
    if isinstance(act, Poly):
        return {"activation": "poly", "a": act.a}
    raise TypeError(f"unknown activation {act!r}")


def activation_from_dict(d: dict) -> ActivationKind:
    name = d["activation"]
    if name == "relu":
        return ReLU()
    if name == "scaled_relu":
        return ScaledReLU(int(d["c"]))
    if name == "square":
        return Square()
    if name == "poly":
        return Poly(int(d["a"]))
    raise ValueError(f"unknown activation name {name!r}")


def layer_to_dict(spec: LayerSpec) -> dict:
    if isinstance(spec, Conv2D):
        return {
            "kind": "conv2d",
            "out_channels": spec.out_channels,
            "kernel": spec.kernel,
            "stride": spec.stride,
            "padding": spec.padding,
        }
    if isinstance(spec, Dense):
        return {"kind": "dense", "out_dim": spec.out_dim}
    if isinstance(spec, Pool):
        return {
            "kind": "pool",
            "pool": spec.kind,
            "window": spec.window,
            "stride": spec.eff_stride(),
            "padding": spec.padding,
        }
    if isinstance(spec, GlobalAvgPool):
        return {"kind": "global_avg_pool"}
    if isinstance(spec, Activation):
        return {"kind": "activation", **activation_to_dict(spec.act)}
    if isinstance(spec, Dropout):
        return {"kind": "dropout", "rate": spec.rate}
    if isinstance(spec, Flatten):
        return {"kind": "flatten"}
    raise TypeError(f"unknown layer {spec!r}")


def layer_from_dict(d: dict) -> LayerSpec:
    kind = d["kind"]
    if kind == "conv2d":
        return Conv2D(int(d["out_channels"]), int(d["kernel"]), int(d["stride"]), d["padding"])
    if kind == "dense":
        return Dense(int(d["out_dim"]))
    if kind == "pool":
        return Pool(d["pool"], int(d["window"]), int(d["stride"]), int(d.get("padding", 0)))
    if kind == "global_avg_pool":
        return GlobalAvgPool()
    if kind == "activation":
        return Activation(activation_from_dict(d))
    if kind == "dropout":
        return Dropout(float(d["rate"]))
    if kind == "flatten":
        return Flatten()
    raise ValueError(f"unknown layer kind {kind!r}")


def model_to_json(model: Model) -> str:
    doc = {
        "format_version": MODEL_FORMAT_VERSION,
        "input_shape": list(model.input_shape),
        "layers": [layer_to_dict(s) for s in model.layers],
        "params": [
            None if p is None else {"weight": _encode_f64(p["w"]), "bias": _encode_f64(p["b"])}
            for p in model.params
        ],
    }
    return json.dumps(doc, indent=2, sort_keys=True)


def model_from_json(text: str) -> Model:
    doc = json.loads(text)
    if doc.get("format_version") != MODEL_FORMAT_VERSION:
        raise ValueError(f"unsupported model format_version {doc.get('format_version')!r}")
    layers = [layer_from_dict(d) for d in doc["layers"]]
    params = [
        None if p is None else {"w": _decode_f64(p["weight"]), "b": _decode_f64(p["bias"])}
        for p in doc["params"]
    ]
    return Model(layers, params, tuple(doc["input_shape"]))


def save_model(model: Model, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(model_to_json(model))


def load_model(path: str) -> Model:
    with open(path, "r", encoding="utf-8") as fh:
        return model_from_json(fh.read())


METRICS_HEADER = "epoch,train_loss,train_acc,test_acc,lr"


def metrics_csv(history) -> str:
    lines = [METRICS_HEADER]
    for row in history:
        lines.append(
            f"{row['epoch']},{row['train_loss']!r},{row['train_acc']!r},"
            f"{row['test_acc']!r},{row['lr']!r}"
        )
    return "\n".join(lines) + "\n"
