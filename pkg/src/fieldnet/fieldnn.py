"""Quantized exact inference: integers and the prime field.

A trained float model with field-compatible layers is converted to
integer parameters with explicit scale tracking: conv/dense multiply the
scale by the weight scale, polynomial activations square it, sum-pooling
preserves it, and mean/global-average pooling are rewritten as
sum-pooling with the window area folded into the scale (no division in
the field).  There is no rescaling between layers, so the worst-case
bound grows fast with depth; required_modulus_bound() tells the caller
how large the modulus must be for field_forward to agree with the
unbounded-integer oracle exactly.
"""

from __future__ import annotations

import base64
import json
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import List, Optional, Sequence, Tuple

import numpy as np

from . import field as field_mod
from . import nn

_INT64_MAX = 1 << 63


def _is_pow2(n: int) -> bool:
    return n >= 1 and (n & (n - 1)) == 0


@dataclass(frozen=True)
class QuantConfig:
    weight_scale: int
    input_scale: int
    activation_a: int = 1

    def __post_init__(self):
        for name in ("weight_scale", "input_scale"):
            v = getattr(self, name)
            if not isinstance(v, int) or v < 2 or not _is_pow2(v):
                raise ValueError(f"{name} must be a power-of-two int >= 2, got {v}")
        if not isinstance(self.activation_a, int) or self.activation_a < 1:
            raise ValueError(f"activation_a must be an int >= 1, got {self.activation_a}")


def _to_pyint(arr: np.ndarray) -> np.ndarray:
    """Object array of Python ints (never np.int64, which would wrap)."""
    return np.frompyfunc(int, 1, 1)(np.asarray(arr))


def round_half_away(x: float, scale: int = 1) -> int:
    """round(x * scale) with ties away from zero, computed exactly."""
    fr = Fraction(x) * scale
    q, r = divmod(abs(fr.numerator), fr.denominator)
    if 2 * r >= fr.denominator:
        q += 1
    return q if fr >= 0 else -q


def _round_scaled_array(w: np.ndarray, scale: int, what: Optional[str] = None) -> np.ndarray:
    """Exact round-half-away-from-zero of w*scale as Python ints.

    When `what` is set the result must fit int64 (the storage width for
    that parameter class) or OverflowError is raised.
    """
    w = np.asarray(w, dtype=np.float64)
    if _is_pow2(scale) and w.size and float(np.abs(w).max()) * scale < 2**52:
        # power-of-two scaling and the +0.5 are exact in float64 here
        s = w * float(scale)
        q = np.sign(s) * np.floor(np.abs(s) + 0.5)
        out = _to_pyint(q)
    else:
        out = np.array([round_half_away(float(v), scale) for v in w.ravel()], dtype=object)
        out = out.reshape(w.shape)
    if what is not None and out.size and max(abs(int(v)) for v in out.ravel()) >= _INT64_MAX:
        raise OverflowError(f"quantized {what} exceeds 2**63; lower the scales")
    return out


@dataclass
class QuantizedModel:
    """Integer model with per-layer output scales.

    layer_scales[i] is the integer-per-real ratio of layer i's output;
    the input itself is at input_scale.  required_bound is the worst-case
    absolute value any intermediate can reach for inputs in [-1, 1].
    """

    layers: List[nn.LayerSpec]
    int_params: List[Optional[dict]]
    layer_scales: List[int]
    quant_config: QuantConfig
    input_shape: Tuple[int, ...]
    required_bound: int
    source_model: Optional[str] = None

    def __post_init__(self):
        for i, spec in enumerate(self.layers):
            if isinstance(spec, nn.Activation) and not isinstance(spec.act, (nn.Square, nn.Poly)):
                raise ValueError(f"layer {i}: activation {spec.act!r} is not field-compatible")
            if isinstance(spec, nn.Pool) and spec.kind != "sum":
                raise ValueError(f"layer {i}: pool kind {spec.kind!r} is not field-compatible")
            if isinstance(spec, (nn.Dropout, nn.GlobalAvgPool)):
                raise ValueError(f"layer {i}: {type(spec).__name__} must be removed by quantize()")

    def scale_in(self, i: int) -> int:
        return self.layer_scales[i - 1] if i > 0 else self.quant_config.input_scale

    @property
    def output_scale(self) -> int:
        return self.layer_scales[-1] if self.layer_scales else self.quant_config.input_scale


def quantize(model: nn.Model, qc: QuantConfig, source_model: Optional[str] = None) -> QuantizedModel:
    """Round weights to integers at the weight scale and rewrite the layer
    stack into its field-compatible form.

    Biases are rounded at the layer's pre-activation scale so addition is
    scale-consistent.  Mean pooling and global average pooling become sum
    pooling with the area folded into the scale; dropout is removed
    (inference identity).  ReLU activations and max pooling are refused.
    """
    shapes = nn.output_shapes(model.layers, model.input_shape)
    layers: List[nn.LayerSpec] = []
    int_params: List[Optional[dict]] = []
    scales: List[int] = []
    s = qc.input_scale
    cur_shape = model.input_shape
    for i, (spec, prm) in enumerate(zip(model.layers, model.params)):
        if isinstance(spec, (nn.Conv2D, nn.Dense)):
            s_out = s * qc.weight_scale
            w_int = _round_scaled_array(prm["w"], qc.weight_scale, f"weights at layer {i}")
            # biases live at the pre-activation scale and may exceed int64;
            # only serialization enforces the storage width
            b_int = _round_scaled_array(prm["b"], s_out)
            layers.append(spec)
            int_params.append({"w": w_int, "b": b_int})
            scales.append(s_out)
            s = s_out
        elif isinstance(spec, nn.Pool):
            if spec.kind == "max":
                raise ValueError(f"layer {i}: max pooling is not field-compatible")
            layers.append(nn.Pool("sum", spec.window, spec.eff_stride(), spec.padding))
            int_params.append(None)
            if spec.kind == "mean":
                s = s * spec.window * spec.window
            scales.append(s)
        elif isinstance(spec, nn.GlobalAvgPool):
            c, h, w = cur_shape
            if h != w:
                raise ValueError(f"layer {i}: global pooling needs square input, got {cur_shape}")
            layers.append(nn.Pool("sum", h, h, 0))
            int_params.append(None)
            s = s * h * w
            scales.append(s)
        elif isinstance(spec, nn.Activation):
            if isinstance(spec.act, nn.Square):
                pass
            elif isinstance(spec.act, nn.Poly):
                if spec.act.a != qc.activation_a:
                    raise ValueError(
                        f"layer {i}: model uses poly a={spec.act.a} but quant config says "
                        f"a={qc.activation_a}"
                    )
            else:
                raise ValueError(
                    f"layer {i}: activation {spec.act!r} is not field-compatible"
                )
            layers.append(spec)
            int_params.append(None)
            s = s * s
            scales.append(s)
        elif isinstance(spec, nn.Dropout):
            continue  # identity at inference
        elif isinstance(spec, nn.Flatten):
            layers.append(spec)
            int_params.append(None)
            scales.append(s)
        else:
            raise ValueError(f"layer {i}: {type(spec).__name__} is not field-compatible")
        cur_shape = shapes[i]
    qm = QuantizedModel(
        layers=layers,
        int_params=int_params,
        layer_scales=scales,
        quant_config=qc,
        input_shape=model.input_shape,
        required_bound=0,
        source_model=source_model,
    )
    qm.required_bound = required_modulus_bound(qm, qc.input_scale)
    return qm


def poly_activation_scaled(v, scale: int, a: int):
    """x^2 + a*x applied to an integer at scale S: v^2 + (a*S)*v, output
    scale S^2.  a=0 is the pure square."""
    return v * v + (a * scale) * v


def quantize_inputs(x: np.ndarray, input_scale: int) -> np.ndarray:
    """Round normalized [-1, 1] inputs to integers at the input scale."""
    x = np.asarray(x, dtype=np.float64)
    if x.size and float(np.abs(x).max()) > 1.0 + 1e-9:
        raise ValueError("inputs must be normalized to [-1, 1] before quantization")
    return _round_scaled_array(x, input_scale, "inputs")


def _act_param(spec: nn.Activation) -> int:
    return spec.act.a if isinstance(spec.act, nn.Poly) else 0


def integer_forward(qm: QuantizedModel, x_int: np.ndarray) -> np.ndarray:
    """Exact forward pass over unbounded Python integers (the oracle)."""
    x = _to_pyint(x_int)
    for i, (spec, prm) in enumerate(zip(qm.layers, qm.int_params)):
        if isinstance(spec, nn.Conv2D):
            cols, ho, wo = nn.im2col(x, spec.kernel, spec.stride, spec.pad())
            wmat = prm["w"].reshape(spec.out_channels, -1)
            n = x.shape[0]
            y = np.empty((n, spec.out_channels, ho * wo), dtype=object)
            for k in range(n):
                y[k] = wmat.dot(cols[k]) + prm["b"][:, None]
            x = y.reshape(n, spec.out_channels, ho, wo)
        elif isinstance(spec, nn.Dense):
            x = x.dot(prm["w"]) + prm["b"]
        elif isinstance(spec, nn.Pool):
            stack, ho, wo = nn.pool_windows(x, spec.window, spec.eff_stride(), spec.padding)
            x = stack.sum(axis=2)
        elif isinstance(spec, nn.Activation):
            x = poly_activation_scaled(x, qm.scale_in(i), _act_param(spec))
        elif isinstance(spec, nn.Flatten):
            x = x.reshape(x.shape[0], -1)
        else:
            raise TypeError(f"layer {i}: unexpected spec {spec!r}")
    return x


def field_forward(
    qm: QuantizedModel,
    x_int: np.ndarray,
    m: field_mod.Modulus,
    allow_wrap: bool = False,
) -> np.ndarray:
    """Forward pass in F_p; returns centered-lifted signed logits.

    Refuses a modulus with (p-1)/2 < required_bound unless allow_wrap is
    set (useful only for demonstrating wrap-around).
    """
    if not allow_wrap and m.half < qm.required_bound:
        raise ValueError(
            f"modulus {m.p} too small: (p-1)/2 = {m.half} < required bound "
            f"{qm.required_bound} (pass allow_wrap=True to override)"
        )
    p = m.p
    x = _to_pyint(x_int) % p
    for i, (spec, prm) in enumerate(zip(qm.layers, qm.int_params)):
        if isinstance(spec, nn.Conv2D):
            w_res = prm["w"] % p
            b_res = prm["b"] % p
            cols, ho, wo = nn.im2col(x, spec.kernel, spec.stride, spec.pad())
            wmat = w_res.reshape(spec.out_channels, -1)
            n = x.shape[0]
            y = np.empty((n, spec.out_channels, ho * wo), dtype=object)
            for k in range(n):
                y[k] = (wmat.dot(cols[k]) + b_res[:, None]) % p
            x = y.reshape(n, spec.out_channels, ho, wo)
        elif isinstance(spec, nn.Dense):
            x = (x.dot(prm["w"] % p) + prm["b"] % p) % p
        elif isinstance(spec, nn.Pool):
            stack, ho, wo = nn.pool_windows(x, spec.window, spec.eff_stride(), spec.padding)
            x = stack.sum(axis=2) % p
        elif isinstance(spec, nn.Activation):
            c = (_act_param(spec) * qm.scale_in(i)) % p
            x = (x * x + c * x) % p
        elif isinstance(spec, nn.Flatten):
            x = x.reshape(x.shape[0], -1)
        else:
            raise TypeError(f"layer {i}: unexpected spec {spec!r}")
    lift = np.frompyfunc(lambda e: e if e <= m.half else e - p, 1, 1)
    return lift(x)


def required_modulus_bound(qm: QuantizedModel, input_max: int) -> int:
    """Worst-case absolute value of any intermediate, by per-layer interval
    arithmetic.  Any prime with (p-1)/2 >= the bound makes field_forward
    agree with integer_forward exactly."""
    shapes = nn.output_shapes(qm.layers, qm.input_shape)
    x_max = int(input_max)
    bound = x_max
    cur_shape = qm.input_shape
    for i, (spec, prm) in enumerate(zip(qm.layers, qm.int_params)):
        if isinstance(spec, nn.Conv2D):
            fan_in = cur_shape[0] * spec.kernel * spec.kernel
            w_max = int(max((abs(int(v)) for v in prm["w"].ravel()), default=0))
            b_max = int(max((abs(int(v)) for v in prm["b"].ravel()), default=0))
            x_max = fan_in * w_max * x_max + b_max
        elif isinstance(spec, nn.Dense):
            fan_in = cur_shape[0]
            w_max = int(max((abs(int(v)) for v in prm["w"].ravel()), default=0))
            b_max = int(max((abs(int(v)) for v in prm["b"].ravel()), default=0))
            x_max = fan_in * w_max * x_max + b_max
        elif isinstance(spec, nn.Pool):
            x_max = spec.window * spec.window * x_max
        elif isinstance(spec, nn.Activation):
            x_max = x_max * x_max + _act_param(spec) * qm.scale_in(i) * x_max
        elif isinstance(spec, nn.Flatten):
            pass
        bound = max(bound, x_max)
        cur_shape = shapes[i]
    return bound


def auto_modulus(qm: QuantizedModel) -> field_mod.Modulus:
    """Smallest prime p with (p-1)/2 >= required_bound."""
    target = 2 * qm.required_bound + 1
    if target >= 1 << 64:
        raise ValueError(
            f"required bound {qm.required_bound} needs a modulus beyond 2**64; "
            "lower the scales or shrink the network"
        )
    p = field_mod.next_prime(max(3, target))
    if p >= 1 << 64:
        raise ValueError("no suitable prime below 2**64")
    return field_mod.Modulus(p)


# --- serialization -----------------------------------------------------------

QMODEL_FORMAT_VERSION = 1


def _encode_i64(a: np.ndarray) -> dict:
    flat = [int(v) for v in a.ravel()]
    if any(abs(v) >= _INT64_MAX for v in flat):
        raise OverflowError("integer parameter exceeds int64 storage")
    packed = np.array(flat, dtype="<i8").tobytes()
    return {"shape": list(a.shape), "data": base64.b64encode(packed).decode("ascii")}


def _decode_i64(d: dict) -> np.ndarray:
    raw = base64.b64decode(d["data"])
    arr = np.frombuffer(raw, dtype="<i8").reshape(d["shape"])
    return _to_pyint(arr)


def quantized_to_json(qm: QuantizedModel, modulus: Optional[int] = None) -> str:
    doc = {
        "format_version": QMODEL_FORMAT_VERSION,
        "modulus": str(modulus) if modulus is not None else None,
        "quant_config": {
            "weight_scale": qm.quant_config.weight_scale,
            "input_scale": qm.quant_config.input_scale,
            "activation_a": qm.quant_config.activation_a,
        },
        "input_shape": list(qm.input_shape),
        "layers": [nn.layer_to_dict(s) for s in qm.layers],
        "int_params": [
            None if p is None else {"weight": _encode_i64(p["w"]), "bias": _encode_i64(p["b"])}
            for p in qm.int_params
        ],
        # big integers go through JSON as decimal strings
        "layer_scales": [str(s) for s in qm.layer_scales],
        "required_bound": str(qm.required_bound),
        "source_model": qm.source_model,
    }
    return json.dumps(doc, indent=2, sort_keys=True)


def quantized_from_json(text: str) -> Tuple[QuantizedModel, Optional[int]]:
    doc = json.loads(text)
    if doc.get("format_version") != QMODEL_FORMAT_VERSION:
        raise ValueError(f"unsupported quantized format_version {doc.get('format_version')!r}")
    qc = QuantConfig(**doc["quant_config"])
    layers = [nn.layer_from_dict(d) for d in doc["layers"]]
    int_params = [
        None if p is None else {"w": _decode_i64(p["weight"]), "b": _decode_i64(p["bias"])}
        for p in doc["int_params"]
    ]
    qm = QuantizedModel(
        layers=layers,
        int_params=int_params,
        layer_scales=[int(s) for s in doc["layer_scales"]],
        quant_config=qc,
        input_shape=tuple(doc["input_shape"]),
        required_bound=int(doc["required_bound"]),
        source_model=doc.get("source_model"),
    )
    modulus = int(doc["modulus"]) if doc.get("modulus") is not None else None
    return qm, modulus


def save_quantized(qm: QuantizedModel, path: str, modulus: Optional[int] = None) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(quantized_to_json(qm, modulus))


def load_quantized(path: str) -> Tuple[QuantizedModel, Optional[int]]:
    with open(path, "r", encoding="utf-8") as fh:
        return quantized_from_json(fh.read())
