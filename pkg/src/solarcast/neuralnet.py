"""Feed-forward ReLU regressor written against numpy, with MAE loss and SGD/Adam.

Weights are stored row-major as ``(fan_out, fan_in)``; a batch ``X`` is
``(N, fan_in)`` and a layer computes ``X @ W.T + b``. Everything is float64.
"""

import json
import math
import struct
import zlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from solarcast import kernels
from solarcast.dataset import FEATURE_ORDER, Standardization
from solarcast.errors import ContractError, FormatError, ShapeError, ValidationError

MODEL_MAGIC = b"SOLARMLP"
MODEL_FORMAT_VERSION = 1
_PREAMBLE = struct.Struct("<8sII")  # magic, format version, header length
_TRAILER = struct.Struct("<I")  # crc32 of the parameter block

KINK_EPS = 1e-7


@dataclass(frozen=True)
class MLPConfig:
    input_dim: int = 7
    hidden_widths: tuple = (32, 32)
    final_relu: bool = False
    init_seed: int = 0

    def __post_init__(self):
        widths = tuple(int(w) for w in self.hidden_widths)
        object.__setattr__(self, "hidden_widths", widths)
        if not 1 <= len(widths) <= 3:
            raise ValidationError(f"hidden_widths {widths}: need 1 to 3 hidden layers")
        if self.input_dim < 1 or any(w < 1 for w in widths):
            raise ValidationError(f"layer widths must be >= 1, got input {self.input_dim}, hidden {widths}")

    @property
    def layer_sizes(self):
        return (self.input_dim, *self.hidden_widths, 1)

    @property
    def n_params(self):
        s = self.layer_sizes
        return sum(s[i + 1] * (s[i] + 1) for i in range(len(s) - 1))

    def to_dict(self):
        return {
            "input_dim": self.input_dim,
            "hidden_widths": list(self.hidden_widths),
            "final_relu": self.final_relu,
            "init_seed": self.init_seed,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(d["input_dim"], tuple(d["hidden_widths"]), bool(d["final_relu"]), d["init_seed"])


@dataclass(eq=False)
class MLPModel:
    config: MLPConfig
    weights: list
    biases: list
    # bumped by every optimiser step; lets backward() reject stale caches
    version: int = field(default=0, compare=False)

    def __post_init__(self):
        self.check_shapes()

    def check_shapes(self):
        sizes = self.config.layer_sizes
        if len(self.weights) != len(sizes) - 1 or len(self.biases) != len(sizes) - 1:
            raise ShapeError(f"expected {len(sizes) - 1} layers, got {len(self.weights)}")
        for k, (W, b) in enumerate(zip(self.weights, self.biases)):
            if W.shape != (sizes[k + 1], sizes[k]) or b.shape != (sizes[k + 1],):
                raise ShapeError(
                    f"layer {k}: W {W.shape}, b {b.shape}; expected ({sizes[k + 1]}, {sizes[k]})"
                )

    def parameters(self):
        """Parameters in file order: W1, b1, W2, b2, ..."""
        for W, b in zip(self.weights, self.biases):
            yield W
            yield b

    def copy(self):
        return MLPModel(self.config, [W.copy() for W in self.weights], [b.copy() for b in self.biases])

    def bit_equal(self, other):
        return self.config == other.config and all(
            a.shape == b.shape and a.tobytes() == b.tobytes()
            for a, b in zip(self.parameters(), other.parameters())
        )


@dataclass(eq=False)
class GradientSet:
    weights: list
    biases: list

    def parameters(self):
        for W, b in zip(self.weights, self.biases):
            yield W
            yield b

    @classmethod
    def zeros_like(cls, model):
        return cls([np.zeros_like(W) for W in model.weights], [np.zeros_like(b) for b in model.biases])


@dataclass
class SGD:
    lr: float = 0.001


@dataclass
class Adam:
    lr: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    first_moments: list = None
    second_moments: list = None
    step_count: int = 0


@dataclass
class ForwardCache:
    inputs: np.ndarray
    pre_activations: list
    activations: list
    model_id: int
    model_version: int


def init(config):
    """Kaiming-normal weights (std ``sqrt(2 / fan_in)``) and zero biases."""
    rng = np.random.default_rng(config.init_seed)
    sizes = config.layer_sizes
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        weights.append(rng.normal(0.0, math.sqrt(2.0 / fan_in), size=(fan_out, fan_in)))
        biases.append(np.zeros(fan_out))
    return MLPModel(config, weights, biases)


def _as_batch(model, x):
    X = np.asarray(x, dtype=np.float64)
    if X.ndim == 1:
        X = X.reshape(1, -1)
    if X.ndim != 2 or X.shape[1] != model.config.input_dim:
        raise ShapeError(f"input shape {np.shape(x)} does not match input_dim {model.config.input_dim}")
    if not np.isfinite(X).all():
        raise ValidationError("input contains non-finite values")
    return np.ascontiguousarray(X)


def forward(model, x):
    """Predictions of shape ``(N,)`` for a batch ``(N, input_dim)`` or one vector, plus the cache."""
    X = _as_batch(model, x)
    A = X
    zs, acts = [], [X]
    last = len(model.weights) - 1
    for k, (W, b) in enumerate(zip(model.weights, model.biases)):
        Z = kernels.dense_forward(W, b, A)
        zs.append(Z)
        if k < last or model.config.final_relu:
            A = np.maximum(Z, 0.0)
        else:
            A = Z
        acts.append(A)
    cache = ForwardCache(X, zs, acts, id(model), model.version)
    return A[:, 0].copy(), cache


def mae_loss(predictions, targets):
    """Mean absolute error and its gradient ``sign(pred - target) / N`` (sign(0) = 0)."""
    p = np.ascontiguousarray(predictions, dtype=np.float64).reshape(-1)
    t = np.ascontiguousarray(targets, dtype=np.float64).reshape(-1)
    if p.shape != t.shape:
        raise ShapeError(f"{p.shape[0]} predictions vs {t.shape[0]} targets")
    if p.shape[0] == 0:
        raise ShapeError("mae_loss needs at least one prediction")
    loss, grad = kernels.mae(p, t)
    return float(loss), grad


def mse(predictions, targets):
    r = np.asarray(predictions, dtype=np.float64) - np.asarray(targets, dtype=np.float64)
    return float(np.mean(r * r))


def backward(model, cache, loss_gradient):
    if cache.model_id != id(model) or cache.model_version != model.version:
        raise ContractError("activation cache does not belong to this model state")
    dA = np.ascontiguousarray(loss_gradient, dtype=np.float64).reshape(-1, 1)
    if dA.shape[0] != cache.inputs.shape[0]:
        raise ShapeError(f"loss gradient has {dA.shape[0]} rows, cache has {cache.inputs.shape[0]}")
    n_layers = len(model.weights)
    gW, gb = [None] * n_layers, [None] * n_layers
    for k in range(n_layers - 1, -1, -1):
        if k < n_layers - 1 or model.config.final_relu:
            dZ = np.where(cache.pre_activations[k] > 0.0, dA, 0.0)
        else:
            dZ = dA
        dW, db, dA = kernels.dense_backward(model.weights[k], cache.activations[k], np.ascontiguousarray(dZ))
        gW[k], gb[k] = dW, db
    return GradientSet(gW, gb)


def loss_and_gradients(model, X, y):
    pred, cache = forward(model, X)
    loss, dpred = mae_loss(pred, y)
    return loss, backward(model, cache, dpred), pred


def _check_congruent(model, grads):
    for p, g in zip(model.parameters(), grads.parameters()):
        if p.shape != g.shape:
            raise ShapeError(f"gradient shape {g.shape} does not match parameter {p.shape}")
    if len(grads.weights) != len(model.weights):
        raise ShapeError("gradient set has a different layer count")


def sgd_step(model, grads, state):
    """``theta -= lr * g`` in place; returns ``model``."""
    _check_congruent(model, grads)
    for p, g in zip(model.parameters(), grads.parameters()):
        p -= state.lr * g
    model.version += 1
    return model


def adam_step(model, grads, state):
    """One Adam update in place; returns ``(model, state)``."""
    _check_congruent(model, grads)
    if state.first_moments is None:
        state.first_moments = [np.zeros_like(p) for p in model.parameters()]
        state.second_moments = [np.zeros_like(p) for p in model.parameters()]
    state.step_count += 1
    for p, g, m, v in zip(model.parameters(), grads.parameters(), state.first_moments, state.second_moments):
        kernels.adam_update(p, g, m, v, state.lr, state.beta1, state.beta2, state.epsilon, state.step_count)
    model.version += 1
    return model, state


def optimizer_step(model, grads, state):
    if isinstance(state, Adam):
        adam_step(model, grads, state)
    elif isinstance(state, SGD):
        sgd_step(model, grads, state)
    else:
        raise ValidationError(f"unknown optimizer state {type(state).__name__}")
    return model


# ---------------------------------------------------------------------------
# Gradient check
# ---------------------------------------------------------------------------


@dataclass
class GradCheckReport:
    max_rel_error: float
    worst: tuple  # (layer, "W" | "b", index)
    n_checked: int
    n_excluded: int
    passed: bool


def _probe(model, X, y):
    pred, cache = forward(model, X)
    loss = mae_loss(pred, y)[0]
    return loss, [z > 0.0 for z in cache.pre_activations], np.sign(pred - y)


def _near_kink(model, X, y):
    pred, cache = forward(model, X)
    if np.any(np.abs(pred - y) < KINK_EPS):
        return True
    hidden = cache.pre_activations if model.config.final_relu else cache.pre_activations[:-1]
    return any(np.any(np.abs(z) < KINK_EPS) for z in hidden)


def _same_pattern(a, b):
    return np.array_equal(a[2], b[2]) and all(np.array_equal(u, v) for u, v in zip(a[1], b[1]))


def grad_check(model, X, y, h=1e-5, tolerance=1e-5, grads=None, denom_floor=1e-5):
    """Compare backpropagated MAE gradients with central differences.

    Relative error per coordinate is ``|a - n| / max(|a|, |n|, floor)`` with
    ``floor = denom_floor * max(1, loss)``: below that scale the difference
    quotient is dominated by roundoff (about ``eps * loss / h``).
    Coordinates whose ``+-h`` perturbation flips a ReLU or residual sign are
    excluded, as is the whole sample when it sits within 1e-7 of a kink.
    ``grads`` overrides the analytic gradients (for fault injection).
    """
    if h <= 0:
        raise ValidationError(f"h={h} must be > 0")
    X = _as_batch(model, X)
    y = np.asarray(y, dtype=np.float64).reshape(-1)
    if grads is None:
        _, grads, _ = loss_and_gradients(model, X, y)
    n_total = sum(p.size for p in model.parameters())
    if _near_kink(model, X, y):
        return GradCheckReport(0.0, None, 0, n_total, True)
    base = _probe(model, X, y)
    floor = denom_floor * max(1.0, abs(base[0]))
    probe = model.copy()
    worst, worst_at, checked, excluded = 0.0, None, 0, 0
    names = [(k, kind) for k in range(len(model.weights)) for kind in ("W", "b")]
    for (k, kind), p, g in zip(names, probe.parameters(), grads.parameters()):
        flat, gflat = p.reshape(-1), g.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            probe.version += 1
            plus = _probe(probe, X, y)
            flat[i] = orig - h
            probe.version += 1
            minus = _probe(probe, X, y)
            flat[i] = orig
            probe.version += 1
            if not (_same_pattern(plus, base) and _same_pattern(minus, base)):
                excluded += 1
                continue
            numeric = (plus[0] - minus[0]) / (2.0 * h)
            analytic = gflat[i]
            rel = abs(analytic - numeric) / max(abs(analytic), abs(numeric), floor)
            checked += 1
            if rel > worst or worst_at is None:
                worst, worst_at = float(rel), (k, kind, int(i))
    return GradCheckReport(worst, worst_at, checked, excluded, bool(worst < tolerance))


# ---------------------------------------------------------------------------
# Model file
# ---------------------------------------------------------------------------


def save_model(model, path, standardization=None, extra=None):
    """Write the versioned binary model file.

    Layout: ``SOLARMLP`` magic, uint32 format version, uint32 header length,
    UTF-8 JSON header, little-endian float64 parameters (W1, b1, W2, b2, ...
    each row-major), uint32 CRC-32 of the parameter block.
    """
    header = {
        "format_version": MODEL_FORMAT_VERSION,
        "feature_order": list(FEATURE_ORDER),
        "config": model.config.to_dict(),
        "layer_shapes": [list(W.shape) for W in model.weights],
        "n_params": model.config.n_params,
        "standardization": standardization.to_dict() if standardization is not None else None,
    }
    if extra:
        header["extra"] = extra
    hbytes = json.dumps(header, sort_keys=True).encode("utf-8")
    body = b"".join(np.ascontiguousarray(p, dtype="<f8").tobytes() for p in model.parameters())
    blob = _PREAMBLE.pack(MODEL_MAGIC, MODEL_FORMAT_VERSION, len(hbytes)) + hbytes + body
    blob += _TRAILER.pack(zlib.crc32(body))
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(blob)
    tmp.replace(path)
    return path


def read_model_file(path):
    """Return ``(model, header)``; raises :class:`FormatError` on any defect."""
    blob = Path(path).read_bytes()
    if len(blob) < _PREAMBLE.size:
        raise FormatError(f"{path}: truncated preamble")
    magic, version, hlen = _PREAMBLE.unpack_from(blob)
    if magic != MODEL_MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}")
    if version != MODEL_FORMAT_VERSION:
        raise FormatError(f"{path}: format version {version}, expected {MODEL_FORMAT_VERSION}")
    start = _PREAMBLE.size
    try:
        header = json.loads(blob[start : start + hlen].decode("utf-8"))
        config = MLPConfig.from_dict(header["config"])
    except (ValueError, KeyError, TypeError) as exc:
        raise FormatError(f"{path}: unreadable header ({exc})") from None
    if tuple(header.get("feature_order", ())) != FEATURE_ORDER:
        raise FormatError(f"{path}: feature order {header.get('feature_order')} is not {list(FEATURE_ORDER)}")
    body_start = start + hlen
    body_len = config.n_params * 8
    if len(blob) != body_start + body_len + _TRAILER.size:
        raise FormatError(f"{path}: expected {body_len} parameter bytes, file is truncated or padded")
    body = blob[body_start : body_start + body_len]
    (crc,) = _TRAILER.unpack_from(blob, body_start + body_len)
    if crc != zlib.crc32(body):
        raise FormatError(f"{path}: parameter checksum mismatch")
    flat = np.frombuffer(body, dtype="<f8").astype(np.float64)
    sizes = config.layer_sizes
    weights, biases, off = [], [], 0
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        weights.append(flat[off : off + fan_out * fan_in].reshape(fan_out, fan_in).copy())
        off += fan_out * fan_in
        biases.append(flat[off : off + fan_out].copy())
        off += fan_out
    return MLPModel(config, weights, biases), header


def load_model(path):
    return read_model_file(path)[0]


def load_standardization(header):
    stats = header.get("standardization")
    return Standardization.from_dict(stats) if stats else None


def predict(model, X, standardization=None):
    """Forward pass on raw feature rows, applying stored standardization first."""
    X = np.asarray(X, dtype=np.float64)
    if standardization is not None:
        X = standardization.apply(X)
    return forward(model, X)[0]
