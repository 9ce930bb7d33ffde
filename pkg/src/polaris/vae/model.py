"""Dense VAE parameters, forward passes and the snapshot file format."""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from ..errors import DimensionError, ParseError
from ..representation import as_matrix

LOGVAR_CLAMP = 10.0
SNAPSHOT_MAGIC = b"VAES"
SNAPSHOT_VERSION = 1
_SNAP_HEADER = struct.Struct("<4sHI")

ACTIVATIONS = ("relu", "tanh")


@dataclass(frozen=True)
class Architecture:
    input_dim: int = 256
    hidden: tuple = (256, 256)
    latent_dim: int = 10
    activation: str = "relu"

    def __post_init__(self):
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")
        if self.input_dim < 1 or self.latent_dim < 1 or any(h < 1 for h in self.hidden):
            raise DimensionError("layer widths must be positive")

    def layer_shapes(self) -> list:
        """(name, fan_in, fan_out) for every dense layer, in parameter order."""
        shapes = []
        widths = (self.input_dim,) + self.hidden
        for i in range(len(self.hidden)):
            shapes.append((f"enc{i}", widths[i], widths[i + 1]))
        shapes.append(("mean", widths[-1], self.latent_dim))
        shapes.append(("logvar", widths[-1], self.latent_dim))
        dec = (self.latent_dim,) + self.hidden[::-1] + (self.input_dim,)
        for i in range(len(dec) - 1):
            shapes.append((f"dec{i}", dec[i], dec[i + 1]))
        return shapes

    def to_dict(self) -> dict:
        return {"input_dim": self.input_dim, "hidden": list(self.hidden), "latent_dim": self.latent_dim, "activation": self.activation}


@dataclass
class VaeModel:
    """Encoder, mean/log-variance heads and decoder as named dense layers.

    ``params`` maps ``"<layer>.W"`` (fan_in x fan_out) and ``"<layer>.b"`` to
    arrays, ordered as in :meth:`Architecture.layer_shapes`.
    """

    arch: Architecture
    params: dict
    seed: int = 0
    step: int = 0
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        for name, fan_in, fan_out in self.arch.layer_shapes():
            W, b = self.params[f"{name}.W"], self.params[f"{name}.b"]
            if W.shape != (fan_in, fan_out) or b.shape != (fan_out,):
                raise DimensionError(f"layer {name}: got W{W.shape} b{b.shape}, expected ({fan_in}, {fan_out})")

    @property
    def names(self) -> list:
        return [f"{n}.{p}" for n, _, _ in self.arch.layer_shapes() for p in ("W", "b")]

    def copy(self) -> "VaeModel":
        return VaeModel(self.arch, {k: v.copy() for k, v in self.params.items()}, self.seed, self.step, dict(self.meta))

    def flat(self) -> np.ndarray:
        return np.concatenate([self.params[k].ravel() for k in self.names])

    def n_parameters(self) -> int:
        return sum(self.params[k].size for k in self.names)


def init_model(arch: Architecture = Architecture(), seed: int = 0) -> VaeModel:
    """He-normal hidden weights, Glorot-normal heads and output, zero biases."""
    rng = np.random.default_rng(seed)
    params = {}
    hidden_layers = {f"enc{i}" for i in range(len(arch.hidden))} | {f"dec{i}" for i in range(len(arch.hidden))}
    for name, fan_in, fan_out in arch.layer_shapes():
        if name in hidden_layers:
            std = np.sqrt(2.0 / fan_in)
        else:
            std = np.sqrt(2.0 / (fan_in + fan_out))
        params[f"{name}.W"] = rng.normal(0.0, std, size=(fan_in, fan_out))
        params[f"{name}.b"] = np.zeros(fan_out)
    return VaeModel(arch=arch, params=params, seed=seed)


def zero_model(arch: Architecture = Architecture(), seed: int = 0) -> VaeModel:
    params = {}
    for name, fan_in, fan_out in arch.layer_shapes():
        params[f"{name}.W"] = np.zeros((fan_in, fan_out))
        params[f"{name}.b"] = np.zeros(fan_out)
    return VaeModel(arch=arch, params=params, seed=seed)


def activate(a: np.ndarray, kind: str) -> np.ndarray:
    return np.maximum(a, 0.0) if kind == "relu" else np.tanh(a)


def activate_grad(a: np.ndarray, h: np.ndarray, kind: str) -> np.ndarray:
    return (a > 0).astype(a.dtype) if kind == "relu" else 1.0 - h * h


def sigmoid(a: np.ndarray) -> np.ndarray:
    out = np.empty_like(a)
    pos = a >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-a[pos]))
    e = np.exp(a[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def _check_batch(model: VaeModel, batch) -> np.ndarray:
    batch = as_matrix(batch, "batch")
    if batch.shape[1] != model.arch.input_dim:
        raise DimensionError(f"batch has {batch.shape[1]} columns, model expects {model.arch.input_dim}")
    return batch


def encoder_forward(model: VaeModel, batch: np.ndarray):
    """Return (cache, mean, raw log-variance, clamped log-variance)."""
    p, act = model.params, model.arch.activation
    cache = []
    h = batch
    for i in range(len(model.arch.hidden)):
        a = h @ p[f"enc{i}.W"] + p[f"enc{i}.b"]
        out = activate(a, act)
        cache.append((h, a, out))
        h = out
    mean = h @ p["mean.W"] + p["mean.b"]
    raw = h @ p["logvar.W"] + p["logvar.b"]
    return cache + [h], mean, raw, np.clip(raw, -LOGVAR_CLAMP, LOGVAR_CLAMP)


def decoder_forward(model: VaeModel, z: np.ndarray):
    """Return (cache, logits, probabilities)."""
    p, act = model.params, model.arch.activation
    cache = []
    h = z
    n_hidden = len(model.arch.hidden)
    for i in range(n_hidden):
        a = h @ p[f"dec{i}.W"] + p[f"dec{i}.b"]
        out = activate(a, act)
        cache.append((h, a, out))
        h = out
    logits = h @ p[f"dec{n_hidden}.W"] + p[f"dec{n_hidden}.b"]
    cache.append(h)
    return cache, logits, sigmoid(logits)


def encode(model: VaeModel, batch) -> tuple[np.ndarray, np.ndarray]:
    """Mean and variance representations of a batch of flattened images."""
    batch = _check_batch(model, batch)
    _, mean, _, logvar = encoder_forward(model, batch)
    return mean, np.exp(logvar)


def decode(model: VaeModel, z) -> np.ndarray:
    z = as_matrix(z, "z")
    if z.shape[1] != model.arch.latent_dim:
        raise DimensionError(f"z has {z.shape[1]} columns, model expects {model.arch.latent_dim}")
    return decoder_forward(model, z)[2]


# -- snapshots --------------------------------------------------------------


def save_model(model: VaeModel, path, config: Optional[dict] = None) -> None:
    """Write ``VAES`` | u16 version | u32 header length | JSON header | float64 payload."""
    header = {
        "architecture": model.arch.to_dict(),
        "config": config if config is not None else model.meta.get("config"),
        "step": model.step,
        "seed": model.seed,
        "parameters": [[k, list(model.params[k].shape)] for k in model.names],
    }
    blob = json.dumps(header, sort_keys=True).encode()
    payload = np.ascontiguousarray(model.flat(), dtype="<f8").tobytes()
    Path(path).write_bytes(_SNAP_HEADER.pack(SNAPSHOT_MAGIC, SNAPSHOT_VERSION, len(blob)) + blob + payload)


def load_model(path) -> VaeModel:
    raw = Path(path).read_bytes()
    if len(raw) < _SNAP_HEADER.size:
        raise ParseError(f"{path}: truncated snapshot")
    magic, version, hlen = _SNAP_HEADER.unpack_from(raw)
    if magic != SNAPSHOT_MAGIC:
        raise ParseError(f"{path}: bad magic bytes {magic!r}")
    if version != SNAPSHOT_VERSION:
        raise ParseError(f"{path}: unsupported snapshot version {version}")
    start = _SNAP_HEADER.size
    try:
        header = json.loads(raw[start:start + hlen].decode())
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ParseError(f"{path}: bad JSON header: {exc}") from exc
    try:
        arch_d = header["architecture"]
        arch = Architecture(arch_d["input_dim"], tuple(arch_d["hidden"]), arch_d["latent_dim"], arch_d["activation"])
        layout = [(name, tuple(shape)) for name, shape in header["parameters"]]
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"{path}: malformed header: {exc}") from exc
    body = raw[start + hlen:]
    declared = sum(int(np.prod(shape)) for _, shape in layout)
    if len(body) != 8 * declared:
        raise ParseError(f"{path}: payload holds {len(body)} bytes, header declares {8 * declared}")
    flat = np.frombuffer(body, dtype="<f8").astype(np.float64)
    params, pos = {}, 0
    for name, shape in layout:
        size = int(np.prod(shape))
        params[name] = flat[pos:pos + size].reshape(shape).copy()
        pos += size
    return VaeModel(arch=arch, params=params, seed=header["seed"], step=header["step"], meta={"config": header.get("config")})
