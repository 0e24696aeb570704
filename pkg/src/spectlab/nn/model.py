"""Architecture config grammar, the layered model, and its file container.

Config grammar, one layer per line, ``#`` starts a comment::

    input c=1 h=48 w=32
    conv in=1 out=8 k=3 s=2
    relu
    flatten
    dense in=768 out=256
    reshape c=32 h=4 w=4
    upsample2x
    sigmoid

The ``input`` line declares the per-sample input shape and must come first.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..core import pack_array, unpack_array
from . import layers as L

LAYER_KEYS = {
    "input": ("c", "h", "w"),
    "conv": ("in", "out", "k", "s"),
    "dense": ("in", "out"),
    "relu": (),
    "sigmoid": (),
    "upsample2x": (),
    "flatten": (),
    "reshape": ("c", "h", "w"),
}

MODEL_MAGIC = b"CNNR"
MODEL_VERSION = 1


class ConfigError(ValueError):
    def __init__(self, message: str, line: int | None = None):
        super().__init__(f"line {line}: {message}" if line is not None else message)
        self.line = line


class ModelFormatError(ValueError):
    pass


class NumericalError(FloatingPointError):
    """Non-finite values appeared in a forward or backward pass."""

    def __init__(self, message: str, layer: int | None = None):
        super().__init__(message)
        self.layer = layer


@dataclass(frozen=True)
class LayerSpec:
    kind: str
    args: tuple[tuple[str, int], ...] = ()

    def __getitem__(self, key: str) -> int:
        return dict(self.args)[key]

    @property
    def has_params(self) -> bool:
        return self.kind in ("conv", "dense")

    def to_text(self) -> str:
        return " ".join([self.kind] + [f"{k}={v}" for k, v in self.args])


@dataclass(frozen=True)
class ArchConfig:
    input_shape: tuple[int, int, int]
    layers: tuple[LayerSpec, ...]
    shapes: tuple[tuple[int, ...], ...] = field(default=(), compare=False)

    @property
    def output_shape(self) -> tuple[int, ...]:
        return self.shapes[-1]

    def to_text(self) -> str:
        c, h, w = self.input_shape
        lines = [f"input c={c} h={h} w={w}"] + [layer.to_text() for layer in self.layers]
        return "\n".join(lines) + "\n"

    def param_shapes(self) -> list[tuple[tuple[int, ...], tuple[int, ...]]]:
        out = []
        for layer in self.layers:
            if layer.kind == "conv":
                k = layer["k"]
                out.append(((layer["out"], layer["in"], k, k), (layer["out"],)))
            elif layer.kind == "dense":
                out.append(((layer["out"], layer["in"]), (layer["out"],)))
        return out

    def parameter_count(self) -> int:
        return sum(math.prod(w) + math.prod(b) for w, b in self.param_shapes())

    def count(self, kind: str) -> int:
        return sum(layer.kind == kind for layer in self.layers)


def _layer_output(spec: LayerSpec, shape: tuple[int, ...], lineno: int | None) -> tuple[int, ...]:
    kind = spec.kind
    if kind == "conv":
        if len(shape) != 3 or shape[0] != spec["in"]:
            raise ConfigError(f"conv expects ({spec['in']}, H, W) input, got {shape}", lineno)
        k, s = spec["k"], spec["s"]
        if k < 1 or k % 2 == 0:
            raise ConfigError(f"conv kernel must be odd, got k={k}", lineno)
        if s not in (1, 2):
            raise ConfigError(f"conv stride must be 1 or 2, got s={s}", lineno)
        h, w = ((d + 2 * (k // 2) - k) // s + 1 for d in shape[1:])
        return (spec["out"], h, w)
    if kind == "dense":
        if len(shape) != 1 or shape[0] != spec["in"]:
            raise ConfigError(f"dense expects ({spec['in']},) input, got {shape}", lineno)
        return (spec["out"],)
    if kind == "flatten":
        return (math.prod(shape),)
    if kind == "reshape":
        target = (spec["c"], spec["h"], spec["w"])
        if math.prod(shape) != math.prod(target):
            raise ConfigError(f"cannot reshape {shape} to {target}", lineno)
        return target
    if kind == "upsample2x":
        if len(shape) != 3:
            raise ConfigError(f"upsample2x expects (C, H, W) input, got {shape}", lineno)
        return (shape[0], 2 * shape[1], 2 * shape[2])
    return shape


def infer_shapes(input_shape, layers, linenos=None) -> tuple[tuple[int, ...], ...]:
    shape = tuple(input_shape)
    shapes = []
    for i, spec in enumerate(layers):
        shape = _layer_output(spec, shape, linenos[i] if linenos else None)
        shapes.append(shape)
    return tuple(shapes)


def parse_config(text: str) -> ArchConfig:
    """Parse and shape-check an architecture config.

    Errors carry the offending line number.
    """
    input_shape = None
    layers, linenos = [], []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        kind, *tokens = line.split()
        if kind not in LAYER_KEYS:
            raise ConfigError(f"unknown layer kind {kind!r}", lineno)
        args = {}
        for token in tokens:
            key, sep, value = token.partition("=")
            if not sep or key not in LAYER_KEYS[kind]:
                raise ConfigError(f"unknown key {key!r} for {kind}", lineno)
            if key in args:
                raise ConfigError(f"duplicate key {key!r}", lineno)
            try:
                args[key] = int(value)
            except ValueError:
                raise ConfigError(f"{key}={value!r} is not an integer", lineno) from None
            if args[key] < 1:
                raise ConfigError(f"{key} must be positive", lineno)
        missing = [k for k in LAYER_KEYS[kind] if k not in args]
        if missing:
            raise ConfigError(f"{kind} missing keys {missing}", lineno)
        if kind == "input":
            if input_shape is not None or layers:
                raise ConfigError("input must be declared once, before any layer", lineno)
            input_shape = (args["c"], args["h"], args["w"])
            continue
        layers.append(LayerSpec(kind, tuple((k, args[k]) for k in LAYER_KEYS[kind])))
        linenos.append(lineno)
    if input_shape is None:
        raise ConfigError("missing input declaration")
    if not layers:
        raise ConfigError("config declares no layers")
    shapes = infer_shapes(input_shape, layers, linenos)
    return ArchConfig(input_shape, tuple(layers), shapes)


def load_config(path) -> ArchConfig:
    return parse_config(Path(path).read_text(encoding="utf-8"))


def builtin_config(name: str) -> ArchConfig:
    """``desk`` (32x32 images from 48x32 sinograms) or ``full`` (128x128 from 192x128)."""
    path = Path(__file__).resolve().parent.parent / "configs" / f"{name}.cfg"
    if not path.exists():
        raise ValueError(f"no built-in config named {name!r}")
    return load_config(path)


def validate_reconstructor(config: ArchConfig, n_bins: int, n_angles: int, n: int) -> None:
    """Check that the network maps a (1, n_bins, n_angles) sinogram to a (1, n, n) image."""
    if config.input_shape != (1, n_bins, n_angles):
        raise ConfigError(f"input shape {config.input_shape} != (1, {n_bins}, {n_angles})")
    if config.output_shape != (1, n, n):
        raise ConfigError(f"output shape {config.output_shape} != (1, {n}, {n})")


class Model:
    """Sequential network with Kaiming-uniform (fan-in) weights and zero biases."""

    def __init__(self, config: ArchConfig, params=None, seed: int = 0, dtype=np.float32):
        self.config = config
        if params is None:
            rng = np.random.Generator(np.random.PCG64(seed))
            params = []
            for wshape, bshape in config.param_shapes():
                fan_in = math.prod(wshape[1:])
                bound = math.sqrt(6.0 / fan_in)
                w = rng.uniform(-bound, bound, size=wshape).astype(dtype)
                params.append([w, np.zeros(bshape, dtype=dtype)])
        self.params = [[np.asarray(w), np.asarray(b)] for w, b in params]

    @property
    def parameter_count(self) -> int:
        return sum(w.size + b.size for w, b in self.params)

    def astype(self, dtype) -> "Model":
        return Model(self.config, [[w.astype(dtype), b.astype(dtype)] for w, b in self.params])

    def copy(self) -> "Model":
        return Model(self.config, [[w.copy(), b.copy()] for w, b in self.params])

    def forward(self, x: np.ndarray, keep: bool = False):
        """Run the network on a batch shaped ``(B, *input_shape)``.

        With ``keep=True`` returns ``(output, cache)`` for :meth:`backward`.
        """
        if x.shape[1:] != self.config.input_shape:
            raise ValueError(f"input shape {x.shape[1:]} != model input {self.config.input_shape}")
        cache = []
        p = 0
        for i, spec in enumerate(self.config.layers):
            cache.append(x)
            kind = spec.kind
            if kind == "conv":
                w, b = self.params[p]
                p += 1
                x = L.conv2d_forward(x, w, b, spec["s"])
            elif kind == "dense":
                w, b = self.params[p]
                p += 1
                x = L.dense_forward(x, w, b)
            elif kind == "relu":
                x = L.relu_forward(x)
            elif kind == "sigmoid":
                x = L.sigmoid_forward(x)
            elif kind == "upsample2x":
                x = L.upsample2x_forward(x)
            elif kind == "flatten":
                x = x.reshape(x.shape[0], -1)
            elif kind == "reshape":
                x = x.reshape(x.shape[0], spec["c"], spec["h"], spec["w"])
            if not np.all(np.isfinite(x)):
                raise NumericalError(f"non-finite output at layer {i} ({kind})", layer=i)
        cache.append(x)
        return (x, cache) if keep else x

    def backward(self, cache: list, grad: np.ndarray) -> list[list[np.ndarray]]:
        """Backpropagate ``grad`` (w.r.t. the output); returns per-layer ``[dW, db]``."""
        grads = [None] * len(self.params)
        p = len(self.params)
        for i in range(len(self.config.layers) - 1, -1, -1):
            spec = self.config.layers[i]
            x = cache[i]
            kind = spec.kind
            if kind == "conv":
                p -= 1
                grad, gw, gb = L.conv2d_backward(x, self.params[p][0], grad, spec["s"])
                grads[p] = [gw, gb]
            elif kind == "dense":
                p -= 1
                grad, gw, gb = L.dense_backward(x, self.params[p][0], grad)
                grads[p] = [gw, gb]
            elif kind == "relu":
                grad = L.relu_backward(x, grad)
            elif kind == "sigmoid":
                grad = L.sigmoid_backward(cache[i + 1], grad)
            elif kind == "upsample2x":
                grad = L.upsample2x_backward(grad)
            elif kind in ("flatten", "reshape"):
                grad = grad.reshape(x.shape)
            if not np.all(np.isfinite(grad)):
                raise NumericalError(f"non-finite gradient at layer {i} ({kind})", layer=i)
        return grads


def save_model(model: Model, path) -> None:
    """Container: magic, version, config text, then one array file per tensor."""
    text = model.config.to_text().encode("utf-8")
    blobs = [pack_array(t.shape, t) for pair in model.params for t in pair]
    header = MODEL_MAGIC + struct.pack("<BI", MODEL_VERSION, len(text)) + text
    header += struct.pack("<I", len(blobs))
    Path(path).write_bytes(header + b"".join(blobs))


def load_model(path) -> Model:
    buf = Path(path).read_bytes()
    if buf[:4] != MODEL_MAGIC:
        raise ModelFormatError(f"bad model magic {buf[:4]!r}")
    try:
        version, text_len = struct.unpack_from("<BI", buf, 4)
    except struct.error:
        raise ModelFormatError("truncated model header") from None
    if version != MODEL_VERSION:
        raise ModelFormatError(f"unsupported model version {version}")
    pos = 9
    config = parse_config(buf[pos:pos + text_len].decode("utf-8"))
    pos += text_len
    (count,) = struct.unpack_from("<I", buf, pos)
    pos += 4
    expected = config.param_shapes()
    if count != 2 * len(expected):
        raise ModelFormatError(f"file holds {count} arrays, config needs {2 * len(expected)}")
    params = []
    for wshape, bshape in expected:
        pair = []
        for shape in (wshape, bshape):
            dims, values, pos = unpack_array(buf, pos)
            if tuple(dims) != shape:
                raise ModelFormatError(f"stored array shape {tuple(dims)} != config shape {shape}")
            pair.append(values.reshape(shape))
        params.append(pair)
    if pos != len(buf):
        raise ModelFormatError(f"{len(buf) - pos} trailing bytes after parameters")
    return Model(config, params)
