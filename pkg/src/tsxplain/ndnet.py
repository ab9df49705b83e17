"""Minimal differentiable network engine.

Layers operate on batched float64 arrays (leading batch axis). The engine
supports forward evaluation with a recorded trace, reverse-mode gradients
with respect to inputs and parameters, and a versioned binary checkpoint
format. Attribution methods reuse the trace for their own backward rules.
"""

import struct
from dataclasses import dataclass, field

import numpy as np

from tsxplain import kernels

MAGIC = b"NDNET\x01"


class ShapeError(ValueError):
    """Raised when an array does not match a layer's expected shape."""


class Dense:
    kind = "dense"

    def __init__(self, weight, bias):
        self.weight = np.asarray(weight, dtype=np.float64)
        self.bias = np.asarray(bias, dtype=np.float64)
        if self.weight.ndim != 2 or self.bias.shape != (self.weight.shape[0],):
            raise ShapeError("dense: weight must be (out, in) with matching bias")

    @property
    def params(self):
        return {"weight": self.weight, "bias": self.bias}

    def output_shape(self, in_shape):
        if in_shape != (self.weight.shape[1],):
            raise ShapeError(
                f"dense expects input of shape ({self.weight.shape[1]},), got {in_shape}"
            )
        return (self.weight.shape[0],)

    def forward(self, x):
        return x @ self.weight.T + self.bias

    def input_grad(self, x, g):
        return g @ self.weight

    def param_grad(self, x, g):
        return {"weight": g.T @ x, "bias": g.sum(axis=0)}


class Conv1d:
    kind = "conv1d"

    def __init__(self, weight, bias, stride=1):
        self.weight = np.asarray(weight, dtype=np.float64)
        self.bias = np.asarray(bias, dtype=np.float64)
        if self.weight.ndim != 3 or self.bias.shape != (self.weight.shape[0],):
            raise ShapeError("conv1d: weight must be (out_ch, in_ch, kernel)")
        if stride < 1:
            raise ValueError("conv1d: stride must be >= 1")
        self.stride = int(stride)

    @property
    def params(self):
        return {"weight": self.weight, "bias": self.bias}

    def output_shape(self, in_shape):
        cout, cin, k = self.weight.shape
        if len(in_shape) != 2 or in_shape[0] != cin or in_shape[1] < k:
            raise ShapeError(
                f"conv1d expects input ({cin}, >= {k}), got {in_shape}"
            )
        return (cout, (in_shape[1] - k) // self.stride + 1)

    def forward(self, x):
        return kernels.conv1d_forward(x, self.weight, self.bias, self.stride)

    def input_grad(self, x, g):
        return kernels.conv1d_input_grad(g, self.weight, self.stride, x.shape[2])

    def param_grad(self, x, g):
        gw, gb = kernels.conv1d_param_grad(x, g, self.weight.shape[2], self.stride)
        return {"weight": gw, "bias": gb}


class ReLU:
    kind = "relu"
    params = None

    def output_shape(self, in_shape):
        return in_shape

    def forward(self, x):
        return np.maximum(x, 0.0)

    def input_grad(self, x, g):
        return g * (x > 0.0)


class Flatten:
    kind = "flatten"
    params = None

    def output_shape(self, in_shape):
        return (int(np.prod(in_shape)),)

    def forward(self, x):
        return x.reshape(x.shape[0], -1)

    def input_grad(self, x, g):
        return g.reshape(x.shape)


class Softmax:
    kind = "softmax"
    params = None

    def output_shape(self, in_shape):
        return in_shape

    def forward(self, x):
        return softmax(x)

    def input_grad(self, x, g):
        y = softmax(x)
        return y * (g - (g * y).sum(axis=-1, keepdims=True))


LAYER_KINDS = ("dense", "conv1d", "relu", "flatten", "softmax")


def softmax(logits):
    """Row-wise softmax; sums to 1 and stays in [0, 1]."""
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


@dataclass
class NetworkModel:
    """Ordered layer stack with its declared input shape and class count."""

    layers: list
    input_shape: tuple
    classes: int
    seed: int = 0

    def validate(self):
        shape = tuple(self.input_shape)
        for i, layer in enumerate(self.layers):
            try:
                shape = layer.output_shape(shape)
            except ShapeError as exc:
                raise ShapeError(f"layer {i} ({layer.kind}): {exc}") from None
        if shape != (self.classes,):
            raise ShapeError(
                f"model emits shape {shape}, expected ({self.classes},) logits"
            )
        return self

    def param_layers(self):
        return [l for l in self.layers if l.params is not None]


@dataclass
class ForwardTrace:
    """Per-layer input activations plus the final output of one forward pass."""

    inputs: list = field(default_factory=list)
    output: np.ndarray = None

    def layer_output(self, i):
        if i + 1 < len(self.inputs):
            return self.inputs[i + 1]
        return self.output


def _as_batch(model, x):
    x = np.asarray(x, dtype=np.float64)
    expected = tuple(model.input_shape)
    if x.shape == expected:
        return x[None], True
    if x.shape[1:] == expected:
        return x, False
    raise ShapeError(
        f"layer 0 ({model.layers[0].kind}): input shape {x.shape} does not match "
        f"model input shape {expected}"
    )


def forward(model, x):
    """Run the model, returning (logits, trace). Accepts one sample or a batch."""
    batch, single = _as_batch(model, x)
    trace = ForwardTrace()
    a = batch
    for i, layer in enumerate(model.layers):
        trace.inputs.append(a)
        try:
            a = layer.forward(a)
        except (ShapeError, ValueError) as exc:
            raise ShapeError(f"layer {i} ({layer.kind}): {exc}") from None
    trace.output = a
    return (a[0] if single else a), trace


def _seed_grad(model, trace, output_selector):
    logits = trace.output
    n, k = logits.shape
    idx = np.asarray(output_selector)
    if idx.ndim == 0:
        idx = np.full(n, int(idx))
    if np.any(idx < 0) or np.any(idx >= k):
        raise IndexError(f"class index out of range [0, {k})")
    g = np.zeros_like(logits)
    g[np.arange(n), idx] = 1.0
    return g


def backward_input(model, trace, output_selector):
    """Gradient of the selected logit with respect to the model input.

    output_selector is a class index (applied to every sample in the trace)
    or one index per sample.
    """
    g = _seed_grad(model, trace, output_selector)
    for layer, x_in in zip(reversed(model.layers), reversed(trace.inputs)):
        g = layer.input_grad(x_in, g)
    return g


def backward_params(model, trace, loss_grad):
    """Backpropagate a loss gradient on the logits into per-parameter gradients.

    Returns a list aligned with model.layers; entries are None for
    parameter-free layers, otherwise dicts matching layer.params shapes.
    """
    g = np.asarray(loss_grad, dtype=np.float64)
    if g.shape != trace.output.shape:
        raise ShapeError(
            f"loss gradient shape {g.shape} does not match logits {trace.output.shape}"
        )
    grads = [None] * len(model.layers)
    for i in range(len(model.layers) - 1, -1, -1):
        layer = model.layers[i]
        x_in = trace.inputs[i]
        if layer.params is not None:
            grads[i] = layer.param_grad(x_in, g)
        g = layer.input_grad(x_in, g)
    return grads


def glorot_uniform(rng, shape, fan_in, fan_out):
    s = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-s, s, size=shape)


# ---------------------------------------------------------------------------
# checkpoint format: MAGIC, input shape, class count, seed, then the layer
# list; every tensor is shape-prefixed little-endian float64
# ---------------------------------------------------------------------------

_KIND_CODES = {kind: i for i, kind in enumerate(LAYER_KINDS)}


def _write_tensor(fh, a):
    a = np.asarray(a, dtype=np.float64)
    fh.write(struct.pack("<B", a.ndim))
    for d in a.shape:
        fh.write(struct.pack("<I", d))
    fh.write(a.astype("<f8").tobytes(order="C"))


def _read_tensor(fh):
    (ndim,) = struct.unpack("<B", fh.read(1))
    shape = tuple(struct.unpack("<I", fh.read(4))[0] for _ in range(ndim))
    n = int(np.prod(shape)) if shape else 1
    data = np.frombuffer(fh.read(8 * n), dtype="<f8")
    return data.reshape(shape).copy()


def save_model(model, path):
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<B", len(model.input_shape)))
        for d in model.input_shape:
            fh.write(struct.pack("<I", d))
        fh.write(struct.pack("<Iq", model.classes, model.seed))
        fh.write(struct.pack("<I", len(model.layers)))
        for layer in model.layers:
            fh.write(struct.pack("<B", _KIND_CODES[layer.kind]))
            if layer.kind == "dense":
                _write_tensor(fh, layer.weight)
                _write_tensor(fh, layer.bias)
            elif layer.kind == "conv1d":
                fh.write(struct.pack("<I", layer.stride))
                _write_tensor(fh, layer.weight)
                _write_tensor(fh, layer.bias)


def load_model(path):
    with open(path, "rb") as fh:
        if fh.read(len(MAGIC)) != MAGIC:
            raise ValueError(f"{path}: not a tsxplain model checkpoint")
        (ndim,) = struct.unpack("<B", fh.read(1))
        input_shape = tuple(struct.unpack("<I", fh.read(4))[0] for _ in range(ndim))
        classes, seed = struct.unpack("<Iq", fh.read(12))
        (n_layers,) = struct.unpack("<I", fh.read(4))
        layers = []
        for _ in range(n_layers):
            (code,) = struct.unpack("<B", fh.read(1))
            kind = LAYER_KINDS[code]
            if kind == "dense":
                layers.append(Dense(_read_tensor(fh), _read_tensor(fh)))
            elif kind == "conv1d":
                (stride,) = struct.unpack("<I", fh.read(4))
                layers.append(Conv1d(_read_tensor(fh), _read_tensor(fh), stride))
            elif kind == "relu":
                layers.append(ReLU())
            elif kind == "flatten":
                layers.append(Flatten())
            else:
                layers.append(Softmax())
    return NetworkModel(layers, input_shape, classes, seed).validate()
