"""A small 2-D convolutional network over (time, channel) windows, in numpy.

Tensors are NHWC: (batch, height=time, width=sensor channel, depth).
Everything runs in float64 so finite-difference gradient checks stay tight.
"""
from __future__ import annotations

import logging
from dataclasses import asdict, dataclass

import numpy as np

from .ingest import N_CHANNELS

log = logging.getLogger(__name__)


class CnnError(ValueError):
    pass


def _glorot(rng, shape, fan_in, fan_out):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


class Layer:
    params: tuple[str, ...] = ()

    def init(self, rng, in_shape):
        """Create parameters for an input of shape (H, W, C) or (F,); return the output shape."""
        raise NotImplementedError

    def forward(self, x):
        raise NotImplementedError

    def backward(self, grad):
        raise NotImplementedError

    def spec(self) -> dict:
        return {"type": type(self).__name__}


class Conv2D(Layer):
    """Valid-padding, stride-1 convolution (cross-correlation)."""

    params = ("W", "b")

    def __init__(self, filters: int, kernel: tuple[int, int]):
        self.filters = int(filters)
        self.kernel = (int(kernel[0]), int(kernel[1]))

    def init(self, rng, in_shape):
        H, W, C = in_shape
        kh, kw = self.kernel
        if kh > H or kw > W:
            raise CnnError(f"conv kernel {self.kernel} does not fit input {in_shape}")
        self.W = _glorot(rng, (kh, kw, C, self.filters), kh * kw * C, kh * kw * self.filters)
        self.b = np.zeros(self.filters)
        return (H - kh + 1, W - kw + 1, self.filters)

    def _patches(self, x):
        n, H, W, C = x.shape
        kh, kw = self.kernel
        s = x.strides
        view = np.lib.stride_tricks.as_strided(
            x, shape=(n, H - kh + 1, W - kw + 1, kh, kw, C), strides=(s[0], s[1], s[2], s[1], s[2], s[3]),
            writeable=False)
        return view.reshape(n * (H - kh + 1) * (W - kw + 1), kh * kw * C)

    def forward(self, x):
        x = np.ascontiguousarray(x)
        n, H, W, _ = x.shape
        kh, kw = self.kernel
        self._x_shape = x.shape
        self._cols = self._patches(x)
        out = self._cols @ self.W.reshape(-1, self.filters) + self.b
        return out.reshape(n, H - kh + 1, W - kw + 1, self.filters)

    def backward(self, grad):
        n, H, W, C = self._x_shape
        kh, kw = self.kernel
        g = grad.reshape(-1, self.filters)
        self.dW = (self._cols.T @ g).reshape(self.W.shape)
        self.db = g.sum(axis=0)
        dcols = (g @ self.W.reshape(-1, self.filters).T).reshape(n, H - kh + 1, W - kw + 1, kh, kw, C)
        dx = np.zeros(self._x_shape)
        Ho, Wo = H - kh + 1, W - kw + 1
        for i in range(kh):
            for j in range(kw):
                dx[:, i:i + Ho, j:j + Wo, :] += dcols[:, :, :, i, j, :]
        return dx

    def spec(self):
        return {"type": "Conv2D", "filters": self.filters, "kernel": list(self.kernel)}


class ReLU(Layer):
    def init(self, rng, in_shape):
        return in_shape

    def forward(self, x):
        self._mask = x > 0
        return np.where(self._mask, x, 0.0)

    def backward(self, grad):
        return grad * self._mask


class MaxPool2D(Layer):
    """Non-overlapping max pooling; trailing rows/columns that do not fill a pool are dropped."""

    def __init__(self, pool: tuple[int, int]):
        self.pool = (int(pool[0]), int(pool[1]))

    def init(self, rng, in_shape):
        H, W, C = in_shape
        ph, pw = self.pool
        if ph > H or pw > W:
            raise CnnError(f"pool {self.pool} does not fit input {in_shape}")
        return (H // ph, W // pw, C)

    def forward(self, x):
        n, H, W, C = x.shape
        ph, pw = self.pool
        Ho, Wo = H // ph, W // pw
        self._x_shape = x.shape
        blocks = x[:, :Ho * ph, :Wo * pw, :].reshape(n, Ho, ph, Wo, pw, C).transpose(0, 1, 3, 5, 2, 4)
        blocks = blocks.reshape(n, Ho, Wo, C, ph * pw)
        self._arg = np.argmax(blocks, axis=-1)  # first maximum wins
        return np.take_along_axis(blocks, self._arg[..., None], axis=-1)[..., 0]

    def backward(self, grad):
        n, H, W, C = self._x_shape
        ph, pw = self.pool
        Ho, Wo = H // ph, W // pw
        blocks = np.zeros((n, Ho, Wo, C, ph * pw))
        np.put_along_axis(blocks, self._arg[..., None], grad[..., None], axis=-1)
        blocks = blocks.reshape(n, Ho, Wo, C, ph, pw).transpose(0, 1, 4, 2, 5, 3).reshape(n, Ho * ph, Wo * pw, C)
        dx = np.zeros(self._x_shape)
        dx[:, :Ho * ph, :Wo * pw, :] = blocks
        return dx

    def spec(self):
        return {"type": "MaxPool2D", "pool": list(self.pool)}


class Flatten(Layer):
    def init(self, rng, in_shape):
        return (int(np.prod(in_shape)),)

    def forward(self, x):
        self._shape = x.shape
        return x.reshape(x.shape[0], -1)

    def backward(self, grad):
        return grad.reshape(self._shape)


class Dense(Layer):
    params = ("W", "b")

    def __init__(self, units: int):
        self.units = int(units)

    def init(self, rng, in_shape):
        if len(in_shape) != 1:
            raise CnnError(f"Dense expects a flat input, got {in_shape}")
        (f,) = in_shape
        self.W = _glorot(rng, (f, self.units), f, self.units)
        self.b = np.zeros(self.units)
        return (self.units,)

    def forward(self, x):
        self._x = x
        return x @ self.W + self.b

    def backward(self, grad):
        self.dW = self._x.T @ grad
        self.db = grad.sum(axis=0)
        return grad @ self.W.T

    def spec(self):
        return {"type": "Dense", "units": self.units}


_LAYER_TYPES = {"Conv2D": Conv2D, "ReLU": ReLU, "MaxPool2D": MaxPool2D, "Flatten": Flatten, "Dense": Dense}


def layer_from_spec(spec: dict) -> Layer:
    spec = dict(spec)
    kind = spec.pop("type")
    if kind not in _LAYER_TYPES:
        raise CnnError(f"unknown layer type {kind!r}")
    if "kernel" in spec:
        spec["kernel"] = tuple(spec["kernel"])
    if "pool" in spec:
        spec["pool"] = tuple(spec["pool"])
    return _LAYER_TYPES[kind](**spec)


def default_architecture() -> list[dict]:
    # the width axis (6 sensor channels) is used up by the second conv, so its pool is 2x1
    return [
        {"type": "Conv2D", "filters": 16, "kernel": [5, 3]},
        {"type": "ReLU"},
        {"type": "MaxPool2D", "pool": [2, 2]},
        {"type": "Conv2D", "filters": 32, "kernel": [5, 2]},
        {"type": "ReLU"},
        {"type": "MaxPool2D", "pool": [2, 1]},
        {"type": "Flatten"},
        {"type": "Dense", "units": 64},
        {"type": "ReLU"},
        {"type": "Dense", "units": 2},
    ]


def softmax(logits):
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def cross_entropy(probs_or_logits, labels, from_logits=True):
    labels = np.asarray(labels, dtype=np.int64)
    if from_logits:
        z = probs_or_logits - probs_or_logits.max(axis=1, keepdims=True)
        logp = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
    else:
        logp = np.log(probs_or_logits)
    return float(-logp[np.arange(labels.size), labels].mean())


class Network:
    """Layer stack ending in a 2-way softmax."""

    def __init__(self, layers: list[Layer], input_shape: tuple[int, int, int], seed: int = 0):
        self.layers = layers
        self.input_shape = tuple(int(v) for v in input_shape)
        rng = np.random.default_rng(seed)
        shape = self.input_shape
        for layer in layers:
            shape = layer.init(rng, shape)
        if shape != (2,):
            raise CnnError(f"architecture ends in shape {shape}, expected (2,)")

    @classmethod
    def from_specs(cls, specs, input_shape=(200, N_CHANNELS, 1), seed: int = 0) -> "Network":
        return cls([layer_from_spec(s) for s in specs], input_shape, seed)

    def _check(self, batch):
        batch = np.asarray(batch, dtype=np.float64)
        if batch.ndim != 4 or batch.shape[1:] != self.input_shape:
            raise CnnError(f"expected batch of shape (n, {', '.join(map(str, self.input_shape))}), "
                           f"got {batch.shape}")
        return batch

    def logits(self, batch):
        x = self._check(batch)
        for layer in self.layers:
            x = layer.forward(x)
        return x

    def forward(self, batch):
        return softmax(self.logits(batch))

    def predict(self, batch):
        return np.argmax(self.logits(batch), axis=1).astype(np.int64)

    def loss(self, batch, labels) -> float:
        return cross_entropy(self.logits(batch), labels)

    def backward(self, batch, labels) -> float:
        """Populate parameter gradients of the mean cross-entropy; return the loss."""
        labels = np.asarray(labels, dtype=np.int64)
        if not np.isin(labels, (0, 1)).all():
            raise CnnError("labels must be 0/1")
        logits = self.logits(batch)
        if labels.shape != (logits.shape[0],):
            raise CnnError(f"expected {logits.shape[0]} labels, got shape {labels.shape}")
        probs = softmax(logits)
        grad = probs.copy()
        grad[np.arange(labels.size), labels] -= 1.0
        grad /= labels.size
        for layer in reversed(self.layers):
            grad = layer.backward(grad)
        return cross_entropy(logits, labels)

    def parameters(self):
        """(layer index, name, array) for every trainable tensor."""
        for i, layer in enumerate(self.layers):
            for name in layer.params:
                yield i, name, getattr(layer, name)

    def gradients(self):
        for i, layer in enumerate(self.layers):
            for name in layer.params:
                yield i, name, getattr(layer, "d" + name)

    def to_dict(self) -> dict:
        return {
            "input_shape": list(self.input_shape),
            "layers": [layer.spec() for layer in self.layers],
            "weights": [{"layer": i, "name": name, "shape": list(arr.shape), "values": arr.ravel().tolist()}
                        for i, name, arr in self.parameters()],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Network":
        net = cls.from_specs(d["layers"], tuple(d["input_shape"]))
        for w in d["weights"]:
            layer = net.layers[w["layer"]]
            current = getattr(layer, w["name"])
            values = np.asarray(w["values"], dtype=np.float64).reshape(w["shape"])
            if values.shape != current.shape:
                raise CnnError(f"weight {w['name']} of layer {w['layer']} has shape {values.shape}, "
                               f"expected {current.shape}")
            setattr(layer, w["name"], values)
        return net


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-3
    batch_size: int = 32
    epochs: int = 30
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0

    def __post_init__(self):
        if self.learning_rate < 0 or self.batch_size < 1 or self.epochs < 0:
            raise CnnError("learning_rate must be >= 0, batch_size >= 1, epochs >= 0")

    def to_dict(self):
        return asdict(self)


def train(net: Network, windows, labels, config: TrainConfig = TrainConfig()) -> list[float]:
    """Adam over seeded mini-batch shuffles; returns the mean training loss per epoch."""
    X = net._check(windows)
    y = np.asarray(labels, dtype=np.int64)
    counts = np.bincount(y, minlength=2)
    if counts.size != 2 or (counts < 2).any():
        raise CnnError(f"need at least 2 samples of each class, got {counts.tolist()}")
    rng = np.random.default_rng(config.seed)
    params = list(net.parameters())
    m = [np.zeros_like(p) for _, _, p in params]
    v = [np.zeros_like(p) for _, _, p in params]
    step = 0
    history = []
    for epoch in range(config.epochs):
        order = rng.permutation(len(y))
        total = 0.0
        for bi, lo in enumerate(range(0, len(y), config.batch_size)):
            idx = order[lo:lo + config.batch_size]
            loss = net.backward(X[idx], y[idx])
            if not np.isfinite(loss):
                raise CnnError(f"non-finite loss at epoch {epoch}, batch {bi}")
            total += loss * idx.size
            step += 1
            c1 = 1 - config.beta1 ** step
            c2 = 1 - config.beta2 ** step
            for k, ((_, _, p), (_, _, g)) in enumerate(zip(params, net.gradients())):
                m[k] = config.beta1 * m[k] + (1 - config.beta1) * g
                v[k] = config.beta2 * v[k] + (1 - config.beta2) * g * g
                p -= config.learning_rate * (m[k] / c1) / (np.sqrt(v[k] / c2) + config.eps)
        history.append(total / len(y))
        log.debug("epoch %d loss %.6f", epoch, history[-1])
    return history


def reshape_for_cnn(flat, window_len: int = 200, n_channels: int = N_CHANNELS) -> np.ndarray:
    """Inverse of row-major window flattening, with a trailing depth axis.

    Accepts one vector (-> (window_len, n_channels, 1)), a matrix of vectors
    (-> (n, window_len, n_channels, 1)), or a Window.
    """
    values = getattr(flat, "values", None)
    if values is not None:
        return np.asarray(values, dtype=np.float64)[..., None]
    flat = np.asarray(flat, dtype=np.float64)
    size = window_len * n_channels
    if flat.shape[-1] != size or flat.ndim not in (1, 2):
        raise CnnError(f"expected vectors of length {size}, got shape {flat.shape}")
    return flat.reshape(flat.shape[:-1] + (window_len, n_channels, 1))
