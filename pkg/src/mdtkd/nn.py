"""Dense feed-forward networks with hand-written forward/backward passes.

Layers are plain numpy objects. A forward pass returns class probabilities plus a
:class:`ForwardCache`; ``backward`` consumes that cache and writes parameter
gradients into each layer's buffers. All arithmetic is float64.
"""
from __future__ import annotations

import copy
import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DomainError, FormatError, ShapeError, StateError

SIGMOID = "sigmoid"
RELU = "relu"
TRAIN = "train"
EVAL = "eval"

_MAGIC = b"MDTK"
_FORMAT_VERSION = 1


def make_rng(seed: int) -> np.random.Generator:
    """Explicit generator for one stream of randomness (PCG64 seeded by a 64-bit int)."""
    return np.random.Generator(np.random.PCG64(seed))


@dataclass
class NetworkSpec:
    layer_sizes: list[int]
    activation: str = SIGMOID
    use_batchnorm: bool = False
    dropout_p: float = 0.0
    init_seed: int = 0

    def validate(self) -> None:
        sizes = list(self.layer_sizes)
        if len(sizes) < 2:
            raise ConfigError(f"need at least two layer sizes, got {sizes}")
        if any(int(s) != s or s < 1 for s in sizes):
            raise ConfigError(f"layer sizes must be positive integers, got {sizes}")
        if self.activation not in (SIGMOID, RELU):
            raise ConfigError(f"unknown activation {self.activation!r}")
        if not 0.0 <= self.dropout_p < 1.0:
            raise ConfigError(f"dropout_p must be in [0, 1), got {self.dropout_p}")

    @classmethod
    def from_dict(cls, d: dict) -> "NetworkSpec":
        return cls(
            layer_sizes=[int(s) for s in d["layer_sizes"]],
            activation=d.get("activation", SIGMOID),
            use_batchnorm=bool(d.get("use_batchnorm", False)),
            dropout_p=float(d.get("dropout_p", 0.0)),
            init_seed=int(d.get("init_seed", 0)),
        )


@dataclass
class SgdConfig:
    learning_rate: float = 0.01
    l1_lambda: float = 0.0
    l2_lambda: float = 0.0

    def validate(self) -> None:
        if not self.learning_rate >= 0:
            raise ConfigError(f"learning_rate must be non-negative, got {self.learning_rate}")
        if self.l1_lambda < 0 or self.l2_lambda < 0:
            raise ConfigError("penalty scales must be non-negative")

    @classmethod
    def from_dict(cls, d: dict) -> "SgdConfig":
        return cls(
            learning_rate=float(d.get("learning_rate", 0.01)),
            l1_lambda=float(d.get("l1_lambda", 0.0)),
            l2_lambda=float(d.get("l2_lambda", 0.0)),
        )


# ---------------------------------------------------------------------------
# layers


class Dense:
    """Affine layer ``x @ W + b``; ``bias=False`` keeps ``b`` fixed at zero."""

    tag = 1

    def __init__(self, fan_in: int, fan_out: int, bias: bool = True):
        self.W = np.zeros((fan_in, fan_out))
        self.b = np.zeros(fan_out)
        self.bias = bias
        self.grad_W = np.zeros_like(self.W)
        self.grad_b = np.zeros_like(self.b)

    def init_uniform(self, rng: np.random.Generator) -> None:
        bound = 1.0 / np.sqrt(self.W.shape[0])
        self.W[...] = rng.uniform(-bound, bound, size=self.W.shape)
        if self.bias:
            self.b[...] = rng.uniform(-bound, bound, size=self.b.shape)

    def params(self):
        if not self.bias:
            return [(self.W, self.grad_W)]
        return [(self.W, self.grad_W), (self.b, self.grad_b)]

    def forward(self, x, mode, rng, track):
        return x @ self.W + self.b, x

    def backward(self, dout, x):
        self.grad_W[...] = x.T @ dout
        self.grad_b[...] = dout.sum(axis=0)
        return dout @ self.W.T


class BatchNorm:
    tag = 2

    def __init__(self, features: int, epsilon: float = 1e-5, ema_decay: float = 0.9):
        if epsilon <= 0:
            raise ConfigError("batch-norm epsilon must be positive")
        self.epsilon = epsilon
        self.ema_decay = ema_decay
        self.gamma = np.ones(features)
        self.beta = np.zeros(features)
        self.running_mean = np.zeros(features)
        self.running_var = np.ones(features)
        self.grad_gamma = np.zeros(features)
        self.grad_beta = np.zeros(features)

    def params(self):
        return [(self.gamma, self.grad_gamma), (self.beta, self.grad_beta)]

    def forward(self, x, mode, rng, track):
        if mode == EVAL:
            inv_std = 1.0 / np.sqrt(self.running_var + self.epsilon)
            xhat = (x - self.running_mean) * inv_std
            return self.gamma * xhat + self.beta, (EVAL, xhat, inv_std)
        n = x.shape[0]
        mean = x.mean(axis=0)
        centered = x - mean
        var = (centered**2).mean(axis=0)
        inv_std = 1.0 / np.sqrt(var + self.epsilon)
        xhat = centered * inv_std
        if track:
            # running variance uses the unbiased batch estimate
            unbiased = var * n / (n - 1) if n > 1 else var
            d = self.ema_decay
            self.running_mean[...] = d * self.running_mean + (1.0 - d) * mean
            self.running_var[...] = d * self.running_var + (1.0 - d) * unbiased
        return self.gamma * xhat + self.beta, (TRAIN, xhat, inv_std)

    def backward(self, dout, cache):
        mode, xhat, inv_std = cache
        self.grad_gamma[...] = (dout * xhat).sum(axis=0)
        self.grad_beta[...] = dout.sum(axis=0)
        dxhat = dout * self.gamma
        if mode == EVAL:
            return dxhat * inv_std
        n = dout.shape[0]
        return (inv_std / n) * (
            n * dxhat - dxhat.sum(axis=0) - xhat * (dxhat * xhat).sum(axis=0)
        )


class Sigmoid:
    tag = 3

    def params(self):
        return []

    def forward(self, x, mode, rng, track):
        out = np.empty_like(x)
        pos = x >= 0
        out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
        ex = np.exp(x[~pos])
        out[~pos] = ex / (1.0 + ex)
        return out, out

    def backward(self, dout, s):
        return dout * s * (1.0 - s)


class Relu:
    tag = 4

    def params(self):
        return []

    def forward(self, x, mode, rng, track):
        return np.maximum(x, 0.0), x > 0

    def backward(self, dout, active):
        return dout * active


class Dropout:
    """Inverted dropout: kept units are scaled by 1/(1-p) at train time only.

    Masks are drawn as-is; an all-zero mask (likely when p is near 1) is not resampled.
    """

    tag = 5

    def __init__(self, p: float):
        if not 0.0 <= p < 1.0:
            raise ConfigError(f"dropout p must be in [0, 1), got {p}")
        self.p = p
        self.last_mask = None

    def params(self):
        return []

    def forward(self, x, mode, rng, track):
        if mode == EVAL:
            return x, None
        if rng is None:
            raise StateError("TRAIN-mode dropout needs an rng")
        mask = rng.random(x.shape) >= self.p
        self.last_mask = mask
        return x * mask / (1.0 - self.p), mask

    def backward(self, dout, mask):
        if mask is None:
            return dout
        return dout * mask / (1.0 - self.p)


_ACTIVATIONS = {SIGMOID: Sigmoid, RELU: Relu}


# ---------------------------------------------------------------------------
# network


@dataclass
class ForwardCache:
    logits: np.ndarray
    probs: np.ndarray
    entries: list = field(repr=False)
    mode: str
    owner: int
    version: int


class Network:
    def __init__(self, spec: NetworkSpec, layers: list):
        self.spec = spec
        self.layers = layers
        self.version = 0

    @property
    def input_size(self) -> int:
        return self.spec.layer_sizes[0]

    @property
    def num_classes(self) -> int:
        return self.spec.layer_sizes[-1]

    def parameters(self) -> list[tuple[np.ndarray, np.ndarray]]:
        """(parameter, gradient) pairs in a fixed layer order."""
        return [pair for layer in self.layers for pair in layer.params()]

    def zero_grad(self) -> None:
        for _, g in self.parameters():
            g[...] = 0.0

    def copy(self) -> "Network":
        return copy.deepcopy(self)

    def forward(self, x, mode=EVAL, rng=None, track_running=True):
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 2 or x.shape[1] != self.input_size:
            raise ShapeError(f"expected input of shape (n, {self.input_size}), got {x.shape}")
        if mode not in (TRAIN, EVAL):
            raise ValueError(f"unknown mode {mode!r}")
        entries = []
        h = x
        for layer in self.layers:
            h, c = layer.forward(h, mode, rng, track_running)
            entries.append(c)
        probs = softmax_t(h, 1.0)
        return probs, ForwardCache(h, probs, entries, mode, id(self), self.version)

    def logits(self, x, mode=EVAL, rng=None) -> np.ndarray:
        return self.forward(x, mode, rng)[1].logits

    def backward(self, cache: ForwardCache, dlogits) -> None:
        if cache.owner != id(self) or cache.version != self.version:
            raise StateError("forward cache does not belong to the current network state")
        dlogits = np.asarray(dlogits, dtype=np.float64)
        if dlogits.shape != cache.logits.shape:
            raise StateError(
                f"dlogits shape {dlogits.shape} does not match cached output {cache.logits.shape}"
            )
        d = dlogits
        for layer, c in zip(reversed(self.layers), reversed(cache.entries)):
            d = layer.backward(d, c)

    def state_bytes(self) -> bytes:
        return to_bytes(self)


def build_network(spec: NetworkSpec) -> Network:
    """Dense -> [BatchNorm] -> activation -> [Dropout] per hidden layer, then a dense output.

    A dense layer feeding batch norm has no bias (the normalization cancels it).
    """
    spec.validate()
    sizes = spec.layer_sizes
    rng = make_rng(spec.init_seed)
    layers: list = []
    for i, (fan_in, fan_out) in enumerate(zip(sizes[:-1], sizes[1:])):
        last = i == len(sizes) - 2
        dense = Dense(fan_in, fan_out, bias=last or not spec.use_batchnorm)
        dense.init_uniform(rng)
        layers.append(dense)
        if last:
            break
        if spec.use_batchnorm:
            layers.append(BatchNorm(fan_out))
        layers.append(_ACTIVATIONS[spec.activation]())
        if spec.dropout_p > 0:
            layers.append(Dropout(spec.dropout_p))
    return Network(spec, layers)


def softmax_t(logits, T: float = 1.0) -> np.ndarray:
    """Row-wise temperature softmax, exp(z/T) / sum exp(z/T)."""
    if not T > 0:
        raise DomainError(f"temperature must be positive, got {T}")
    z = np.asarray(logits, dtype=np.float64) / T
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def penalty_gradient(net: Network, cfg: SgdConfig) -> list[np.ndarray]:
    """Gradient of l1_lambda*sum|w| + l2_lambda/2*sum w^2; depends on parameters only."""
    out = []
    for p, _ in net.parameters():
        g = cfg.l2_lambda * p
        if cfg.l1_lambda:
            g = g + cfg.l1_lambda * np.sign(p)
        out.append(g)
    return out


def sgd_step(net: Network, cfg: SgdConfig) -> None:
    """Plain SGD update (no momentum); zeroes the gradient buffers afterwards."""
    lr = cfg.learning_rate
    penalties = penalty_gradient(net, cfg) if (cfg.l1_lambda or cfg.l2_lambda) else None
    for i, (p, g) in enumerate(net.parameters()):
        step = g if penalties is None else g + penalties[i]
        p -= lr * step
        g[...] = 0.0
    net.version += 1


# ---------------------------------------------------------------------------
# binary container


def _write_layer(layer) -> bytes:
    if isinstance(layer, Dense):
        dims = layer.W.shape
        parts = [layer.W.ravel(), layer.b] if layer.bias else [layer.W.ravel()]
        payload = np.concatenate(parts)
    elif isinstance(layer, BatchNorm):
        dims = (layer.gamma.size,)
        payload = np.concatenate(
            [[layer.epsilon, layer.ema_decay], layer.gamma, layer.beta,
             layer.running_mean, layer.running_var]
        )
    elif isinstance(layer, Dropout):
        dims = ()
        payload = np.array([layer.p])
    else:
        dims = ()
        payload = np.empty(0)
    head = struct.pack("<BI", layer.tag, len(dims)) + struct.pack(f"<{len(dims)}I", *dims)
    return head + struct.pack("<Q", payload.size) + payload.astype("<f8").tobytes()


def to_bytes(net: Network) -> bytes:
    parts = [_MAGIC, struct.pack("<II", _FORMAT_VERSION, len(net.layers))]
    parts.extend(_write_layer(layer) for layer in net.layers)
    return b"".join(parts)


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, fmt: str, what: str):
        size = struct.calcsize(fmt)
        if self.pos + size > len(self.data):
            raise FormatError(f"truncated container while reading {what}")
        vals = struct.unpack_from(fmt, self.data, self.pos)
        self.pos += size
        return vals

    def floats(self, count: int, what: str) -> np.ndarray:
        end = self.pos + 8 * count
        if end > len(self.data):
            raise FormatError(f"truncated container while reading {what}")
        arr = np.frombuffer(self.data, dtype="<f8", count=count, offset=self.pos).astype(np.float64)
        self.pos = end
        return arr


def read_network(reader: _Reader) -> Network:
    (magic,) = reader.take("<4s", "magic")
    if magic != _MAGIC:
        raise FormatError(f"bad magic {magic!r}, expected {_MAGIC!r}")
    version, count = reader.take("<II", "header")
    if version != _FORMAT_VERSION:
        raise FormatError(f"unsupported format version {version}")
    layers: list = []
    for i in range(count):
        tag, ndims = reader.take("<BI", f"layer {i} header")
        dims = reader.take(f"<{ndims}I", f"layer {i} dims")
        (n,) = reader.take("<Q", f"layer {i} payload size")
        payload = reader.floats(n, f"layer {i} payload")
        if tag == Dense.tag:
            fan_in, fan_out = dims
            nw = fan_in * fan_out
            if n not in (nw, nw + fan_out):
                raise FormatError(f"dense layer {i}: payload of {n} values does not fit {dims}")
            layer = Dense(fan_in, fan_out, bias=n > nw)
            layer.W[...] = payload[:nw].reshape(fan_in, fan_out)
            if layer.bias:
                layer.b[...] = payload[nw:]
        elif tag == BatchNorm.tag:
            (f,) = dims
            layer = BatchNorm(f, epsilon=float(payload[0]), ema_decay=float(payload[1]))
            rest = payload[2:].reshape(4, f)
            layer.gamma[...], layer.beta[...] = rest[0], rest[1]
            layer.running_mean[...], layer.running_var[...] = rest[2], rest[3]
        elif tag == Sigmoid.tag:
            layer = Sigmoid()
        elif tag == Relu.tag:
            layer = Relu()
        elif tag == Dropout.tag:
            layer = Dropout(float(payload[0]))
        else:
            raise FormatError(f"unknown layer tag {tag} at layer {i}")
        layers.append(layer)
    return Network(_infer_spec(layers), layers)


def from_bytes(data: bytes) -> Network:
    reader = _Reader(data)
    net = read_network(reader)
    if reader.pos != len(data):
        raise FormatError(f"{len(data) - reader.pos} trailing bytes after network container")
    return net


def _infer_spec(layers) -> NetworkSpec:
    dense = [l for l in layers if isinstance(l, Dense)]
    if not dense:
        raise FormatError("container holds no dense layers")
    sizes = [dense[0].W.shape[0]] + [l.W.shape[1] for l in dense]
    activation = RELU if any(isinstance(l, Relu) for l in layers) else SIGMOID
    drop = [l.p for l in layers if isinstance(l, Dropout)]
    return NetworkSpec(
        layer_sizes=sizes,
        activation=activation,
        use_batchnorm=any(isinstance(l, BatchNorm) for l in layers),
        dropout_p=drop[0] if drop else 0.0,
    )


def save_network(net: Network, path) -> None:
    with open(path, "wb") as f:
        f.write(to_bytes(net))


def load_network(path) -> Network:
    with open(path, "rb") as f:
        return from_bytes(f.read())
