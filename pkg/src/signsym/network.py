"""Feedforward networks with hand-written forward passes and losses.

A :class:`Network` is an ordered list of layers.  Each layer maps its input
``h_{l-1}`` to a pre-activation ``a_l`` and an activation ``h_l = f(a_l)``.
Layers also know how to push an error signal back to their input through an
arbitrary *feedback kernel* (a tensor with the same shape as the forward
weight), which is what lets the feedback rules swap ``W^T`` for something else.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import ConfigError, DimensionError
from .tensor import DTYPE, SeededRng, as_tensor

ACTIVATIONS = ("relu", "tanh", "identity", "sigmoid")


def activate(kind: str, a: np.ndarray) -> np.ndarray:
    if kind == "relu":
        return np.maximum(a, 0.0)
    if kind == "tanh":
        return np.tanh(a)
    if kind == "identity":
        return a
    if kind == "sigmoid":
        return 0.5 * (1.0 + np.tanh(0.5 * a))
    raise ConfigError(f"unknown activation {kind!r}")


def activation_grad(kind: str, a: np.ndarray) -> np.ndarray:
    """f'(a) for the given activation."""
    if kind == "relu":
        return (a > 0).astype(DTYPE)
    if kind == "tanh":
        t = np.tanh(a)
        return 1.0 - t * t
    if kind == "identity":
        return np.ones_like(a)
    if kind == "sigmoid":
        s = 0.5 * (1.0 + np.tanh(0.5 * a))
        return s * (1.0 - s)
    raise ConfigError(f"unknown activation {kind!r}")


def _init_bound(fan_in: int, activation: str) -> float:
    # Kaiming-uniform for relu, LeCun-uniform otherwise
    gain2 = 2.0 if activation == "relu" else 1.0
    return float(np.sqrt(3.0 * gain2 / fan_in))


class Dense:
    kind = "dense"
    has_weights = True

    def __init__(self, weight, bias, activation: str = "relu"):
        self.weight = as_tensor(weight, "dense weight")
        self.bias = as_tensor(bias, "dense bias")
        if self.weight.ndim != 2 or self.bias.shape != (self.weight.shape[0],):
            raise DimensionError(
                f"dense weight {self.weight.shape} and bias {self.bias.shape} disagree"
            )
        if activation not in ACTIVATIONS:
            raise ConfigError(f"unknown activation {activation!r}")
        self.activation = activation

    @classmethod
    def init(cls, in_dim: int, out_dim: int, activation: str, rng: SeededRng) -> "Dense":
        bound = _init_bound(in_dim, activation)
        w = rng.uniform((out_dim, in_dim), -bound, bound)
        return cls(w, np.zeros(out_dim), activation)

    @property
    def init_scale(self) -> float:
        return _init_bound(self.weight.shape[1], self.activation)

    def output_shape(self, in_shape: tuple) -> tuple:
        if tuple(in_shape) != (self.weight.shape[1],):
            raise DimensionError(
                f"dense layer expects input {(self.weight.shape[1],)}, got {tuple(in_shape)}"
            )
        return (self.weight.shape[0],)

    def preact(self, x: np.ndarray) -> np.ndarray:
        return x @ self.weight.T + self.bias

    def transport(self, delta: np.ndarray, x: np.ndarray, kernel: np.ndarray) -> np.ndarray:
        return delta @ kernel

    def param_grads(self, delta: np.ndarray, x: np.ndarray):
        return delta.T @ x, delta.sum(axis=0)

    def with_params(self, weight, bias) -> "Dense":
        return Dense(weight, bias, self.activation)


class Conv2d:
    """Stride-1 2-D convolution (cross-correlation) with valid or same padding."""

    kind = "conv2d"
    has_weights = True

    def __init__(self, weight, bias, activation: str = "relu", padding: str = "valid"):
        self.weight = as_tensor(weight, "conv weight")
        self.bias = as_tensor(bias, "conv bias")
        if self.weight.ndim != 4 or self.bias.shape != (self.weight.shape[0],):
            raise DimensionError(
                f"conv weight {self.weight.shape} and bias {self.bias.shape} disagree"
            )
        if padding not in ("valid", "same"):
            raise ConfigError(f"padding must be 'valid' or 'same', got {padding!r}")
        kh, kw = self.weight.shape[2:]
        if padding == "same" and (kh != kw or kh % 2 == 0):
            raise ConfigError("'same' padding needs a square odd kernel")
        if activation not in ACTIVATIONS:
            raise ConfigError(f"unknown activation {activation!r}")
        self.activation = activation
        self.padding = padding

    @classmethod
    def init(cls, in_ch: int, out_ch: int, kernel: int, activation: str, rng: SeededRng,
             padding: str = "valid") -> "Conv2d":
        bound = _init_bound(in_ch * kernel * kernel, activation)
        w = rng.uniform((out_ch, in_ch, kernel, kernel), -bound, bound)
        return cls(w, np.zeros(out_ch), activation, padding)

    @property
    def pad(self) -> int:
        return self.weight.shape[2] // 2 if self.padding == "same" else 0

    @property
    def init_scale(self) -> float:
        _, c, kh, kw = self.weight.shape
        return _init_bound(c * kh * kw, self.activation)

    def output_shape(self, in_shape: tuple) -> tuple:
        o, c, kh, kw = self.weight.shape
        if len(in_shape) != 3 or in_shape[0] != c:
            raise DimensionError(f"conv layer expects ({c}, H, W) input, got {tuple(in_shape)}")
        p = self.pad
        ho, wo = in_shape[1] + 2 * p - kh + 1, in_shape[2] + 2 * p - kw + 1
        if ho < 1 or wo < 1:
            raise DimensionError(f"input {tuple(in_shape)} smaller than kernel {(kh, kw)}")
        return (o, ho, wo)

    def _padded(self, x: np.ndarray) -> np.ndarray:
        p = self.pad
        if p == 0:
            return x
        return np.pad(x, ((0, 0), (0, 0), (p, p), (p, p)))

    def preact(self, x: np.ndarray) -> np.ndarray:
        kh, kw = self.weight.shape[2:]
        win = sliding_window_view(self._padded(x), (kh, kw), axis=(2, 3))
        out = np.tensordot(win, self.weight, axes=([1, 4, 5], [1, 2, 3]))
        return np.ascontiguousarray(out.transpose(0, 3, 1, 2)) + self.bias[None, :, None, None]

    def transport(self, delta: np.ndarray, x: np.ndarray, kernel: np.ndarray) -> np.ndarray:
        # adjoint of the convolution, evaluated with ``kernel`` in place of the weight
        kh, kw = kernel.shape[2:]
        dpad = np.pad(delta, ((0, 0), (0, 0), (kh - 1, kh - 1), (kw - 1, kw - 1)))
        win = sliding_window_view(dpad, (kh, kw), axis=(2, 3))
        flipped = kernel[:, :, ::-1, ::-1]
        g = np.tensordot(win, flipped, axes=([1, 4, 5], [0, 2, 3])).transpose(0, 3, 1, 2)
        p = self.pad
        h, w = x.shape[2:]
        return np.ascontiguousarray(g[:, :, p:p + h, p:p + w])

    def param_grads(self, delta: np.ndarray, x: np.ndarray):
        kh, kw = self.weight.shape[2:]
        win = sliding_window_view(self._padded(x), (kh, kw), axis=(2, 3))
        dw = np.tensordot(delta, win, axes=([0, 2, 3], [0, 2, 3]))
        return dw, delta.sum(axis=(0, 2, 3))

    def with_params(self, weight, bias) -> "Conv2d":
        return Conv2d(weight, bias, self.activation, self.padding)


class MaxPool2d:
    """Non-overlapping 2x2 max pooling; odd trailing rows/cols are dropped."""

    kind = "maxpool2d"
    has_weights = False
    activation = "identity"

    def output_shape(self, in_shape: tuple) -> tuple:
        if len(in_shape) != 3 or in_shape[1] < 2 or in_shape[2] < 2:
            raise DimensionError(f"max-pool expects (C, H>=2, W>=2), got {tuple(in_shape)}")
        return (in_shape[0], in_shape[1] // 2, in_shape[2] // 2)

    @staticmethod
    def _blocks(x: np.ndarray) -> np.ndarray:
        b, c, h, w = x.shape
        h2, w2 = h // 2, w // 2
        xr = x[:, :, : 2 * h2, : 2 * w2].reshape(b, c, h2, 2, w2, 2)
        return xr.transpose(0, 1, 2, 4, 3, 5).reshape(b, c, h2, w2, 4)

    def preact(self, x: np.ndarray) -> np.ndarray:
        return self._blocks(x).max(axis=-1)

    def transport(self, delta: np.ndarray, x: np.ndarray, kernel=None) -> np.ndarray:
        blocks = self._blocks(x)
        winner = blocks.argmax(axis=-1)
        routed = (np.arange(4) == winner[..., None]) * delta[..., None]
        b, c, h2, w2, _ = routed.shape
        routed = routed.reshape(b, c, h2, w2, 2, 2).transpose(0, 1, 2, 4, 3, 5)
        out = np.zeros_like(x)
        out[:, :, : 2 * h2, : 2 * w2] = routed.reshape(b, c, 2 * h2, 2 * w2)
        return out


class Flatten:
    kind = "flatten"
    has_weights = False
    activation = "identity"

    def output_shape(self, in_shape: tuple) -> tuple:
        return (int(np.prod(in_shape)),)

    def preact(self, x: np.ndarray) -> np.ndarray:
        return x.reshape(x.shape[0], -1)

    def transport(self, delta: np.ndarray, x: np.ndarray, kernel=None) -> np.ndarray:
        return delta.reshape(x.shape)


HEAD_KINDS = ("classifier", "hasher")


@dataclass
class Network:
    """Ordered layers plus the task head descriptor ``(kind, size)``."""

    layers: list
    input_shape: tuple
    head: tuple = ("classifier", 10)
    seed: int = 0

    def __post_init__(self):
        self.input_shape = tuple(int(d) for d in self.input_shape)
        self.head = (str(self.head[0]), int(self.head[1]))
        self.validate()

    def validate(self) -> None:
        if self.head[0] not in HEAD_KINDS:
            raise ConfigError(f"unknown head {self.head[0]!r}")
        if not self.layers:
            raise ConfigError("network has no layers")
        shape = self.input_shape
        for i, layer in enumerate(self.layers):
            try:
                shape = layer.output_shape(shape)
            except DimensionError as exc:
                raise DimensionError(f"layer {i}: {exc}") from None
        if shape != (self.head[1],):
            raise DimensionError(f"network output {shape} does not match head {self.head}")
        last = self.layers[-1]
        if last.kind != "dense":
            raise ConfigError("the head must be a dense layer")
        if self.head[0] == "hasher" and last.activation != "tanh":
            raise ConfigError("hasher head needs tanh activation")

    @property
    def weighted(self) -> list[int]:
        """Indices of layers that carry weights."""
        return [i for i, layer in enumerate(self.layers) if layer.has_weights]

    @property
    def head_index(self) -> int:
        return len(self.layers) - 1

    def num_params(self) -> int:
        return sum(self.layers[i].weight.size + self.layers[i].bias.size for i in self.weighted)

    def copy(self) -> "Network":
        layers = [
            layer.with_params(layer.weight.copy(), layer.bias.copy()) if layer.has_weights else layer
            for layer in self.layers
        ]
        return Network(layers, self.input_shape, self.head, self.seed)

    def predict(self, x) -> np.ndarray:
        out = forward(self, x).output
        if self.head[0] == "classifier":
            return out.argmax(axis=1)
        return out


@dataclass
class ForwardTrace:
    inputs: np.ndarray
    pre: list = field(default_factory=list)
    post: list = field(default_factory=list)

    @property
    def output(self) -> np.ndarray:
        return self.post[-1]

    def layer_input(self, index: int) -> np.ndarray:
        return self.inputs if index == 0 else self.post[index - 1]


def _batched(net: Network, x) -> np.ndarray:
    x = as_tensor(x, "network input")
    if x.shape == net.input_shape:
        x = x[None]
    if x.shape[1:] != net.input_shape:
        raise DimensionError(
            f"layer 0: input batch {x.shape} does not match network input {net.input_shape}"
        )
    return x


def forward(net: Network, x) -> ForwardTrace:
    """Run ``x`` (a batch, or one example) through ``net`` recording a_l and h_l."""
    h = _batched(net, x)
    trace = ForwardTrace(inputs=h)
    for i, layer in enumerate(net.layers):
        a = layer.preact(h)
        h = activate(layer.activation, a)
        trace.pre.append(a)
        trace.post.append(h)
    return trace


def mlp(sizes, activation: str = "relu", head: tuple = ("classifier", None),
        out_activation: str | None = None, seed: int = 0) -> Network:
    """Fully connected net with layer widths ``sizes`` (input first)."""
    kind = head[0]
    if out_activation is None:
        out_activation = "tanh" if kind == "hasher" else "identity"
    rng = SeededRng(seed)
    layers = []
    for i, (n_in, n_out) in enumerate(zip(sizes[:-1], sizes[1:])):
        act = out_activation if i == len(sizes) - 2 else activation
        layers.append(Dense.init(n_in, n_out, act, rng.child(i + 1)))
    return Network(layers, (sizes[0],), (kind, sizes[-1]), seed)


def small_cnn(input_shape=(1, 28, 28), channels=(8, 16), hidden: int = 64,
              head: tuple = ("classifier", 10), seed: int = 0) -> Network:
    """conv-pool-conv-pool-dense-head, the desk-scale stand-in for a CNN backbone."""
    rng = SeededRng(seed)
    c, h, w = input_shape
    layers = [
        Conv2d.init(c, channels[0], 3, "relu", rng.child(1), padding="same"),
        MaxPool2d(),
        Conv2d.init(channels[0], channels[1], 3, "relu", rng.child(3), padding="same"),
        MaxPool2d(),
        Flatten(),
    ]
    flat = channels[1] * (h // 4) * (w // 4)
    layers.append(Dense.init(flat, hidden, "relu", rng.child(6)))
    act = "tanh" if head[0] == "hasher" else "identity"
    layers.append(Dense.init(hidden, head[1], act, rng.child(7)))
    return Network(layers, input_shape, head, seed)


def attach_head(net: Network, head: tuple, seed: int) -> Network:
    """Replace the final dense layer with a freshly initialised task head."""
    body = net.copy().layers[:-1]
    in_dim = net.layers[-1].weight.shape[1]
    act = "tanh" if head[0] == "hasher" else "identity"
    rng = SeededRng(seed, stream=1000 + len(net.layers))
    body.append(Dense.init(in_dim, head[1], act, rng))
    return Network(body, net.input_shape, head, seed)


class LossKind(str, enum.Enum):
    SQUARED = "squared"
    CROSS_ENTROPY = "cross_entropy"
    PAIRWISE_HASH = "pairwise_hash"


def check_pairing(kind, head: tuple) -> None:
    kind = LossKind(kind)
    if kind is LossKind.PAIRWISE_HASH and head[0] != "hasher":
        raise ConfigError("pairwise-hash loss needs a hasher head")
    if kind is LossKind.CROSS_ENTROPY and head[0] != "classifier":
        raise ConfigError("cross-entropy loss needs a classifier head")


def _as_batch(y_hat) -> np.ndarray:
    y_hat = as_tensor(y_hat, "prediction")
    return y_hat[None] if y_hat.ndim == 1 else y_hat


def _one_hot(target, n_classes: int, batch: int) -> np.ndarray:
    t = np.asarray(target)
    if t.ndim == 2 or (t.ndim == 1 and batch == 1 and t.shape[0] == n_classes and t.dtype.kind == "f"):
        t = np.asarray(t, dtype=DTYPE).reshape(batch, n_classes)
        return t
    idx = np.atleast_1d(t).astype(int)
    if idx.shape != (batch,):
        raise DimensionError(f"expected {batch} class indices, got shape {idx.shape}")
    if idx.min() < 0 or idx.max() >= n_classes:
        raise DimensionError(f"class index out of range for {n_classes} classes")
    out = np.zeros((batch, n_classes))
    out[np.arange(batch), idx] = 1.0
    return out


def similarity_matrix(labels) -> np.ndarray:
    """s_ij = 1 when items share any label (class indices or multi-hot rows)."""
    lab = np.asarray(labels)
    if lab.ndim == 1:
        return (lab[:, None] == lab[None, :]).astype(DTYPE)
    lab = lab.astype(DTYPE)
    return ((lab @ lab.T) > 0).astype(DTYPE)


def _pairwise_terms(u: np.ndarray, sim: np.ndarray):
    b, k = u.shape
    if sim.shape != (b, b):
        raise DimensionError(f"similarity matrix {sim.shape} does not match batch {b}")
    margin = k / 2.0
    d = 0.5 * (k - u @ u.T)
    iu = np.triu_indices(b, 1)
    return d, margin, iu


def loss(kind, y_hat, target) -> float:
    """Batch-mean loss.  Targets: arrays for squared error, class indices or
    one-hot rows for cross-entropy, labels or an (n, n) similarity matrix
    for the pairwise hash loss."""
    kind = LossKind(kind)
    y = _as_batch(y_hat)
    b = y.shape[0]
    if kind is LossKind.SQUARED:
        t = as_tensor(target, "target").reshape(y.shape)
        return float(0.5 * np.sum((t - y) ** 2) / b)
    if kind is LossKind.CROSS_ENTROPY:
        t = _one_hot(target, y.shape[1], b)
        z = y - y.max(axis=1, keepdims=True)
        logp = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
        return float(-np.sum(t * logp) / b)
    sim = _target_similarity(target, b)
    d, margin, iu = _pairwise_terms(y, sim)
    if len(iu[0]) == 0:
        return 0.0
    s = sim[iu]
    dd = d[iu]
    return float(np.mean(s * dd + (1 - s) * np.maximum(0.0, margin - dd)))


def _target_similarity(target, b: int) -> np.ndarray:
    t = np.asarray(target)
    if t.ndim == 2 and t.shape == (b, b) and t.dtype.kind == "f":
        return t.astype(DTYPE)
    return similarity_matrix(t)


def loss_grad_output(kind, y_hat, target) -> np.ndarray:
    """Gradient of :func:`loss` with respect to ``y_hat`` (same shape as ``y_hat``)."""
    kind = LossKind(kind)
    y_in = as_tensor(y_hat, "prediction")
    y = _as_batch(y_in)
    b = y.shape[0]
    if kind is LossKind.SQUARED:
        t = as_tensor(target, "target").reshape(y.shape)
        g = (y - t) / b
    elif kind is LossKind.CROSS_ENTROPY:
        t = _one_hot(target, y.shape[1], b)
        z = y - y.max(axis=1, keepdims=True)
        p = np.exp(z)
        p /= p.sum(axis=1, keepdims=True)
        g = (p - t) / b
    else:
        sim = _target_similarity(target, b)
        d, margin, iu = _pairwise_terms(y, sim)
        n_pairs = len(iu[0])
        coef = np.zeros((b, b))
        if n_pairs:
            # dL/dd per pair, then dd/du_i = -u_j / 2
            active = (d < margin).astype(DTYPE)
            dl_dd = sim - (1 - sim) * active
            upper = np.zeros((b, b))
            upper[iu] = dl_dd[iu]
            coef = (upper + upper.T) / n_pairs
        g = -0.5 * coef @ y
    return g.reshape(y_in.shape)
