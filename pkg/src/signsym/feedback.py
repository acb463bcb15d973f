"""Credit-assignment rules, the ADAM optimiser and the training loop.

Every rule shares the same forward pass and the same local weight update
``dW_l = delta_l h_{l-1}^T``.  They differ only in the matrix used to carry
``delta_{l+1}`` back through layer ``l+1``:

=======  ==============================================
BP       ``W^T``
FA       fixed random ``B`` (drawn once)
uSF      ``sign(W^T)``
frSF     ``M * sign(W^T)``, ``M`` uniform in (0, 1], fixed
brSF     as frSF, ``M`` redrawn after every update
=======  ==============================================

Feedback tensors are stored in the orientation of the forward weight, so
the same layer ``transport`` method serves dense and convolutional layers.
Biases always receive their true local gradient.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DimensionError, StateError
from .network import (LossKind, Network, activation_grad, check_pairing, forward,
                      loss, loss_grad_output)
from .tensor import SeededRng, as_tensor, check_finite


class Rule(str, enum.Enum):
    BP = "BP"
    FA = "FA"
    USF = "uSF"
    FRSF = "frSF"
    BRSF = "brSF"

    @classmethod
    def parse(cls, name) -> "Rule":
        if isinstance(name, cls):
            return name
        for rule in cls:
            if rule.value.lower() == str(name).strip().lower():
                return rule
        raise ConfigError(f"unknown feedback rule {name!r}")

    @property
    def sign_concordant(self) -> bool:
        return self in (Rule.USF, Rule.FRSF, Rule.BRSF)


SIGN_RULES = (Rule.USF, Rule.FRSF, Rule.BRSF)
ALL_RULES = tuple(Rule)


class FeedbackState:
    """Per-layer feedback tensors for one network and one rule.

    ``B`` holds the FA matrices, ``M`` the sign-symmetry magnitudes.  Each
    weighted layer draws from its own stream of ``seed``.
    """

    def __init__(self, rule, net: Network, seed: int = 0):
        self.rule = Rule.parse(rule)
        self.seed = int(seed)
        self.shapes = {i: net.layers[i].weight.shape for i in net.weighted}
        self.B: dict[int, np.ndarray] = {}
        self.M: dict[int, np.ndarray] = {}
        self.redraws = 0
        self._rngs = {i: SeededRng(self.seed, stream=i + 1) for i in self.shapes}
        for i, shape in self.shapes.items():
            if self.rule is Rule.FA:
                s = net.layers[i].init_scale
                self.B[i] = self._rngs[i].uniform(shape, -s, s)
            elif self.rule in (Rule.FRSF, Rule.BRSF):
                self.M[i] = self._draw_magnitude(i)

    def _draw_magnitude(self, i: int) -> np.ndarray:
        # 1 - U[0, 1) lies in (0, 1]: zero would erase the sign
        return 1.0 - self._rngs[i].uniform(self.shapes[i], 0.0, 1.0)

    def redraw(self) -> None:
        """Draw fresh magnitudes (brSF only; a no-op for other rules)."""
        if self.rule is not Rule.BRSF:
            return
        for i in self.M:
            self.M[i] = self._draw_magnitude(i)
        self.redraws += 1

    def check(self, net: Network) -> None:
        for i in net.weighted:
            if i not in self.shapes:
                raise StateError(f"layer {i}: no feedback state for this layer")
            if self.shapes[i] != net.layers[i].weight.shape:
                raise StateError(
                    f"layer {i}: feedback state shape {self.shapes[i]} does not match "
                    f"weight {net.layers[i].weight.shape}"
                )

    def to_arrays(self) -> dict:
        out = {"feedback/meta": np.array([list(ALL_RULES).index(self.rule), self.seed, self.redraws],
                                         dtype=np.float64)}
        for i, b in self.B.items():
            out[f"feedback/B/{i}"] = b
        for i, m in self.M.items():
            out[f"feedback/M/{i}"] = m
        return out

    @classmethod
    def from_arrays(cls, net: Network, arrays: dict) -> "FeedbackState":
        rule_idx, seed, redraws = (int(v) for v in arrays["feedback/meta"])
        state = cls(ALL_RULES[rule_idx], net, seed)
        # replay the magnitude stream so later redraws continue identically
        for _ in range(redraws):
            state.redraw()
        for key, value in arrays.items():
            parts = key.split("/")
            if len(parts) == 3 and parts[1] in ("B", "M"):
                target = state.B if parts[1] == "B" else state.M
                target[int(parts[2])] = np.array(value)
        return state


def feedback_kernel(rule, net: Network, index: int, state: FeedbackState | None) -> np.ndarray:
    """Feedback tensor for layer ``index`` in the forward weight's orientation."""
    rule = Rule.parse(rule)
    w = net.layers[index].weight
    if rule is Rule.BP:
        return w
    if rule is Rule.USF:
        return np.sign(w)
    if state is None or (rule is Rule.FA and index not in state.B) or (
            rule in (Rule.FRSF, Rule.BRSF) and index not in state.M):
        raise StateError(f"layer {index}: {rule.value} needs an initialised feedback state")
    if rule is Rule.FA:
        return state.B[index]
    return state.M[index] * np.sign(w)


def feedback_matrix(rule, w_next, state: FeedbackState | None, layer: int) -> np.ndarray:
    """The transport matrix V for a layer whose forward weight is ``w_next``.

    Dense weights give ``V`` in the transposed (in x out) orientation;
    convolution kernels are returned elementwise-mapped in kernel layout.
    """
    rule = Rule.parse(rule)
    w = as_tensor(w_next, "weight")
    if rule is Rule.BP:
        k = w
    elif rule is Rule.USF:
        k = np.sign(w)
    else:
        if state is None:
            raise StateError(f"layer {layer}: {rule.value} needs an initialised feedback state")
        table = state.B if rule is Rule.FA else state.M
        if layer not in table:
            raise StateError(f"layer {layer}: feedback state not initialised")
        if table[layer].shape != w.shape:
            raise StateError(f"layer {layer}: feedback shape {table[layer].shape} vs weight {w.shape}")
        k = table[layer] if rule is Rule.FA else table[layer] * np.sign(w)
    return k.T if k.ndim == 2 else k


def backward_error_signals(net: Network, trace, rule, state: FeedbackState | None,
                           loss_grad) -> list[np.ndarray]:
    """Error signals delta_l = dE/da_l (as transported by ``rule``) for every layer."""
    rule = Rule.parse(rule)
    if state is not None:
        state.check(net)
    g = as_tensor(loss_grad, "loss gradient")
    out = trace.output
    if g.shape != out.shape:
        g = g.reshape(out.shape) if g.size == out.size else None
        if g is None:
            raise DimensionError(f"layer {len(net.layers) - 1}: loss gradient shape does not match "
                                 f"output {out.shape}")
    n = len(net.layers)
    deltas = [None] * n
    deltas[-1] = g * activation_grad(net.layers[-1].activation, trace.pre[-1])
    for l in range(n - 2, -1, -1):
        upper = net.layers[l + 1]
        kernel = feedback_kernel(rule, net, l + 1, state) if upper.has_weights else None
        carried = upper.transport(deltas[l + 1], trace.layer_input(l + 1), kernel)
        if carried.shape != trace.pre[l].shape:
            raise DimensionError(f"layer {l}: transported error {carried.shape} vs "
                                 f"pre-activation {trace.pre[l].shape}")
        deltas[l] = carried * activation_grad(net.layers[l].activation, trace.pre[l])
    return deltas


def input_error(net: Network, trace, deltas, rule, state: FeedbackState | None) -> np.ndarray:
    """Carry delta_0 back to the input through layer 0 under ``rule``."""
    first = net.layers[0]
    kernel = feedback_kernel(rule, net, 0, state) if first.has_weights else None
    return first.transport(deltas[0], trace.inputs, kernel)


def input_gradient(net: Network, x, output_grad_fn, rule=Rule.BP,
                   state: FeedbackState | None = None) -> np.ndarray:
    """Gradient of a loss w.r.t. the input, transported with ``rule``.

    ``output_grad_fn(output)`` returns dLoss/d(output) for the batch.
    """
    trace = forward(net, x)
    deltas = backward_error_signals(net, trace, rule, state, output_grad_fn(trace.output))
    g = input_error(net, trace, deltas, rule, state)
    return g.reshape(np.shape(x)) if np.size(x) == g.size else g


def pseudo_gradients(net: Network, trace, deltas) -> dict[int, tuple[np.ndarray, np.ndarray]]:
    """Per weighted layer ``(dW, db)``; deltas already carry the 1/batch factor."""
    grads = {}
    for i in net.weighted:
        grads[i] = net.layers[i].param_grads(deltas[i], trace.layer_input(i))
    return grads


@dataclass
class AdamState:
    """ADAM with coupled L2 weight decay (``lambda * W`` added to the gradient)."""

    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 5e-4
    lr_map: dict = field(default_factory=dict)
    t: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)

    def lr_for(self, index: int) -> float:
        return float(self.lr_map.get(index, self.lr))

    def step(self, key, param: np.ndarray, grad: np.ndarray, lr: float) -> np.ndarray:
        """Return the updated parameter; call :meth:`tick` once per update first."""
        m = self.m.get(key)
        if m is None:
            m = np.zeros_like(param)
            self.v[key] = np.zeros_like(param)
        m = self.beta1 * m + (1 - self.beta1) * grad
        v = self.beta2 * self.v[key] + (1 - self.beta2) * grad * grad
        self.m[key], self.v[key] = m, v
        m_hat = m / (1 - self.beta1 ** self.t)
        v_hat = v / (1 - self.beta2 ** self.t)
        return param - lr * m_hat / (np.sqrt(v_hat) + self.eps)

    def tick(self) -> None:
        self.t += 1


def weight_update(net: Network, trace, deltas, adam: AdamState,
                  state: FeedbackState | None = None) -> Network:
    """One ADAM step on every weighted layer; brSF magnitudes are redrawn afterwards."""
    grads = pseudo_gradients(net, trace, deltas)
    adam.tick()
    layers = list(net.layers)
    for i, (dw, db) in grads.items():
        layer = net.layers[i]
        if dw.shape != layer.weight.shape:
            raise DimensionError(f"layer {i}: gradient {dw.shape} vs weight {layer.weight.shape}")
        dw = dw + adam.weight_decay * layer.weight
        lr = adam.lr_for(i)
        w = adam.step((i, "weight"), layer.weight, dw, lr)
        b = adam.step((i, "bias"), layer.bias, db, lr)
        check_finite(w, f"layer {i} weight")
        layers[i] = layer.with_params(w, b)
    new = Network(layers, net.input_shape, net.head, net.seed)
    if state is not None:
        state.redraw()
    return new


def default_loss(net: Network) -> LossKind:
    return LossKind.PAIRWISE_HASH if net.head[0] == "hasher" else LossKind.CROSS_ENTROPY


@dataclass
class TrainResult:
    net: Network
    losses: list
    state: FeedbackState
    adam: AdamState


def train(net: Network, data, rule, loss_kind=None, epochs: int = 1, batch_size: int = 32,
          lr=1e-3, seed: int = 0, state: FeedbackState | None = None,
          adam: AdamState | None = None, weight_decay: float = 5e-4,
          max_updates: int | None = None) -> TrainResult:
    """Mini-batch training with the given credit-assignment rule.

    ``data`` is ``(inputs, targets)``; ``lr`` is a float or a mapping from
    layer index to learning rate (missing layers use ``lr['default']``).
    Returns the trained network and the per-epoch mean loss.
    """
    rule = Rule.parse(rule)
    loss_kind = LossKind(loss_kind) if loss_kind is not None else default_loss(net)
    if loss_kind is not LossKind.SQUARED:
        check_pairing(loss_kind, net.head)
    x, y = data
    x = as_tensor(x, "training inputs")
    y = np.asarray(y)
    if len(x) == 0:
        raise ConfigError("empty training set")
    if len(y) != len(x):
        raise DimensionError(f"{len(x)} inputs but {len(y)} targets")
    if state is None:
        state = FeedbackState(rule, net, seed)
    elif state.rule is not rule:
        raise StateError(f"feedback state is for {state.rule.value}, not {rule.value}")
    if adam is None:
        if isinstance(lr, dict):
            lr_map = {k: v for k, v in lr.items() if k != "default"}
            adam = AdamState(lr=lr.get("default", 1e-3), lr_map=lr_map, weight_decay=weight_decay)
        else:
            adam = AdamState(lr=float(lr), weight_decay=weight_decay)

    losses = []
    updates = 0
    for epoch in range(epochs):
        order = SeededRng(seed, stream=100_000 + epoch).permutation(len(x))
        total, count = 0.0, 0
        for start in range(0, len(x), batch_size):
            idx = order[start:start + batch_size]
            xb, yb = x[idx], y[idx]
            trace = forward(net, xb)
            total += loss(loss_kind, trace.output, yb) * len(idx)
            count += len(idx)
            g = loss_grad_output(loss_kind, trace.output, yb)
            deltas = backward_error_signals(net, trace, rule, state, g)
            net = weight_update(net, trace, deltas, adam, state)
            updates += 1
            if max_updates is not None and updates >= max_updates:
                break
        losses.append(total / count)
        if max_updates is not None and updates >= max_updates:
            break
    return TrainResult(net, losses, state, adam)
