"""Gradient-based L-inf attacks: FGSM, PGD and the Hamming attack (HAG).

The attacker's input gradient is carried back through the model with a
chosen feedback rule.  ``rule=BP`` is the standard attacker with true
gradients; passing the model's own fine-tuning rule (and its feedback
state) reproduces an attacker that only has the deployed, approximate
transport.
"""

from __future__ import annotations

import numpy as np

from ..errors import ConfigError, SpecError
from ..feedback import FeedbackState, Rule, input_gradient
from ..network import LossKind, Network, forward, loss_grad_output
from ..retrieval import binarize
from ..tensor import as_tensor
from .base import AdversarialResult, AttackSpec, Family, perturbation_norms


def _prepare(net: Network, x, spec: AttackSpec):
    x = as_tensor(x, "attack input")
    lo, hi = spec.data_range
    if x.min() < lo or x.max() > hi:
        raise SpecError(f"input outside data range {spec.data_range}")
    batched = x.shape != net.input_shape
    return x, batched


def _labels(net: Network, x: np.ndarray) -> np.ndarray:
    return forward(net, x).output.argmax(axis=1)


def _classifier_result(net, x, x_adv, y, batched) -> AdversarialResult:
    if net.head[0] != "classifier":
        raise ConfigError("classification attacks need a classifier head")
    pred = _labels(net, x_adv)
    success = pred != np.atleast_1d(y)
    linf, l2 = perturbation_norms(x_adv, x, batched)
    return AdversarialResult(x_adv, success if batched else bool(success[0]), 0, linf, l2)


def _ce_grad(net, x, y, rule, state):
    y = np.atleast_1d(np.asarray(y))
    return input_gradient(net, x, lambda out: loss_grad_output(LossKind.CROSS_ENTROPY, out, y),
                          rule, state)


def fgsm(net: Network, x, y, spec: AttackSpec, rule=Rule.BP,
         state: FeedbackState | None = None) -> AdversarialResult:
    """One signed-gradient step of size epsilon, clipped to the data range."""
    spec.expect(Family.FGSM, Family.PGD)
    x, batched = _prepare(net, x, spec)
    g = _ce_grad(net, x, y, rule, state)
    x_adv = np.clip(x + spec.epsilon * np.sign(g), *spec.data_range)
    return _classifier_result(net, x, x_adv, y, batched)


def project_linf(z: np.ndarray, center: np.ndarray, epsilon: float) -> np.ndarray:
    return np.clip(z, center - epsilon, center + epsilon)


def pgd(net: Network, x, y, spec: AttackSpec, rule=Rule.BP,
        state: FeedbackState | None = None) -> AdversarialResult:
    """Iterated FGSM from x0 = x, projected onto the epsilon ball after each step."""
    spec.expect(Family.PGD)
    x, batched = _prepare(net, x, spec)
    lo, hi = spec.data_range
    x_adv = x
    for _ in range(spec.steps):
        g = _ce_grad(net, x_adv, y, rule, state)
        x_adv = project_linf(x_adv + spec.alpha * np.sign(g), x, spec.epsilon)
        x_adv = np.clip(x_adv, lo, hi)
    return _classifier_result(net, x, x_adv, y, batched)


def hag_surrogate(net: Network, x, reference_codes) -> np.ndarray:
    """-b0 . tanh-output / k per example (lower means codes closer to b0)."""
    out = forward(net, x).output
    b0 = np.atleast_2d(reference_codes)
    return -(b0 * out).sum(axis=1) / out.shape[1]


def hag(net: Network, x, spec: AttackSpec, rule=Rule.BP,
        state: FeedbackState | None = None) -> AdversarialResult:
    """Push the hash code away from its clean value by ascending the surrogate.

    Success means at least a quarter of the bits flipped.  ``extra`` holds the
    per-example Hamming shift and the clean codes.
    """
    spec.expect(Family.HAG)
    if net.head[0] != "hasher":
        raise ConfigError("HAG needs a hasher head")
    x, batched = _prepare(net, x, spec)
    lo, hi = spec.data_range
    b0 = binarize(forward(net, x).output).astype(np.float64)
    k = b0.shape[1]
    x_adv = x
    if spec.epsilon > 0:
        for _ in range(spec.steps):
            g = input_gradient(net, x_adv, lambda out: -b0 / k, rule, state)
            x_adv = np.clip(project_linf(x_adv + spec.alpha * np.sign(g), x, spec.epsilon), lo, hi)
    codes = binarize(forward(net, x_adv).output)
    shift = (codes != b0).sum(axis=1)
    success = shift >= k / 4
    linf, l2 = perturbation_norms(x_adv, x, batched)
    res = AdversarialResult(x_adv, success if batched else bool(success[0]), 0, linf, l2)
    res.extra = {"hamming_shift": shift if batched else int(shift[0]),
                 "clean_codes": b0.astype(np.int8), "adv_codes": codes}
    return res
