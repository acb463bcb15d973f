"""Decision-based attacks: Boundary Attack and HopSkipJump (L2 versions).

Both attacks see the model only through ``oracle(batch) -> labels``; they
never touch weights.  Every input sent to the oracle counts as one query and
the budget is never exceeded.  Both minimise the L2 distance to the clean
input while staying misclassified.
"""

from __future__ import annotations

import numpy as np

from ..errors import StartNotFoundError
from ..tensor import SeededRng, as_tensor
from .base import AdversarialResult, AttackSpec, Family

BINARY_SEARCH_TOL = 1e-3
MAX_INIT_TRIES = 100


class _BudgetExhausted(Exception):
    pass


class QueryCounter:
    """Wraps a label oracle, counting queries and refusing to exceed the budget."""

    def __init__(self, oracle, budget: int, label):
        self._oracle = oracle
        self.budget = int(budget)
        self.used = 0
        self.label = label

    @property
    def remaining(self) -> int:
        return self.budget - self.used

    def adversarial(self, batch: np.ndarray) -> np.ndarray:
        n = len(batch)
        if n > self.remaining:
            raise _BudgetExhausted
        self.used += n
        return np.asarray(self._oracle(batch)) != self.label

    def one(self, z: np.ndarray) -> bool:
        return bool(self.adversarial(z[None])[0])


def _l2(a, b) -> float:
    return float(np.sqrt(np.sum((a - b) ** 2)))


def _find_start(q: QueryCounter, x: np.ndarray, rng: SeededRng, lo, hi) -> np.ndarray:
    for _ in range(min(MAX_INIT_TRIES, q.budget)):
        try:
            z = rng.uniform(x.shape, lo, hi)
            if q.one(z):
                return z
        except _BudgetExhausted:
            break
    raise StartNotFoundError(f"no adversarial starting point after {q.used} queries")


def _boundary_search(q: QueryCounter, x: np.ndarray, adv: np.ndarray,
                     tol: float = BINARY_SEARCH_TOL) -> np.ndarray:
    """Binary search on the segment x -> adv; returns the adversarial end."""
    low, high = 0.0, 1.0
    while high - low > tol:
        mid = 0.5 * (low + high)
        z = (1 - mid) * x + mid * adv
        if q.one(z):
            high = mid
        else:
            low = mid
    return (1 - high) * x + high * adv


def _result(x, best, q: QueryCounter, history) -> AdversarialResult:
    d = (best - x).ravel()
    return AdversarialResult(best, True, q.used, float(np.abs(d).max()),
                             float(np.linalg.norm(d)), history)


def boundary_attack(oracle, x, y, spec: AttackSpec, spherical_step: float = 0.05,
                    source_step: float = 0.05, step_adapt: float = 1.5) -> AdversarialResult:
    """Random walk along the decision boundary that contracts towards ``x``.

    Each proposal takes an orthogonal step on the sphere around ``x`` and
    then a step towards ``x``; it is accepted only if still adversarial and
    not farther from ``x``.  ``history`` lists the accepted L2 distances.
    """
    spec.expect(Family.BOUNDARY)
    x = as_tensor(x, "attack input")
    lo, hi = spec.data_range
    rng = SeededRng(spec.seed, stream=17)
    q = QueryCounter(oracle, spec.query_budget, y)
    try:
        if q.one(x):
            return _result(x, x.copy(), q, [0.0])
    except _BudgetExhausted:
        raise StartNotFoundError("query budget too small to test the clean input") from None
    adv = _find_start(q, x, rng, lo, hi)
    history = [_l2(adv, x)]
    try:
        adv = _boundary_search(q, x, adv)
        history.append(_l2(adv, x))
        fails = 0
        while q.remaining > 0:
            diff = adv - x
            dist = float(np.linalg.norm(diff))
            if dist == 0.0:
                break
            eta = rng.normal(x.shape)
            eta -= (eta.ravel() @ diff.ravel()) / dist ** 2 * diff
            eta *= spherical_step * dist / max(np.linalg.norm(eta), 1e-12)
            cand = adv + eta
            # back onto the sphere of radius dist, then towards x
            d2 = cand - x
            cand = x + d2 * (dist / np.linalg.norm(d2))
            cand = cand + source_step * (x - cand)
            cand = np.clip(cand, lo, hi)
            new_dist = _l2(cand, x)
            if new_dist <= dist and q.one(cand):
                adv = cand
                history.append(new_dist)
                fails = 0
                source_step = min(source_step * step_adapt, 0.5)
                spherical_step = min(spherical_step * 1.1, 0.5)
            else:
                fails += 1
                if fails >= 10:
                    source_step = max(source_step / step_adapt, 1e-4)
                    spherical_step = max(spherical_step / 1.1, 1e-3)
                    fails = 0
    except _BudgetExhausted:
        pass
    return _result(x, adv, q, history)


def hsja(oracle, x, y, spec: AttackSpec, init_evals: int = 20, max_evals: int = 200,
         gamma: float = 1.0) -> AdversarialResult:
    """HopSkipJump: boundary projection, Monte-Carlo gradient direction, geometric steps."""
    spec.expect(Family.HSJA)
    x = as_tensor(x, "attack input")
    lo, hi = spec.data_range
    d = x.size
    rng = SeededRng(spec.seed, stream=29)
    q = QueryCounter(oracle, spec.query_budget, y)
    try:
        if q.one(x):
            return _result(x, x.copy(), q, [0.0])
    except _BudgetExhausted:
        raise StartNotFoundError("query budget too small to test the clean input") from None
    adv = _find_start(q, x, rng, lo, hi)
    best = adv
    history = [_l2(adv, x)]
    try:
        adv = _boundary_search(q, x, adv)
        best = adv
        history.append(_l2(adv, x))
        theta = gamma / (d * np.sqrt(d))
        t = 0
        while q.remaining > 0:
            t += 1
            dist = _l2(adv, x)
            if dist == 0.0:
                break
            delta = 0.1 * (hi - lo) if t == 1 else np.sqrt(d) * theta * dist
            n = min(int(init_evals * np.sqrt(t)), max_evals, q.remaining)
            if n < 2:
                break
            u = rng.normal((n,) + x.shape)
            u /= np.sqrt((u.reshape(n, -1) ** 2).sum(axis=1)).reshape((n,) + (1,) * x.ndim)
            probes = np.clip(adv + delta * u, lo, hi)
            u = (probes - adv) / delta
            phi = np.where(q.adversarial(probes), 1.0, -1.0)
            if abs(phi.mean()) < 1.0:
                phi = phi - phi.mean()
            grad = np.tensordot(phi, u, axes=(0, 0)) / n
            norm = np.linalg.norm(grad)
            if norm == 0:
                continue
            grad /= norm
            step = dist / np.sqrt(t)
            while True:
                cand = np.clip(adv + step * grad, lo, hi)
                if q.one(cand):
                    break
                step /= 2
                if step < 1e-8:
                    cand = None
                    break
            if cand is None:
                continue
            # projections tighten as the direction estimates sharpen
            adv = _boundary_search(q, x, cand, BINARY_SEARCH_TOL / t)
            history.append(_l2(adv, x))
            if history[-1] < _l2(best, x):
                best = adv
    except _BudgetExhausted:
        pass
    return _result(x, best, q, history)
