from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from ..errors import SpecError


class Family(str, enum.Enum):
    FGSM = "FGSM"
    PGD = "PGD"
    HAG = "HAG"
    BOUNDARY = "Boundary"
    HSJA = "HSJA"

    @classmethod
    def parse(cls, name) -> "Family":
        if isinstance(name, cls):
            return name
        for fam in cls:
            if fam.value.lower() == str(name).strip().lower():
                return fam
        raise SpecError(f"unknown attack family {name!r}")

    @property
    def white_box(self) -> bool:
        return self in (Family.FGSM, Family.PGD, Family.HAG)


@dataclass
class AttackSpec:
    """Attack family and budget.

    ``epsilon`` is the L-inf radius for white-box attacks; ``alpha`` and
    ``steps`` drive PGD and HAG; decision-based attacks use ``query_budget``
    and ``seed`` instead.
    """

    family: Family
    epsilon: float = 0.0
    alpha: float | None = None
    steps: int = 1
    query_budget: int = 1000
    data_range: tuple = (0.0, 1.0)
    seed: int = 0

    def __post_init__(self):
        self.family = Family.parse(self.family)
        lo, hi = self.data_range
        if not lo < hi:
            raise SpecError(f"empty data range {self.data_range}")
        if not np.isfinite(self.epsilon) or self.epsilon < 0:
            raise SpecError(f"epsilon must be >= 0, got {self.epsilon}")
        if self.family in (Family.PGD, Family.HAG):
            if self.steps < 1:
                raise SpecError(f"{self.family.value} needs steps >= 1")
            if self.alpha is None:
                self.alpha = self.epsilon / 3.0
            if self.alpha <= 0 and self.epsilon > 0:
                raise SpecError(f"{self.family.value} needs alpha > 0")
        if not self.family.white_box and self.query_budget < 1:
            raise SpecError("query budget must be positive")

    def expect(self, *families) -> None:
        if self.family not in families:
            raise SpecError(f"spec is for {self.family.value}, expected "
                            + "/".join(f.value for f in families))


@dataclass
class AdversarialResult:
    x_adv: np.ndarray
    success: np.ndarray | bool
    queries_used: int = 0
    linf: np.ndarray | float = 0.0
    l2: np.ndarray | float = 0.0
    history: list = field(default_factory=list)
    extra: dict = field(default_factory=dict)


def perturbation_norms(x_adv: np.ndarray, x: np.ndarray, batched: bool):
    d = (x_adv - x).reshape(len(x), -1) if batched else (x_adv - x).reshape(1, -1)
    linf = np.abs(d).max(axis=1)
    l2 = np.sqrt((d * d).sum(axis=1))
    if batched:
        return linf, l2
    return float(linf[0]), float(l2[0])
