"""Adversarial example generators (white-box and decision-based)."""

from .base import AdversarialResult, AttackSpec, Family
from .blackbox import QueryCounter, boundary_attack, hsja
from .whitebox import fgsm, hag, hag_surrogate, pgd, project_linf


def label_oracle(net):
    """Predict-only view of a classifier: batch -> labels, nothing else exposed."""
    def predict(batch):
        return net.predict(batch)
    return predict


__all__ = [
    "AdversarialResult", "AttackSpec", "Family", "QueryCounter", "boundary_attack",
    "fgsm", "hag", "hag_surrogate", "hsja", "label_oracle", "pgd", "project_linf",
]
