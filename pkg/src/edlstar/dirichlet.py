"""Dirichlet predictions and their subjective-logic quantities.

A prediction stores the non-negative evidence ``e``; the concentration is
``alpha = e + 1``.  With strength ``S = sum(alpha)`` over K classes:

    uncertainty      u   = K / S
    belief mass      b_k = e_k / S          (u + sum_k b_k = 1)
    expected prob    p_k = alpha_k / S

Every quantity works row-wise on a single vector of shape ``(K,)`` or a
batch of shape ``(N, K)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "DirichletPrediction",
    "from_evidence",
    "uncertainty",
    "belief_masses",
    "expected_probs",
    "predictive_entropy",
    "entropy",
]


def _scalar(x):
    return float(x) if np.ndim(x) == 0 else x


@dataclass(frozen=True, eq=False)
class DirichletPrediction:
    evidence: np.ndarray

    def __post_init__(self):
        e = np.array(self.evidence, dtype=np.float64)
        if e.ndim not in (1, 2) or e.shape[-1] < 1:
            raise ValueError(f"evidence must have shape (K,) or (N, K), got {e.shape}")
        if not np.all(np.isfinite(e)):
            raise ValueError("evidence must be finite")
        if np.any(e < 0):
            raise ValueError(f"evidence must be non-negative, got min {e.min()!r}")
        e.setflags(write=False)
        object.__setattr__(self, "evidence", e)

    @classmethod
    def from_alpha(cls, alpha) -> "DirichletPrediction":
        a = np.asarray(alpha, dtype=np.float64)
        if np.any(a < 1.0):
            raise ValueError("alpha must be >= 1 everywhere")
        return cls(a - 1.0)

    @property
    def num_classes(self) -> int:
        return self.evidence.shape[-1]

    @property
    def alpha(self) -> np.ndarray:
        return self.evidence + 1.0

    @property
    def strength(self):
        """Dirichlet strength ``alpha0``."""
        return _scalar(np.sum(self.alpha, axis=-1))

    alpha0 = strength

    def uncertainty(self):
        return _scalar(self.num_classes / np.sum(self.alpha, axis=-1))

    def belief_masses(self) -> np.ndarray:
        return self.evidence / np.sum(self.alpha, axis=-1, keepdims=True)

    def expected_probs(self) -> np.ndarray:
        a = self.alpha
        return a / np.sum(a, axis=-1, keepdims=True)

    def predictive_entropy(self):
        return entropy(self.expected_probs())


def from_evidence(e) -> DirichletPrediction:
    return DirichletPrediction(e)


def uncertainty(p: DirichletPrediction):
    return p.uncertainty()


def belief_masses(p: DirichletPrediction) -> np.ndarray:
    return p.belief_masses()


def expected_probs(p: DirichletPrediction) -> np.ndarray:
    return p.expected_probs()


def predictive_entropy(p: DirichletPrediction):
    return p.predictive_entropy()


def entropy(probs):
    """Shannon entropy in nats along the last axis, with 0 ln 0 = 0."""
    p = np.asarray(probs, dtype=np.float64)
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(p > 0, p * np.log(np.where(p > 0, p, 1.0)), 0.0)
    return _scalar(-np.sum(terms, axis=-1))
