"""Training objectives with analytic gradients.

The evidential family differentiates with respect to the concentration
``alpha`` (identical to the gradient with respect to evidence, since
``alpha = e + 1``); the softmax family differentiates with respect to the
logits.  The network chains these through its own output activation.

All functions accept a single example (vectors of shape ``(K,)``) or a
batch (shape ``(N, K)``).  Values come back per example: a float for a
single example, an array of shape ``(N,)`` for a batch.

The multinomial coefficient of the annotation likelihood does not depend on
``alpha`` and is dropped everywhere.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .special_math import DomainError, digamma, log_gamma, stable_softmax, trigamma

__all__ = [
    "LossKind",
    "LossSpec",
    "LossValueGrad",
    "IncompatibleTargetError",
    "edl_nll",
    "edl_nll_star",
    "kl_dirichlet_to_uniform",
    "masked_alpha_classification",
    "masked_alpha_distribution",
    "r2_kl",
    "cross_entropy_majority",
    "kl_soft_label",
    "total_loss",
]

_MASK_TOL = 1e-12


class LossKind(str, enum.Enum):
    EDL = "EDL"
    EDL_STAR_R1 = "EDL_STAR_R1"
    EDL_STAR_R2 = "EDL_STAR_R2"
    CE_MAJORITY = "CE_MAJORITY"
    CE_MAJORITY_PLUS = "CE_MAJORITY_PLUS"
    KL_SOFT_LABEL = "KL_SOFT_LABEL"

    @property
    def is_evidential(self) -> bool:
        return self in (LossKind.EDL, LossKind.EDL_STAR_R1, LossKind.EDL_STAR_R2)


@dataclass(frozen=True)
class LossSpec:
    """Loss kind plus regularisation coefficient.

    ``anneal_steps`` switches on a linear ramp of the coefficient from 0 to
    ``lam`` over that many optimisation steps; ``None`` keeps it fixed.
    """

    kind: LossKind
    lam: float = 0.0
    anneal_steps: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "kind", LossKind(self.kind))
        if not np.isfinite(self.lam) or self.lam < 0:
            raise ValueError(f"lambda must be a non-negative real, got {self.lam!r}")
        if self.anneal_steps is not None and self.anneal_steps < 1:
            raise ValueError("anneal_steps must be positive when given")

    def effective_lambda(self, step: int) -> float:
        if self.anneal_steps is None:
            return float(self.lam)
        return float(self.lam) * min(1.0, step / self.anneal_steps)


@dataclass(frozen=True, eq=False)
class LossValueGrad:
    value: float | np.ndarray
    grad: np.ndarray


class IncompatibleTargetError(ValueError):
    pass


def _pair(a, b, name: str):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise IncompatibleTargetError(f"{name}: shape mismatch {a.shape} vs {b.shape}")
    return a, b


def _alpha_of(pred) -> np.ndarray:
    # DirichletPrediction or a raw concentration array
    return np.asarray(getattr(pred, "alpha", pred), dtype=np.float64)


def _out(x):
    return float(x) if np.ndim(x) == 0 else x


def _nll_counts(alpha: np.ndarray, y: np.ndarray) -> LossValueGrad:
    s = alpha.sum(axis=-1, keepdims=True)
    m = y.sum(axis=-1, keepdims=True)
    value = np.sum(y * (np.log(s) - np.log(alpha)), axis=-1)
    grad = m / s - y / alpha
    return LossValueGrad(_out(value), grad)


def edl_nll(alpha, y) -> LossValueGrad:
    """Negative log marginal likelihood of a one-hot label under Dir(alpha)."""
    alpha, y = _pair(_alpha_of(alpha), y, "edl_nll")
    return _nll_counts(alpha, y)


def edl_nll_star(alpha, y_hat) -> LossValueGrad:
    """Negative log marginal likelihood of annotation counts ``y_hat``.

    With one-hot counts this is exactly :func:`edl_nll`.
    """
    alpha, y_hat = _pair(_alpha_of(alpha), y_hat, "edl_nll_star")
    if np.any(y_hat < 0) or np.any(y_hat.sum(axis=-1) <= 0):
        raise IncompatibleTargetError("edl_nll_star: counts must be non-negative with M >= 1")
    return _nll_counts(alpha, y_hat)


def kl_dirichlet_to_uniform(alpha_tilde):
    """KL(Dir(alpha_tilde) || Dir(1)) and its gradient in ``alpha_tilde``.

    Returns:
        ``(value, grad)``.
    """
    a = np.asarray(alpha_tilde, dtype=np.float64)
    if np.any(a < 1.0 - _MASK_TOL):
        raise DomainError(f"kl_dirichlet_to_uniform: entries must be >= 1, got {a.min()!r}")
    a = np.maximum(a, 1.0)
    k = a.shape[-1]
    s = a.sum(axis=-1, keepdims=True)
    dg_s = digamma(s)
    value = (
        log_gamma(s)[..., 0]
        - np.sum(log_gamma(a), axis=-1)
        - log_gamma(float(k))
        + np.sum((a - 1.0) * (digamma(a) - dg_s), axis=-1)
    )
    grad = (a - 1.0) * trigamma(a) - (s - k) * trigamma(s)
    # rounding in log_gamma can leave a value of order -1e-14
    return _out(np.maximum(value, 0.0)), grad


def masked_alpha_classification(alpha, y) -> np.ndarray:
    """Concentration with the true-class evidence removed."""
    alpha, y = _pair(_alpha_of(alpha), y, "masked_alpha_classification")
    return y + (1.0 - y) * alpha


def masked_alpha_distribution(alpha, y_bar) -> np.ndarray:
    """Concentration with evidence removed in proportion to the soft label."""
    alpha, y_bar = _pair(_alpha_of(alpha), y_bar, "masked_alpha_distribution")
    return y_bar + (1.0 - y_bar) * alpha


def _kl_probs(target: np.ndarray, log_pred: np.ndarray):
    with np.errstate(divide="ignore", invalid="ignore"):
        log_t = np.log(np.where(target > 0, target, 1.0))
    return np.sum(np.where(target > 0, target * (log_t - log_pred), 0.0), axis=-1)


def r2_kl(y_bar, alpha):
    """KL(y_bar || E[eta]) and its gradient with respect to ``alpha``.

    Returns:
        ``(value, grad)``.
    """
    alpha, y_bar = _pair(_alpha_of(alpha), y_bar, "r2_kl")
    s = alpha.sum(axis=-1, keepdims=True)
    value = _kl_probs(y_bar, np.log(alpha) - np.log(s))
    grad = y_bar.sum(axis=-1, keepdims=True) / s - y_bar / alpha
    return _out(value), grad


def _log_softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=-1, keepdims=True)
    return shifted - np.log(np.sum(np.exp(shifted), axis=-1, keepdims=True))


def cross_entropy_majority(logits, y) -> LossValueGrad:
    logits, y = _pair(logits, y, "cross_entropy_majority")
    p = stable_softmax(logits)
    value = -np.sum(y * _log_softmax(logits), axis=-1)
    return LossValueGrad(_out(value), p - y)


def kl_soft_label(logits, y_bar) -> LossValueGrad:
    logits, y_bar = _pair(logits, y_bar, "kl_soft_label")
    p = stable_softmax(logits)
    value = _kl_probs(y_bar, _log_softmax(logits))
    return LossValueGrad(_out(value), p - y_bar)


def total_loss(spec: LossSpec, prediction, target, step: int = 0) -> LossValueGrad:
    """Data term plus ``lambda(step)`` times the matching regulariser.

    Args:
        spec: the objective.
        prediction: concentration ``alpha`` (or a ``DirichletPrediction``)
            for evidential kinds; logits for the softmax kinds.
        target: one-hot majority label for ``EDL``, ``CE_MAJORITY`` and
            ``CE_MAJORITY_PLUS``; annotation counts for ``EDL_STAR_*``;
            soft label for ``KL_SOFT_LABEL``.
        step: optimisation step, only used when annealing.

    Returns:
        value and gradient with respect to ``alpha`` or the logits.
    """
    kind = spec.kind
    lam = spec.effective_lambda(step)

    if kind is LossKind.CE_MAJORITY or kind is LossKind.CE_MAJORITY_PLUS:
        return cross_entropy_majority(prediction, target)
    if kind is LossKind.KL_SOFT_LABEL:
        return kl_soft_label(prediction, target)

    alpha, target = _pair(_alpha_of(prediction), target, f"total_loss[{kind.value}]")
    if kind is LossKind.EDL:
        data = edl_nll(alpha, target)
        mask = 1.0 - target
        reg, reg_grad = kl_dirichlet_to_uniform(masked_alpha_classification(alpha, target))
        reg_grad = mask * reg_grad
    else:
        data = edl_nll_star(alpha, target)
        y_bar = target / target.sum(axis=-1, keepdims=True)
        if kind is LossKind.EDL_STAR_R1:
            reg, reg_grad = kl_dirichlet_to_uniform(masked_alpha_distribution(alpha, y_bar))
            reg_grad = (1.0 - y_bar) * reg_grad
        else:
            reg, reg_grad = r2_kl(y_bar, alpha)
    if lam == 0.0:
        return data
    return LossValueGrad(_out(data.value + lam * np.asarray(reg)), data.grad + lam * reg_grad)
