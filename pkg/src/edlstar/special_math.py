"""Special functions on the positive reals and a stable softmax.

``log_gamma``, ``digamma`` and ``trigamma`` push small arguments above
``_ASYMPTOTIC_MIN`` with the upward recurrences

    ln G(x) = ln G(x + 1) - ln x
    psi(x)  = psi(x + 1) - 1 / x
    psi'(x) = psi'(x + 1) + 1 / x**2

and then evaluate the Stirling / Bernoulli asymptotic series.  All three
accept scalars or arrays; scalar input returns a Python float.
"""

from __future__ import annotations

import math

import numpy as np

__all__ = [
    "DomainError",
    "log_gamma",
    "digamma",
    "trigamma",
    "log_beta",
    "stable_softmax",
]

_ASYMPTOTIC_MIN = 10.0
_HALF_LOG_2PI = 0.5 * math.log(2.0 * math.pi)


class DomainError(ValueError):
    """Argument outside the domain of a special function."""


def _positive(x, name: str) -> np.ndarray:
    arr = np.asarray(x, dtype=np.float64)
    if not np.all(np.isfinite(arr)):
        raise DomainError(f"{name}: argument must be finite")
    if np.any(arr <= 0.0):
        raise DomainError(f"{name}: argument must be > 0, got min {arr.min()!r}")
    return arr


def _shift_up(arr: np.ndarray, step):
    """Raise every entry to at least ``_ASYMPTOTIC_MIN``.

    ``step(z)`` is accumulated for each unit shift and the accumulated sum is
    returned alongside the shifted arguments.
    """
    shifts = np.maximum(np.ceil(_ASYMPTOTIC_MIN - arr), 0.0)
    acc = np.zeros_like(arr)
    for k in range(int(shifts.max(initial=0.0))):
        acc += np.where(k < shifts, step(arr + k), 0.0)
    return arr + shifts, acc


def _out(x, res: np.ndarray):
    return float(res) if np.ndim(x) == 0 else res


def log_gamma(x):
    """Natural log of the gamma function for x > 0."""
    arr = _positive(x, "log_gamma")
    z, logs = _shift_up(arr, np.log)
    inv = 1.0 / z
    inv2 = inv * inv
    series = inv * (
        1.0 / 12.0
        - inv2 * (1.0 / 360.0 - inv2 * (1.0 / 1260.0 - inv2 * (1.0 / 1680.0 - inv2 / 1188.0)))
    )
    res = (z - 0.5) * np.log(z) - z + _HALF_LOG_2PI + series - logs
    return _out(x, res)


def digamma(x):
    """Digamma function psi(x) = d/dx ln G(x) for x > 0."""
    arr = _positive(x, "digamma")
    z, recip = _shift_up(arr, lambda t: 1.0 / t)
    inv2 = 1.0 / (z * z)
    series = inv2 * (
        1.0 / 12.0
        - inv2
        * (
            1.0 / 120.0
            - inv2
            * (1.0 / 252.0 - inv2 * (1.0 / 240.0 - inv2 * (1.0 / 132.0 - inv2 * 691.0 / 32760.0)))
        )
    )
    res = np.log(z) - 0.5 / z - series - recip
    return _out(x, res)


def trigamma(x):
    """Trigamma function psi'(x) for x > 0."""
    arr = _positive(x, "trigamma")
    z, recip2 = _shift_up(arr, lambda t: 1.0 / (t * t))
    inv = 1.0 / z
    inv2 = inv * inv
    series = inv * inv2 * (
        1.0 / 6.0
        - inv2
        * (
            1.0 / 30.0
            - inv2
            * (1.0 / 42.0 - inv2 * (1.0 / 30.0 - inv2 * (5.0 / 66.0 - inv2 * 691.0 / 2730.0)))
        )
    )
    res = inv + 0.5 * inv2 + series + recip2
    return _out(x, res)


def log_beta(alpha, axis: int = -1):
    """Log of the multivariate Beta function along ``axis``."""
    a = _positive(alpha, "log_beta")
    res = np.sum(log_gamma(a), axis=axis) - log_gamma(np.sum(a, axis=axis))
    return float(res) if np.ndim(res) == 0 else res


def stable_softmax(v, axis: int = -1) -> np.ndarray:
    """Softmax along ``axis`` with max-subtraction.

    Raises:
        ValueError: if ``v`` is empty or has non-finite entries.
    """
    arr = np.asarray(v, dtype=np.float64)
    if arr.size == 0 or arr.shape[axis] == 0:
        raise ValueError("stable_softmax: empty input")
    if not np.all(np.isfinite(arr)):
        raise ValueError("stable_softmax: non-finite input")
    shifted = arr - np.max(arr, axis=axis, keepdims=True)
    ex = np.exp(shifted)
    return ex / np.sum(ex, axis=axis, keepdims=True)
