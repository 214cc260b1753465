"""Information functionals of a DMC: mutual information, Gallager E0,
conditional Gallager exponents and KL divergence.

Every exponent is evaluated in the log domain (``logsumexp``), so zero channel
entries, zero input masses and very small powers never produce ``log 0`` or
underflow. Sums whose inner bracket is zero contribute zero.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import xlogy

from .dmc_core import (
    Channel,
    Distribution,
    GallagerError,
    as_distribution,
    check_rho,
    check_s,
)


class NonPositiveInput(GallagerError):
    pass


def _log(a) -> np.ndarray:
    with np.errstate(divide="ignore"):
        return np.log(a)


def logsumexp(a, axis=None) -> np.ndarray:
    """log sum exp over ``axis``; all ``-inf`` slices give ``-inf``."""
    a = np.asarray(a, dtype=np.float64)
    top = np.max(a, axis=axis, keepdims=True)
    top = np.where(np.isfinite(top), top, 0.0)
    with np.errstate(divide="ignore"):
        out = np.log(np.sum(np.exp(a - top), axis=axis, keepdims=True)) + top
    return out.squeeze() if axis is None else np.squeeze(out, axis=axis)


def _weighted_sum(weights: np.ndarray, values: np.ndarray) -> float:
    # terms with zero weight are skipped, even where values are infinite
    mask = weights > 0
    return float(np.dot(weights[mask], values[mask]))


def _log_inner(s: float, q: Distribution, ch: Channel) -> np.ndarray:
    """log sum_x' Q(x') P^s(y|x') for every output y."""
    return logsumexp(_log(q.probs)[:, None] + s * _log(ch.matrix), axis=0)


def _conditional_letters(s: float, rho: float, q: Distribution, ch: Channel) -> np.ndarray:
    """-log sum_y P^(1-s rho)(y|x) [sum_x' Q(x') P^s(y|x')]^rho, per input x."""
    log_inner = _log_inner(s, q, ch)
    # rho * (-inf) stays -inf; finite rows reaching no supported output give +inf
    terms = (1.0 - s * rho) * _log(ch.matrix) + rho * log_inner[None, :]
    return -logsumexp(terms, axis=1)


def mutual_information(q, ch: Channel) -> float:
    """I(Q,P) in nats."""
    q = as_distribution(q, ch.num_inputs)
    p = ch.matrix
    out = q.probs @ p
    joint = q.probs[:, None] * p
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(joint > 0, p / out[None, :], 1.0)
    return max(float(np.sum(xlogy(joint, ratio))), 0.0)


def gallager_e0(rho: float, q, ch: Channel) -> float:
    """Gallager function E0(rho, Q) = -log sum_y [sum_x Q(x) P^(1/(1+rho))(y|x)]^(1+rho)."""
    rho = check_rho(rho)
    q = as_distribution(q, ch.num_inputs)
    log_inner = _log_inner(1.0 / (1.0 + rho), q, ch)
    return float(-logsumexp((1.0 + rho) * log_inner))


def conditional_e0_general(s: float, rho: float, q, qtilde, ch: Channel) -> float:
    """Conditional Gallager exponent E0(s, rho, Q, Qtilde) for a transmitted type Qtilde."""
    rho = check_rho(rho)
    s = check_s(s, rho)
    q = as_distribution(q, ch.num_inputs)
    qtilde = as_distribution(qtilde, ch.num_inputs)
    return _weighted_sum(qtilde.probs, _conditional_letters(s, rho, q, ch))


@dataclass(frozen=True, eq=False)
class PerLetterExponent:
    """Per-input exponents whose Qtilde-average is the conditional exponent.

    ``values[x] = -log sum_y P^(1/(1+rho))(y|x) [sum_x' Q(x') P^(1/(1+rho))(y|x')]^rho``
    """

    values: np.ndarray
    rho: float
    base_input: Distribution

    def __post_init__(self):
        v = np.array(self.values, dtype=np.float64)
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    def evaluate(self, qtilde) -> float:
        """E(Qtilde), linear in Qtilde."""
        qtilde = as_distribution(qtilde, self.values.size)
        return _weighted_sum(qtilde.probs, self.values)

    @property
    def max_value(self) -> float:
        """Largest value of E over the simplex (attained at a vertex)."""
        return float(np.max(self.values))


def per_letter(rho: float, q, ch: Channel) -> PerLetterExponent:
    rho = check_rho(rho)
    q = as_distribution(q, ch.num_inputs)
    return PerLetterExponent(_conditional_letters(1.0 / (1.0 + rho), rho, q, ch), rho, q)


def conditional_e0(rho: float, q, qtilde, ch: Channel) -> float:
    """Simplified conditional exponent E0(rho, Q, Qtilde), i.e. s = 1/(1+rho)."""
    return per_letter(rho, q, ch).evaluate(qtilde)


def kl_divergence(qtilde, q) -> float:
    """D(Qtilde || Q) in nats; ``inf`` when Qtilde leaves the support of Q."""
    qtilde = as_distribution(qtilde)
    q = as_distribution(q, len(qtilde))
    a, b = qtilde.probs, q.probs
    mask = a > 0
    if np.any(b[mask] == 0):
        return float("inf")
    return max(float(np.sum(a[mask] * (np.log(a[mask]) - np.log(b[mask])))), 0.0)


def e0_decomposition_minimizer(rho: float, q, ch: Channel) -> tuple[Distribution, float]:
    """Minimize E0(rho,Q,Qtilde) + D(Qtilde||Q) over Qtilde in closed form.

    The minimizer is the tilt ``Qtilde*(x) ~ Q(x) exp(-values[x])``; the returned
    value is the objective evaluated there, which equals ``gallager_e0``.
    """
    q = as_distribution(q)
    if not q.is_positive():
        raise NonPositiveInput("decomposition minimizer needs a strictly positive Q")
    pl = per_letter(rho, q, ch)
    logw = np.log(q.probs) - pl.values
    w = np.exp(logw - logw.max())
    qstar = Distribution(w / w.sum())
    return qstar, pl.evaluate(qstar) + kl_divergence(qstar, q)


def penalized_objective(rho: float, q, p, ch: Channel) -> float:
    """E0(rho,Q,P) - rho D(P||Q), the objective maximized by one Arimoto step."""
    return conditional_e0(rho, q, p, ch) - rho * kl_divergence(p, q)
