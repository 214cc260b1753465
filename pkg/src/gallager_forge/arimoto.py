"""Arimoto alternating maximization for E0(rho, .) and for capacity."""
from __future__ import annotations

import csv
import enum
import functools
import io
import math
from dataclasses import dataclass

import numpy as np
from .dmc_core import Channel, Distribution, GallagerError, as_distribution, check_rho
from .exponents import _log, logsumexp, per_letter

DEFAULT_TOL = 1e-9
DEFAULT_MAX_ITER = 10_000
# linear-domain sums are used only while every term stays above this
_UNDERFLOW_GUARD = 1e-280
# bare ufunc reductions skip the ndarray-method wrappers, which dominate on tiny arrays
_min, _max, _sum = np.minimum.reduce, np.maximum.reduce, np.add.reduce


class AllZeroUpdate(GallagerError):
    pass


class NonPositiveStart(GallagerError):
    pass


class StopReason(str, enum.Enum):
    TOLERANCE_MET = "ToleranceMet"
    MAX_ITERATIONS = "MaxIterations"


@dataclass(frozen=True, eq=False)
class PhiMatrix:
    """Backward matrix ``matrix[y, x] = Phi(x|y)``.

    Rows of outputs that no Q-supported input can reach are all zero and
    listed in ``degenerate_outputs``.
    """

    matrix: np.ndarray
    degenerate_outputs: tuple[int, ...] = ()


def phi_step(rho: float, q, ch: Channel) -> PhiMatrix:
    rho = check_rho(rho)
    q = as_distribution(q, ch.num_inputs)
    logw = _log(q.probs)[:, None] + _log(ch.matrix) / (1.0 + rho)   # (X, Y)
    lognorm = logsumexp(logw, axis=0)
    dead = ~np.isfinite(lognorm)
    with np.errstate(invalid="ignore"):
        phi = np.exp(logw - lognorm[None, :]).T
    phi[dead, :] = 0.0
    phi.setflags(write=False)
    return PhiMatrix(phi, tuple(np.flatnonzero(dead).tolist()))


def _normalize_log(logw: np.ndarray) -> Distribution:
    top = np.max(logw)
    if not np.isfinite(top):
        raise AllZeroUpdate("update assigned zero weight to every input")
    w = np.exp(logw - top)
    return Distribution(w / w.sum())


def q_update(rho: float, q, ch: Channel) -> Distribution:
    """One Arimoto step: ``Q'(x) ~ Q(x) exp(values[x] / rho)``.

    ``values`` are the per-letter conditional exponents, so this is the
    recursive update with the ``-1/rho`` power taken in the log domain.
    """
    q = as_distribution(q, ch.num_inputs)
    pl = per_letter(rho, q, ch)
    return _normalize_log(_log(q.probs) + pl.values / pl.rho)


def q_update_from_phi(rho: float, phi: PhiMatrix, ch: Channel) -> Distribution:
    """Maximize over Q with Phi frozen: ``Q'(x) ~ [sum_y P(y|x) Phi^-rho(x|y)]^(-1/rho)``."""
    rho = check_rho(rho)
    p = ch.matrix
    logphi = _log(phi.matrix.T)                           # (X, Y)
    # pairs with P(y|x) = 0 contribute nothing, whatever Phi is there
    with np.errstate(invalid="ignore"):
        terms = np.where(p > 0, _log(p) - rho * logphi, -np.inf)
    return _normalize_log(-logsumexp(terms, axis=1) / rho)


def capacity_update(q, ch: Channel) -> Distribution:
    """Arimoto's capacity step, ``Q'(x) ~ Q(x) exp D(P(.|x) || QP)``."""
    q = as_distribution(q, ch.num_inputs)
    p = ch.matrix
    out = q.probs @ p
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(p > 0, p * (_log(p) - _log(out)[None, :]), 0.0)
    return _normalize_log(_log(q.probs) + terms.sum(axis=1))


@dataclass(frozen=True, eq=False)
class ArimotoTrace:
    """Iterates ``(Q_k, objective_k)``; the objective is E0(rho, Q_k), or I(Q_k, P)
    for :func:`solve_capacity` (then ``rho`` is ``None``).

    ``points[k]`` is Q_k and ``objectives[k]`` its objective; ``iterates`` pairs
    them up as :class:`Distribution` objects on first access.
    """

    points: np.ndarray
    objectives: np.ndarray
    converged: bool
    stop_reason: StopReason
    rho: float | None

    def __post_init__(self):
        for name in ("points", "objectives"):
            arr = np.asarray(getattr(self, name), dtype=np.float64)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @functools.cached_property
    def iterates(self) -> tuple[tuple[Distribution, float], ...]:
        return tuple((Distribution._trusted(p), float(v)) for p, v in zip(self.points, self.objectives))

    @property
    def final(self) -> Distribution:
        return Distribution._trusted(self.points[-1])

    @property
    def final_value(self) -> float:
        return float(self.objectives[-1])

    @property
    def iterations(self) -> int:
        return len(self.points) - 1

    def is_monotone(self, slack: float = 1e-12) -> bool:
        return bool(np.all(np.diff(self.objectives) >= -slack))

    def to_csv(self) -> str:
        k = len(self.final)
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["iter"] + [f"Q_{i}" for i in range(k)] + ["objective"])
        for i, (q, v) in enumerate(zip(self.points, self.objectives), start=1):
            w.writerow([i] + [repr(float(x)) for x in q] + [repr(float(v))])
        return buf.getvalue()


def _check_start(q0, ch: Channel) -> Distribution:
    q0 = as_distribution(q0, ch.num_inputs)
    if not q0.is_positive():
        zeros = np.flatnonzero(q0.probs == 0).tolist()
        raise NonPositiveStart(
            f"starting distribution has zero mass at inputs {zeros}; the multiplicative "
            "update can never revive a zero, so start from a strictly positive Q")
    return q0


def _run(step, q0: Distribution, tol: float, max_iter: int, rho) -> ArimotoTrace:
    """Drive ``step(q) -> (objective at q, unnormalized next q)`` on raw arrays."""
    if not tol > 0:
        raise GallagerError("tol must be positive")
    if max_iter < 1:
        raise GallagerError("max_iter must be at least 1")
    q = q0.probs
    qs, objs = [q], []
    converged = False
    with np.errstate(divide="ignore"):
        for _ in range(max_iter):
            obj, w = step(q)
            objs.append(obj)
            total = _sum(w)
            if not total > 0:
                raise AllZeroUpdate("update assigned zero weight to every input")
            w /= total
            qs.append(w)
            diff = w - q
            done = _max(np.abs(diff, out=diff)) < tol
            q = w
            if done:
                converged = True
                break
        objs.append(step(q)[0])
    reason = StopReason.TOLERANCE_MET if converged else StopReason.MAX_ITERATIONS
    return ArimotoTrace(np.array(qs), np.array(objs), converged, reason, rho)


def solve(rho: float, q0, ch: Channel, tol: float = DEFAULT_TOL,
          max_iter: int = DEFAULT_MAX_ITER) -> ArimotoTrace:
    """Iterate :func:`q_update` from ``q0`` until the sup-norm step is below ``tol``.

    Starts must be strictly positive: the multiplicative update keeps zeros at zero.
    """
    rho = check_rho(rho)
    q0 = _check_start(q0, ch)
    scaled = _log(ch.matrix) / (1.0 + rho)
    powered = ch.matrix ** (1.0 / (1.0 + rho))
    linear_ok = powered[powered > 0].min() > _UNDERFLOW_GUARD

    def log_step(q):
        logq = np.log(q)
        log_inner = logsumexp(logq[:, None] + scaled, axis=0)
        e0 = -logsumexp((1.0 + rho) * log_inner)
        values = -logsumexp(scaled + rho * log_inner[None, :], axis=1)
        log_next = logq + values / rho
        top = log_next.max()
        if not math.isfinite(top):
            raise AllZeroUpdate("update assigned zero weight to every input")
        return e0, np.exp(log_next - top)

    inv_rho = -1.0 / rho

    def step(q):
        if linear_ok:
            inner = q @ powered
            if _min(inner) > _UNDERFLOW_GUARD:
                inner_rho = inner ** rho
                e0 = -math.log(inner_rho @ inner)
                # exp(values[x]) for every x, rescaled so the -1/rho power stays <= 1
                tilt = powered @ inner_rho
                tilt /= _min(tilt)
                return e0, q * tilt ** inv_rho
        return log_step(q)

    return _run(step, q0, tol, max_iter, rho)


def solve_capacity(q0, ch: Channel, tol: float = DEFAULT_TOL,
                   max_iter: int = DEFAULT_MAX_ITER) -> ArimotoTrace:
    """Capacity iteration; the trace stores I(Q_k, P) in the objective slot."""
    q0 = _check_start(q0, ch)
    p = ch.matrix
    logp = _log(p)
    live = p > 0

    def step(q):
        out = q @ p
        with np.errstate(divide="ignore", invalid="ignore"):
            gain = np.where(live, p * (logp - np.log(out)[None, :]), 0.0).sum(axis=1)
        info = max(float(np.dot(q[q > 0], gain[q > 0])), 0.0)
        return info, q * np.exp(gain - gain.max())

    return _run(step, q0, tol, max_iter, None)


def stationarity_residual(rho: float, q, qprime, ch: Channel) -> float:
    """Sup-norm of the tangent-projected gradient of E(P) - rho D(P||Q) at ``qprime``.

    The gradient component ``values[x] - rho log(P(x)/Q(x))`` is centred by its
    ``qprime``-mean and taken over the support of ``qprime``; it vanishes at the
    maximizer.
    """
    q = as_distribution(q, ch.num_inputs)
    qprime = as_distribution(qprime, ch.num_inputs)
    values = per_letter(rho, q, ch).values
    sup = qprime.probs > 0
    grad = values[sup] - rho * (np.log(qprime.probs[sup]) - np.log(q.probs[sup]))
    grad = grad - np.dot(qprime.probs[sup], grad)
    return float(np.max(np.abs(grad)))
