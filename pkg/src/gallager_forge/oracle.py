"""Brute-force references: type enumeration, exact argmax over types, simplex
grid search and full output-sequence enumeration of the conditional bound.

Nothing here reuses the closed forms it is meant to check, apart from the
per-letter exponent table that defines the objective being searched.
"""
from __future__ import annotations

import itertools
import math
import warnings
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.special import gammaln, xlogy

from .dmc_core import Channel, EmpiricalType, GallagerError, as_distribution, check_rho, check_s
from .exponents import per_letter

MAX_TYPES = 10**7
MAX_OUTPUT_SEQUENCES = 10**6
MAX_GRID_ALPHABET = 4


class TooManyTypes(GallagerError):
    pass


class AlphabetTooLarge(GallagerError):
    pass


class OutputSpaceTooLarge(GallagerError):
    pass


class InfeasibleRadiusWarning(UserWarning):
    pass


def num_types(n: int, k: int) -> int:
    return math.comb(n + k - 1, k - 1)


def compositions(n: int, k: int) -> np.ndarray:
    """All count vectors of length ``k`` summing to ``n``, first coordinate descending."""
    if num_types(n, k) > MAX_TYPES:
        raise TooManyTypes(f"{num_types(n, k)} types of denominator {n} on {k} symbols")
    if k == 1:
        return np.array([[n]], dtype=np.int64)
    if k == 2:
        first = np.arange(n, -1, -1, dtype=np.int64)
        return np.column_stack([first, n - first])
    blocks = []
    for first in range(n, -1, -1):
        rest = compositions(n - first, k - 1)
        blocks.append(np.column_stack([np.full(len(rest), first, dtype=np.int64), rest]))
    return np.vstack(blocks)


@dataclass(frozen=True, eq=False)
class TypeClassTable:
    """All types of denominator ``n`` with multinomial log-coefficients and
    log-probabilities of their type classes under Q."""

    n: int
    alphabet_size: int
    counts: np.ndarray          # (num_types, |X|) int64
    log_coefficients: np.ndarray
    log_probs: np.ndarray

    def __len__(self):
        return len(self.counts)

    @property
    def entries(self) -> list[tuple[EmpiricalType, float, float]]:
        return [(EmpiricalType(tuple(c.tolist()), self.n), float(a), float(b))
                for c, a, b in zip(self.counts, self.log_coefficients, self.log_probs)]

    def frequencies(self) -> np.ndarray:
        return self.counts / self.n


def enumerate_types(n: int, alphabet_size: int, q) -> TypeClassTable:
    q = as_distribution(q, alphabet_size)
    if n < 1:
        raise GallagerError("n must be positive")
    counts = compositions(n, alphabet_size)
    log_coeff = gammaln(n + 1) - gammaln(counts + 1).sum(axis=1)
    with np.errstate(divide="ignore"):
        log_probs = log_coeff + xlogy(counts, q.probs[None, :]).sum(axis=1)
    return TypeClassTable(n, alphabet_size, counts, log_coeff, log_probs)


def _divergence_rows(freqs: np.ndarray, q: np.ndarray) -> np.ndarray:
    """D(T||Q) for every row T; inf where T leaves the support of Q."""
    with np.errstate(divide="ignore", invalid="ignore"):
        d = (xlogy(freqs, freqs) - xlogy(freqs, q[None, :])).sum(axis=1)
    off = ((freqs > 0) & (q[None, :] == 0)).any(axis=1)
    d[off] = np.inf
    return d


def _lex_argmax(scores: np.ndarray, counts: np.ndarray) -> int:
    """Index of the maximal score; ties go to the lexicographically smallest counts."""
    best = np.max(scores)
    tied = np.flatnonzero(scores == best)
    if tied.size == 1:
        return int(tied[0])
    order = np.lexsort(counts[tied].T[::-1])
    return int(tied[order[0]])


def best_type_exact(rho: float, q, ch: Channel, n: int) -> tuple[EmpiricalType, float]:
    """Exact argmax of E(T) - rho D(T||Q) over all types of denominator ``n``."""
    rho = check_rho(rho)
    q = as_distribution(q, ch.num_inputs)
    values = per_letter(rho, q, ch).values
    counts = compositions(n, ch.num_inputs)
    freqs = counts / n
    with np.errstate(invalid="ignore"):
        scores = _masked_linear(freqs, values) - rho * _divergence_rows(freqs, q.probs)
    scores = np.where(np.isnan(scores), -np.inf, scores)
    i = _lex_argmax(scores, counts)
    return EmpiricalType(tuple(counts[i].tolist()), n), float(scores[i])


def constrained_best_type(rho: float, q, ch: Channel, n: int,
                          radius: float) -> tuple[EmpiricalType, float]:
    """Exact argmax of E(T) over types with D(T||Q) <= radius.

    If no type lies in the ball, the divergence-minimizing type is returned and an
    :class:`InfeasibleRadiusWarning` is issued.
    """
    rho = check_rho(rho)
    if not radius >= 0:
        raise GallagerError("radius must be non-negative")
    q = as_distribution(q, ch.num_inputs)
    values = per_letter(rho, q, ch).values
    counts = compositions(n, ch.num_inputs)
    freqs = counts / n
    div = _divergence_rows(freqs, q.probs)
    energy = _masked_linear(freqs, values)
    # absorbs rounding in D(T||Q) for T == Q
    feasible = div <= radius + 1e-12 * max(1.0, radius)
    if not feasible.any():
        warnings.warn(f"no type of denominator {n} within divergence {radius}; "
                      "returning the closest type", InfeasibleRadiusWarning, stacklevel=2)
        i = _lex_argmax(-div, counts)
    else:
        i = _lex_argmax(np.where(feasible, energy, -np.inf), counts)
    return EmpiricalType(tuple(counts[i].tolist()), n), float(energy[i])


def _masked_linear(freqs: np.ndarray, values: np.ndarray) -> np.ndarray:
    # 0 * inf counts as 0
    return np.where(freqs > 0, freqs * values[None, :], 0.0).sum(axis=1)


def grid_min_decomposition(rho: float, q, ch: Channel, step: float):
    """Minimize E0(rho,Q,Qt) + D(Qt||Q) over the simplex lattice of spacing ``step``."""
    rho = check_rho(rho)
    q = as_distribution(q, ch.num_inputs)
    if ch.num_inputs > MAX_GRID_ALPHABET:
        raise AlphabetTooLarge(f"grid search supports |X| <= {MAX_GRID_ALPHABET}")
    if not 0 < step <= 0.5:
        raise GallagerError("step must lie in (0, 0.5]")
    resolution = int(round(1.0 / step))
    if abs(resolution * step - 1.0) > 1e-9:
        raise GallagerError("step must be the reciprocal of an integer")
    counts = compositions(resolution, ch.num_inputs)
    freqs = counts / resolution
    values = per_letter(rho, q, ch).values
    with np.errstate(invalid="ignore"):
        obj = _masked_linear(freqs, values) + _divergence_rows(freqs, q.probs)
    i = int(np.argmin(obj))
    return as_distribution(freqs[i]), float(obj[i])


def exhaustive_conditional_bound(s: float, rho: float, q, ch: Channel,
                                 word: Sequence[int], M: int) -> float:
    """The n-letter conditional Gallager bound, summed over every output sequence.

    ``M^rho sum_y P^(1-s rho)(y|x_m) [sum_x Q(x) P^s(y|x)]^rho`` where the
    n-letter channel and input measure are products of per-letter terms.
    """
    rho = check_rho(rho)
    s = check_s(s, rho)
    q = as_distribution(q, ch.num_inputs)
    word = np.asarray(word, dtype=np.int64)
    n = word.size
    if n == 0:
        raise GallagerError("word must be non-empty")
    if word.min() < 0 or word.max() >= ch.num_inputs:
        raise GallagerError("word symbols out of range")
    n_out = ch.num_outputs ** n
    if n_out > MAX_OUTPUT_SEQUENCES:
        raise OutputSpaceTooLarge(f"|Y|^n = {n_out} output sequences exceeds {MAX_OUTPUT_SEQUENCES}")
    p = ch.matrix
    ys = np.array(list(itertools.product(range(ch.num_outputs), repeat=n)), dtype=np.int64)
    p_word = np.prod(p[word[None, :], ys], axis=1)               # P(y | x_m)
    letter_mix = q.probs @ (p ** s)                              # sum_x Q(x) P^s(y|x)
    mix_word = np.prod(letter_mix[ys], axis=1)
    total = np.sum(p_word ** (1.0 - s * rho) * mix_word ** rho)
    return float(M) ** rho * float(total)
