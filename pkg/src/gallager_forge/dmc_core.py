"""Data model for discrete memoryless channels, input distributions and types.

All objects are immutable after construction. Probabilities are float64;
type counts are exact integers. Logarithms are natural throughout.
"""
from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Sequence

import numpy as np

STOCHASTIC_TOL = 1e-12


class GallagerError(ValueError):
    """Base class for all library errors."""


class ParseError(GallagerError):
    pass


class RowNotStochastic(GallagerError):
    pass


class NegativeEntry(GallagerError):
    pass


class DegenerateAlphabet(GallagerError):
    pass


class InvalidDistribution(GallagerError):
    pass


class EmptyWord(GallagerError):
    pass


class SymbolOutOfRange(GallagerError):
    pass


class InvalidRho(GallagerError):
    pass


class InvalidS(GallagerError):
    pass


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr = np.array(arr, dtype=np.float64, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class Channel:
    """Row-stochastic transition matrix ``matrix[x, y] = P(y|x)``."""

    matrix: np.ndarray
    input_labels: tuple[str, ...] | None = None
    output_labels: tuple[str, ...] | None = None

    def __post_init__(self):
        object.__setattr__(self, "matrix", _frozen(self.matrix))

    @property
    def num_inputs(self) -> int:
        return self.matrix.shape[0]

    @property
    def num_outputs(self) -> int:
        return self.matrix.shape[1]

    def __repr__(self):
        return f"Channel({self.num_inputs}x{self.num_outputs}, {self.matrix.tolist()})"


@dataclass(frozen=True, eq=False)
class Distribution:
    """A probability vector on a finite alphabet."""

    probs: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.probs, dtype=np.float64)
        if p.ndim != 1 or p.size == 0:
            raise InvalidDistribution("distribution must be a non-empty 1-D vector")
        if not np.all(np.isfinite(p)):
            raise InvalidDistribution("distribution has non-finite entries")
        if np.any(p < 0) or np.any(p > 1):
            raise InvalidDistribution("distribution entries must lie in [0, 1]")
        if abs(p.sum() - 1.0) > STOCHASTIC_TOL:
            raise InvalidDistribution(
                f"distribution does not sum to 1 (sum={p.sum():.17g})")
        object.__setattr__(self, "probs", _frozen(p))

    def __len__(self):
        return self.probs.size

    def __iter__(self):
        return iter(self.probs.tolist())

    def __getitem__(self, i):
        return self.probs[i]

    def __repr__(self):
        return f"Distribution({self.probs.tolist()})"

    @classmethod
    def _trusted(cls, probs: np.ndarray) -> "Distribution":
        """Wrap an already-normalized float64 vector without validating or copying it."""
        obj = object.__new__(cls)
        probs.setflags(write=False)
        object.__setattr__(obj, "probs", probs)
        return obj

    @classmethod
    def uniform(cls, k: int) -> "Distribution":
        return cls(np.full(k, 1.0 / k))

    @classmethod
    def normalized(cls, weights) -> "Distribution":
        """Build from non-negative weights, dividing by their sum."""
        w = np.asarray(weights, dtype=np.float64)
        if np.any(w < 0) or w.sum() <= 0:
            raise InvalidDistribution("weights must be non-negative with positive sum")
        return cls(w / w.sum())

    @property
    def support(self) -> np.ndarray:
        return self.probs > 0

    def is_positive(self) -> bool:
        return bool(np.all(self.probs > 0))


@dataclass(frozen=True)
class EmpiricalType:
    """Exact symbol counts of a length-``n`` word."""

    counts: tuple[int, ...]
    n: int

    def __post_init__(self):
        counts = tuple(int(c) for c in self.counts)
        if any(c < 0 for c in counts):
            raise GallagerError("type counts must be non-negative")
        if self.n < 1:
            raise GallagerError("block length n must be positive")
        if sum(counts) != self.n:
            raise GallagerError(f"type counts sum to {sum(counts)}, expected n={self.n}")
        object.__setattr__(self, "counts", counts)

    @classmethod
    def from_counts(cls, counts: Iterable[int]) -> "EmpiricalType":
        counts = tuple(int(c) for c in counts)
        return cls(counts, sum(counts))

    @property
    def alphabet_size(self) -> int:
        return len(self.counts)

    def fractions(self) -> tuple[Fraction, ...]:
        return tuple(Fraction(c, self.n) for c in self.counts)

    def to_distribution(self) -> Distribution:
        return Distribution(np.array(self.counts, dtype=np.float64) / self.n)

    def as_array(self) -> np.ndarray:
        return np.array(self.counts, dtype=np.float64) / self.n


@dataclass(frozen=True)
class ExponentParams:
    """Parameters of the Gallager bound; ``s`` defaults to ``1/(1+rho)``."""

    rho: float
    s: float | None = field(default=None)

    def __post_init__(self):
        check_rho(self.rho)
        if self.s is None:
            object.__setattr__(self, "s", 1.0 / (1.0 + self.rho))
        check_s(self.s, self.rho)

    @property
    def simplified(self) -> bool:
        return self.s == 1.0 / (1.0 + self.rho)


def check_rho(rho: float) -> float:
    if not (np.isfinite(rho) and 0 < rho <= 1):
        raise InvalidRho(f"rho must be in (0,1], got {rho!r}")
    return float(rho)


def check_s(s: float, rho: float) -> float:
    if not (np.isfinite(s) and s > 0 and s * rho < 1):
        raise InvalidS(f"need s > 0 and s*rho < 1, got s={s!r}, rho={rho!r}")
    return float(s)


def as_distribution(q, size: int | None = None) -> Distribution:
    """Coerce array-likes to :class:`Distribution`, optionally checking the length."""
    if isinstance(q, EmpiricalType):
        q = q.to_distribution()
    if not isinstance(q, Distribution):
        q = Distribution(np.asarray(q, dtype=np.float64))
    if size is not None and len(q) != size:
        raise InvalidDistribution(f"distribution has length {len(q)}, expected {size}")
    return q


def validate_channel(matrix, input_labels: Sequence[str] | None = None,
                     output_labels: Sequence[str] | None = None) -> Channel:
    """Check a raw 2-D array and wrap it as a :class:`Channel`."""
    try:
        m = np.asarray(matrix, dtype=np.float64)
    except (TypeError, ValueError) as exc:
        raise ParseError(f"channel matrix is not a rectangular numeric array: {exc}") from None
    if m.ndim != 2 or m.size == 0:
        raise ParseError("channel matrix must be a non-empty 2-D array")
    if not np.all(np.isfinite(m)):
        raise ParseError("channel matrix has non-finite entries")
    if m.shape[0] < 2 or m.shape[1] < 2:
        raise DegenerateAlphabet(
            f"channel needs at least 2 inputs and 2 outputs, got {m.shape[0]}x{m.shape[1]}")
    if np.any(m < 0):
        x, y = np.argwhere(m < 0)[0]
        raise NegativeEntry(f"P(y={y}|x={x}) = {m[x, y]} is negative")
    if np.any(m > 1):
        x, y = np.argwhere(m > 1)[0]
        raise RowNotStochastic(f"P(y={y}|x={x}) = {m[x, y]} exceeds 1")
    sums = m.sum(axis=1)
    bad = np.flatnonzero(np.abs(sums - 1.0) > STOCHASTIC_TOL)
    if bad.size:
        raise RowNotStochastic(f"row {bad[0]} sums to {sums[bad[0]]:.17g}, not 1")
    for labels, k, what in ((input_labels, m.shape[0], "input"),
                            (output_labels, m.shape[1], "output")):
        if labels is not None and len(labels) != k:
            raise ParseError(f"{what}_labels has {len(labels)} entries, expected {k}")
    return Channel(
        m,
        tuple(str(s) for s in input_labels) if input_labels is not None else None,
        tuple(str(s) for s in output_labels) if output_labels is not None else None,
    )


def type_of(word: Sequence[int], alphabet_size: int) -> EmpiricalType:
    """Count symbol occurrences in ``word``."""
    w = np.asarray(word)
    if w.size == 0:
        raise EmptyWord("cannot take the type of an empty word")
    if not np.issubdtype(w.dtype, np.integer):
        raise SymbolOutOfRange("word symbols must be integers")
    if w.min() < 0 or w.max() >= alphabet_size:
        raise SymbolOutOfRange(f"word symbols must lie in [0, {alphabet_size})")
    counts = np.bincount(w.ravel(), minlength=alphabet_size)
    return EmpiricalType(tuple(counts.tolist()), int(w.size))


def load_channel(source) -> Channel:
    """Load a channel from a JSON file path or a JSON document string.

    The document is an object with a required ``"matrix"`` key (rows indexed by
    input symbol) and optional ``"input_labels"`` / ``"output_labels"``.
    """
    if isinstance(source, os.PathLike) or (
            isinstance(source, str) and not source.lstrip().startswith("{")):
        try:
            with open(source, encoding="utf-8") as fh:
                text = fh.read()
        except OSError as exc:
            raise ParseError(f"cannot read channel file {source!s}: {exc}") from None
    else:
        text = source
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid channel JSON: {exc}") from None
    if not isinstance(doc, dict) or "matrix" not in doc:
        raise ParseError('channel JSON must be an object with a "matrix" key')
    rows = doc["matrix"]
    if not isinstance(rows, list) or not all(isinstance(r, list) for r in rows):
        raise ParseError('"matrix" must be an array of rows')
    if len({len(r) for r in rows}) > 1:
        raise ParseError('"matrix" rows have unequal lengths')
    if not all(isinstance(v, (int, float)) and not isinstance(v, bool) for r in rows for v in r):
        raise ParseError('"matrix" entries must be numbers')
    return validate_channel(rows, doc.get("input_labels"), doc.get("output_labels"))


def channel_to_json(ch: Channel) -> str:
    doc = {"matrix": ch.matrix.tolist()}
    if ch.input_labels is not None:
        doc["input_labels"] = list(ch.input_labels)
    if ch.output_labels is not None:
        doc["output_labels"] = list(ch.output_labels)
    return json.dumps(doc)


def bsc(p: float) -> Channel:
    """Binary symmetric channel with crossover probability ``p``."""
    return validate_channel([[1 - p, p], [p, 1 - p]])


def identity_channel(k: int) -> Channel:
    return validate_channel(np.eye(k))
