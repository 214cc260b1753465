"""Monte Carlo natural type selection.

A trial draws an i.i.d.(Q) list of length-``n`` codewords and finds the index
``N_n`` maximizing ``E(Q_m) - rho log(m) / n``, where ``E`` is the simplified
conditional exponent and ``Q_m`` the type of codeword ``m``. Codewords are
reduced to their types at generation (multinomial draws).

Two engines implement the same search:

``"stream"``
    Draws every codeword ``m = 1, 2, ...`` and stops once
    ``rho log(m+1) / n >= E_max - best`` (no later codeword can win), or when
    ``m_cap`` codewords have been drawn.
``"skip"``
    Exact skip-ahead. After codeword ``m`` only types with
    ``E(T) > best + rho log(m+1) / n`` can ever win, and that set shrinks as
    ``m`` grows. The gap to the next codeword in the set is geometric, so the
    engine jumps straight to it and draws its type from the conditional law.
    The winner has the same distribution as under ``"stream"``, but searches
    that would need ``e^90`` codewords finish in a handful of draws. ``m_cap``
    bounds the number of draws.

Trial ``t`` of a run uses its own generator seeded from ``(seed, t)``, so
results do not depend on the worker count or the execution order.
"""
from __future__ import annotations

import csv
import io
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from decimal import ROUND_CEILING, ROUND_FLOOR, Decimal, localcontext
from functools import lru_cache

import numpy as np

from .dmc_core import (
    Channel,
    Distribution,
    EmpiricalType,
    GallagerError,
    as_distribution,
    check_rho,
    type_of,
)
from .exponents import kl_divergence, per_letter
from .oracle import enumerate_types

DEFAULT_M_CAP = 10**8
THREADS_ENV = "GALLAGER_FORGE_THREADS"
ENGINES = ("skip", "stream")


class InfiniteDivergence(GallagerError):
    pass


@dataclass(frozen=True, eq=False)
class NtsConfig:
    rho: float
    q: Distribution
    ch: Channel
    n: int
    trials: int = 1
    seed: int = 0
    m_cap: int | None = DEFAULT_M_CAP
    engine: str = "skip"

    def __post_init__(self):
        check_rho(self.rho)
        q = as_distribution(self.q, self.ch.num_inputs)
        if not q.is_positive():
            raise GallagerError("generating distribution must be strictly positive")
        object.__setattr__(self, "q", q)
        if int(self.n) < 1:
            raise GallagerError(f"block length n must be >= 1, got {self.n}")
        if int(self.trials) < 1:
            raise GallagerError(f"trials must be >= 1, got {self.trials}")
        if self.m_cap is not None and int(self.m_cap) < 1:
            raise GallagerError("m_cap must be positive")
        if self.engine not in ENGINES:
            raise GallagerError(f"engine must be one of {ENGINES}")
        if not 0 <= int(self.seed) < 2**64:
            raise GallagerError("seed must be a 64-bit unsigned integer")

    def to_dict(self) -> dict:
        return {
            "rho": self.rho,
            "q": self.q.probs.tolist(),
            "channel": self.ch.matrix.tolist(),
            "n": int(self.n),
            "trials": int(self.trials),
            "seed": int(self.seed),
            "m_cap": None if self.m_cap is None else int(self.m_cap),
            "engine": self.engine,
        }


@dataclass(frozen=True, eq=False)
class FavoriteTypeResult:
    winner_index: int
    winner_type: EmpiricalType
    value: float
    codewords_examined: int
    truncated: bool
    draws: int
    stream: np.ndarray | None = field(default=None, repr=False)
    words: list | None = field(default=None, repr=False)

    def to_dict(self) -> dict:
        return {
            "winner_index": str(self.winner_index) if self.winner_index >= 2**53 else self.winner_index,
            "counts": list(self.winner_type.counts),
            "value": self.value,
            "codewords_examined": (str(self.codewords_examined)
                                   if self.codewords_examined >= 2**53 else self.codewords_examined),
            "draws": self.draws,
            "truncated": self.truncated,
        }


@dataclass(frozen=True, eq=False)
class NtsAggregate:
    config: NtsConfig
    target: Distribution
    per_trial: tuple[FavoriteTypeResult, ...]
    mean_type: Distribution
    tv_to_target: float
    median_tv: float
    truncated_count: int

    @property
    def tvs(self) -> np.ndarray:
        t = self.target.probs
        return np.array([0.5 * np.abs(r.winner_type.as_array() - t).sum() for r in self.per_trial])

    def to_dict(self) -> dict:
        return {
            "config": self.config.to_dict(),
            "target": self.target.probs.tolist(),
            "aggregate": {
                "mean_type": self.mean_type.probs.tolist(),
                "tv_to_target": self.tv_to_target,
                "median_tv": self.median_tv,
                "truncated": self.truncated_count,
            },
            "trials": [dict(trial=i, **r.to_dict()) for i, r in enumerate(self.per_trial)],
        }


def trial_rng(seed: int, trial: int) -> np.random.Generator:
    """Independent generator for trial ``trial`` of a run seeded with ``seed``."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(seed), spawn_key=(int(trial),))))


def sample_codeword(q, n: int, rng: np.random.Generator) -> EmpiricalType:
    """Type of an i.i.d.(Q) word of length ``n``, drawn directly as multinomial counts."""
    q = as_distribution(q)
    return EmpiricalType(tuple(rng.multinomial(n, q.probs).tolist()), n)


def codebook_size_for_target(n: int, q, qprime) -> int:
    """``ceil(exp(n D(Q'||Q)))``, the codebook size that makes type Q' likely to appear."""
    if n < 1:
        raise GallagerError("n must be positive")
    d = kl_divergence(qprime, q)
    if math.isinf(d):
        raise InfiniteDivergence("Q' is not absolutely continuous w.r.t. Q")
    return _ceil_exp(n * d)


def _ceil_exp(x: float) -> int:
    if x < 700:
        return math.ceil(math.exp(x))
    with localcontext() as ctx:
        ctx.prec = 40
        return int(Decimal(x).exp().to_integral_value(rounding=ROUND_CEILING))


def _floor_exp(x: float) -> int:
    if x < 700:
        return math.floor(math.exp(x))
    with localcontext() as ctx:
        ctx.prec = 40
        return int(Decimal(x).exp().to_integral_value(rounding=ROUND_FLOOR))


def _penalty(rho: float, m: int, n: int) -> float:
    return rho * math.log(m) / n


def _stopping_index(log_horizon: float) -> int:
    """Largest m with log(m + 1) < log_horizon, i.e. the last index still worth drawing."""
    if log_horizon <= 0:
        return 0
    return max(_ceil_exp(log_horizon) - 1, 0)


@dataclass(frozen=True, eq=False)
class _TypeTable:
    """Types sorted by score, with running log-mass for conditional sampling."""

    counts: np.ndarray
    energies: np.ndarray
    log_cum: np.ndarray


@lru_cache(maxsize=16)
def _type_table(rho: float, q: tuple, matrix: tuple, n: int) -> _TypeTable:
    ch_matrix = np.array(matrix)
    qd = Distribution(np.array(q))
    ch = Channel(ch_matrix)
    values = per_letter(rho, qd, ch).values
    table = enumerate_types(n, len(q), qd)
    energies = table.counts @ values / n
    # descending energy; ties in enumeration order (stable)
    order = np.argsort(-energies, kind="stable")
    return _TypeTable(table.counts[order], energies[order],
                      np.logaddexp.accumulate(table.log_probs[order]))


def _geometric_gap(log_p: float, rng: np.random.Generator) -> int:
    """Trials up to and including the first success, success probability exp(log_p)."""
    u = 1.0 - rng.random()                       # (0, 1]
    p = math.exp(min(log_p, 0.0))
    if p >= 1.0 or u == 1.0:
        return 1
    neg_log_u = -math.log(u)
    if log_p > -30:
        rate = -math.log1p(-p)
        log_rate = math.log(rate)
    else:
        # -log(1 - p) = p to double precision here
        log_rate = log_p
    return _floor_exp(math.log(neg_log_u) - log_rate) + 1


def favorite_type(cfg: NtsConfig, rng: np.random.Generator, record: bool = False,
                  materialize_words: bool = False) -> FavoriteTypeResult:
    """Find the favorite codeword of one random list.

    ``record`` keeps the type counts of every drawn codeword (stream engine
    only); ``materialize_words`` additionally draws explicit symbol sequences.
    """
    if cfg.engine == "stream":
        return _favorite_stream(cfg, rng, record, materialize_words)
    if record or materialize_words:
        raise GallagerError("recording the codeword stream needs engine='stream'")
    return _favorite_skip(cfg, rng)


def _favorite_stream(cfg: NtsConfig, rng, record: bool, materialize_words: bool):
    n, rho = int(cfg.n), cfg.rho
    values = per_letter(rho, cfg.q, cfg.ch).values
    e_max = float(values.max())
    k = cfg.ch.num_inputs
    cap = cfg.m_cap
    best, best_idx, best_counts = -math.inf, 0, None
    stream, words = [], []
    m = 0
    truncated = False
    while True:
        if cap is not None and m >= cap:
            truncated = True
            break
        m += 1
        if materialize_words:
            word = rng.choice(k, size=n, p=cfg.q.probs)
            counts = np.array(type_of(word, k).counts)
            words.append(word)
        else:
            counts = rng.multinomial(n, cfg.q.probs)
        if record:
            stream.append(counts)
        score = float(counts @ values) / n - _penalty(rho, m, n)
        if score > best:
            best, best_idx, best_counts = score, m, counts
        if rho * math.log(m + 1) / n >= e_max - best:
            break
    return FavoriteTypeResult(
        winner_index=best_idx,
        winner_type=EmpiricalType(tuple(int(c) for c in best_counts), n),
        value=best,
        codewords_examined=m,
        truncated=truncated,
        draws=m,
        stream=np.array(stream) if record else None,
        words=words if materialize_words else None,
    )


def _favorite_skip(cfg: NtsConfig, rng):
    n, rho = int(cfg.n), cfg.rho
    table = _type_table(cfg.rho, tuple(cfg.q.probs.tolist()),
                        tuple(map(tuple, cfg.ch.matrix.tolist())), n)
    e_max = float(table.energies[0])
    cap = cfg.m_cap
    best, best_idx, best_row = -math.inf, 0, -1
    m = 0
    draws = 0
    truncated = False
    while True:
        # types that could still beat `best` at index m + 1
        threshold = best + _penalty(rho, m + 1, n)
        live = int(np.searchsorted(-table.energies, -threshold, side="left"))
        if live == 0:
            last = m
            break
        last = _stopping_index(n * (e_max - best) / rho) if best > -math.inf else None
        if cap is not None and draws >= cap:
            truncated = True
            break
        log_mass = float(table.log_cum[live - 1])
        gap = _geometric_gap(log_mass, rng)
        draws += 1
        if last is not None and m + gap > last:
            m = last
            break
        m += gap
        # conditional draw within the live prefix by inverting the cumulative mass
        target = math.log(1.0 - rng.random()) + log_mass
        row = min(int(np.searchsorted(table.log_cum[:live], target, side="left")), live - 1)
        score = float(table.energies[row]) - _penalty(rho, m, n)
        if score > best:
            best, best_idx, best_row = score, m, row
    winner = EmpiricalType(tuple(int(c) for c in table.counts[best_row]), n)
    return FavoriteTypeResult(
        winner_index=best_idx,
        winner_type=winner,
        value=best,
        codewords_examined=m,
        truncated=truncated,
        draws=draws,
    )


def _run_one(args) -> FavoriteTypeResult:
    cfg, t = args
    return favorite_type(cfg, trial_rng(cfg.seed, t))


def worker_count(requested: int | None = None) -> int:
    """Worker processes to use, capped by ``GALLAGER_FORGE_THREADS`` when set."""
    n = requested if requested is not None else (os.cpu_count() or 1)
    env = os.environ.get(THREADS_ENV)
    if env:
        try:
            n = min(n, max(1, int(env)))
        except ValueError:
            raise GallagerError(f"{THREADS_ENV} must be an integer, got {env!r}") from None
    return max(1, n)


def run_trials(cfg: NtsConfig, target, workers: int | None = None) -> NtsAggregate:
    """Run ``cfg.trials`` independent favorite-type searches and aggregate them."""
    target = as_distribution(target, cfg.ch.num_inputs)
    nworkers = min(worker_count(workers), int(cfg.trials))
    jobs = [(cfg, t) for t in range(int(cfg.trials))]
    if nworkers == 1:
        results = [_run_one(j) for j in jobs]
    else:
        # build the type table once in the parent; forked workers inherit the cache
        if cfg.engine == "skip":
            _type_table(cfg.rho, tuple(cfg.q.probs.tolist()),
                        tuple(map(tuple, cfg.ch.matrix.tolist())), int(cfg.n))
        with ProcessPoolExecutor(max_workers=nworkers) as pool:
            results = list(pool.map(_run_one, jobs, chunksize=max(1, len(jobs) // (4 * nworkers))))
    types = np.array([r.winner_type.counts for r in results], dtype=np.float64) / cfg.n
    mean = types.mean(axis=0)
    mean_type = Distribution.normalized(mean)
    tvs = 0.5 * np.abs(types - target.probs[None, :]).sum(axis=1)
    return NtsAggregate(
        config=cfg,
        target=target,
        per_trial=tuple(results),
        mean_type=mean_type,
        tv_to_target=float(min(1.0, 0.5 * np.abs(mean_type.probs - target.probs).sum())),
        median_tv=float(np.median(tvs)),
        truncated_count=sum(r.truncated for r in results),
    )


def aggregate_csv(aggs) -> str:
    """One row per trial across all aggregates (one aggregate per block length)."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    k = aggs[0].config.ch.num_inputs
    w.writerow(["n", "trial", "winner_index", "codewords_examined", "draws", "truncated", "value"]
               + [f"count_{i}" for i in range(k)] + ["tv"])
    for agg in aggs:
        for t, (r, tv) in enumerate(zip(agg.per_trial, agg.tvs)):
            w.writerow([agg.config.n, t, r.winner_index, r.codewords_examined, r.draws,
                        int(r.truncated), repr(r.value)] + list(r.winner_type.counts) + [repr(float(tv))])
    return buf.getvalue()


def aggregate_json(aggs) -> str:
    return json.dumps({"runs": [a.to_dict() for a in aggs]}, indent=2, sort_keys=True) + "\n"
