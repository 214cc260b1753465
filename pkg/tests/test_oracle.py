import itertools
import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_channel, random_positive_dist
from gallager_forge import (
    Distribution,
    bsc,
    conditional_e0_general,
    gallager_e0,
    identity_channel,
    kl_divergence,
    per_letter,
    q_update,
    type_of,
)
from gallager_forge.oracle import (
    AlphabetTooLarge,
    InfeasibleRadiusWarning,
    OutputSpaceTooLarge,
    TooManyTypes,
    best_type_exact,
    compositions,
    constrained_best_type,
    enumerate_types,
    exhaustive_conditional_bound,
    grid_min_decomposition,
    num_types,
)


def tv(a, b):
    return 0.5 * float(np.abs(np.asarray(a) - np.asarray(b)).sum())


# --- enumeration -------------------------------------------------------------

def test_two_symbols_two_letters():
    table = enumerate_types(2, 2, [0.5, 0.5])
    assert [e[0].counts for e in table.entries] == [(2, 0), (1, 1), (0, 2)]
    np.testing.assert_allclose(np.exp(table.log_probs), [0.25, 0.5, 0.25], rtol=1e-14)


def test_three_symbol_class_probs_normalize():
    table = enumerate_types(4, 3, [0.2, 0.3, 0.5])
    assert len(table) == num_types(4, 3) == 15
    assert abs(np.exp(table.log_probs).sum() - 1.0) < 1e-12


def test_log_coefficients_match_exact_multinomials():
    table = enumerate_types(7, 3, Distribution.uniform(3))
    for t, log_c, _ in table.entries:
        exact = math.factorial(7) // math.prod(math.factorial(c) for c in t.counts)
        assert abs(log_c - math.log(exact)) < 1e-12


def test_compositions_unique_and_complete():
    c = compositions(6, 4)
    assert len(c) == num_types(6, 4)
    assert len({tuple(r) for r in c}) == len(c)
    assert np.all(c.sum(axis=1) == 6) and np.all(c >= 0)


def test_too_many_types():
    with pytest.raises(TooManyTypes):
        enumerate_types(1000, 5, Distribution.uniform(5))


def test_zero_mass_symbol_gives_zero_class_prob():
    table = enumerate_types(3, 2, [1.0, 0.0])
    probs = dict((t.counts, p) for t, _, p in table.entries)
    assert probs[(3, 0)] == 0.0
    assert probs[(2, 1)] == -np.inf


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 12), st.integers(2, 4), st.integers(0, 2**32 - 1))
def test_class_probs_sum_to_one(n, k, seed):
    q = np.random.default_rng(seed).dirichlet(np.ones(k))
    table = enumerate_types(n, k, q)
    assert len(table) == math.comb(n + k - 1, k - 1)
    assert abs(np.exp(table.log_probs).sum() - 1.0) < 1e-9


# --- penalized argmax ----------------------------------------------------------

def test_single_letter_types_are_point_masses(rng):
    for _ in range(10):
        ch = random_channel(rng, 3, 3)
        q = random_positive_dist(rng, 3)
        rho = float(rng.uniform(0.05, 1))
        values = per_letter(rho, q, ch).values
        expected = int(np.argmax(values - rho * np.log(1.0 / q)))
        t, score = best_type_exact(rho, q, ch, 1)
        assert t.counts[expected] == 1
        assert score == pytest.approx(values[expected] + rho * math.log(q[expected]), abs=1e-12)


def test_best_type_near_update_at_n400():
    ch, q = bsc(0.2), [0.1, 0.9]
    qp = q_update(0.1, q, ch).probs
    t, _ = best_type_exact(0.1, q, ch, 400)
    assert tv(t.as_array(), qp) < 0.01


def test_identity_uniform_gives_uniform_type():
    ch = identity_channel(3)
    t, _ = best_type_exact(1.0, Distribution.uniform(3), ch, 6)
    assert t.counts == (2, 2, 2)


def test_refinement_tv_shrinks(rng):
    for _ in range(5):
        ch = random_channel(rng, 2, 3)
        q = random_positive_dist(rng, 2)
        rho = float(rng.uniform(0.05, 1))
        qp = q_update(rho, q, ch).probs
        prev = math.inf
        for n in (50, 100, 200, 400, 800):
            t, _ = best_type_exact(rho, q, ch, n)
            d = tv(t.as_array(), qp)
            # one lattice spacing of slack at the coarser level
            assert d <= prev + 1.0 / (n // 2)
            assert d <= 1.0 / n
            prev = d


def test_ties_go_to_lexicographically_smallest():
    # BSC(0.5) makes every letter exponent equal, so the score is -rho D(T||Q)
    # and (1,2) ties with (2,1)
    t, _ = best_type_exact(0.5, [0.5, 0.5], bsc(0.5), 3)
    assert t.counts == (1, 2)


# --- constrained argmax --------------------------------------------------------

def test_radius_zero_returns_q_type():
    ch = bsc(0.2)
    t, _ = constrained_best_type(0.1, [0.25, 0.75], ch, 8, 0.0)
    assert t.counts == (2, 6)


def test_radius_infinite_returns_vertex(rng):
    ch = random_channel(rng, 3, 4)
    q = random_positive_dist(rng, 3)
    values = per_letter(0.4, q, ch).values
    t, e = constrained_best_type(0.4, q, ch, 10, math.inf)
    assert t.counts[int(np.argmax(values))] == 10
    assert e == pytest.approx(values.max(), abs=1e-12)


def test_infeasible_radius_warns_and_returns_closest():
    ch = bsc(0.2)
    with pytest.warns(InfeasibleRadiusWarning):
        t, _ = constrained_best_type(0.1, [0.3, 0.7], ch, 4, 1e-9)
    assert t.counts == (1, 3)


def test_negative_radius_rejected():
    with pytest.raises(ValueError):
        constrained_best_type(0.1, [0.5, 0.5], bsc(0.2), 4, -1.0)


def test_constrained_matches_penalized_bsc():
    ch, q = bsc(0.2), [0.1, 0.9]
    qp = q_update(0.1, q, ch)
    a, _ = best_type_exact(0.1, q, ch, 400)
    b, _ = constrained_best_type(0.1, q, ch, 400, kl_divergence(qp, q))
    assert tv(a.as_array(), b.as_array()) < 0.01


def test_penalized_and_constrained_agree_binary(rng):
    # two inputs: the ball is an interval, so both argmaxes sit within one count
    for _ in range(20):
        ch = random_channel(rng, 2, int(rng.integers(2, 5)))
        q = random_positive_dist(rng, 2)
        rho = float(rng.uniform(0.05, 1))
        qp = q_update(rho, q, ch)
        for n in (200, 400):
            a, _ = best_type_exact(rho, q, ch, n)
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", InfeasibleRadiusWarning)
                b, _ = constrained_best_type(rho, q, ch, n, kl_divergence(qp, q))
            assert max(abs(x - y) for x, y in zip(a.counts, b.counts)) <= 1


def test_penalized_and_constrained_refine_ternary(rng):
    # three inputs: the constrained lattice argmax drifts along the ball boundary,
    # at distance O(n^-1/2) from Q'; both argmaxes converge to Q'
    for _ in range(20):
        ch = random_channel(rng, 3, 3)
        q = random_positive_dist(rng, 3)
        rho = float(rng.uniform(0.05, 1))
        qp = q_update(rho, q, ch)
        for n in (200, 800):
            a, _ = best_type_exact(rho, q, ch, n)
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", InfeasibleRadiusWarning)
                b, _ = constrained_best_type(rho, q, ch, n, kl_divergence(qp, q))
            assert tv(a.as_array(), qp.probs) <= 1.5 / n
            assert tv(b.as_array(), qp.probs) <= 0.5 / math.sqrt(n)


# --- grid decomposition --------------------------------------------------------

def test_grid_three_point_lattice():
    ch, q, rho = bsc(0.2), [0.3, 0.7], 0.4
    values = per_letter(rho, q, ch).values
    cands = {(0.0, 1.0): values[1] + kl_divergence([0, 1], q),
             (0.5, 0.5): 0.5 * values.sum() + kl_divergence([0.5, 0.5], q),
             (1.0, 0.0): values[0] + kl_divergence([1, 0], q)}
    point, value = grid_min_decomposition(rho, q, ch, 0.5)
    best = min(cands, key=cands.get)
    assert tuple(point.probs) == best
    assert value == pytest.approx(cands[best], rel=1e-12)


def test_grid_step_validation():
    for step in (0.0, 0.6, 0.3):
        with pytest.raises(ValueError):
            grid_min_decomposition(0.5, [0.5, 0.5], bsc(0.2), step)


def test_grid_bsc_close_to_e0():
    ch, q = bsc(0.2), [0.5, 0.5]
    _, value = grid_min_decomposition(0.1, q, ch, 1e-3)
    e0 = gallager_e0(0.1, q, ch)
    assert e0 - 1e-12 <= value <= e0 + 1e-5


def test_grid_never_below_e0(rng):
    for _ in range(20):
        k = int(rng.integers(2, 4))
        ch = random_channel(rng, k, 3)
        q = random_positive_dist(rng, k)
        rho = float(rng.uniform(0.05, 1))
        _, value = grid_min_decomposition(rho, q, ch, 0.02)
        assert value >= gallager_e0(rho, q, ch) - 1e-12


def test_grid_alphabet_limit(rng):
    ch = random_channel(rng, 5, 2)
    with pytest.raises(AlphabetTooLarge):
        grid_min_decomposition(0.5, Distribution.uniform(5), ch, 0.1)


# --- exhaustive n-letter bound --------------------------------------------------

def _single_letter(s, rho, q, ch, word, M):
    e = conditional_e0_general(s, rho, q, type_of(word, ch.num_inputs), ch)
    n = len(word)
    return math.exp(-n * (e - rho * math.log(M) / n))


def test_one_letter_matches_single_letter(rng):
    ch = random_channel(rng, 3, 3)
    q = random_positive_dist(rng, 3)
    for x in range(3):
        brute = exhaustive_conditional_bound(0.6, 0.5, q, ch, [x], 5)
        assert brute == pytest.approx(_single_letter(0.6, 0.5, q, ch, [x], 5), rel=1e-12)


def test_bsc_three_letter_word():
    ch, q = bsc(0.2), Distribution.uniform(2)
    s, rho = 1 / 1.1, 0.1
    brute = exhaustive_conditional_bound(s, rho, q, ch, [0, 0, 1], 4)
    assert brute == pytest.approx(_single_letter(s, rho, q, ch, [0, 0, 1], 4), rel=1e-10)


def test_permutation_invariance(rng):
    ch = random_channel(rng, 3, 2)
    q = random_positive_dist(rng, 3)
    word = [0, 1, 2, 2, 1]
    ref = exhaustive_conditional_bound(0.7, 0.8, q, ch, word, 17)
    for perm in itertools.islice(itertools.permutations(word), 0, 120, 7):
        assert exhaustive_conditional_bound(0.7, 0.8, q, ch, list(perm), 17) == pytest.approx(ref, rel=1e-12)


def test_output_space_limit(rng):
    ch = random_channel(rng, 2, 4)
    with pytest.raises(OutputSpaceTooLarge):
        exhaustive_conditional_bound(0.5, 0.5, [0.5, 0.5], ch, [0] * 12, 2)


def test_zero_entries_handled(rng):
    ch = random_channel(rng, 3, 3, zeros=True)
    q = random_positive_dist(rng, 3)
    word = [0, 2, 1, 1]
    brute = exhaustive_conditional_bound(0.5, 1.0, q, ch, word, 3)
    assert brute == pytest.approx(_single_letter(0.5, 1.0, q, ch, word, 3), rel=1e-9)
