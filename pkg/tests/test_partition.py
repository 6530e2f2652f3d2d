import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from loopsoup.cycle_weights import CycleWeights, exact_weights, mean_particles
from loopsoup.partition import (build_table, chemical_potential, exact_mgf_centered, local_clt_check,
                                long_loop_law, prob_particle_count, recursion_residual,
                                solve_chemical_potential)
from loopsoup.traps import TrapPotential

from oracles import cycle_index_exact, poisson_convolution


@pytest.mark.parametrize("support", [None, {1, 3, 4}, {2, 5}])
def test_cycle_index_matches_exact_fractions(support):
    t = [Fraction(3, 2), Fraction(1, 3), Fraction(5, 7), Fraction(2), Fraction(1, 9), Fraction(4, 5),
         Fraction(1, 2), Fraction(7, 3), Fraction(1), Fraction(3, 11)]
    w = CycleWeights.from_values([float(v) for v in t])
    table = build_table(w, support=support)
    for n in range(len(t) + 1):
        ref = cycle_index_exact(t, n, support)
        if ref == 0:
            assert table.log_h[n] == -np.inf
        else:
            assert table.log_h[n] == pytest.approx(math.log(ref), abs=1e-13)


def test_unit_weights_give_one():
    # t = 1 on full support: h_n = sum over permutations / n! = 1
    table = build_table(CycleWeights.from_values(np.ones(40)))
    np.testing.assert_allclose(table.log_h, 0.0, atol=1e-12)
    # only fixed points: h_n = 1/n!
    table = build_table(CycleWeights.from_values(np.ones(20)), support={1})
    np.testing.assert_allclose(table.log_h, [-math.lgamma(n + 1) for n in range(21)], atol=1e-12)


def test_particle_law_is_poisson_convolution():
    w = exact_weights(TrapPotential.harmonic(1.0, 1), 1.0, 1.0, 12)
    table = build_table(w)
    means = list(w.t / np.arange(1, 13))
    ref = poisson_convolution(means, 12)
    got = np.exp(table.log_prob())
    np.testing.assert_allclose(got, ref, rtol=1e-12)


def test_normalisation_beyond_N():
    w = exact_weights(TrapPotential.harmonic(1.0, 1), 1.0, 0.5, 15)
    table = build_table(w, n_max=400)
    assert float(np.exp(table.log_prob()).sum()) == pytest.approx(1.0, abs=1e-12)
    assert recursion_residual(table) < 1e-12


def test_mgf_single_term():
    # one loop length: N = k X with X ~ Poisson(t/k)
    w = CycleWeights.from_values([1.0, 1.0, 2.5])
    s = 0.3
    ref = (2.5 / 3) * (math.exp(3 * s) - 1 - 3 * s)
    assert exact_mgf_centered(w, s, support={3}) == pytest.approx(ref, rel=1e-14)
    assert exact_mgf_centered(w, 1e-6, support={3}) == pytest.approx((2.5 / 3) * 4.5e-12, rel=1e-8)
    assert exact_mgf_centered(w, 0.0) == 0.0


def test_mgf_against_brute_force_expectation():
    w = exact_weights(TrapPotential.harmonic(1.0, 1), 1.0, 1.0, 8)
    table = build_table(w, n_max=300)
    p = np.exp(table.log_prob())
    n = np.arange(p.size)
    mean = float(np.sum(n * p))
    for s in (-0.4, 0.2):
        ref = math.log(np.sum(p * np.exp(s * (n - mean))))
        assert exact_mgf_centered(w, s) == pytest.approx(ref, rel=1e-9)


def test_chemical_potential_closed_form():
    # t_j = q^j gives sum_j e^{mu j} q^j = e^mu q / (1 - e^mu q) for N -> inf;
    # use a finite geometric sum instead and solve for the target
    q = 0.9
    w = CycleWeights.from_values(q ** np.arange(1, 201))
    target = 3.0
    cp = chemical_potential(w, target)
    assert not cp.supercritical
    z = q * math.exp(cp.mu)
    assert z * (1 - z ** 200) / (1 - z) == pytest.approx(target, rel=1e-12)
    assert chemical_potential(w, 1000.0).supercritical


def test_solved_mu_hits_target():
    cp = solve_chemical_potential(TrapPotential.harmonic(1.0, 2), 1.0, 1e-4, 200)
    w = exact_weights(TrapPotential.harmonic(1.0, 2), 1.0, 1e-4, 200, mu=cp.mu)
    assert mean_particles(w) == pytest.approx(200, rel=1e-10)
    assert cp.mu < 0


def test_local_clt_rows_are_order_one():
    N = 400
    trap = TrapPotential.harmonic(1.0, 3)
    cp = solve_chemical_potential(trap, 1.0, 1e-3, N)
    assert not cp.supercritical
    w = exact_weights(trap, 1.0, 1e-3, N, mu=cp.mu)
    rows = local_clt_check(w, [0, 5, 10])
    assert all(0.1 < r["scaled_prob"] < 10 for r in rows)


def test_long_loop_law_shape():
    a = 1e-3
    trap = TrapPotential.harmonic(1.0, 1)
    T = 200
    w = exact_weights(trap, 1.0, a, 5 * T)
    law = long_loop_law(w, T, 5 * T, 5 * T)
    assert law.exact == pytest.approx(prob_particle_count(
        build_table(w, support=range(T + 1, 5 * T + 1), n_max=5 * T), 5 * T))
    assert 0.8 < law.ratio < 1.2


@settings(max_examples=60, deadline=None)
@given(st.lists(st.floats(min_value=1e-3, max_value=1e3), min_size=1, max_size=9),
       st.sets(st.integers(min_value=1, max_value=9), min_size=1))
def test_recursion_property(t, support):
    support = {k for k in support if k <= len(t)} or {1}
    table = build_table(CycleWeights.from_values(t), support=support)
    exact = [Fraction(v) for v in t]
    for n in range(len(t) + 1):
        ref = cycle_index_exact(exact, n, support)
        if ref == 0:
            assert table.log_h[n] == -np.inf
        else:
            assert table.log_h[n] == pytest.approx(math.log(ref), abs=1e-12)
