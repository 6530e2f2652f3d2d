import math

import numpy as np
import pytest

from loopsoup.errors import ConfigError, DivergentSeriesError
from loopsoup.regimes import Regime
from loopsoup.rng import check_seed, derive_seeds
from loopsoup.thermo import (alpha_sequence, critical_density, free_energy_limit, loop_profile,
                             power_series, pressure, pressure_derivative, solve_u_chi)
from loopsoup.traps import TrapPotential, weight_integral

TRAPS = [TrapPotential.harmonic(1.3, 3), TrapPotential.power(0.7, 4.0, 2), TrapPotential.box(1.5, 3)]


@pytest.mark.parametrize("trap", TRAPS)
def test_profile_matches_weight_integral(trap):
    beta = 0.8
    prof = loop_profile(trap, beta)
    for j in (1, 3, 17):
        direct = weight_integral(trap, beta, j) / (4 * math.pi * beta * j) ** (0.5 * trap.d)
        assert prof.C * j ** -prof.s == pytest.approx(direct, rel=1e-12)


@pytest.mark.parametrize("trap", TRAPS)
def test_critical_density_two_routes(trap):
    prof = loop_profile(trap, 0.8)
    direct, bound = power_series(prof.C, prof.s, 0.0)
    assert critical_density(trap, 0.8) == pytest.approx(direct, rel=1e-10)
    assert bound < 1e-10 * direct


def test_harmonic_critical_density_closed_form():
    assert critical_density(TrapPotential.harmonic(1.0, 3), 1.0) == pytest.approx(1.2020569031595942 / 8)


@pytest.mark.parametrize("trap", [TrapPotential.harmonic(1.0, 1), TrapPotential.box(1.0, 2),
                                  TrapPotential.box(1.0, 1)])
def test_divergent_cases(trap):
    with pytest.raises(DivergentSeriesError):
        critical_density(trap, 1.0)
    # any chi is below the (infinite) critical density
    assert solve_u_chi(trap, 1.0, 5.0) < 0


@pytest.mark.parametrize("log_z", [-1e-3, -0.2, -3.0])
def test_pressure_two_routes(log_z):
    trap = TrapPotential.harmonic(1.0, 3)
    prof = loop_profile(trap, 1.0)
    val, _ = power_series(prof.C, prof.s + 1.0, log_z)
    assert pressure(trap, 1.0, log_z) == pytest.approx(val, rel=1e-12)
    val1, _ = power_series(prof.C, prof.s, log_z)
    assert pressure_derivative(trap, 1.0, log_z) == pytest.approx(val1, rel=1e-12)


def test_pressure_derivative_finite_difference():
    trap = TrapPotential.power(1.0, 3.0, 2)
    u, h = -0.3, 1e-5
    fd = (pressure(trap, 0.7, u + h) - pressure(trap, 0.7, u - h)) / (2 * h)
    assert pressure_derivative(trap, 0.7, u) == pytest.approx(fd, rel=1e-8)
    fd2 = (pressure_derivative(trap, 0.7, u + h) - pressure_derivative(trap, 0.7, u - h)) / (2 * h)
    assert pressure_derivative(trap, 0.7, u, order=2) == pytest.approx(fd2, rel=1e-7)
    with pytest.raises(DivergentSeriesError):
        pressure_derivative(TrapPotential.harmonic(1.0, 2), 1.0, 0.0, order=2)


def test_u_chi_solves_density_equation_and_is_monotone():
    trap = TrapPotential.harmonic(1.0, 3)
    rho = critical_density(trap, 1.0)
    chis = np.linspace(0.05, 0.99, 12) * rho
    us = [solve_u_chi(trap, 1.0, c) for c in chis]
    for c, u in zip(chis, us):
        assert pressure_derivative(trap, 1.0, u) == pytest.approx(c, rel=1e-12)
    assert np.all(np.diff(us) > 0)
    assert solve_u_chi(trap, 1.0, 2 * rho) == 0.0
    assert solve_u_chi(trap, 1.0, math.inf) == 0.0
    assert solve_u_chi(trap, 1.0, 0.0) == -math.inf
    with pytest.raises(ConfigError):
        solve_u_chi(trap, 1.0, -1.0)


def test_alpha_sequence_sums():
    trap = TrapPotential.harmonic(1.0, 3)
    rho = critical_density(trap, 1.0)
    # subcritical: the alpha_j are a probability vector (fast decay, J = 2000 suffices)
    assert np.sum(alpha_sequence(trap, 1.0, 0.5 * rho, 2000)) == pytest.approx(1.0, rel=1e-10)
    # supercritical: mass rho/chi in finite loops; j^-3 tail beyond J is below 1e-6
    assert np.sum(alpha_sequence(trap, 1.0, 2 * rho, 2000)) == pytest.approx(0.5, abs=1e-6)
    np.testing.assert_array_equal(alpha_sequence(trap, 1.0, 0.0, 3), [1.0, 0.0, 0.0])
    np.testing.assert_array_equal(alpha_sequence(trap, 1.0, math.inf, 3), np.zeros(3))


def test_free_energy_limit_continuous_at_rho():
    trap = TrapPotential.harmonic(1.0, 3)
    rho = critical_density(trap, 1.0)
    below = free_energy_limit(trap, 1.0, rho * (1 - 1e-9))
    above = free_energy_limit(trap, 1.0, rho * (1 + 1e-9))
    assert below == pytest.approx(above, rel=1e-6)
    assert free_energy_limit(trap, 1.0, 0.0) == -math.inf
    # a constant a_N adds the condensate energy on the supercritical side
    a = 0.01
    gap = free_energy_limit(trap, 1.0, 2 * rho, a_limit=a) - free_energy_limit(trap, 1.0, 2 * rho)
    assert gap == pytest.approx(0.5 * 3 * math.sqrt(a), rel=1e-12)


def test_regimes():
    r = Regime.from_dict({"chi": 0.3})
    assert r.a_of(1000, 3) == pytest.approx((0.3 / 1000) ** (2 / 3))
    assert r.chi_N(1000, 3) == pytest.approx(0.3)
    z = Regime.from_dict({"chi": 0})
    assert z.chi_N(100, 2) == pytest.approx(0.01)
    assert z.a_of(100, 2) == pytest.approx(1e-4)
    c = Regime.from_dict({"a": 0.01})
    assert c.chi_limit == math.inf and c.chi_N(100, 2) == pytest.approx(1.0)
    e = Regime.from_dict({"a_values": [0.1, 0.2]})
    assert e.a_ladder([10, 20], 1) == [0.1, 0.2]
    assert Regime.from_dict(r.to_dict()) == r
    for bad in ({}, {"chi": 1, "a": 1}, {"chi": -1}, {"a": 0}, {"a_values": []}, {"chi": 1, "x": 2}):
        with pytest.raises(ConfigError):
            Regime.from_dict(bad)
    with pytest.raises(ConfigError):
        e.a_ladder([10], 1)


def test_seed_derivation():
    a = derive_seeds(42, 5)
    assert a == derive_seeds(42, 5) and len(set(a)) == 5
    assert derive_seeds(42, 7)[:5] == a
    assert derive_seeds(43, 5) != a
    for bad in (-1, 1 << 64, 1.5, True, "3"):
        with pytest.raises(ConfigError):
            check_seed(bad)


def test_constant_a_power_trap_is_flagged():
    trap = TrapPotential.power(1.0, 4.0, 1)
    with pytest.warns(RuntimeWarning, match="experimental"):
        free_energy_limit(trap, 1.0, math.inf, a_limit=0.1)
