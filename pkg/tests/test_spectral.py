import math

import numpy as np
import pytest
from scipy import integrate

from loopsoup.spectral import (BoxAxis, HarmonicAxis, PowerAxis, axis_spectrum, free_kernel,
                               heat_kernel, scaled_gap_check, spectrum_of)
from loopsoup.traps import TrapPotential

from oracles import hermite_ritz_levels


def test_harmonic_levels_and_functions_orthonormal():
    axis = HarmonicAxis(2.5)
    np.testing.assert_allclose(axis.levels(4), [2.5, 7.5, 12.5, 17.5])
    x = np.linspace(-6, 6, 4001)
    phi = axis.eigenfunctions(5, x)
    gram = integrate.trapezoid(phi[:, None, :] * phi[None, :, :], x, axis=-1)
    np.testing.assert_allclose(gram, np.eye(5), atol=1e-10)


def test_mehler_matches_eigen_sum():
    axis = HarmonicAxis(1.3)
    rng = np.random.default_rng(4)
    for _ in range(20):
        t = rng.uniform(0.2, 3.0)
        x, y = rng.uniform(-2.0, 2.0, size=2)
        assert axis.kernel(t, x, y) == pytest.approx(axis.eigen_sum_kernel(t, x, y, m=150), abs=1e-12)


def test_box_image_kernel_matches_eigen_sum():
    axis = BoxAxis(1.0)
    x = np.array([-0.4, 0.0, 0.3])
    y = np.array([0.1, 0.45, -0.2])
    for t in (0.003, 0.05, 0.4):
        # the eigen-sum cancels down to ~1e-14 absolute on far-off-diagonal entries
        np.testing.assert_allclose(axis.image_kernel(t, x, y), axis.eigen_sum_kernel(t, x, y),
                                   rtol=1e-9, atol=1e-12)


def test_box_trace_both_regimes():
    axis = BoxAxis(1.0)
    n = np.arange(1, 20001)
    for t in (1e-4, 0.01, 0.1, 2.0):
        direct = np.sum(np.exp(-t * (n * math.pi) ** 2))
        assert float(np.exp(axis.log_trace(t)[0])) == pytest.approx(direct, rel=1e-13)


def test_quartic_levels_against_hermite_ritz():
    ref = hermite_ritz_levels(4.0)[:4]
    axis = PowerAxis(4.0, 1.0)
    np.testing.assert_allclose(axis.unit_levels(4), ref, rtol=1e-7)
    # literature ground state of -d^2 + x^4
    assert ref[0] == pytest.approx(1.0603620904841828, rel=1e-10)


def test_power_trace_against_level_sum():
    axis = PowerAxis(4.0, 1.0, tau_min=0.25)
    ref_levels = hermite_ritz_levels(4.0, n_basis=70)[:30]
    for tau in (0.5, 1.0, 3.0):
        # levels above the 30th are negligible at these times
        ref = np.sum(np.exp(-tau * ref_levels))
        assert float(np.exp(axis.unit_log_trace(tau)[0])) == pytest.approx(ref, rel=1e-6)


def test_power_eigenfunction_normalised():
    axis = axis_spectrum(TrapPotential.power(1.0, 4.0, 1), 0.1)
    x = np.linspace(-4, 4, 8001)
    phi = axis.eigenfunctions(2, x)
    assert integrate.trapezoid(phi[0] ** 2, x) == pytest.approx(1.0, abs=1e-6)
    assert abs(integrate.trapezoid(phi[0] * phi[1], x)) < 1e-6
    assert np.all(phi[0][np.abs(x) < 1] > 0)


def test_spectrum_of_three_dimensional_harmonic():
    trap = TrapPotential.harmonic(1.0, 3)
    sp = spectrum_of(trap, 0.25, 10, t_ref=1.0)
    nu = 2.0
    # levels (2 n1 + 2 n2 + 2 n3 + 3) nu with degeneracies 1, 3, 6
    np.testing.assert_allclose(sp.eigenvalues, [3 * nu] + [5 * nu] * 3 + [7 * nu] * 6)
    tail = (2 * math.sinh(nu)) ** -3 - (math.exp(-3 * nu) + 3 * math.exp(-5 * nu) + 6 * math.exp(-7 * nu))
    assert sp.truncation_bound == pytest.approx(tail, rel=1e-8)
    x = np.array([[0.1, 0.2, -0.3]])
    ref = np.prod(HarmonicAxis(nu).eigenfunctions(1, x[0]))
    assert sp.eigenfunction(0, x)[0] == pytest.approx(ref)


@pytest.mark.parametrize("trap", [TrapPotential.harmonic(1.0, 2), TrapPotential.power(1.0, 4.0, 1),
                                  TrapPotential.box(1.0, 1)])
def test_scaled_gap_ratio_is_one(trap):
    for row in scaled_gap_check(trap, [0.1, 0.01, 0.001]):
        assert row["ratio_1"] == pytest.approx(1.0, rel=1e-7)
        assert row["ratio_2"] == pytest.approx(1.0, rel=1e-7)


def test_heat_kernel_free_limit_and_routes():
    trap = TrapPotential.harmonic(1.0, 3)
    x, y = np.array([0.3, -0.2, 0.1]), np.array([-0.5, 0.4, 1.0])
    assert heat_kernel(trap, 1e14, 0.8, x, y) == pytest.approx(free_kernel(0.8, x, y), rel=1e-10)
    box = TrapPotential.box(1.0, 2)
    p, q = np.array([0.1, -0.3]), np.array([0.2, 0.4])
    assert heat_kernel(box, 1.0, 0.02, p, q, method="images") == pytest.approx(
        heat_kernel(box, 1.0, 0.02, p, q, method="eigen"), rel=1e-9)
    assert heat_kernel(box, 1.0, 0.02, p, np.array([0.6, 0.0])) == 0.0
