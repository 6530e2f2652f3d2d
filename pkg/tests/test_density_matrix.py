import csv
import math

import numpy as np
import pytest

from loopsoup.cycle_weights import CycleWeights, exact_weights
from loopsoup.density_matrix import (DensityMatrixGrid, build_grid, condensate_profile, exact_sigma,
                                     gamma, gauss_legendre_panels, log_coefficients, long_loop_mass,
                                     principal_eigenvalue, spectral_function, trace_by_quadrature)
from loopsoup.errors import ConfigError
from loopsoup.partition import build_table, chemical_potential
from loopsoup.spectral import axis_spectrum
from loopsoup.traps import TrapPotential

BETA = 1.0


def _table(trap, a, N, mu=0.0):
    return build_table(exact_weights(trap, BETA, a, N, mu=mu))


def test_coefficients_close_the_trace():
    # sum_r c_r t_r = N is the cycle-index recursion at n = N
    w = exact_weights(TrapPotential.harmonic(1.0, 2), BETA, 0.05, 60)
    lc = log_coefficients(build_table(w))
    assert float(np.sum(np.exp(lc + w.log_t))) == pytest.approx(60, rel=1e-12)


def test_tilt_invariance():
    trap = TrapPotential.harmonic(1.0, 1)
    w = exact_weights(trap, BETA, 1e-3, 40)
    mu = chemical_potential(w, 40.0).mu
    assert mu < 0
    plain = build_table(w)
    tilted = build_table(w.tilted(mu))
    np.testing.assert_allclose(log_coefficients(tilted), log_coefficients(plain), atol=1e-10)
    x = np.array([0.0, 0.1, -0.2])
    y = np.array([0.05, 0.1, 0.15])
    np.testing.assert_allclose(gamma(trap, BETA, 1e-3, 40, tilted, x, y),
                               gamma(trap, BETA, 1e-3, 40, plain, x, y), rtol=1e-10)


def test_single_particle_is_normalised_kernel():
    trap = TrapPotential.harmonic(1.0, 1)
    table = _table(trap, 0.5, 1)
    x, y = 0.3, -0.4
    k = axis_spectrum(trap, 0.5).kernel(BETA * 0.5, x, y)
    assert gamma(trap, BETA, 0.5, 1, table, x, y) == pytest.approx(k / math.exp(table.weights.log_t[0]))
    assert trace_by_quadrature(trap, table) == pytest.approx(1.0, rel=1e-10)


def test_symmetry_and_positive_diagonal():
    trap = TrapPotential.power(1.0, 4.0, 1)
    table = _table(trap, 0.05, 30)
    rng = np.random.default_rng(0)
    x, y = rng.normal(size=(2, 6)) * 0.5
    np.testing.assert_allclose(gamma(trap, BETA, 0.05, 30, table, x, y),
                               gamma(trap, BETA, 0.05, 30, table, y, x), rtol=1e-12)
    assert np.all(gamma(trap, BETA, 0.05, 30, table, x, x) > 0)


@pytest.mark.parametrize("trap,a,N", [
    (TrapPotential.harmonic(1.0, 1), 0.02, 200),
    (TrapPotential.harmonic(1.0, 3), 0.05, 100),
    (TrapPotential.box(1.0, 2), 0.01, 100),
    (TrapPotential.power(2.0, 3.0, 1), 0.05, 100),
])
def test_trace_by_quadrature_is_N(trap, a, N):
    assert trace_by_quadrature(trap, _table(trap, a, N)) == pytest.approx(N, rel=5e-3)


def test_spectral_function_sums_to_N():
    # sum over all levels of F(lambda_i) = trace = N (one dimension, harmonic)
    trap = TrapPotential.harmonic(1.0, 1)
    table = _table(trap, 0.2, 50)
    lam = axis_spectrum(trap, 0.2).levels(4000)
    assert float(np.sum(spectral_function(table, lam))) == pytest.approx(50, rel=1e-10)


def test_ground_mode_is_eigenfunction():
    trap = TrapPotential.harmonic(1.0, 1)
    a, N = 0.1, 30
    table = _table(trap, a, N)
    axis = axis_spectrum(trap, a)
    nodes, weights = gauss_legendre_panels(8.0, 64)
    phi = axis.eigenfunctions(1, nodes)[0]
    x0 = 0.4
    applied = np.sum(weights * gamma(trap, BETA, a, N, table, x0, nodes) * phi)
    ref = exact_sigma(table) * axis.eigenfunctions(1, np.array([x0]))[0, 0]
    assert applied == pytest.approx(ref, rel=1e-9)


def test_power_iteration_rank_one():
    nodes, weights = gauss_legendre_panels(1.0, 4)
    v = np.exp(-nodes**2)
    grid = DensityMatrixGrid.from_dense(nodes, weights, np.outer(v, v))
    res = principal_eigenvalue(grid)
    assert res.converged
    assert res.sigma == pytest.approx(np.sum(weights * v * v), rel=1e-12)
    with pytest.raises(ConfigError):
        DensityMatrixGrid.from_dense(nodes, weights, np.eye(3))


# in the condensed regime the ground mode dominates and a clipped dense grid still resolves it
@pytest.mark.filterwarnings("ignore:dense grid needs")
@pytest.mark.parametrize("trap,route", [
    (TrapPotential.harmonic(1.0, 1), "dense"),
    (TrapPotential.harmonic(1.0, 1), "modes"),
    (TrapPotential.harmonic(1.0, 2), "modes"),
    (TrapPotential.power(1.0, 4.0, 1), "dense"),
    (TrapPotential.box(1.0, 1), "dense"),
])
def test_grid_sigma_matches_spectral_value(trap, route):
    table = _table(trap, 0.01, 128)
    grid = build_grid(trap, table, route=route, G=128, with_trace=False)
    res = principal_eigenvalue(grid)
    assert res.converged
    assert res.sigma == pytest.approx(exact_sigma(table), rel=1e-6)


@pytest.mark.filterwarnings("ignore:dense grid needs")
def test_dense_grid_refinement_and_trace():
    trap = TrapPotential.harmonic(1.0, 1)
    table = _table(trap, 0.005, 256)
    exact = exact_sigma(table)
    errs = [abs(principal_eigenvalue(build_grid(trap, table, route="dense", G=G)).sigma - exact)
            for G in (16, 32)]
    assert errs[1] < errs[0]
    grid = build_grid(trap, table, route="dense", G=256)
    assert grid.trace == pytest.approx(256, rel=5e-3)


def test_auto_route_avoids_under_resolved_dense_grid():
    # no condensate in d = 1 and tiny a: the short loops need a fine grid
    trap = TrapPotential.harmonic(1.0, 1)
    table = _table(trap, (1 / 128) ** 2, 128)
    with pytest.warns(RuntimeWarning, match="dense grid needs"):
        build_grid(trap, table, route="dense", G=64, with_trace=False)
    grid = build_grid(trap, table, G=64, with_trace=False)
    assert grid.route == "modes"
    assert principal_eigenvalue(grid).sigma == pytest.approx(exact_sigma(table), rel=1e-6)


def test_dense_route_rejects_higher_dimensions():
    trap = TrapPotential.harmonic(1.0, 2)
    with pytest.raises(ConfigError):
        build_grid(trap, _table(trap, 0.1, 10), route="dense")


def test_grid_csv_export(tmp_path):
    trap = TrapPotential.harmonic(1.0, 2)
    grid = build_grid(trap, _table(trap, 0.05, 20), G=16, n_modes=4, with_trace=False)
    nodes_path, values_path = grid.write_csv(tmp_path)
    rows = list(csv.DictReader(open(values_path)))
    assert len(rows) == 16 * 16
    assert len(list(csv.DictReader(open(nodes_path)))) == 16


def test_condensate_profile_mass_and_shape():
    trap = TrapPotential.harmonic(1.0, 1)
    a, N, T = 1e-3, 1024, 40
    table = _table(trap, a, N)
    nodes, weights = gauss_legendre_panels(12 * a**0.25, 64)
    prof = condensate_profile(trap, table, chi=2.0, rho_w=1.0, x=nodes, T=T)
    mass = np.sum(weights * prof.exact_long_loop_part)
    assert mass == pytest.approx(long_loop_mass(table, T), rel=1e-9)
    assert np.sum(weights * prof.predicted) == pytest.approx(0.5 * N, rel=1e-9)
    # the long-loop diagonal is peaked at the origin like phi_1^2
    assert abs(nodes[np.argmax(prof.exact_long_loop_part)]) == pytest.approx(np.min(np.abs(nodes)))
    with pytest.raises(ConfigError):
        condensate_profile(trap, table, chi=0.5, rho_w=1.0, x=nodes)


def test_toy_weights_need_lambda():
    table = build_table(CycleWeights.from_values([1.0, 2.0]))
    with pytest.raises(ConfigError):
        exact_sigma(table)
    assert exact_sigma(table, lambda1=0.0) == pytest.approx(
        float(np.sum(np.exp(log_coefficients(table)))))
