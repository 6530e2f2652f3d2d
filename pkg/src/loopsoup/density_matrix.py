"""One-particle reduced density matrix of the canonical gas.

    gamma_N(x, y) = sum_{r=1}^{N} K_{beta a r}(x, y) h_{N-r} / h_N

with ``K_t`` the heat kernel of ``-Laplace + w/a``.  The same value follows
from chemically tilted weights, where every term picks up ``exp(beta mu a r)``
and the table is built from the tilted intensities.

Since ``gamma_N = F(H)`` with ``F(lam) = sum_r c_r exp(-beta a r lam)`` and
``H = -Laplace + w/a``, the principal eigenvalue is exactly ``F(lam_1)``.  The
grid routes below recover it by power iteration on a quadrature
discretisation:

* ``dense`` (d = 1): the ``G x G`` kernel matrix summed over all ``r``;
* ``modes`` (any d): one-dimensional eigenmodes sampled on Gauss-Legendre
  nodes, a diagonal core ``F(lam_n)`` over the leading tensor modes and a
  factorised matrix-vector product.
"""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np
from scipy.special import logsumexp

from .cycle_weights import CycleWeights, threshold
from .errors import ConfigError, SolverError
from .partition import PartitionTable
from .spectral import AxisSpectrum, BoxAxis, HarmonicAxis, PowerAxis, axis_spectrum
from .traps import TrapKind, TrapPotential, confinement_radius

_R_CHUNK = 1024
#: most finite-difference modes a power-trap kernel eigen-sum may request
POWER_MODE_LIMIT = 400


# ---------------------------------------------------------------------------
# coefficients and kernels
# ---------------------------------------------------------------------------


def log_coefficients(table: PartitionTable, N: int | None = None) -> np.ndarray:
    """``log c_r`` for ``r = 1..N``: ``log h_{N-r} - log h_N`` plus the tilt ``beta mu a r``.

    With a tilted table the tilt factor undoes the ``exp(beta mu a n)``
    scaling of ``h_n``, so both paths give the same coefficients.
    """
    N = table.n_max if N is None else int(N)
    if not 1 <= N <= table.n_max or not np.isfinite(table.log_h[N]):
        raise ConfigError(f"table cannot supply h_N for N={N}")
    w = table.weights
    r = np.arange(1, N + 1, dtype=float)
    return table.log_h[N - np.arange(1, N + 1)] - table.log_h[N] + w.beta * w.mu * w.a * r


def axis_log_kernels(axis: AxisSpectrum, times: np.ndarray, x, y) -> np.ndarray:
    """``log k_t(x, y)`` for every ``t`` in ``times``; shape ``times.shape + broadcast(x, y).shape``."""
    times = np.asarray(times, dtype=float)
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if isinstance(axis, HarmonicAxis):
        nu = axis.nu
        z = (2.0 * nu * times).reshape(times.shape + (1,) * np.broadcast(x, y).ndim)
        log_sinh = z + np.log(-np.expm1(-2.0 * z)) - math.log(2.0)
        coth = 1.0 / np.tanh(z)
        csch = np.exp(-log_sinh)
        quad = 0.5 * nu * ((x * x + y * y) * coth - 2.0 * x * y * csch)
        return 0.5 * (math.log(nu) - math.log(2.0 * math.pi) - log_sinh) - quad
    # eigen-sum with enough modes for the smallest time
    limit = POWER_MODE_LIMIT if isinstance(axis, PowerAxis) else 20000
    m = axis.levels_for_time(float(np.min(times)), m_max=limit)
    lam = axis.levels(m)
    shape = np.broadcast(x, y).shape
    prod = (axis.eigenfunctions(m, x) * axis.eigenfunctions(m, y)).reshape(m, -1)
    vals = np.exp(-np.outer(times.ravel(), lam - lam[0])) @ prod
    vals = vals * np.exp(-times.ravel() * lam[0])[:, None]
    with np.errstate(divide="ignore"):
        return np.log(np.maximum(vals, 0.0)).reshape(times.shape + shape)


def _points(trap: TrapPotential, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if trap.d == 1 and (x.ndim == 0 or x.shape[-1] != 1):
        x = x[..., None]
    if x.shape[-1] != trap.d:
        raise ConfigError(f"points need trailing dimension {trap.d}")
    return x


def _kernel_axis(trap: TrapPotential, a: float, N: int, beta: float) -> AxisSpectrum:
    return axis_spectrum(trap, a, t_min=beta * a)


def gamma(trap: TrapPotential, beta: float, a: float, N: int, table: PartitionTable, x, y,
          r_range: tuple[int, int] | None = None, log: bool = False):
    """``gamma_N(x, y)`` summed over every loop length ``r`` (or ``r`` in ``r_range``, inclusive).

    ``table`` may be built from untilted or tilted weights; the coefficients
    absorb the tilt.  ``x`` and ``y`` broadcast over leading dimensions.
    """
    w = table.weights
    if abs(w.beta - beta) > 1e-15 * beta or abs(w.a - a) > 1e-15 * a:
        raise ConfigError("table weights were built for a different beta or a")
    px = _points(trap, x)
    py = _points(trap, y)
    log_c = log_coefficients(table, N)
    r_lo, r_hi = (1, N) if r_range is None else r_range
    if not 1 <= r_lo <= r_hi <= N:
        raise ConfigError("invalid r range")
    axis = _kernel_axis(trap, a, N, beta)
    shape = np.broadcast(px[..., 0], py[..., 0]).shape
    acc = np.full(shape, -np.inf)
    for start in range(r_lo, r_hi + 1, _R_CHUNK):
        stop = min(start + _R_CHUNK, r_hi + 1)
        r = np.arange(start, stop, dtype=float)
        logk = np.zeros((r.size,) + shape)
        for k in range(trap.d):
            logk = logk + axis_log_kernels(axis, beta * a * r, px[..., k], py[..., k])
        terms = logk + log_c[start - 1:stop - 1].reshape((-1,) + (1,) * len(shape))
        acc = np.logaddexp(acc, logsumexp(terms, axis=0))
    out = acc if log else np.exp(acc)
    return float(out) if np.ndim(out) == 0 else out


def spectral_function(table: PartitionTable, lam, N: int | None = None) -> np.ndarray:
    """``F(lam) = sum_r c_r exp(-beta a r lam)``, the eigenvalue of ``gamma_N`` on a mode with energy ``lam``."""
    log_c = log_coefficients(table, N)
    w = table.weights
    lam = np.atleast_1d(np.asarray(lam, dtype=float))
    r = np.arange(1, log_c.size + 1, dtype=float)
    out = np.empty(lam.size)
    flat = lam.ravel()
    for i0 in range(0, flat.size, 256):
        blk = flat[i0:i0 + 256]
        out[i0:i0 + blk.size] = np.exp(logsumexp(log_c[None, :] - w.beta * w.a * np.outer(blk, r), axis=1))
    return out.reshape(lam.shape)


def exact_sigma(table: PartitionTable, lambda1: float | None = None, N: int | None = None) -> float:
    """Principal eigenvalue ``F(lam_1)`` of ``gamma_N``."""
    lam = table.weights.lambda1 if lambda1 is None else lambda1
    if not math.isfinite(lam):
        raise ConfigError("ground-state energy unknown; pass lambda1")
    return float(spectral_function(table, lam, N)[0])


# ---------------------------------------------------------------------------
# quadrature grids
# ---------------------------------------------------------------------------


def gauss_legendre_panels(R: float, n_panels: int, order: int = 8) -> tuple[np.ndarray, np.ndarray]:
    """Composite Gauss-Legendre nodes and weights on ``[-R, R]``."""
    g, gw = np.polynomial.legendre.leggauss(order)
    edges = np.linspace(-R, R, n_panels + 1)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[1:] + edges[:-1])
    nodes = (mid[:, None] + half[:, None] * g[None, :]).ravel()
    weights = (half[:, None] * gw[None, :]).ravel()
    return nodes, weights


def _length_scale(trap: TrapPotential, a: float) -> float:
    """Width of the ground state of ``-Laplace + w/a`` along one axis."""
    if trap.kind is TrapKind.HARMONIC:
        return (a / trap.omega) ** 0.25
    if trap.kind is TrapKind.BOX:
        return trap.L
    return (a / trap.c) ** (1.0 / (trap.alpha_exp + 2.0))


def trace_grid(trap: TrapPotential, beta: float, a: float, order: int = 8) -> tuple[np.ndarray, np.ndarray]:
    """One-axis grid resolving every diagonal ``k_r(x, x)`` (``r >= 1``)."""
    R = confinement_radius(trap, beta, decay=30.0)
    scale = _length_scale(trap, a)
    if trap.kind is TrapKind.BOX:
        scale = min(scale, math.sqrt(beta * a))
    else:
        R = max(R, 8.0 * scale)
    width = 0.5 * min(scale, R / 4.0)
    n_panels = max(8, int(math.ceil(2.0 * R / width)))
    return gauss_legendre_panels(R, n_panels, order)


def mode_grid(trap: TrapPotential, axis: AxisSpectrum, n_modes: int, n_nodes: int,
              order: int = 8) -> tuple[np.ndarray, np.ndarray]:
    """One-axis grid covering the leading ``n_modes`` eigenmodes."""
    if isinstance(axis, BoxAxis):
        R = 0.5 * axis.L
    elif isinstance(axis, HarmonicAxis):
        R = (math.sqrt(2.0 * n_modes + 1.0) + 6.0) / math.sqrt(axis.nu)
    else:
        lam_top = float(axis.unit_levels(n_modes)[-1])
        R = axis.ell * (lam_top ** (1.0 / axis.alpha) + 6.0)
    n_panels = max(1, n_nodes // order)
    return gauss_legendre_panels(R, n_panels, order)


@dataclass
class PowerResult:
    sigma: float
    vector: np.ndarray
    iterations: int
    converged: bool
    history: list[float] = field(default_factory=list)


@dataclass
class DensityMatrixGrid:
    """Quadrature discretisation of ``gamma_N`` (tensor grid of ``nodes`` per axis)."""

    d: int
    nodes: np.ndarray
    weights: np.ndarray
    matvec: Callable[[np.ndarray], np.ndarray]
    values: np.ndarray | None = None
    route: str = "dense"
    N: int = 0
    trace: float = math.nan
    meta: dict = field(default_factory=dict)

    @classmethod
    def from_dense(cls, nodes, weights, values) -> "DensityMatrixGrid":
        values = np.asarray(values, dtype=float)
        nodes = np.asarray(nodes, dtype=float)
        weights = np.asarray(weights, dtype=float)
        if values.shape != (nodes.size, nodes.size):
            raise ConfigError("values must be a G x G matrix")
        return cls(1, nodes, weights, lambda f: values @ f, values, "dense",
                   trace=float(np.sum(weights * np.diag(values))))

    @property
    def quad_weights(self) -> np.ndarray:
        """Tensor weights flattened to match vectors on the grid."""
        w = self.weights
        for _ in range(self.d - 1):
            w = np.multiply.outer(w, self.weights)
        return w.ravel()

    def write_csv(self, out_dir: str | Path, prefix: str = "gamma") -> list[Path]:
        """Nodes file and values file (a one-axis slice through the origin for ``d > 1``)."""
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        nodes_path = out / f"{prefix}_nodes.csv"
        with open(nodes_path, "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(["i", "x", "weight"])
            for i, (xv, wv) in enumerate(zip(self.nodes, self.weights)):
                wr.writerow([i, repr(float(xv)), repr(float(wv))])
        values_path = out / f"{prefix}_values.csv"
        mat = self.values if self.values is not None else self.meta.get("slice")
        with open(values_path, "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(["i", "j", "gamma"])
            if mat is not None:
                for i in range(mat.shape[0]):
                    for j in range(mat.shape[1]):
                        wr.writerow([i, j, repr(float(mat[i, j]))])
        return [nodes_path, values_path]


def trace_by_quadrature(trap: TrapPotential, table: PartitionTable, N: int | None = None,
                        nodes=None, weights=None) -> float:
    """``sum_r c_r (int k_r(x, x) dx)^d`` with the per-axis integral done by quadrature."""
    w = table.weights
    log_c = log_coefficients(table, N)
    if nodes is None:
        nodes, weights = trace_grid(trap, w.beta, w.a)
    axis = _kernel_axis(trap, w.a, log_c.size, w.beta)
    r = np.arange(1, log_c.size + 1, dtype=float)
    log_tr = np.empty(r.size)
    lw = np.log(weights)
    for i0 in range(0, r.size, _R_CHUNK):
        rr = r[i0:i0 + _R_CHUNK]
        lk = axis_log_kernels(axis, w.beta * w.a * rr, nodes, nodes)
        log_tr[i0:i0 + rr.size] = logsumexp(lk + lw[None, :], axis=1)
    return float(np.exp(logsumexp(log_c + trap.d * log_tr)))


def build_grid(trap: TrapPotential, table: PartitionTable, N: int | None = None,
               route: str = "auto", G: int = 128, n_modes: int = 12,
               with_trace: bool = True) -> DensityMatrixGrid:
    """Discretise ``gamma_N`` on a Gauss-Legendre grid.

    ``route="dense"`` (d = 1 only) assembles the full ``G x G`` matrix from the
    r-sum of kernels; ``route="modes"`` uses ``n_modes`` eigenmodes per axis on
    ``G`` nodes per axis.  ``auto`` picks dense in one dimension when ``G``
    nodes resolve the shortest loops, and modes otherwise.
    """
    w = table.weights
    N = table.n_max if N is None else int(N)
    if route == "auto":
        route = "dense" if trap.d == 1 and trace_grid(trap, w.beta, w.a)[0].size <= G else "modes"
    if route == "dense":
        if trap.d != 1:
            raise ConfigError("dense route is only available in one dimension")
        nodes, weights = trace_grid(trap, w.beta, w.a)
        if nodes.size > G:
            warnings.warn(f"dense grid needs {nodes.size} nodes to resolve the shortest loops but G={G}; "
                          "sigma may be inaccurate", RuntimeWarning, stacklevel=2)
            R = float(np.max(np.abs(nodes))) + 1e-12
            nodes, weights = gauss_legendre_panels(R, max(1, G // 8))
        X, Y = np.meshgrid(nodes, nodes, indexing="ij")
        values = gamma(trap, w.beta, w.a, N, table, X[..., None], Y[..., None])
        values = 0.5 * (values + values.T)
        grid = DensityMatrixGrid(1, nodes, weights, lambda f: values @ f, values, "dense", N)
        grid.trace = float(np.sum(weights * np.diag(values)))
        return grid
    if route != "modes":
        raise ConfigError(f"unknown route {route!r}")
    axis = _kernel_axis(trap, w.a, N, w.beta)
    nodes, weights = mode_grid(trap, axis, n_modes, G)
    phi = axis.eigenfunctions(n_modes, nodes).T  # (G, M)
    lam = axis.levels(n_modes)
    lam_tot = lam
    for _ in range(trap.d - 1):
        lam_tot = np.add.outer(lam_tot, lam)
    core = spectral_function(table, lam_tot, N)
    d = trap.d
    G1 = nodes.size

    def matvec(f: np.ndarray) -> np.ndarray:
        t = f.reshape((G1,) * d)
        for k in range(d):
            t = np.moveaxis(np.tensordot(phi.T, np.moveaxis(t, k, 0), axes=(1, 0)), 0, k)
        t = t * core
        for k in range(d):
            t = np.moveaxis(np.tensordot(phi, np.moveaxis(t, k, 0), axes=(1, 0)), 0, k)
        return t.ravel()

    grid = DensityMatrixGrid(d, nodes, weights, matvec, None, "modes", N)
    grid.meta["n_modes"] = n_modes
    # one-axis slice through the origin for export: modes with the other indices at 0
    origin = axis.eigenfunctions(n_modes, np.zeros(1))[:, 0]
    core_slice = core
    for _ in range(d - 1):
        core_slice = np.tensordot(core_slice, origin**2, axes=(-1, 0))
    grid.meta["slice"] = (phi * core_slice) @ phi.T
    if with_trace:
        grid.trace = trace_by_quadrature(trap, table, N)
    return grid


def principal_eigenvalue(grid: DensityMatrixGrid, rtol: float = 1e-10, max_iter: int = 10_000,
                         start: np.ndarray | None = None) -> PowerResult:
    """Power iteration on the quadrature-weighted operator ``f -> int gamma(., y) f(y) dy``.

    Works with the symmetric form ``W^(1/2) Gamma W^(1/2)``; the Rayleigh
    quotient is returned as ``sigma``.
    """
    qw = grid.quad_weights
    sq = np.sqrt(qw)
    v = np.ones_like(qw) if start is None else np.asarray(start, dtype=float).ravel()
    v = v / np.linalg.norm(v)
    history = []
    sigma_old = math.nan
    for it in range(1, max_iter + 1):
        bv = sq * grid.matvec(sq * v)
        sigma = float(v @ bv)
        history.append(sigma)
        norm = np.linalg.norm(bv)
        if not norm > 0:
            raise SolverError("power iteration collapsed to the zero vector")
        v = bv / norm
        if it > 1 and abs(sigma - sigma_old) <= rtol * abs(sigma):
            return PowerResult(sigma, v / sq, it, True, history[-20:])
        sigma_old = sigma
    return PowerResult(history[-1], v / sq, max_iter, False, history[-20:])


# ---------------------------------------------------------------------------
# condensate profile
# ---------------------------------------------------------------------------


@dataclass
class CondensateProfile:
    x: np.ndarray
    predicted: np.ndarray
    exact_long_loop_part: np.ndarray
    T: int


def condensate_profile(trap: TrapPotential, table: PartitionTable, chi: float, rho_w: float, x,
                       N: int | None = None, T: int | None = None) -> CondensateProfile:
    """``N (1 - rho_w/chi) phi_1(x)^2`` and the exact long-loop diagonal ``sum_{r > T} c_r K_r(x, x)``."""
    w = table.weights
    N = table.n_max if N is None else int(N)
    if chi <= rho_w:
        raise ConfigError("condensate profile needs chi > rho_w")
    px = _points(trap, x)
    axis = _kernel_axis(trap, w.a, N, w.beta)
    phi = np.ones(px.shape[:-1])
    for k in range(trap.d):
        phi = phi * axis.eigenfunctions(1, px[..., k])[0]
    pred = N * (1.0 - rho_w / chi) * phi**2
    if T is None:
        T = threshold(N, w.a, trap.alpha)
    T = min(max(T, 0), N - 1)
    exact = gamma(trap, w.beta, w.a, N, table, px, px, r_range=(T + 1, N))
    return CondensateProfile(np.asarray(x, dtype=float), pred, np.asarray(exact), T)


def long_loop_mass(table: PartitionTable, T: int, N: int | None = None) -> float:
    """``int sum_{r > T} c_r K_r(x, x) dx = sum_{r > T} c_r t_r``."""
    log_c = log_coefficients(table, N)
    lt = table.weights.log_t[:log_c.size] - table.weights.beta * table.weights.mu * table.weights.a \
        * np.arange(1, log_c.size + 1)
    if T >= log_c.size:
        return 0.0
    return float(np.exp(logsumexp(log_c[T:] + lt[T:])))


def write_profile_csv(profile: CondensateProfile, path: str | Path) -> None:
    xs = profile.x.reshape(len(profile.predicted), -1) if profile.x.ndim > 1 else profile.x[:, None]
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["x", "predicted", "exact_long_loop_part"])
        for xi, p, e in zip(xs, profile.predicted, profile.exact_long_loop_part):
            wr.writerow([" ".join(repr(float(v)) for v in np.atleast_1d(xi)), repr(float(p)), repr(float(e))])
