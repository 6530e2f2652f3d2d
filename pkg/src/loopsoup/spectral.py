"""Spectra and heat kernels of the one-particle operator ``-Laplace + w/a``.

The Brownian motion here has generator ``Laplace`` (variance ``2t``), so the
free kernel is ``(4 pi t)^(-d/2) exp(-|x-y|^2 / (4t))``.

Every built-in trap is separable, so all d-dimensional objects are assembled
from one-dimensional axis spectra:

* harmonic axis: levels ``(2n+1) nu`` with ``nu = sqrt(omega/a)``, Hermite
  functions and the Mehler kernel in closed form;
* box axis: Dirichlet levels ``(pi n / L)^2``, sine modes, an image-sum kernel
  and a Jacobi-transformed trace;
* power axis: a three-point finite-difference discretisation in the natural
  length scale ``(a/c)^(1/(alpha+2))`` with Romberg extrapolation over
  successive mesh halvings.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.linalg import eigh_tridiagonal, eigvalsh_tridiagonal
from scipy.special import logsumexp

from .errors import ConfigError, SolverError, TruncationError
from .traps import TrapKind, TrapPotential

#: relative tail tolerance for eigen-sums, ``M exp(-t (lam_{M+1} - lam_1)) < EIGEN_SUM_TOL``
EIGEN_SUM_TOL = 1e-12
#: heat-rule exponent: ``t * v(R) / a >= HEAT_RULE``
HEAT_RULE = 46.0
_LOG_2PI = math.log(2.0 * math.pi)


def _log_2sinh(z):
    """``log(2 sinh z)`` for ``z > 0`` without overflow."""
    z = np.asarray(z, dtype=float)
    return z + np.log(-np.expm1(-2.0 * z))


# ---------------------------------------------------------------------------
# one-dimensional axis spectra
# ---------------------------------------------------------------------------


class AxisSpectrum:
    """Spectral data of a one-dimensional factor ``-d^2/dx^2 + v(x)/a``."""

    #: half-width of the region where eigenfunctions live (``inf`` if unbounded)
    support: float = math.inf

    def levels(self, m: int) -> np.ndarray:
        raise NotImplementedError

    def max_levels(self) -> int:
        """How many levels the axis can supply."""
        return 1 << 30

    def eigenfunctions(self, m: int, x) -> np.ndarray:
        """Array of shape ``(m,) + x.shape`` with ``phi_0 .. phi_{m-1}`` at ``x``."""
        raise NotImplementedError

    def log_trace(self, t) -> np.ndarray:
        """``log sum_n exp(-t lam_n)`` for an array of times."""
        raise NotImplementedError

    def log_kernel(self, t: float, x, y) -> np.ndarray:
        """Log of the one-dimensional heat kernel, default via the eigen-sum."""
        return np.log(self.eigen_sum_kernel(t, x, y))

    def levels_for_time(self, t: float, m_max: int = 20000) -> int:
        """Smallest ``M`` with ``M exp(-t (lam_{M+1} - lam_1)) < EIGEN_SUM_TOL``."""
        m = 16
        while True:
            lam = self.levels(m + 1)
            gaps = t * (lam[1:] - lam[0])
            ok = np.nonzero(np.arange(1, m + 1) * np.exp(-gaps) < EIGEN_SUM_TOL)[0]
            if ok.size:
                return int(ok[0]) + 1
            cap = min(m_max, self.max_levels() - 1)
            if m >= cap:
                raise TruncationError(f"eigen-sum at t={t:g} needs more than {cap} levels")
            m = min(2 * m, cap)

    def eigen_sum_kernel(self, t: float, x, y, m: int | None = None) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        if m is None:
            m = self.levels_for_time(t)
        lam = self.levels(m)
        fx = self.eigenfunctions(m, x)
        fy = self.eigenfunctions(m, y)
        w = np.exp(-t * (lam - lam[0]))
        val = np.tensordot(w, fx * fy, axes=(0, 0)) * math.exp(-t * lam[0])
        inside = (np.abs(x) < self.support) & (np.abs(y) < self.support)
        return np.where(inside, val, 0.0)


@dataclass(frozen=True)
class HarmonicAxis(AxisSpectrum):
    """``-d^2/dx^2 + nu^2 x^2`` with ``nu = sqrt(omega / a)``."""

    nu: float

    def levels(self, m: int) -> np.ndarray:
        return (2.0 * np.arange(m) + 1.0) * self.nu

    def eigenfunctions(self, m: int, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return self.nu**0.25 * hermite_functions(m, math.sqrt(self.nu) * x)

    def log_trace(self, t) -> np.ndarray:
        return -_log_2sinh(np.atleast_1d(np.asarray(t, dtype=float)) * self.nu)

    def log_kernel(self, t: float, x, y) -> np.ndarray:
        """Mehler kernel of the semigroup generated by ``-d^2/dx^2 + nu^2 x^2``."""
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        z = 2.0 * self.nu * t
        log_sinh = _log_2sinh(z) - math.log(2.0)
        coth = 1.0 / math.tanh(z)
        csch = math.exp(-log_sinh)
        quad = 0.5 * self.nu * ((x * x + y * y) * coth - 2.0 * x * y * csch)
        return 0.5 * (math.log(self.nu) - _LOG_2PI - log_sinh) - quad

    def kernel(self, t: float, x, y) -> np.ndarray:
        return np.exp(self.log_kernel(t, x, y))


def hermite_functions(m: int, x) -> np.ndarray:
    """Orthonormal Hermite functions ``h_0 .. h_{m-1}`` (eigenfunctions of ``-d^2 + x^2``)."""
    x = np.asarray(x, dtype=float)
    out = np.empty((m,) + x.shape)
    out[0] = math.pi**-0.25 * np.exp(-0.5 * x * x)
    if m > 1:
        out[1] = math.sqrt(2.0) * x * out[0]
    for n in range(1, m - 1):
        out[n + 1] = math.sqrt(2.0 / (n + 1)) * x * out[n] - math.sqrt(n / (n + 1)) * out[n - 1]
    return out


@dataclass(frozen=True)
class BoxAxis(AxisSpectrum):
    """Dirichlet Laplacian on ``[-L/2, L/2]``; independent of ``a``."""

    L: float

    @property
    def support(self) -> float:  # type: ignore[override]
        return 0.5 * self.L

    @property
    def k(self) -> float:
        return math.pi / self.L

    def levels(self, m: int) -> np.ndarray:
        n = np.arange(1, m + 1, dtype=float)
        return (self.k * n) ** 2

    def eigenfunctions(self, m: int, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        n = np.arange(1, m + 1, dtype=float).reshape((m,) + (1,) * x.ndim)
        vals = math.sqrt(2.0 / self.L) * np.sin(n * self.k * (x + 0.5 * self.L))
        return np.where(np.abs(x) <= 0.5 * self.L, vals, 0.0)

    def log_trace(self, t) -> np.ndarray:
        """``log theta(t)`` with ``theta(t) = sum_{n>=1} exp(-t (pi n/L)^2)``.

        Direct summation when ``t k^2 >= 1``; otherwise the Jacobi transform
        ``theta = (L / sqrt(4 pi t)) (1 + 2 sum_m exp(-m^2 L^2 / t)) - 1/2``.
        Both series are cut where terms drop below ``exp(-60)``.
        """
        t = np.atleast_1d(np.asarray(t, dtype=float))
        if np.any(t <= 0):
            raise ConfigError("trace time must be > 0")
        out = np.empty_like(t)
        k2 = self.k**2
        direct = t * k2 >= 1.0
        if np.any(direct):
            n = np.arange(1, 10, dtype=float)
            out[direct] = logsumexp(-np.outer(t[direct] * k2, n * n), axis=1)
        if np.any(~direct):
            ts = t[~direct]
            m = np.arange(1, 4, dtype=float)
            series = 1.0 + 2.0 * np.sum(np.exp(-np.outer(self.L**2 / ts, m * m)), axis=1)
            out[~direct] = np.log(self.L / np.sqrt(4.0 * math.pi * ts) * series - 0.5)
        return out

    def image_kernel(self, t: float, x, y) -> np.ndarray:
        """Method of images: ``sum_m g(x - y + 2mL) - g(x + y + (2m+1)L)``."""
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        L = self.L
        mmax = int(math.ceil(math.sqrt(4.0 * t * 40.0) / (2.0 * L))) + 2
        m = np.arange(-mmax, mmax + 1, dtype=float).reshape((-1,) + (1,) * np.broadcast(x, y).ndim)
        pref = 1.0 / math.sqrt(4.0 * math.pi * t)
        direct = np.exp(-((x - y + 2.0 * m * L) ** 2) / (4.0 * t))
        mirror = np.exp(-((x + y + (2.0 * m + 1.0) * L) ** 2) / (4.0 * t))
        val = pref * np.sum(direct - mirror, axis=0)
        inside = (np.abs(x) < 0.5 * L) & (np.abs(y) < 0.5 * L)
        return np.where(inside, np.maximum(val, 0.0), 0.0)


class PowerAxis(AxisSpectrum):
    """Finite-difference spectrum of ``-d^2/dx^2 + (c/a)|x|^alpha``.

    The operator is solved in the natural length ``ell = (a/c)^(1/(alpha+2))``
    where it reads ``ell^-2 (-d^2/du^2 + |u|^alpha)``.  The interval
    ``[-U, U]`` satisfies the heat rule ``tau_min U^alpha >= 46`` and contains
    the ground state to ``exp(-30)``.  Levels and heat traces are
    Romberg-extrapolated in ``h^2`` over mesh halvings until the last two
    diagonal extrapolants agree to ``rtol`` (levels) or ``trace_rtol`` (traces).
    """

    def __init__(self, alpha: float, ell: float, tau_min: float = 1.0, rtol: float = 1e-8,
                 trace_rtol: float = 1e-7,
                 max_points: int = 1 << 17):
        if alpha <= 0 or ell <= 0 or tau_min <= 0:
            raise ConfigError("power axis needs alpha, ell, tau_min > 0")
        self.alpha = float(alpha)
        self.ell = float(ell)
        self.tau_min = float(tau_min)
        self.rtol = rtol
        self.trace_rtol = trace_rtol
        U = max((HEAT_RULE / tau_min) ** (1.0 / alpha), (15.0 * (alpha + 2.0)) ** (2.0 / (alpha + 2.0)))
        self.U = U
        h0 = min(0.05, 0.35 * math.sqrt(tau_min))
        n0 = max(64, int(math.ceil(2.0 * U / h0)))
        self.meshes = [n0, 2 * n0, 4 * n0]
        self.max_points = max_points
        self.lam_cut = 60.0 / tau_min
        self._spectra = [self._solve(n) for n in self.meshes]
        self._vec_cache: dict[int, tuple[np.ndarray, list[CubicSpline]]] = {}
        self.level_error = 0.0
        self.trace_error = 0.0

    def _matrix(self, n_int: int):
        h = 2.0 * self.U / n_int
        u = -self.U + h * np.arange(1, n_int)
        diag = 2.0 / h**2 + np.abs(u) ** self.alpha
        off = np.full(n_int - 2, -1.0 / h**2)
        return u, h, diag, off

    def _solve(self, n_int: int) -> np.ndarray:
        if n_int > self.max_points:
            raise SolverError(f"finite-difference mesh would exceed {self.max_points} points")
        _, _, diag, off = self._matrix(n_int)
        try:
            lam = eigvalsh_tridiagonal(diag, off, lapack_driver="sterf")
        except np.linalg.LinAlgError as exc:  # pragma: no cover - LAPACK failure
            raise SolverError(f"tridiagonal eigensolver failed: {exc}") from exc
        lam = np.sort(lam)
        return lam[lam <= self.lam_cut]

    def _refine(self) -> None:
        n = 2 * self.meshes[-1]
        self._spectra.append(self._solve(n))
        self.meshes.append(n)

    @staticmethod
    def _romberg(values: list[np.ndarray]) -> tuple[np.ndarray, np.ndarray]:
        """Romberg extrapolation in ``h^2`` over mesh halvings; returns (estimate, error)."""
        prev = [np.asarray(v, dtype=float) for v in values]
        diag = [prev[-1]]
        k = 1
        while len(prev) > 1:
            f = 4.0**k
            prev = [(f * prev[i + 1] - prev[i]) / (f - 1.0) for i in range(len(prev) - 1)]
            diag.append(prev[-1])
            k += 1
        return diag[-1], np.abs(diag[-1] - diag[-2])

    def max_levels(self) -> int:
        return min(len(s) for s in self._spectra)

    def unit_levels(self, m: int) -> np.ndarray:
        """Extrapolated levels of ``-d^2/du^2 + |u|^alpha``."""
        while True:
            if any(len(s) < m for s in self._spectra):
                raise TruncationError(
                    f"only {min(len(s) for s in self._spectra)} levels below the cut {self.lam_cut:g}; "
                    "construct the axis with a smaller tau_min")
            est, err = self._romberg([s[:m] for s in self._spectra])
            rel = float(np.max(err / np.abs(est)))
            if rel < self.rtol:
                self.level_error = rel
                return est
            self._refine()

    def levels(self, m: int) -> np.ndarray:
        return self.unit_levels(m) / self.ell**2

    def unit_log_trace(self, tau) -> np.ndarray:
        tau = np.atleast_1d(np.asarray(tau, dtype=float))
        if np.any(tau < self.tau_min * (1 - 1e-12)):
            raise TruncationError(f"trace requested below tau_min={self.tau_min:g}")
        while True:
            tr = [np.exp(logsumexp(-np.outer(tau, s), axis=1)) for s in self._spectra]
            est, err = self._romberg(tr)
            rel = float(np.max(err / est))
            if rel < self.trace_rtol:
                self.trace_error = max(self.trace_error, rel)
                return np.log(est)
            self._refine()

    def log_trace(self, t) -> np.ndarray:
        return self.unit_log_trace(np.asarray(t, dtype=float) / self.ell**2)

    def _splines(self, m: int) -> list[CubicSpline]:
        n_int = self.meshes[-1]
        cached = self._vec_cache.get(n_int)
        if cached is None or len(cached[1]) < m:
            u, h, diag, off = self._matrix(n_int)
            _, vecs = eigh_tridiagonal(diag, off, select="i", select_range=(0, m - 1))
            vecs = vecs / math.sqrt(h)
            splines = []
            grid = np.concatenate(([-self.U], u, [self.U]))
            for i in range(m):
                v = vecs[:, i]
                # sign: positive slope at the left end (phi_0 > 0)
                if v[np.argmax(np.abs(v) > 1e-8 * np.max(np.abs(v)))] < 0:
                    v = -v
                splines.append(CubicSpline(grid, np.concatenate(([0.0], v, [0.0]))))
            self._vec_cache[n_int] = (u, splines)
            cached = self._vec_cache[n_int]
        return cached[1][:m]

    def eigenfunctions(self, m: int, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        u = x / self.ell
        out = np.empty((m,) + x.shape)
        for i, sp in enumerate(self._splines(m)):
            out[i] = np.where(np.abs(u) < self.U, sp(np.clip(u, -self.U, self.U)), 0.0)
        return out / math.sqrt(self.ell)


@lru_cache(maxsize=64)
def _power_axis_cached(alpha: float, ell: float, tau_min: float) -> PowerAxis:
    return PowerAxis(alpha, ell, tau_min)


def axis_spectrum(trap: TrapPotential, a: float, t_min: float = 1.0) -> AxisSpectrum:
    """One-dimensional factor of ``-Laplace + w/a`` for a separable trap.

    ``t_min`` only matters for the power family, where it fixes the smallest
    heat-trace time the finite-difference axis must certify.
    """
    if not a > 0:
        raise ConfigError(f"a must be > 0, got {a!r}")
    if trap.kind is TrapKind.HARMONIC:
        return HarmonicAxis(math.sqrt(trap.omega / a))
    if trap.kind is TrapKind.BOX:
        return BoxAxis(trap.L)
    alpha = trap.alpha_exp
    ell = (a / trap.c) ** (1.0 / (alpha + 2.0))
    tau = t_min / ell**2
    # quantise tau downwards so nearby requests share one solve
    tau_q = 2.0 ** math.floor(math.log2(min(tau, 1.0)))
    return _power_axis_cached(alpha, ell, tau_q)


# ---------------------------------------------------------------------------
# d-dimensional spectrum
# ---------------------------------------------------------------------------


def _smallest_sums(levels: np.ndarray, d: int, m: int) -> tuple[np.ndarray, np.ndarray]:
    """The ``m`` smallest sums ``levels[i_1] + ... + levels[i_d]`` and their index tuples."""
    start = (0,) * d
    heap = [(d * levels[0], start)]
    seen = {start}
    vals, idx = [], []
    while heap and len(vals) < m:
        v, t = heapq.heappop(heap)
        vals.append(v)
        idx.append(t)
        for k in range(d):
            if t[k] + 1 < len(levels):
                nt = t[:k] + (t[k] + 1,) + t[k + 1:]
                if nt not in seen:
                    seen.add(nt)
                    heapq.heappush(heap, (v - levels[t[k]] + levels[t[k] + 1], nt))
    return np.array(vals), np.array(idx, dtype=int).reshape(-1, d)


@dataclass
class Spectrum:
    """First ``M`` eigenvalues of ``-Laplace + w/a`` in ``d`` dimensions."""

    trap: TrapPotential
    a: float
    axis: AxisSpectrum
    eigenvalues: np.ndarray
    multi_indices: np.ndarray
    t_ref: float = 1.0
    truncation_bound: float = field(default=0.0)

    @property
    def d(self) -> int:
        return self.trap.d

    @property
    def lambda1(self) -> float:
        return float(self.eigenvalues[0])

    def eigenfunction(self, i: int, x) -> np.ndarray:
        """``phi_i`` (0-based) at points ``x`` with trailing dimension ``d``."""
        x = np.asarray(x, dtype=float)
        if self.d == 1 and (x.ndim == 0 or x.shape[-1] != 1):
            x = x[..., None]
        idx = self.multi_indices[i]
        m = int(idx.max()) + 1
        out = np.ones(x.shape[:-1])
        for k in range(self.d):
            out = out * self.axis.eigenfunctions(m, x[..., k])[idx[k]]
        return out

    def log_trace(self, t) -> np.ndarray:
        """``log sum_i exp(-t lam_i)`` over the full spectrum (closed form or extrapolated)."""
        return self.d * self.axis.log_trace(t)


def spectrum_of(trap: TrapPotential, a: float, M: int, t_ref: float = 1.0) -> Spectrum:
    """First ``M`` eigenvalues of ``-Laplace + w/a``.

    ``truncation_bound`` is the discarded tail ``sum_{i>M} exp(-t_ref lam_i)``
    obtained as full trace minus the retained partial sum.
    """
    if M < 2:
        raise ConfigError("M must be at least 2")
    axis = axis_spectrum(trap, a, t_min=min(t_ref, 1.0))
    per_axis = M if trap.d == 1 else max(2, int(math.ceil(M ** (1.0 / trap.d))) + 2 * trap.d)
    per_axis = min(per_axis, M)
    levels = axis.levels(per_axis)
    vals, idx = _smallest_sums(levels, trap.d, M)
    full = float(np.exp(trap.d * axis.log_trace(t_ref)[0]))
    partial = float(np.sum(np.exp(-t_ref * vals)))
    tail = max(full - partial, 0.0)
    return Spectrum(trap, a, axis, vals, idx, t_ref, tail)


def scaled_gap_check(trap: TrapPotential, a_sequence, n_levels: int = 2) -> list[dict]:
    """Ratios ``a lam_i(w/a) / (a^(alpha/(alpha+2)) lam_i(W))`` for ``i = 1..n_levels``."""
    ref = spectrum_of(trap, 1.0, max(n_levels, 2))
    expo = trap.alpha_scaling_exponent()
    rows = []
    for a in a_sequence:
        if not (0.0 < a <= 1.0):
            raise ConfigError(f"a must lie in (0, 1], got {a!r}")
        sp = spectrum_of(trap, a, max(n_levels, 2))
        row = {"a": float(a)}
        for i in range(n_levels):
            row[f"ratio_{i + 1}"] = float(a * sp.eigenvalues[i] / (a**expo * ref.eigenvalues[i]))
        rows.append(row)
    return rows


# ---------------------------------------------------------------------------
# heat kernels
# ---------------------------------------------------------------------------


def _split_points(trap: TrapPotential, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if trap.d == 1 and (x.ndim == 0 or x.shape[-1] != 1):
        x = x[..., None]
    if x.shape[-1] != trap.d:
        raise ConfigError(f"points need trailing dimension {trap.d}")
    return x


def axis_log_kernel(axis: AxisSpectrum, t: float, x, y, method: str = "auto") -> np.ndarray:
    """Log of a one-dimensional kernel by the requested route."""
    if method == "auto":
        method = "closed" if isinstance(axis, HarmonicAxis) else "eigen"
    if method == "closed":
        if not isinstance(axis, HarmonicAxis):
            raise ConfigError("closed-form kernel only exists for the harmonic trap")
        return axis.log_kernel(t, x, y)
    if method == "images":
        if not isinstance(axis, BoxAxis):
            raise ConfigError("image-sum kernel only exists for the box")
        with np.errstate(divide="ignore"):
            return np.log(axis.image_kernel(t, x, y))
    if method == "eigen":
        with np.errstate(divide="ignore"):
            return np.log(np.maximum(axis.eigen_sum_kernel(t, x, y), 0.0))
    raise ConfigError(f"unknown kernel method {method!r}")


def heat_kernel(trap: TrapPotential, a: float, t: float, x, y, method: str = "auto",
                log: bool = False):
    """Heat kernel of ``-Laplace + w/a`` at time ``t`` (the bridge total mass).

    ``method``: ``auto`` (Mehler for harmonic, eigen-sum otherwise), ``closed``,
    ``eigen`` or ``images`` (box only).  ``x`` and ``y`` broadcast over their
    leading dimensions.
    """
    if not t > 0:
        raise ConfigError(f"t must be > 0, got {t!r}")
    px = _split_points(trap, x)
    py = _split_points(trap, y)
    axis = axis_spectrum(trap, a, t_min=min(t, 1.0))
    total = 0.0
    for k in range(trap.d):
        total = total + axis_log_kernel(axis, t, px[..., k], py[..., k], method)
    total = np.asarray(total)
    if log:
        return float(total) if total.ndim == 0 else total
    val = np.exp(total)
    return float(val) if val.ndim == 0 else val


def free_kernel(t: float, x, y) -> float | np.ndarray:
    """``(4 pi t)^(-d/2) exp(-|x-y|^2 / (4t))`` for points with trailing dimension ``d``."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    y = np.atleast_1d(np.asarray(y, dtype=float))
    d = x.shape[-1]
    r2 = np.sum((x - y) ** 2, axis=-1)
    val = (4.0 * math.pi * t) ** (-0.5 * d) * np.exp(-r2 / (4.0 * t))
    return float(val) if np.ndim(val) == 0 else val
