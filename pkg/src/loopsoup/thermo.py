"""Limiting thermodynamics of the trapped gas.

For every built-in trap the loop-length profile is a pure power law,

    W_j / (4 pi beta j)^(d/2) = C j^(-s),

with ``s = d/2`` for the box, ``s = d/2 + d/alpha`` otherwise.  Hence

    rho_w = C zeta(s),  p(u) = C Li_{s+1}(e^{beta u}),  p'(u) = beta C Li_s(e^{beta u}),

evaluated with ``mpmath``.  :func:`power_series` sums the same series directly
with an integral-comparison tail bound and serves as an independent route.
"""

from __future__ import annotations

import csv
import enum
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import mpmath
import numpy as np
from scipy.optimize import brentq

from .errors import ConfigError, DivergentSeriesError
from .spectral import axis_spectrum
from .traps import TrapKind, TrapPotential

mpmath.mp.dps = 30


@dataclass(frozen=True)
class PowerLaw:
    """``C j^(-s)`` profile of ``W_j / (4 pi beta j)^(d/2)``."""

    C: float
    s: float


def loop_profile(trap: TrapPotential, beta: float) -> PowerLaw:
    if not beta > 0:
        raise ConfigError(f"beta must be > 0, got {beta!r}")
    d = trap.d
    if trap.kind is TrapKind.BOX:
        return PowerLaw(trap.L**d * (4.0 * math.pi * beta) ** (-0.5 * d), 0.5 * d)
    if trap.kind is TrapKind.HARMONIC:
        return PowerLaw((4.0 * beta * beta * trap.omega) ** (-0.5 * d), float(d))
    alpha = trap.alpha_exp
    C = (2.0 * math.gamma(1.0 + 1.0 / alpha)) ** d * (beta * trap.c) ** (-d / alpha) \
        * (4.0 * math.pi * beta) ** (-0.5 * d)
    return PowerLaw(C, 0.5 * d + d / alpha)


def _polylog(order: float, log_z: float) -> float:
    """``Li_order(e^{log_z})`` for ``log_z <= 0``; ``zeta(order)`` at ``log_z = 0``."""
    if log_z == 0.0:
        if order <= 1.0:
            return math.inf
        return float(mpmath.zeta(order))
    return float(mpmath.polylog(order, mpmath.exp(log_z)))


def critical_density(trap: TrapPotential, beta: float) -> float:
    """``rho_w = sum_j W_j / (4 pi beta j)^(d/2)``; raises when the series diverges."""
    prof = loop_profile(trap, beta)
    if prof.s <= 1.0:
        raise DivergentSeriesError(
            f"critical density diverges for {trap.kind.value} trap in d={trap.d} "
            f"(terms decay like j^-{prof.s:g})")
    return prof.C * float(mpmath.zeta(prof.s))


def _check_u(u: float) -> None:
    if u > 0 or math.isnan(u):
        raise ConfigError(f"u must be <= 0, got {u!r}")


def pressure(trap: TrapPotential, beta: float, u: float) -> float:
    """``p(u) = sum_j (e^{beta u j} / j) W_j / (4 pi beta j)^(d/2)``."""
    _check_u(u)
    prof = loop_profile(trap, beta)
    if u == -math.inf:
        return 0.0
    return prof.C * _polylog(prof.s + 1.0, beta * u)


def pressure_derivative(trap: TrapPotential, beta: float, u: float, order: int = 1) -> float:
    """``p'(u)`` (``order=1``) or ``p''(u)`` (``order=2``)."""
    _check_u(u)
    if order not in (1, 2):
        raise ConfigError("order must be 1 or 2")
    prof = loop_profile(trap, beta)
    if u == -math.inf:
        return 0.0
    val = prof.C * beta**order * _polylog(prof.s + 1.0 - order, beta * u)
    if math.isinf(val):
        raise DivergentSeriesError(f"p derivative of order {order} diverges at u = 0")
    return val


def power_series(C: float, s: float, log_z: float, tol: float = 1e-14) -> tuple[float, float]:
    """Direct ``sum_j C z^j j^(-s)`` with an integral-comparison tail bound.

    Returns ``(value, tail_bound)``.  The partial sum runs until the tail
    ``int_J^inf C z^x x^(-s) dx`` is below ``tol`` times the partial sum; at
    ``z = 1`` the remaining tail is added through the Euler-Maclaurin form
    ``J^(1-s)/(s-1) - J^(-s)/2 + s J^(-s-1)/12`` and the next correction is
    reported as the bound.
    """
    if log_z > 0:
        raise ConfigError("need z <= 1")
    if log_z == 0.0:
        if s <= 1.0:
            raise DivergentSeriesError(f"series j^-{s:g} diverges")
        J = 2000
        j = np.arange(1, J, dtype=float)
        head = float(np.sum(j ** (-s)))
        tail = J ** (1.0 - s) / (s - 1.0) + 0.5 * J ** (-s) + s * J ** (-s - 1.0) / 12.0
        bound = s * (s + 1.0) * (s + 2.0) * J ** (-s - 3.0) / 720.0
        return C * (head + tail), C * bound
    total = 0.0
    J = 0
    chunk = 4096
    while True:
        j = np.arange(J + 1, J + chunk + 1, dtype=float)
        total += float(np.sum(np.exp(j * log_z - s * np.log(j))))
        J += chunk
        # int_J^inf z^x x^-s dx <= z^J J^-s / |log z|
        bound = math.exp(J * log_z - s * math.log(J)) / -log_z
        if bound <= tol * total or J > 10**8:
            return C * total, C * bound


# ---------------------------------------------------------------------------
# chemical potential of the limit and occupation profile
# ---------------------------------------------------------------------------


class ChiMode(enum.Enum):
    ZERO = "zero"
    FINITE = "finite"
    INFINITE = "infinite"


def chi_mode(chi: float) -> ChiMode:
    if chi == 0:
        return ChiMode.ZERO
    if math.isinf(chi) and chi > 0:
        return ChiMode.INFINITE
    if not chi > 0:
        raise ConfigError(f"chi must lie in [0, inf], got {chi!r}")
    return ChiMode.FINITE


def _rho_or_inf(trap: TrapPotential, beta: float) -> float:
    try:
        return critical_density(trap, beta)
    except DivergentSeriesError:
        return math.inf


def solve_u_chi(trap: TrapPotential, beta: float, chi: float) -> float:
    """``u_chi``: root of ``p'(u) = chi beta`` below ``rho_w``, else 0; ``-inf`` at ``chi = 0``."""
    mode = chi_mode(chi)
    if mode is ChiMode.ZERO:
        return -math.inf
    if mode is ChiMode.INFINITE:
        return 0.0
    rho = _rho_or_inf(trap, beta)
    if chi >= rho:
        return 0.0
    prof = loop_profile(trap, beta)
    target = math.log(chi / prof.C)

    def g(u):
        return math.log(_polylog(prof.s, beta * u)) - target

    # Li_s(z) >= z, so u0 = log(chi/C)/beta has g(u0) >= 0; step down until negative
    lo = min(target / beta, -1.0 / beta)
    while g(lo) >= 0.0:
        lo = 2.0 * lo - 1.0 / beta
    hi = 0.0
    if not math.isfinite(rho):
        # p' is unbounded near 0: find a point above the target
        hi = -1e-12 / beta
        while g(hi) <= 0.0:
            hi *= 1e-3
    return float(brentq(g, lo, hi, xtol=1e-300, rtol=4 * np.finfo(float).eps, maxiter=500))


def alpha_sequence(trap: TrapPotential, beta: float, chi: float, J: int) -> np.ndarray:
    """``alpha_j = e^{beta u_chi j} W_j / (chi (4 pi beta j)^(d/2))`` for ``j = 1..J``.

    ``chi = 0`` gives ``(1, 0, 0, ...)`` and ``chi = inf`` the zero sequence.
    """
    if J < 1:
        raise ConfigError("J must be >= 1")
    mode = chi_mode(chi)
    if mode is ChiMode.ZERO:
        out = np.zeros(J)
        out[0] = 1.0
        return out
    if mode is ChiMode.INFINITE:
        return np.zeros(J)
    u = solve_u_chi(trap, beta, chi)
    prof = loop_profile(trap, beta)
    j = np.arange(1, J + 1, dtype=float)
    return np.exp(beta * u * j - prof.s * np.log(j)) * prof.C / chi


# ---------------------------------------------------------------------------
# free energies
# ---------------------------------------------------------------------------


def free_energy_exact(trap: TrapPotential, beta: float, a: float, N: int) -> float:
    """``-(1/(beta N)) log Z_N`` from the exact cycle-index value ``h_N``."""
    from .cycle_weights import exact_weights
    from .partition import build_table

    table = build_table(exact_weights(trap, beta, a, N))
    return -float(table.log_h[N]) / (beta * N)


def free_energy_from_table(log_h_N: float, beta: float, N: int) -> float:
    return -float(log_h_N) / (beta * N)


def condensate_energy_rate(trap: TrapPotential, a_limit: float) -> float:
    """``lim a_N lam_1(w/a_N)`` for a constant sequence ``a_N = a_limit`` (0 if ``a_limit = 0``)."""
    if a_limit == 0:
        return 0.0
    if a_limit < 0:
        raise ConfigError("a_limit must be >= 0")
    if trap.kind is TrapKind.POWER:
        warnings.warn("constant a_N with a power trap is experimental: the condensate energy term "
                      "is taken at face value", RuntimeWarning, stacklevel=2)
    return a_limit * trap.d * float(axis_spectrum(trap, a_limit).levels(1)[0])


def free_energy_limit(trap: TrapPotential, beta: float, chi: float, a_limit: float = 0.0) -> float:
    """Limiting free energy per particle.

    ``chi > rho_w``: ``-p(0)/(beta chi) + (1 - rho_w/chi) lim a lam_1(w/a)``;
    ``0 < chi <= rho_w``: ``-p(u_chi)/(beta chi) + u_chi``; ``chi = 0``: ``-inf``.
    ``a_limit`` is the limit of ``a_N`` (0 unless ``a_N`` is constant).
    """
    mode = chi_mode(chi)
    if mode is ChiMode.ZERO:
        return -math.inf
    if mode is ChiMode.INFINITE:
        return condensate_energy_rate(trap, a_limit)
    rho = _rho_or_inf(trap, beta)
    if chi > rho:
        return -pressure(trap, beta, 0.0) / (beta * chi) + (1.0 - rho / chi) * condensate_energy_rate(trap, a_limit)
    u = solve_u_chi(trap, beta, chi)
    return -pressure(trap, beta, u) / (beta * chi) + u


# ---------------------------------------------------------------------------
# report
# ---------------------------------------------------------------------------


@dataclass
class ThermoReport:
    trap: TrapPotential
    beta: float
    chi: float
    rho_w: float
    u_chi: float
    alpha_prefix: np.ndarray
    f_limit: float
    ladder: list[dict] = field(default_factory=list)

    def to_text(self) -> str:
        lines = [
            f"trap = {self.trap.to_dict()}",
            f"beta = {self.beta!r}",
            f"chi = {self.chi!r}",
            f"rho_w = {self.rho_w!r}",
            f"u_chi = {self.u_chi!r}",
            f"alpha_sum = {float(np.sum(self.alpha_prefix))!r}",
            f"alpha_prefix = {[float(v) for v in self.alpha_prefix]}",
            f"f_limit = {self.f_limit!r}",
        ]
        for row in self.ladder:
            lines.append(f"f_exact[N={row['N']}] = {row['f_exact']!r}")
        return "\n".join(lines) + "\n"

    def write(self, out_dir: str | Path) -> list[Path]:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        report = out / "thermo_report.txt"
        report.write_text(self.to_text())
        alpha_csv = out / "alpha.csv"
        with open(alpha_csv, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["j", "alpha"])
            for j, v in enumerate(self.alpha_prefix, start=1):
                w.writerow([j, repr(float(v))])
        paths = [report, alpha_csv]
        if self.ladder:
            ladder_csv = out / "free_energy_ladder.csv"
            with open(ladder_csv, "w", newline="") as fh:
                w = csv.writer(fh)
                keys = list(self.ladder[0])
                w.writerow(keys)
                for row in self.ladder:
                    w.writerow([row[k] for k in keys])
            paths.append(ladder_csv)
        return paths
