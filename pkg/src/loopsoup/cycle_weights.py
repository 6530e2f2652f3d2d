"""Loop intensities ``t_{j,a}`` of the Poisson loop soup.

``t_{j,a} = sum_i exp(-beta a j lam_i(w/a))`` is the total mass of the
weighted loop measure of length ``j``.  With a chemical tilt ``mu <= 0`` each
entry is multiplied by ``exp(beta mu a j)``.  All vectors are kept in log form.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, replace

import numpy as np
from scipy.special import logsumexp

from .errors import ConfigError
from .spectral import axis_spectrum
from .traps import TrapKind, TrapPotential, log_weight_integral

#: ``j a^(alpha/(alpha+2))`` below which the hybrid mode switches to the small-j form
HYBRID_THRESHOLD = 1e-3


class Provenance(enum.Enum):
    EXACT_SPECTRAL = "exact_spectral"
    SMALL_J_ASYMPTOTIC = "small_j_asymptotic"
    HYBRID = "hybrid"
    CUSTOM = "custom"


@dataclass(frozen=True)
class CycleWeights:
    """``log t_j^(mu)`` for ``j = 1..N`` (``log_t[j-1]``)."""

    N: int
    beta: float
    a: float
    mu: float
    log_t: np.ndarray
    provenance: Provenance
    trap: TrapPotential | None = None
    lambda1: float = math.nan
    #: number of leading entries taken from the small-j form (hybrid mode)
    n_asymptotic: int = 0

    def __post_init__(self) -> None:
        if self.log_t.shape != (self.N,):
            raise ConfigError(f"log_t must have length N={self.N}")
        if self.mu > 0:
            raise ConfigError(f"mu must be <= 0, got {self.mu!r}")

    @classmethod
    def from_values(cls, t, beta: float = 1.0, a: float = 1.0) -> "CycleWeights":
        """Wrap an arbitrary positive vector ``t_1..t_N`` (toy models, tests)."""
        t = np.asarray(t, dtype=float)
        if t.ndim != 1 or t.size == 0 or np.any(~(t > 0)):
            raise ConfigError("weights must be a non-empty vector of positive numbers")
        return cls(t.size, beta, a, 0.0, np.log(t), Provenance.CUSTOM)

    @property
    def j(self) -> np.ndarray:
        return np.arange(1, self.N + 1, dtype=float)

    @property
    def t(self) -> np.ndarray:
        return np.exp(self.log_t)

    def tilted(self, mu: float) -> "CycleWeights":
        """The same weights re-tilted to chemical potential ``mu``."""
        if mu > 0:
            raise ConfigError(f"mu must be <= 0, got {mu!r}")
        shift = self.beta * (mu - self.mu) * self.a * self.j
        return replace(self, mu=float(mu), log_t=self.log_t + shift)

    def untilted(self) -> "CycleWeights":
        return self.tilted(0.0)

    def truncated(self, n: int) -> "CycleWeights":
        """Weights for lengths ``1..n`` only."""
        if not 1 <= n <= self.N:
            raise ConfigError(f"cannot truncate {self.N} weights to {n}")
        return replace(self, N=n, log_t=self.log_t[:n].copy())


def asymptotic_log_weights(trap: TrapPotential, beta: float, a: float, j) -> np.ndarray:
    """Small-j form ``log[(4 pi beta a j)^(-d/2) W_j]``."""
    j = np.asarray(j, dtype=float)
    return -0.5 * trap.d * np.log(4.0 * math.pi * beta * a * j) + log_weight_integral(trap, beta, j)


def asymptotic_weights(trap: TrapPotential, beta: float, a: float, N: int, mu: float = 0.0) -> CycleWeights:
    _check(beta, a, N, mu)
    j = np.arange(1, N + 1, dtype=float)
    log_t = asymptotic_log_weights(trap, beta, a, j) + beta * mu * a * j
    return CycleWeights(N, beta, a, float(mu), log_t, Provenance.SMALL_J_ASYMPTOTIC, trap,
                        _lambda1(trap, a), N)


def exact_weights(trap: TrapPotential, beta: float, a: float, N: int, mu: float = 0.0,
                  mode: str = "auto") -> CycleWeights:
    """``log t_j^(mu)`` from the spectral trace, ``j = 1..N``.

    Harmonic and box traces are closed-form for every ``j``.  For the power
    family ``mode="auto"`` behaves like ``"hybrid"``: lengths with
    ``j a^(alpha/(alpha+2)) < HYBRID_THRESHOLD`` use the small-j form and the
    rest the extrapolated finite-difference trace; ``mode="exact"`` forces the
    finite-difference trace for every ``j``.
    """
    _check(beta, a, N, mu)
    if mode not in ("auto", "exact", "hybrid"):
        raise ConfigError(f"unknown weight mode {mode!r}")
    j = np.arange(1, N + 1, dtype=float)
    s = beta * a * j
    n_asym = 0
    provenance = Provenance.EXACT_SPECTRAL
    if trap.kind is TrapKind.HARMONIC:
        # t_j = (2 sinh(beta j sqrt(omega a)))^-d
        z = beta * j * math.sqrt(trap.omega * a)
        log_t = -trap.d * (z + np.log(-np.expm1(-2.0 * z)))
    elif trap.kind is TrapKind.BOX:
        log_t = trap.d * axis_spectrum(trap, a).log_trace(s)
    else:
        scale = a ** trap.alpha_scaling_exponent()
        if mode == "exact":
            n_asym = 0
        else:
            n_asym = int(np.count_nonzero(j * scale < HYBRID_THRESHOLD))
        log_t = np.empty(N)
        if n_asym:
            log_t[:n_asym] = asymptotic_log_weights(trap, beta, a, j[:n_asym])
            provenance = Provenance.HYBRID
        if n_asym < N:
            axis = axis_spectrum(trap, a, t_min=float(s[n_asym]))
            log_t[n_asym:] = trap.d * axis.log_trace(s[n_asym:])
        if n_asym == N:
            provenance = Provenance.SMALL_J_ASYMPTOTIC
    log_t = log_t + beta * mu * a * j
    return CycleWeights(N, beta, a, float(mu), log_t, provenance, trap, _lambda1(trap, a), n_asym)


def _lambda1(trap: TrapPotential, a: float) -> float:
    return trap.d * float(axis_spectrum(trap, a).levels(1)[0])


def _check(beta: float, a: float, N: int, mu: float) -> None:
    if not beta > 0:
        raise ConfigError(f"beta must be > 0, got {beta!r}")
    if not a > 0:
        raise ConfigError(f"a must be > 0, got {a!r}")
    if isinstance(N, bool) or int(N) != N or N < 1:
        raise ConfigError(f"N must be a positive integer, got {N!r}")
    if mu > 0:
        raise ConfigError(f"mu must be <= 0, got {mu!r}")


def threshold(N: int, a: float, alpha_exp: float, bounded: bool = False) -> int:
    """Short/long loop threshold.

    ``floor(a^(-alpha/(alpha+2)) sqrt(log(1/a)))`` when ``a -> 0``;
    ``floor(sqrt(log N))`` when ``a`` stays bounded (``bounded=True``).
    ``alpha_exp = inf`` denotes the box (exponent read as 1).
    """
    if bounded:
        if N < 1:
            raise ConfigError("N must be >= 1")
        return int(math.floor(math.sqrt(math.log(N))))
    if not (0.0 < a <= 1.0):
        raise ConfigError(f"a must lie in (0, 1], got {a!r}")
    expo = 1.0 if math.isinf(alpha_exp) else alpha_exp / (alpha_exp + 2.0)
    return int(math.floor(a ** (-expo) * math.sqrt(math.log(1.0 / a))))


def trap_threshold(weights: CycleWeights, bounded: bool = False) -> int:
    if weights.trap is None:
        raise ConfigError("weights carry no trap; pass the threshold explicitly")
    return threshold(weights.N, weights.a, weights.trap.alpha, bounded)


def mean_particles(weights: CycleWeights) -> float:
    """``E[number of particles] = sum_j t_j^(mu)``."""
    return float(np.exp(logsumexp(weights.log_t)))


def mean_short_long(weights: CycleWeights, T: int) -> tuple[float, float]:
    """Expected particles in loops of length ``<= T`` and ``> T``."""
    T = int(min(max(T, 0), weights.N))
    short = float(np.exp(logsumexp(weights.log_t[:T]))) if T else 0.0
    long = float(np.exp(logsumexp(weights.log_t[T:]))) if T < weights.N else 0.0
    return short, long
