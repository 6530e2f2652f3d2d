"""Canonical combinatorics of the loop soup.

For loop intensities ``t_k`` restricted to a support ``S`` the cycle-index
values

    h_n = sum over {m_r : sum r m_r = n, r in S} of prod_r t_r^{m_r} / (r^{m_r} m_r!)

satisfy ``n h_n = sum_{k in S, k <= n} t_k h_{n-k}`` and
``P(number of particles = n) = exp(-sum_{j in S} t_j / j) h_n``.
The recursion runs in log space.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.optimize import brentq
from scipy.special import logsumexp

from ._numba import njit
from .cycle_weights import CycleWeights, exact_weights, mean_particles
from .dickman import dickman_q
from .errors import ConfigError, SolverError
from .traps import TrapPotential

#: documented practical ceiling for the O(N^2) recursion
MAX_TABLE_SIZE = 1 << 15


@njit(cache=True)
def _log_recursion(log_t, ks, n_max):
    """``log h_0..log h_{n_max}`` for support ``ks`` (sorted, 1-based lengths)."""
    log_h = np.full(n_max + 1, -np.inf)
    log_h[0] = 0.0
    nk = ks.shape[0]
    for n in range(1, n_max + 1):
        m = -np.inf
        for i in range(nk):
            k = ks[i]
            if k > n:
                break
            v = log_t[k - 1] + log_h[n - k]
            if v > m:
                m = v
        if m == -np.inf:
            continue
        acc = 0.0
        for i in range(nk):
            k = ks[i]
            if k > n:
                break
            acc += math.exp(log_t[k - 1] + log_h[n - k] - m)
        log_h[n] = m + math.log(acc) - math.log(n)
    return log_h


@dataclass(frozen=True)
class PartitionTable:
    """``log h_0 .. log h_{n_max}`` for one weight vector and support."""

    log_h: np.ndarray
    total_intensity: float
    support: np.ndarray
    weights: CycleWeights

    @property
    def n_max(self) -> int:
        return self.log_h.size - 1

    def log_prob(self, n=None) -> np.ndarray | float:
        """``log P(number of particles = n)``."""
        lp = self.log_h - self.total_intensity
        return lp if n is None else float(lp[n])

    def to_csv(self, path: str | Path) -> None:
        lp = self.log_prob()
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["n", "log_h", "log_prob"])
            for n in range(self.n_max + 1):
                w.writerow([n, repr(float(self.log_h[n])), repr(float(lp[n]))])


def _support_array(weights: CycleWeights, support) -> np.ndarray:
    if support is None:
        return np.arange(1, weights.N + 1, dtype=np.int64)
    ks = np.unique(np.asarray(list(support), dtype=np.int64))
    if ks.size and (ks[0] < 1 or ks[-1] > weights.N):
        raise ConfigError(f"support must lie in 1..{weights.N}")
    return ks


def build_table(weights: CycleWeights, support=None, n_max: int | None = None) -> PartitionTable:
    """Cycle-index table for ``weights`` restricted to ``support`` (default ``1..N``).

    ``n_max`` (default ``N``) may exceed ``N`` for normalisation checks; loop
    lengths still come from the support.
    """
    ks = _support_array(weights, support)
    n_max = weights.N if n_max is None else int(n_max)
    if n_max < 0:
        raise ConfigError("n_max must be >= 0")
    log_h = _log_recursion(np.ascontiguousarray(weights.log_t, dtype=np.float64), ks, n_max)
    if ks.size:
        total = float(np.exp(logsumexp(weights.log_t[ks - 1] - np.log(ks))))
    else:
        total = 0.0
    return PartitionTable(log_h, total, ks, weights)


def recursion_residual(table: PartitionTable) -> float:
    """Largest ``|log(sum_k t_k h_{n-k}) - log(n h_n)|`` over ``n`` with ``h_n > 0``."""
    lt = table.weights.log_t
    ks = table.support
    worst = 0.0
    for n in range(1, table.n_max + 1):
        sel = ks[ks <= n]
        if not sel.size or not np.isfinite(table.log_h[n]):
            continue
        lhs = logsumexp(lt[sel - 1] + table.log_h[n - sel])
        worst = max(worst, abs(lhs - (math.log(n) + table.log_h[n])))
    return worst


def prob_particle_count(table: PartitionTable, n: int) -> float:
    """Exact ``P(number of particles = n)`` for the restricted loop soup."""
    if not 0 <= n <= table.n_max:
        raise ConfigError(f"n must lie in 0..{table.n_max}")
    return math.exp(table.log_prob(n))


# ---------------------------------------------------------------------------
# moment generating function
# ---------------------------------------------------------------------------


def _log_excess(x: np.ndarray) -> np.ndarray:
    """``log(e^x - 1 - x)`` for ``x != 0`` without cancellation."""
    x = np.asarray(x, dtype=float)
    out = np.empty_like(x)
    small = np.abs(x) < 0.1
    xs = x[small]
    # Taylor series: x^2/2 (1 + x/3 + x^2/12 + ...)
    term = 0.5 * xs * xs
    series = term.copy()
    for k in range(3, 14):
        term = term * xs / k
        series = series + term
    out[small] = np.log(series)
    xl = x[~small]
    pos = xl > 0
    big = np.empty_like(xl)
    big[pos] = xl[pos] + np.log1p(-(1.0 + xl[pos]) * np.exp(-xl[pos]))
    big[~pos] = np.log(np.expm1(xl[~pos]) - xl[~pos])
    out[~small] = big
    return out


def exact_mgf_centered(weights: CycleWeights, s: float, support=None) -> float:
    """``log E[exp(s (N - E N))] = sum_j (1/j)(e^{sj} - 1 - sj) t_j``."""
    ks = _support_array(weights, support)
    if s == 0.0 or ks.size == 0:
        return 0.0
    x = s * ks.astype(float)
    terms = _log_excess(x) + weights.log_t[ks - 1] - np.log(ks)
    return float(np.exp(logsumexp(terms)))


# ---------------------------------------------------------------------------
# chemical potential
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ChemicalPotential:
    mu: float
    #: True when the untilted mean already reaches the target (mu = 0 returned)
    supercritical: bool
    mean: float


def chemical_potential(weights: CycleWeights, target: float) -> ChemicalPotential:
    """``mu <= 0`` with ``sum_j exp(beta mu a j) t_j = target``."""
    if not target > 0:
        raise ConfigError("target particle number must be > 0")
    base = weights.untilted()
    j = base.j
    ba = base.beta * base.a

    def f(mu):
        return logsumexp(base.log_t + ba * mu * j) - math.log(target)

    if f(0.0) <= 0.0:
        return ChemicalPotential(0.0, True, mean_particles(base))
    lo = -math.log(2.0 * target / math.exp(base.log_t[0])) / ba - 1.0
    lo = min(lo, -1.0 / ba)
    for _ in range(200):
        if f(lo) < 0.0:
            break
        lo *= 2.0
    else:  # pragma: no cover - the t_1 term guarantees a bracket
        raise SolverError("could not bracket the chemical potential")
    mu = brentq(f, lo, 0.0, xtol=1e-300, rtol=4 * np.finfo(float).eps, maxiter=200)
    mean = mean_particles(base.tilted(mu))
    if abs(mean - target) > 1e-8 * target:
        raise SolverError(f"chemical potential residual {abs(mean - target) / target:.3g} too large")
    return ChemicalPotential(float(mu), False, mean)


def solve_chemical_potential(trap: TrapPotential, beta: float, a: float, N: int) -> ChemicalPotential:
    """``mu_N`` with tilted mean particle number ``N`` (loop lengths ``1..N``)."""
    return chemical_potential(exact_weights(trap, beta, a, N), float(N))


# ---------------------------------------------------------------------------
# derived laws
# ---------------------------------------------------------------------------


def local_clt_check(weights: CycleWeights, r_grid) -> list[dict]:
    """``sqrt(N) P_mu(number of particles = N - r)`` for ``r`` in ``r_grid``."""
    table = build_table(weights)
    N = weights.N
    rows = []
    for r in r_grid:
        r = int(r)
        if not 0 <= r <= N:
            raise ConfigError(f"r must lie in 0..{N}")
        rows.append({"N": N, "r": r, "scaled_prob": math.sqrt(N) * prob_particle_count(table, N - r)})
    return rows


@dataclass(frozen=True)
class LongLoopLaw:
    exact: float
    prediction: float

    @property
    def ratio(self) -> float:
        return self.exact / self.prediction


def long_loop_law(weights: CycleWeights, T: int, s: int, k: int) -> LongLoopLaw:
    """``P(sum_{T<j<=s} j X_j = k)`` and the prediction ``q(k/s) exp(-beta a lam_1 k) / T``."""
    if not (0 < T < s <= weights.N and T < k):
        raise ConfigError("need 0 < T < s <= N and k > T")
    if not math.isfinite(weights.lambda1):
        raise ConfigError("weights carry no ground-state energy")
    table = build_table(weights, support=range(T + 1, s + 1), n_max=k)
    exact = prob_particle_count(table, k)
    pred = dickman_q(k / s) * math.exp(-weights.beta * weights.a * weights.lambda1 * k) / T
    return LongLoopLaw(exact, pred)
