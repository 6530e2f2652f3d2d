"""Loop configurations conditioned on the particle number, and their limits.

The conditioned sampler removes one loop at a time: with ``n`` particles left
the loop carrying a marked particle has length ``k`` with probability
``t_k h_{n-k} / (n h_n)``, which sums to one by the cycle-index recursion.
Each step is an exact inverse-CDF scan over ``k``.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from scipy import stats

from ._numba import njit
from .cycle_weights import CycleWeights
from .dickman import EULER_GAMMA, dickman_q, dickman_rho
from .errors import ConfigError, InsufficientSamplesError
from .partition import PartitionTable
from .rng import derive_seeds

__all__ = [
    "LoopSample", "PDSample", "sample_conditioned", "sample_many", "exact_marginal_mean",
    "exact_marginals", "sample_pd1", "sample_pd1_many", "dickman_q", "dickman_rho",
    "pd_largest_density", "pd_convergence_test", "microscopic_limit_test", "write_jsonl",
]

PD_REMAINDER = 1e-9


@dataclass(frozen=True)
class LoopSample:
    """Loop lengths in descending order; they sum to ``N``."""

    lengths: tuple[int, ...]
    seed: int | None = None

    @property
    def N(self) -> int:
        return int(sum(self.lengths))

    def counts(self, n_max: int | None = None) -> np.ndarray:
        """``X_j`` for ``j = 0..n_max`` (index 0 unused)."""
        n_max = self.N if n_max is None else n_max
        return np.bincount(np.asarray(self.lengths, dtype=np.int64), minlength=n_max + 1)[: n_max + 1]

    def to_json(self) -> str:
        return json.dumps({"seed": self.seed, "N": self.N, "lengths": list(self.lengths)})


@dataclass(frozen=True)
class PDSample:
    """Poisson-Dirichlet(0, 1) sticks (descending) and the unbroken remainder."""

    sticks: np.ndarray
    remainder: float

    def top(self, m: int) -> np.ndarray:
        out = np.zeros(m)
        k = min(m, self.sticks.size)
        out[:k] = self.sticks[:k]
        return out


@njit(cache=True, nogil=True)
def _draw_lengths(log_t, log_h, ks, N, uniforms):
    out = np.empty(N, dtype=np.int64)
    n = N
    count = 0
    nk = ks.shape[0]
    while n > 0:
        u = uniforms[count]
        target = log_h[n] + math.log(n)
        acc = 0.0
        chosen = -1
        last = -1
        for i in range(nk):
            k = ks[i]
            if k > n:
                break
            lh = log_h[n - k]
            if lh == -np.inf:
                continue
            acc += math.exp(log_t[k - 1] + lh - target)
            last = k
            if acc >= u:
                chosen = k
                break
        if chosen < 0:
            # rounding left the cumulative sum a hair below u
            chosen = last
        out[count] = chosen
        count += 1
        n -= chosen
    return out[:count]


def _check_table(table: PartitionTable, N: int | None) -> int:
    N = table.n_max if N is None else int(N)
    if not 0 < N <= table.n_max:
        raise ConfigError(f"N must lie in 1..{table.n_max}")
    if not np.isfinite(table.log_h[N]):
        raise ConfigError(f"h_N = 0 for N={N}: no configuration with this particle number")
    return N


def sample_conditioned(table: PartitionTable, rng: np.random.Generator | int,
                       N: int | None = None, seed_label: int | None = None) -> LoopSample:
    """One exact draw of the loop lengths given ``N`` particles (default ``table.n_max``)."""
    N = _check_table(table, N)
    if not isinstance(rng, np.random.Generator):
        seed_label = int(rng) if seed_label is None else seed_label
        rng = np.random.default_rng(rng)
    uniforms = rng.random(N)
    lengths = _draw_lengths(table.weights.log_t, table.log_h, table.support, N, uniforms)
    return LoopSample(tuple(sorted((int(v) for v in lengths), reverse=True)), seed_label)


def sample_many(table: PartitionTable, n_samples: int, seed: int, threads: int = 1,
                N: int | None = None) -> list[LoopSample]:
    """``n_samples`` independent draws; sample ``i`` uses the ``i``-th derived seed.

    The stream is identical for any thread count.
    """
    N = _check_table(table, N)
    seeds = derive_seeds(seed, n_samples)

    def one(s):
        return sample_conditioned(table, np.random.default_rng(s), N, seed_label=s)

    if threads <= 1:
        return [one(s) for s in seeds]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(one, seeds))


def write_jsonl(samples: Iterable[LoopSample], path: str | Path) -> None:
    with open(path, "w") as fh:
        for smp in samples:
            fh.write(smp.to_json() + "\n")


def exact_marginal_mean(table: PartitionTable, j: int, N: int | None = None) -> float:
    """``E[X_j | N particles] = (t_j / j) h_{N-j} / h_N``."""
    N = _check_table(table, N)
    if not 1 <= j <= N:
        return 0.0
    if j not in set(table.support.tolist()):
        return 0.0
    lt = table.weights.log_t[j - 1]
    return math.exp(lt - math.log(j) + table.log_h[N - j] - table.log_h[N])


def exact_marginals(table: PartitionTable, N: int | None = None) -> np.ndarray:
    """``E[X_j | N]`` for ``j = 1..N`` as an array (index ``j - 1``)."""
    N = _check_table(table, N)
    j = np.arange(1, N + 1)
    mask = np.zeros(N, dtype=bool)
    sup = table.support[table.support <= N]
    mask[sup - 1] = True
    lt = table.weights.log_t[:N]
    with np.errstate(invalid="ignore"):
        vals = np.exp(lt - np.log(j) + table.log_h[N - j] - table.log_h[N])
    return np.where(mask, vals, 0.0)


# ---------------------------------------------------------------------------
# Poisson-Dirichlet reference
# ---------------------------------------------------------------------------


def sample_pd1(rng: np.random.Generator | int) -> PDSample:
    """Stick-breaking with uniform ``Y_n`` until the remainder is below ``1e-9``."""
    if not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(rng)
    sticks = []
    rest = 1.0
    while rest >= PD_REMAINDER:
        y = rng.random()
        sticks.append(rest * y)
        rest *= 1.0 - y
    return PDSample(np.sort(np.array(sticks))[::-1], rest)


def sample_pd1_many(n: int, seed: int) -> list[PDSample]:
    return [sample_pd1(np.random.default_rng(s)) for s in derive_seeds(seed, n)]


def pd_largest_density(t):
    """Density of the largest PD(0,1) stick: ``(e^gamma / t) q((1 - t)/t)`` on ``(0, 1)``."""
    t = np.asarray(t, dtype=float)
    out = np.zeros_like(t)
    ok = (t > 0) & (t < 1)
    out[ok] = math.exp(EULER_GAMMA) / t[ok] * dickman_q((1.0 - t[ok]) / t[ok])
    return out


def pd_largest_cdf(t):
    """``P(largest stick <= t) = rho(1/t)``."""
    t = np.asarray(t, dtype=float)
    with np.errstate(divide="ignore"):
        return np.where(t <= 0, 0.0, np.where(t >= 1, 1.0, dickman_rho(1.0 / np.maximum(t, 1e-300))))


@dataclass
class PDTestReport:
    norm: float
    ks_stat: list[float]
    ks_pvalue: list[float]
    density_chi2: float
    density_pvalue: float
    n_loop: int
    n_pd: int
    overflow: int = 0

    def passed(self, level: float = 0.01) -> bool:
        return all(p > level for p in self.ks_pvalue)

    def as_dict(self) -> dict:
        return {
            "norm": self.norm, "ks_stat": self.ks_stat, "ks_pvalue": self.ks_pvalue,
            "density_chi2": self.density_chi2, "density_pvalue": self.density_pvalue,
            "n_loop": self.n_loop, "n_pd": self.n_pd, "overflow": self.overflow,
        }


def _top_lengths(samples: Sequence[LoopSample], m: int) -> np.ndarray:
    out = np.zeros((len(samples), m))
    for i, s in enumerate(samples):
        k = min(m, len(s.lengths))
        out[i, :k] = s.lengths[:k]
    return out


def pd_convergence_test(samples: Sequence[LoopSample], reference: Sequence[PDSample], m: int,
                        norm: float, n_bins: int = 20, min_samples: int = 1000) -> PDTestReport:
    """Two-sample KS tests of ``L_i / norm`` against the ``i``-th PD stick, ``i = 1..m``.

    The largest coordinate is also binned and compared with the exact
    largest-stick density by a chi-square statistic.
    """
    if len(samples) < min_samples or len(reference) < min_samples:
        raise InsufficientSamplesError(
            f"need at least {min_samples} samples per side, got {len(samples)} and {len(reference)}")
    if not norm > 0:
        raise ConfigError("normalisation must be > 0")
    loops = _top_lengths(samples, m) / norm
    pd = np.array([r.top(m) for r in reference])
    stat, pval = [], []
    for i in range(m):
        res = stats.ks_2samp(loops[:, i], pd[:, i])
        stat.append(float(res.statistic))
        pval.append(float(res.pvalue))
    # largest coordinate against the exact density, bins of equal probability
    edges = _equal_mass_edges(n_bins)
    counts, _ = np.histogram(np.clip(loops[:, 0], 0.0, 1.0), bins=edges)
    expected = np.diff(pd_largest_cdf(edges)) * len(samples)
    # values above 1 (possible when norm is smaller than the long-loop mass) fall in the last bin
    overflow = int(np.sum(loops[:, 0] > 1.0))
    chi2 = float(np.sum((counts - expected) ** 2 / expected))
    dens_p = float(stats.chi2.sf(chi2, n_bins - 1))
    return PDTestReport(float(norm), stat, pval, chi2, dens_p, len(samples), len(reference), overflow)


def _equal_mass_edges(n_bins: int) -> np.ndarray:
    """Bin edges on [0, 1] with equal mass under the largest-stick law."""
    from scipy.optimize import brentq

    edges = [0.0]
    for q in np.linspace(0, 1, n_bins + 1)[1:-1]:
        edges.append(brentq(lambda t: float(pd_largest_cdf(t)) - q, 1e-6, 1.0 - 1e-12))
    edges.append(1.0)
    return np.array(edges)


@dataclass
class MicroscopicReport:
    N: list[int]
    j_max: int
    deviations: list[np.ndarray]

    @property
    def l1(self) -> list[float]:
        return [float(np.sum(np.abs(d))) for d in self.deviations]

    @property
    def sup(self) -> list[float]:
        return [float(np.max(np.abs(d))) for d in self.deviations]


def occupation_profile(table: PartitionTable, j_max: int, N: int | None = None) -> np.ndarray:
    """``j E[X_j | N] / N`` for ``j = 1..j_max``."""
    N = _check_table(table, N)
    marg = exact_marginals(table, N)[:j_max]
    j = np.arange(1, marg.size + 1)
    out = np.zeros(j_max)
    out[: marg.size] = j * marg / N
    return out


def microscopic_limit_test(tables: Sequence[PartitionTable], alpha: np.ndarray) -> MicroscopicReport:
    """Deviation ``j E[X_j | N]/N - alpha_j`` for ``j <= len(alpha)`` along a ladder of tables."""
    j_max = len(alpha)
    devs = [occupation_profile(tb, j_max) - alpha for tb in tables]
    return MicroscopicReport([tb.n_max for tb in tables], j_max, devs)
