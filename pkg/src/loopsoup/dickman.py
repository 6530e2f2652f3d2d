"""Dickman function and the density ``q = exp(-gamma) rho``.

``rho = 1`` on ``[0, 1]`` and ``x rho'(x) = -rho(x - 1)`` for ``x > 1``.  On
each unit interval the delayed term is already known on the node grid, so

    rho(x) = rho(n) - int_n^x rho(y - 1) / y dy

is a cumulative quadrature (piecewise-quadratic Simpson, step ``1e-4``) on
``[1, 50]``.  Values between nodes are linearly interpolated and ``rho`` is
set to 0 beyond 50, where it is below ``1e-80``.
"""

from __future__ import annotations

import math
from functools import lru_cache

import numpy as np
from scipy.integrate import cumulative_simpson

from .errors import ConfigError

DICKMAN_STEP = 1e-4
DICKMAN_XMAX = 50.0
EULER_GAMMA = 0.57721566490153286061


@lru_cache(maxsize=1)
def _dickman_table() -> tuple[np.ndarray, np.ndarray]:
    per_unit = int(round(1.0 / DICKMAN_STEP))
    n_units = int(DICKMAN_XMAX)
    x = np.linspace(0.0, DICKMAN_XMAX, n_units * per_unit + 1)
    rho = np.ones_like(x)
    for unit in range(1, n_units):
        lo = unit * per_unit
        xs = x[lo:lo + per_unit + 1]
        integrand = rho[lo - per_unit:lo + 1] / xs
        rho[lo:lo + per_unit + 1] = rho[lo] - cumulative_simpson(integrand, x=xs, initial=0.0)
    return x, rho


def dickman_rho(x):
    """Dickman function ``rho(x)`` (vectorised)."""
    x = np.asarray(x, dtype=float)
    if np.any(np.isnan(x)) or np.any(x < 0):
        raise ConfigError("Dickman function needs x >= 0")
    nodes, vals = _dickman_table()
    out = np.interp(x, nodes, vals)
    out = np.where(x <= 1.0, 1.0, out)
    out = np.where(x > DICKMAN_XMAX, 0.0, out)
    return float(out) if out.ndim == 0 else out


def dickman_q(x):
    """Density ``q(x) = exp(-gamma) rho(x)``; its Laplace transform is ``exp(int_0^1 (e^{-sx}-1)/x dx)``."""
    val = math.exp(-EULER_GAMMA) * np.asarray(dickman_rho(x))
    return float(val) if val.ndim == 0 else val
