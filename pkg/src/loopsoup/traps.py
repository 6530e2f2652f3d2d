"""Trap potentials with closed-form confinement integrals.

Three homogeneous families are supported:

* ``box``: Dirichlet box of side ``L`` centred at the origin, ``w = 0`` inside
  and ``+inf`` outside (scaling exponent ``alpha = inf``).
* ``harmonic``: ``w(x) = omega * |x|^2`` (``alpha = 2``).
* ``power``: ``w(x) = sum_i c * |x_i|^alpha`` (separable power law).

All three are homogeneous, so the rescaled potential ``W_eps`` coincides with
``W = w`` for every ``eps``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Any, Mapping

import numpy as np

from .errors import ConfigError


class TrapKind(enum.Enum):
    BOX = "box"
    HARMONIC = "harmonic"
    POWER = "power"


@dataclass(frozen=True)
class TrapPotential:
    kind: TrapKind
    d: int
    L: float | None = None
    omega: float | None = None
    c: float | None = None
    alpha_exp: float | None = None

    def __post_init__(self) -> None:
        if not isinstance(self.d, (int, np.integer)) or self.d < 1:
            raise ConfigError(f"dimension must be a positive integer, got {self.d!r}")
        if self.kind is TrapKind.BOX:
            _require_positive("L", self.L)
        elif self.kind is TrapKind.HARMONIC:
            _require_positive("omega", self.omega)
        elif self.kind is TrapKind.POWER:
            _require_positive("c", self.c)
            _require_positive("alpha_exp", self.alpha_exp)
        else:  # pragma: no cover - enum is closed
            raise ConfigError(f"unsupported trap kind {self.kind!r}")

    @classmethod
    def box(cls, L: float, d: int = 3) -> "TrapPotential":
        return cls(TrapKind.BOX, d, L=float(L))

    @classmethod
    def harmonic(cls, omega: float = 1.0, d: int = 3) -> "TrapPotential":
        return cls(TrapKind.HARMONIC, d, omega=float(omega))

    @classmethod
    def power(cls, c: float, alpha_exp: float, d: int = 1) -> "TrapPotential":
        return cls(TrapKind.POWER, d, c=float(c), alpha_exp=float(alpha_exp))

    @classmethod
    def from_dict(cls, spec: Mapping[str, Any]) -> "TrapPotential":
        """Build a trap from a config mapping such as ``{"kind": "harmonic", "omega": 1, "d": 3}``."""
        if "kind" not in spec:
            raise ConfigError("trap: missing field 'kind'")
        try:
            kind = TrapKind(str(spec["kind"]).lower())
        except ValueError:
            raise ConfigError(
                f"trap.kind: unknown trap kind {spec['kind']!r}; "
                "arbitrary potentials are not supported, use box/harmonic/power"
            ) from None
        d = spec.get("d", 3)
        if isinstance(d, bool) or not isinstance(d, int):
            raise ConfigError(f"trap.d: expected integer, got {d!r}")
        allowed = {"kind", "d"} | {
            TrapKind.BOX: {"L"},
            TrapKind.HARMONIC: {"omega"},
            TrapKind.POWER: {"c", "alpha_exp"},
        }[kind]
        extra = set(spec) - allowed
        if extra:
            raise ConfigError(f"trap: unexpected fields {sorted(extra)} for kind {kind.value!r}")
        params = {k: spec[k] for k in allowed - {"kind", "d"} if k in spec}
        for k, v in params.items():
            if isinstance(v, bool) or not isinstance(v, (int, float)):
                raise ConfigError(f"trap.{k}: expected a number, got {v!r}")
        if kind is TrapKind.HARMONIC:
            params.setdefault("omega", 1.0)
        return cls(kind, d, **{k: float(v) for k, v in params.items()})

    def to_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {"kind": self.kind.value, "d": self.d}
        for name in ("L", "omega", "c", "alpha_exp"):
            val = getattr(self, name)
            if val is not None:
                out[name] = val
        return out

    @property
    def alpha(self) -> float:
        """Homogeneity exponent of ``W``; ``inf`` for the box."""
        if self.kind is TrapKind.BOX:
            return math.inf
        if self.kind is TrapKind.HARMONIC:
            return 2.0
        return float(self.alpha_exp)

    def alpha_scaling_exponent(self) -> float:
        """``alpha / (alpha + 2)``, read as 1 for the box."""
        if math.isinf(self.alpha):
            return 1.0
        return self.alpha / (self.alpha + 2.0)

    def axis_potential(self, x: np.ndarray) -> np.ndarray:
        """One-dimensional factor ``v`` with ``w(x) = sum_i v(x_i)``."""
        x = np.asarray(x, dtype=float)
        if self.kind is TrapKind.BOX:
            return np.where(np.abs(x) <= 0.5 * self.L, 0.0, np.inf)
        if self.kind is TrapKind.HARMONIC:
            return self.omega * x * x
        return self.c * np.abs(x) ** self.alpha_exp


def _require_positive(name: str, value: float | None) -> None:
    if value is None:
        raise ConfigError(f"trap: missing parameter {name!r}")
    if not (math.isfinite(value) and value > 0):
        raise ConfigError(f"trap.{name}: must be finite and > 0, got {value!r}")


def _as_points(trap: TrapPotential, x) -> tuple[np.ndarray, bool]:
    arr = np.asarray(x, dtype=float)
    if trap.d == 1 and (arr.ndim == 0 or arr.shape[-1] != 1):
        arr = arr[..., None]
    if arr.ndim == 0 or arr.shape[-1] != trap.d:
        raise ConfigError(f"point(s) must have trailing dimension {trap.d}, got shape {np.shape(x)}")
    return arr, arr.ndim == 1


def _scalar_or_array(values: np.ndarray, single: bool):
    return float(values) if single else values


def evaluate_w(trap: TrapPotential, x):
    """Trap value ``w(x)``; ``+inf`` exactly outside the box.

    ``x`` is a point of length ``d`` (a scalar is accepted for ``d = 1``) or
    an array of points with trailing dimension ``d``.
    """
    pts, single = _as_points(trap, x)
    if trap.kind is TrapKind.BOX:
        inside = np.all(np.abs(pts) <= 0.5 * trap.L, axis=-1)
        vals = np.where(inside, 0.0, np.inf)
    else:
        vals = trap.axis_potential(pts).sum(axis=-1)
    return _scalar_or_array(vals, single)


def evaluate_W(trap: TrapPotential, x):
    """Limiting profile ``W``; equal to ``w`` for the homogeneous families."""
    return evaluate_w(trap, x)


def rescaled_potential(trap: TrapPotential, eps: float, x, *, literal: bool = False):
    """Rescaled potential ``W_eps``.

    By homogeneity ``W_eps = W`` exactly for every built-in family, and that
    value is returned.  With ``literal=True`` the defining expression
    ``eps^-alpha * w(eps x)`` (``eps^-1 * w(x)`` for the box) is evaluated in
    floating point instead.
    """
    if not (0.0 < eps <= 1.0):
        raise ConfigError(f"eps must lie in (0, 1], got {eps!r}")
    if not literal:
        return evaluate_W(trap, x)
    pts, single = _as_points(trap, x)
    if trap.kind is TrapKind.BOX:
        vals = np.asarray(evaluate_w(trap, pts), dtype=float)
        with np.errstate(invalid="ignore"):
            vals = np.where(np.isinf(vals), np.inf, vals / eps)
    else:
        vals = np.asarray(evaluate_w(trap, eps * pts), dtype=float) * eps ** (-trap.alpha)
    return _scalar_or_array(vals, single)


def axis_weight_integral(trap: TrapPotential, beta: float, j: float) -> float:
    """One-axis factor of ``int exp(-beta j w(x)) dx``."""
    _check_beta_j(beta, j)
    if trap.kind is TrapKind.BOX:
        return trap.L
    if trap.kind is TrapKind.HARMONIC:
        return math.sqrt(math.pi / (beta * j * trap.omega))
    alpha = trap.alpha_exp
    return 2.0 * math.gamma(1.0 + 1.0 / alpha) / (beta * j * trap.c) ** (1.0 / alpha)


def weight_integral(trap: TrapPotential, beta: float, j: float) -> float:
    """Closed-form ``int_{R^d} exp(-beta j w(x)) dx``."""
    return axis_weight_integral(trap, beta, j) ** trap.d


def log_weight_integral(trap: TrapPotential, beta: float, j) -> np.ndarray:
    """Vectorised ``log W_j`` over an array of ``j`` values."""
    j = np.asarray(j, dtype=float)
    if np.any(j <= 0) or beta <= 0:
        raise ConfigError("beta and j must be positive")
    d = trap.d
    if trap.kind is TrapKind.BOX:
        return np.full_like(j, d * math.log(trap.L))
    if trap.kind is TrapKind.HARMONIC:
        return 0.5 * d * (math.log(math.pi) - np.log(beta * j * trap.omega))
    alpha = trap.alpha_exp
    return d * (math.log(2.0 * math.gamma(1.0 + 1.0 / alpha)) - np.log(beta * j * trap.c) / alpha)


def confinement_radius(trap: TrapPotential, beta: float, decay: float = 20.0) -> float:
    """Half-width ``R`` beyond which ``exp(-beta v(x)) <= exp(-decay)`` on each axis."""
    if trap.kind is TrapKind.BOX:
        return 0.5 * trap.L
    if trap.kind is TrapKind.HARMONIC:
        return math.sqrt(decay / (beta * trap.omega))
    return (decay / (beta * trap.c)) ** (1.0 / trap.alpha_exp)


def _check_beta_j(beta: float, j: float) -> None:
    if not beta > 0:
        raise ConfigError(f"beta must be > 0, got {beta!r}")
    if not j >= 1:
        raise ConfigError(f"j must be >= 1, got {j!r}")
