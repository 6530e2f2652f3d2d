"""Choice of the kinetic prefactor ``a_N`` along an N-ladder.

* ``scaling``: ``a_N = (chi/N)^(2/d)`` so that ``N a_N^(d/2) = chi``.  With
  ``chi = 0`` the effective ``chi_N = N^(-zero_exponent)`` goes to zero.
* ``const``: ``a_N = a`` for every ``N`` (the ``chi = inf`` side).
* ``explicit``: one user-supplied ``a`` per ladder entry.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import ConfigError

ZERO_EXPONENT = 1.0


@dataclass(frozen=True)
class Regime:
    kind: str
    chi: float | None = None
    a: float | None = None
    a_values: tuple[float, ...] | None = None
    zero_exponent: float = ZERO_EXPONENT

    def __post_init__(self):
        if self.kind == "scaling":
            if self.chi is None or not (self.chi >= 0 and math.isfinite(self.chi)):
                raise ConfigError("regime.chi must be a finite number >= 0")
            if not self.zero_exponent > 0:
                raise ConfigError("regime.zero_exponent must be > 0")
        elif self.kind == "const":
            if self.a is None or not self.a > 0:
                raise ConfigError("regime.a must be > 0")
        elif self.kind == "explicit":
            if not self.a_values or any(not v > 0 for v in self.a_values):
                raise ConfigError("regime.a_values must be a non-empty list of positive numbers")
        else:
            raise ConfigError(f"unknown regime kind {self.kind!r}")

    @classmethod
    def from_dict(cls, data: dict) -> "Regime":
        """Accepts ``{"chi": x}``, ``{"a": x}`` or ``{"a_values": [...]}`` (mutually exclusive)."""
        keys = {"chi", "a", "a_values"} & set(data)
        if len(keys) != 1:
            raise ConfigError("exactly one of chi, a, a_values must be given")
        extra = set(data) - {"chi", "a", "a_values", "zero_exponent"}
        if extra:
            raise ConfigError(f"unknown regime field(s): {sorted(extra)}")
        if "chi" in data:
            return cls("scaling", chi=float(data["chi"]),
                       zero_exponent=float(data.get("zero_exponent", ZERO_EXPONENT)))
        if "a" in data:
            return cls("const", a=float(data["a"]))
        return cls("explicit", a_values=tuple(float(v) for v in data["a_values"]))

    def to_dict(self) -> dict:
        if self.kind == "scaling":
            return {"chi": self.chi, "zero_exponent": self.zero_exponent}
        if self.kind == "const":
            return {"a": self.a}
        return {"a_values": list(self.a_values)}

    def chi_N(self, N: int, d: int) -> float:
        """``N a_N^(d/2)``."""
        if self.kind == "scaling":
            return self.chi if self.chi > 0 else float(N) ** (-self.zero_exponent)
        return N * self.a_of(N, d) ** (0.5 * d)

    def a_of(self, N: int, d: int, index: int | None = None) -> float:
        if self.kind == "scaling":
            return (self.chi_N(N, d) / N) ** (2.0 / d)
        if self.kind == "const":
            return self.a
        if index is None or not 0 <= index < len(self.a_values):
            raise ConfigError("explicit regime needs the ladder index")
        return self.a_values[index]

    def a_ladder(self, ladder, d: int) -> list[float]:
        if self.kind == "explicit" and len(self.a_values) != len(ladder):
            raise ConfigError("a_values must have one entry per ladder value")
        return [self.a_of(N, d, i) for i, N in enumerate(ladder)]

    @property
    def chi_limit(self) -> float:
        """Limit of ``N a_N^(d/2)``: ``chi`` (scaling), ``inf`` (const), ``nan`` (explicit)."""
        if self.kind == "scaling":
            return self.chi
        if self.kind == "const":
            return math.inf
        return math.nan
