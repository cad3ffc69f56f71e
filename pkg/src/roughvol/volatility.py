"""Volatility functions f with closed-form derivatives of every order."""
from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial import polynomial as P

from .errors import PreconditionError


@dataclass(frozen=True)
class Linear:
    """f(x) = c0 + c1 x."""

    c1: float = 1.0
    c0: float = 0.0
    max_derivative_order: int = 64
    family = "linear"

    def derivative(self, d, x):
        x = np.asarray(x, dtype=float)
        if d == 0:
            return self.c0 + self.c1 * x
        if d == 1:
            return np.full_like(x, self.c1)
        return np.zeros_like(x)

    def vanishes(self, d) -> bool:
        return d >= 2 or (d == 1 and self.c1 == 0.0)

    @property
    def spec(self) -> str:
        if self.c0 == 0.0:
            return f"linear:{self.c1!r}"
        return f"linear:{self.c1!r},{self.c0!r}"

    def growth(self):
        """(C_f, C_f') with |f| <= C_f (1 + |x|) and |f'| <= C_f'."""
        return max(abs(self.c0), abs(self.c1)), abs(self.c1)


@dataclass(frozen=True)
class Exponential:
    """f(x) = c2 exp(c3 x)."""

    c2: float = 1.0
    c3: float = 1.0
    max_derivative_order: int = 64
    family = "exp"

    def derivative(self, d, x):
        return self.c2 * self.c3 ** d * np.exp(self.c3 * np.asarray(x, dtype=float))

    def vanishes(self, d) -> bool:
        return self.c2 == 0.0 or (d >= 1 and self.c3 == 0.0)

    @property
    def spec(self) -> str:
        return f"exp:{self.c2!r},{self.c3!r}"

    def growth(self):
        """(C_f, C_f') with |f^(d)| <= C e^{|c3| |x|}."""
        return abs(self.c2), abs(self.c2 * self.c3)


@dataclass(frozen=True)
class ShiftedTanh:
    """f(x) = 1 + tanh(x); derivatives are polynomials in tanh."""

    max_derivative_order: int = 24
    family = "tanh"
    _polys: tuple = field(default=(), init=False, repr=False, compare=False)

    def _poly(self, d):
        # d/dx p(tanh x) = p'(tanh x) (1 - tanh^2 x)
        polys = list(self._polys) or [np.array([1.0, 1.0])]
        while len(polys) <= d:
            polys.append(P.polymul(P.polyder(polys[-1]), [1.0, 0.0, -1.0]))
        object.__setattr__(self, "_polys", tuple(polys))
        return polys[d]

    def derivative(self, d, x):
        return P.polyval(np.tanh(np.asarray(x, dtype=float)), self._poly(d))

    def vanishes(self, d) -> bool:
        return False

    @property
    def spec(self) -> str:
        return "tanh"

    def growth(self):
        return 2.0, 1.0


VolFn = Linear | Exponential | ShiftedTanh


def parse_volfn(text: str):
    """Parse 'linear:c1[,c0]', 'exp:c2,c3' or 'tanh'."""
    name, _, args = text.strip().partition(":")
    name = name.lower()
    try:
        vals = [float(a) for a in args.split(",")] if args else []
    except ValueError:
        raise PreconditionError(f"bad numbers in model '{text}'") from None
    if name == "linear" and len(vals) in (1, 2):
        return Linear(*vals)
    if name == "exp" and len(vals) == 2:
        return Exponential(*vals)
    if name == "tanh" and not vals:
        return ShiftedTanh()
    raise PreconditionError(
        f"unknown model '{text}'; expected 'linear:c1[,c0]', 'exp:c2,c3' or 'tanh'")

