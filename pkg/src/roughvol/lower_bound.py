"""Constants behind the lower bound for E[X_T^3] - E[(X_T^n)^3].

    B1 = -int_0^inf v^b (v^b - (v - 1)_+^b) dv
    B2 =  int_0^inf v^b (v^{2H} - (v + 1)^{2H}) dv      (finite for H < 1/6)
    B3 =  b int_0^inf v^b (1 + v)^{b - 1} dv,            b = H - 1/2

    C2 = B1 B2 / (3H + 3/2),  C3 = -B3 (2^{3H-1/2} / (1/2 - 3H) + 2 / (1 - 2H)) / 2.
"""
import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.special import binom, gammaln, gammasgn

from .errors import PreconditionError, QuadratureError
from .kernel import check_hurst
from .moments import ModelSpec, continuous_moment, discrete_moment
from .quadrature import tanh_sinh
from .volatility import Linear

CUTOFF = 8.0
LOWER_BOUND_H = 1.0 / 6.0


@dataclass
class LowerBoundConstants:
    H: float
    B1: float
    B2: float
    B3: float
    C2: float
    C3: float
    method: str

    @property
    def gap(self):
        return self.C2 - self.C3

    def row(self):
        return {"H": self.H, "B1": self.B1, "B2": self.B2, "B3": self.B3,
                "C2": self.C2, "C3": self.C3, "C2_minus_C3": self.gap}


# ---------------------------------------------------------------------------
# integral forms


def b1_integrand(v, H):
    b = H - 0.5
    v = np.asarray(v, dtype=float)
    shifted = np.where(v > 1, v - 1, 1.0) ** b
    return -v ** b * (v ** b - np.where(v > 1, shifted, 0.0))


def _interval(fun, a, b, tol, max_level=9):
    """int_a^b fun(x, x - a, b - x) by tanh-sinh with level doubling."""
    prev = None
    for level in range(3, max_level + 1):
        u, v, w = tanh_sinh(level)
        L = b - a
        cur = L * float(np.sum(w * fun(a + L * u, L * u, L * v)))
        if prev is not None and abs(cur - prev) <= tol:
            return cur
        prev = cur
    raise QuadratureError(f"tanh-sinh on [{a}, {b}] did not reach {tol}")


def _tail(coef, power, V, tol):
    """sum_k coef(k) int_V^inf v^{power - k} dv for the first k with a convergent tail."""
    total, k = 0.0, 0
    while True:
        c = coef(k)
        if c is not None:
            term = c * V ** (power - k + 1) / (k - 1 - power)
            total += term
            if abs(term) < tol * 1e-3 and k > 2:
                return total
        k += 1
        if k > 400:
            raise QuadratureError("tail series did not converge")


def b_constants_integral(H, tol=1e-12):
    """B1, B2, B3 by quadrature on [0, V] plus an exact series for [V, inf)."""
    H = check_hurst(H)
    if H >= 0.5:
        raise PreconditionError("integral forms need H < 1/2")
    if H >= LOWER_BOUND_H:
        warnings.warn("H >= 1/6: B2 diverges and is reported as -inf", stacklevel=2)
    b = H - 0.5
    V = CUTOFF
    t = tol / 10

    # B1: [0, 1] is exact; on [1, V] write v = 1 + u so u^b is evaluated directly
    mid1 = _interval(lambda x, lo, hi: (1 + x) ** b * ((1 + x) ** b - x ** b), 0.0, V - 1, t)
    tail1 = _tail(lambda k: -binom(b, k) * (-1) ** k if k >= 1 else None, 2 * b, V, t)
    B1 = -(1 / (2 * H) + mid1 + tail1)

    if H < LOWER_BOUND_H:
        head2 = _interval(lambda x, lo, hi: x ** b * (x ** (2 * H) - (x + 1) ** (2 * H)), 0.0, V, t)
        tail2 = _tail(lambda k: -binom(2 * H, k) if k >= 1 else None, b + 2 * H, V, t)
        B2 = head2 + tail2
    else:
        B2 = -math.inf

    head3 = _interval(lambda x, lo, hi: x ** b * (1 + x) ** (b - 1), 0.0, V, t)
    tail3 = _tail(lambda k: binom(b - 1, k), 2 * b - 1, V, t)
    B3 = b * (head3 + tail3)
    return float(B1), float(B2), float(B3)


# ---------------------------------------------------------------------------
# Beta forms


def _near_pole(x, eps=1e-9):
    return x <= 0 and abs(x - round(x)) < eps


def beta_signed(a, b):
    """Euler Beta B(a, b) for real arguments through log|Gamma| and explicit signs."""
    if _near_pole(a) or _near_pole(b):
        raise PreconditionError(f"Beta({a}, {b}) is at or near a pole")
    if _near_pole(a + b):
        return 0.0
    sign = gammasgn(a) * gammasgn(b) * gammasgn(a + b)
    return float(sign * math.exp(gammaln(a) + gammaln(b) - gammaln(a + b)))


def b_constants_beta(H):
    H = check_hurst(H)
    if H >= 0.5:
        raise PreconditionError("Beta forms need H < 1/2")
    B1 = 2.0 ** (-1 - 2 * H) * beta_signed(H + 0.5, -H)
    B2 = -beta_signed(-3 * H - 0.5, 0.5 + H)
    B3 = (H - 0.5) * beta_signed(1 - 2 * H, H + 0.5)
    return float(B1), float(B2), float(B3)


def c3_factor(H):
    return 0.5 * (2 ** (3 * H - 0.5) / (0.5 - 3 * H) + 2 / (1 - 2 * H))


def c3_factor_alt(H):
    return 2 ** (3 * H - 1.5) / (0.5 - 3 * H) + 1 / (1 - 2 * H)


def c2_c3(H, method="beta", tol=1e-12):
    """(C2, C3) from the B constants."""
    H = check_hurst(H)
    if H >= LOWER_BOUND_H:
        raise PreconditionError("C2 and C3 are defined for H < 1/6")
    B1, B2, B3 = b_constants_beta(H) if method == "beta" else b_constants_integral(H, tol)
    return B1 * B2 / (3 * H + 1.5), -B3 * c3_factor(H)


def lower_bound_constants(H, method="beta", tol=1e-12) -> LowerBoundConstants:
    H = check_hurst(H)
    if H >= LOWER_BOUND_H:
        raise PreconditionError("C2 and C3 are defined for H < 1/6")
    B = b_constants_beta(H) if method == "beta" else b_constants_integral(H, tol)
    C2 = B[0] * B[1] / (3 * H + 1.5)
    C3 = -B[2] * c3_factor(H)
    return LowerBoundConstants(H, *B, C2, C3, method)


def parse_sweep(text):
    """'lo:hi:count' -> evenly spaced points strictly inside (lo, hi)."""
    try:
        lo, hi, count = text.split(":")
        lo, hi, count = float(lo), float(hi), int(count)
    except ValueError:
        raise PreconditionError(f"sweep must look like 0.001:0.125:50, got '{text}'") from None
    if not (0 < lo < hi) or count < 1:
        raise PreconditionError("sweep needs 0 < lo < hi and a positive count")
    return list(np.linspace(lo, hi, count + 2)[1:-1])


def sweep_constants(H_values, method="beta", tol=1e-12):
    return [lower_bound_constants(H, method, tol) for H in H_values]


# ---------------------------------------------------------------------------
# rescaled weak error


@dataclass
class LowerBoundCurve:
    H: float
    ns: list
    errors: list
    rescaled: list
    window_min: float
    constants: LowerBoundConstants

    def to_dict(self):
        return {"H": self.H, "n": list(self.ns), "error": list(self.errors),
                "rescaled": list(self.rescaled), "window_min": self.window_min,
                **{k: v for k, v in self.constants.row().items() if k != "H"}}


def empirical_lower_bound(H, n_list, tol=1e-10, window=3) -> LowerBoundCurve:
    """n^{3H+1/2} E_{n,3} for f(x) = x, rho = 1, T = 1.

    The constants are returned alongside; the normalisation linking their
    difference to the limit of the sequence is not asserted.
    """
    H = check_hurst(H)
    if H >= LOWER_BOUND_H:
        raise PreconditionError("the lower-bound experiment needs H < 1/6")
    model = ModelSpec(H, 1.0, Linear(1.0), 1.0)
    cont = continuous_moment(model, 3, tol).value
    ns = [int(n) for n in n_list]
    errors = [cont - discrete_moment(model, 3, n).value for n in ns]
    rescaled = [n ** (3 * H + 0.5) * e for n, e in zip(ns, errors)]
    return LowerBoundCurve(H, ns, errors, rescaled, float(min(rescaled[-window:])),
                           lower_bound_constants(H))
