"""Gaussian expectations of products of f-derivatives.

A SymbolicFactor is a finite sum of elementary products

    coef * prod_j prod_{d in orders[j]} f^(d)(x_j),

and the engine evaluates E[psi(X)] for X ~ N(0, Sigma), either for one law or
for a whole batch of covariance matrices at once (the moment engine evaluates
the same psi at every quadrature node).
"""
import itertools
import math
from collections import Counter
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.special import roots_hermitenorm

from .errors import BudgetError, PreconditionError
from .volatility import Exponential, Linear

METHODS = ("analytic", "wick", "hermite")
HERMITE_START, HERMITE_MAX = 20, 80
HERMITE_MAX_DIM = 8
HERMITE_MAX_POINTS = 2_000_000


def _canon(orders):
    return tuple(tuple(sorted(o)) for o in orders)


@dataclass(frozen=True)
class SymbolicFactor:
    """Sum of elementary products of f-derivatives over m variables."""

    terms: tuple
    m: int

    @classmethod
    def elementary(cls, orders, coefficient=1.0):
        orders = _canon(orders)
        return cls(((float(coefficient), orders),), len(orders))

    def scaled(self, c):
        return SymbolicFactor(tuple((c * a, o) for a, o in self.terms), self.m)

    def derivative(self, j):
        """Partial derivative in x_j by the product rule."""
        acc = Counter()
        for coef, orders in self.terms:
            for d, mult in Counter(orders[j]).items():
                new = list(orders[j])
                new.remove(d)
                new.append(d + 1)
                key = orders[:j] + (tuple(sorted(new)),) + orders[j + 1:]
                acc[key] += coef * mult
        return SymbolicFactor(tuple((c, o) for o, c in sorted(acc.items())), self.m)

    def permuted(self, perm):
        """Variable j of the result is variable perm[j] of self."""
        return SymbolicFactor(tuple((c, tuple(o[p] for p in perm)) for c, o in self.terms), self.m)

    def evaluate(self, f, x):
        x = np.asarray(x, dtype=float)
        total = 0.0
        for coef, orders in self.terms:
            val = coef
            for j, ords in enumerate(orders):
                for d in ords:
                    val = val * f.derivative(d, x[..., j])
            total = total + val
        return total


@dataclass(frozen=True)
class GaussianLaw:
    cov: np.ndarray

    def __post_init__(self):
        cov = np.atleast_2d(np.asarray(self.cov, dtype=float))
        if cov.shape[0] != cov.shape[1] or not np.allclose(cov, cov.T, atol=1e-12):
            raise PreconditionError("covariance must be a symmetric square matrix")
        object.__setattr__(self, "cov", cov)

    @property
    def dim(self):
        return self.cov.shape[0]


# ---------------------------------------------------------------------------
# Wick pairing


@lru_cache(maxsize=None)
def wick_pairings(degrees):
    """Isserlis expansion of E[prod_j x_j^{k_j}].

    Returns ((count, ((a, b, e), ...)), ...): the moment is
    sum count * prod Sigma_ab^e. Pairings are grouped by multiset.
    """
    degrees = tuple(degrees)
    if sum(degrees) % 2:
        return ()
    acc = Counter()
    for count, pairs in _pairings(degrees):
        acc[pairs] += count
    return tuple((c, tuple((a, b, e) for (a, b), e in sorted(Counter(p).items())))
                 for p, c in sorted(acc.items()))


@lru_cache(maxsize=None)
def _pairings(degrees):
    a = next((i for i, k in enumerate(degrees) if k), None)
    if a is None:
        return ((1, ()),)
    out = []
    rest = list(degrees)
    rest[a] -= 1
    for b in range(a, len(degrees)):
        ways = rest[b]
        if ways == 0:
            continue
        nxt = list(rest)
        nxt[b] -= 1
        for count, pairs in _pairings(tuple(nxt)):
            out.append((ways * count, tuple(sorted(((a, b),) + pairs))))
    return tuple(out)


def gaussian_monomial(degrees, entry):
    """E[prod x_j^{k_j}] with covariance entries entry(a, b)."""
    total = 0.0
    for count, pairs in wick_pairings(tuple(degrees)):
        val = float(count)
        for a, b, e in pairs:
            val = val * entry(a, b) ** e
        total = total + val
    return total


def linear_monomials(orders, f: Linear):
    """Expand prod_j prod_d f^(d)(x_j) for affine f into {degrees: coef}."""
    per_var = []
    for ords in orders:
        if any(d >= 2 for d in ords):
            return {}
        ones = sum(1 for d in ords if d == 1)
        zeros = len(ords) - ones
        scale = f.c1 ** ones
        poly = {}
        for k in range(zeros + 1):
            c = scale * math.comb(zeros, k) * f.c0 ** (zeros - k) * f.c1 ** k
            if c != 0.0:
                poly[k] = c
        per_var.append(poly)
    out = {}
    for combo in itertools.product(*(p.items() for p in per_var)):
        degrees = tuple(k for k, _ in combo)
        coef = math.prod(c for _, c in combo)
        out[degrees] = out.get(degrees, 0.0) + coef
    return out


# ---------------------------------------------------------------------------
# batched evaluation


class CovarianceBatch:
    """Covariance entries Sigma_ab broadcast over a batch of quadrature nodes."""

    def __init__(self, dim, entry):
        self.dim = dim
        self._entry = entry
        self._cache = {}

    @classmethod
    def from_matrix(cls, cov):
        cov = np.asarray(cov, dtype=float)
        return cls(cov.shape[-1], lambda a, b: cov[..., a, b])

    def entry(self, a, b):
        key = (a, b) if a <= b else (b, a)
        if key not in self._cache:
            self._cache[key] = self._entry(*key)
        return self._cache[key]

    def stack(self):
        m = self.dim
        shape = np.broadcast_shapes(*(np.shape(self.entry(a, b)) for a in range(m) for b in range(a, m)))
        out = np.empty(shape + (m, m))
        for a in range(m):
            for b in range(a, m):
                out[..., a, b] = out[..., b, a] = self.entry(a, b)
        return out


def _check_method(f, method, m):
    if method not in METHODS:
        raise PreconditionError(f"unknown method '{method}'")
    if method == "analytic" and not isinstance(f, (Linear, Exponential)):
        raise PreconditionError("analytic expectations need a Linear or Exponential f")
    if method == "wick" and not isinstance(f, Linear):
        raise PreconditionError("Wick pairing needs a Linear f")
    if method == "hermite" and m > HERMITE_MAX_DIM:
        raise BudgetError(f"Gauss-Hermite supports at most {HERMITE_MAX_DIM} variables, got {m}")


def expect_batch(psi: SymbolicFactor, cov: CovarianceBatch, f, method="analytic", tol=1e-12):
    """E[psi(X)] for X ~ N(0, Sigma) over a batch of covariances."""
    _check_method(f, method, psi.m)
    if method == "hermite":
        return _hermite_adaptive(psi, cov.stack(), f, tol)
    if isinstance(f, Linear):
        total = 0.0
        for coef, orders in psi.terms:
            for degrees, c in linear_monomials(orders, f).items():
                total = total + coef * c * gaussian_monomial(degrees, cov.entry)
        return total
    total = 0.0
    for coef, orders in psi.terms:
        counts = [len(o) for o in orders]
        const = coef * math.prod(f.c2 * f.c3 ** d for o in orders for d in o)
        quad = 0.0
        for a in range(psi.m):
            for b in range(psi.m):
                if counts[a] and counts[b]:
                    quad = quad + counts[a] * counts[b] * cov.entry(a, b)
        total = total + const * np.exp(0.5 * f.c3 ** 2 * quad)
    return total


def expect_psi(psi: SymbolicFactor, law: GaussianLaw, f, method="analytic", tol=1e-12):
    """E[psi(X)] for X ~ law, by Wick pairing, exponential closed form or Gauss-Hermite."""
    if psi.m != law.dim:
        raise PreconditionError(f"psi has {psi.m} variables but the law has dimension {law.dim}")
    return float(expect_batch(psi, CovarianceBatch.from_matrix(law.cov), f, method, tol))


# ---------------------------------------------------------------------------
# Gauss-Hermite


@lru_cache(maxsize=None)
def _hermite_rule(q):
    x, w = roots_hermitenorm(q)
    return x, w / math.sqrt(2 * math.pi)


def _psd_factor(cov):
    vals, vecs = np.linalg.eigh(cov)
    return vecs * np.sqrt(np.clip(vals, 0.0, None))[..., None, :]


def hermite_expect(psi, cov, f, q):
    """Tensor Gauss-Hermite with q nodes per axis after whitening."""
    cov = np.asarray(cov, dtype=float)
    m = cov.shape[-1]
    L = _psd_factor(cov)
    x, w = _hermite_rule(q)
    z = np.array(list(itertools.product(x, repeat=m)))
    wz = np.prod(np.array(list(itertools.product(w, repeat=m))), axis=1)
    pts = np.einsum("...ij,pj->...pi", L, z)
    return np.sum(psi.evaluate(f, pts) * wz, axis=-1)


TRAPEZOID_HALF_WIDTH = 9.0


@lru_cache(maxsize=None)
def _trapezoid_rule(q):
    x = np.linspace(-TRAPEZOID_HALF_WIDTH, TRAPEZOID_HALF_WIDTH, q)
    w = (x[1] - x[0]) * np.exp(-0.5 * x ** 2) / math.sqrt(2 * math.pi)
    return x, w


def trapezoid_expect(psi, cov, f, q):
    """Tensor trapezoid rule on [-9, 9]^m after whitening.

    For integrands analytic in a strip it converges geometrically in q,
    unlike Gauss-Hermite, which is slow when poles sit close to the real axis.
    """
    cov = np.asarray(cov, dtype=float)
    m = cov.shape[-1]
    L = _psd_factor(cov)
    x, w = _trapezoid_rule(q)
    z = np.array(list(itertools.product(x, repeat=m)))
    wz = np.prod(np.array(list(itertools.product(w, repeat=m))), axis=1)
    pts = np.einsum("...ij,pj->...pi", L, z)
    return np.sum(psi.evaluate(f, pts) * wz, axis=-1)


def _hermite_adaptive(psi, cov, f, tol):
    m = psi.m
    cap = max(2, int(HERMITE_MAX_POINTS ** (1.0 / m))) if m else HERMITE_MAX
    q = min(HERMITE_START, cap)
    prev = hermite_expect(psi, cov, f, q)
    while q < min(HERMITE_MAX, cap):
        q = min(2 * q, HERMITE_MAX, cap)
        cur = hermite_expect(psi, cov, f, q)
        if np.all(np.abs(cur - prev) <= tol * np.maximum(1.0, np.abs(cur))):
            return cur
        prev = cur
    return prev


# ---------------------------------------------------------------------------
# derivative identity


def check_derivative_identity(g: SymbolicFactor, sigma_path, t, f=None, h=1e-4,
                              dsigma=None, method="analytic"):
    """|d/dt E[g(X_t)] - 1/2 sum_kl dSigma_kl E[d_k d_l g(X_t)]|, X_t ~ N(0, Sigma(t)).

    The left side uses a central difference; dSigma defaults to one as well.
    """
    f = Linear(1.0) if f is None else f

    def phi(s):
        return expect_psi(g, GaussianLaw(sigma_path(s)), f, method)

    lhs = (phi(t + h) - phi(t - h)) / (2 * h)
    if dsigma is None:
        dS = (np.atleast_2d(sigma_path(t + h)) - np.atleast_2d(sigma_path(t - h))) / (2 * h)
    else:
        dS = np.atleast_2d(dsigma(t))
    law = GaussianLaw(sigma_path(t))
    rhs = 0.0
    for k in range(g.m):
        gk = g.derivative(k)
        for l in range(g.m):
            if dS[k, l] != 0.0:
                rhs += 0.5 * dS[k, l] * expect_psi(gk.derivative(l), law, f, method)
    return abs(lhs - rhs)
