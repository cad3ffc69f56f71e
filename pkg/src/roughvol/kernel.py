"""Liouville kernel, its grid-frozen twin, covariance and grid plumbing.

The Liouville fBm is W_hat(t) = int_0^t K(t, s) dW_s with K(t, s) = (t - s)^(H - 1/2)
for t > s. The Euler scheme freezes it at eta(t) = floor(n t) / n.
"""
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.special import gamma, hyp2f1, roots_legendre

from .errors import FactorizationError, PreconditionError, QuadratureError

GRID_RTOL = 1e-12


def check_hurst(H) -> float:
    H = float(H)
    if not 0.0 < H <= 0.5:
        raise PreconditionError(f"Hurst parameter must lie in (0, 1/2], got {H}")
    return H


@dataclass(frozen=True)
class GridSpec:
    """Uniform grid i/n on [0, T]; a non-integer n*T adds one partial last step."""

    n: int
    T: float = 1.0

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 1:
            raise PreconditionError(f"n must be a positive integer, got {self.n}")
        if not self.T > 0:
            raise PreconditionError(f"T must be positive, got {self.T}")
        object.__setattr__(self, "n", int(self.n))
        object.__setattr__(self, "T", float(self.T))

    @property
    def full_steps(self) -> int:
        """floor(n T), snapped to the nearest integer within GRID_RTOL."""
        return _snap_floor(self.n * self.T)

    @property
    def integral(self) -> bool:
        x = self.n * self.T
        return abs(x - round(x)) <= GRID_RTOL * max(1.0, x)

    @property
    def steps(self) -> int:
        return self.full_steps if self.integral else self.full_steps + 1

    def times(self) -> np.ndarray:
        """Grid points t_0 .. t_M with t_M = T."""
        t = np.arange(self.steps + 1) / self.n
        t[-1] = self.T
        return t

    def widths(self) -> np.ndarray:
        return np.diff(self.times())


def _snap_floor(x):
    x = np.asarray(x, dtype=float)
    k = np.round(x)
    near = np.abs(x - k) <= GRID_RTOL * np.maximum(1.0, np.abs(x))
    out = np.where(near, k, np.floor(x)).astype(np.int64)
    return int(out) if out.ndim == 0 else out


def eta_index(t, n):
    """floor(n t) with grid points recognised up to relative rounding."""
    return _snap_floor(np.multiply(t, n))


def eta(t, n):
    """Projection onto the grid from below, eta(t) = floor(n t) / n."""
    k = eta_index(t, n)
    return k / n


def liouville_K(t, s, H):
    """K(t, s) = (t - s)^(H - 1/2) for t > s, else 0."""
    t = np.asarray(t, dtype=float)
    s = np.asarray(s, dtype=float)
    d = t - s
    pos = d > 0
    out = np.where(pos, np.where(pos, d, 1.0) ** (H - 0.5), 0.0)
    return float(out) if out.ndim == 0 else out


def discrete_K(t, s, H, n):
    """K(eta(t), s): the kernel with its upper time frozen on the grid."""
    return liouville_K(eta(t, n), s, H)


def integrated_K(t_upper, a, b, H):
    """int_a^b K(t_upper, s) ds in closed form."""
    p = H + 0.5
    lo = np.maximum(np.subtract(t_upper, a), 0.0)
    hi = np.maximum(np.subtract(t_upper, b), 0.0)
    out = (lo ** p - hi ** p) / p
    return float(out) if np.ndim(out) == 0 else out


# ---------------------------------------------------------------------------
# covariance


def variance(t, H):
    """C(t, t) = t^(2H) / (2H)."""
    return np.power(t, 2 * H) / (2 * H)


@lru_cache(maxsize=None)
def _legendre(q):
    x, w = roots_legendre(q)
    return x, w


def _adaptive_legendre(fun, a, b, tol, q=16, max_depth=40):
    x, w = _legendre(q)

    def rule(lo, hi):
        mid, half = 0.5 * (lo + hi), 0.5 * (hi - lo)
        return half * np.dot(w, fun(mid + half * x))

    total = 0.0
    first = rule(a, b)
    scale = max(1.0, abs(first))
    stack = [(a, b, first, 0)]
    while stack:
        lo, hi, whole, depth = stack.pop()
        mid = 0.5 * (lo + hi)
        left, right = rule(lo, mid), rule(mid, hi)
        diff = abs(left + right - whole)
        if diff <= tol * (hi - lo) / (b - a) * scale:
            total += left + right
        elif depth >= max_depth:
            # a non-smooth endpoint panel may keep only a negligible share of the error
            if diff > 1e-3 * tol * scale:
                raise QuadratureError(f"adaptive Gauss-Legendre did not reach tol={tol}")
            total += left + right
        else:
            stack.append((mid, hi, right, depth + 1))
            stack.append((lo, mid, left, depth + 1))
    return total


def covariance_C(t, s, H, tol=1e-13):
    """Covariance of the Liouville fBm by adaptive quadrature.

    Off the diagonal, u -> s - v^(1/(H+1/2)) absorbs the (s - u)^(H-1/2)
    endpoint singularity so the remaining integrand is bounded.
    """
    H = check_hurst(H)
    hi, lo = (float(t), float(s)) if t >= s else (float(s), float(t))
    if lo < 0:
        raise PreconditionError("times must be non-negative")
    if lo == 0.0:
        return 0.0
    if hi == lo:
        return float(variance(hi, H))
    p = 1.0 / (H + 0.5)
    gap = hi - lo
    upper = lo ** (H + 0.5)

    def integrand(v):
        return (gap + v ** p) ** (H - 0.5)

    return p * _adaptive_legendre(integrand, 0.0, upper, tol)


def _near_diag_const(H):
    return gamma(H + 0.5) * gamma(-2 * H) / gamma(0.5 - H)


def scaled_covariance(z, y, H):
    """c(z) = C(1, z) for 0 <= z <= 1, given both z and y = 1 - z.

    Passing y separately keeps the (1 - z)^(2H) cusp accurate when z is
    within rounding of 1.
    """
    z, y = np.broadcast_arrays(np.asarray(z, dtype=float), np.asarray(y, dtype=float))
    if H == 0.5:
        return z.copy()
    out = np.asarray(np.power(z, H + 0.5) / (H + 0.5) * hyp2f1(0.5 - H, 1.0, H + 1.5, z))
    if H <= 0.49:
        near = y < 1e-2
        if np.any(near):
            zn, yn = z[near], y[near]
            out[near] = (np.power(zn, H + 0.5) / (2 * H) * hyp2f1(0.5 - H, 1.0, 1 - 2 * H, yn)
                         + np.power(yn, 2 * H) * _near_diag_const(H))
    return out


def covariance(t, s, H):
    """Vectorised C(t, s) through the hypergeometric closed form."""
    t = np.asarray(t, dtype=float)
    s = np.asarray(s, dtype=float)
    hi = np.maximum(t, s)
    lo = np.minimum(t, s)
    safe = np.where(hi > 0, hi, 1.0)
    z = lo / safe
    y = (hi - lo) / safe
    out = np.power(hi, 2 * H) * scaled_covariance(z, y, H)
    out = np.where(lo > 0, out, 0.0)
    return float(out) if out.ndim == 0 else out


def covariance_matrix(times, H):
    times = np.asarray(times, dtype=float)
    return covariance(times[:, None], times[None, :], H)


# ---------------------------------------------------------------------------
# joint grid law


def joint_grid_covariance(grid: GridSpec, H):
    """Covariance of (W_hat(t_1..t_M), dW_1..dW_M) on the grid.

    dW_j = W(t_j) - W(t_{j-1}); Cov(W_hat(t_i), dW_j) = integrated_K(t_i, t_{j-1}, t_j).
    """
    H = check_hurst(H)
    t = grid.times()
    upper = t[1:]
    P = covariance_matrix(upper, H)
    Q = integrated_K(upper[:, None], t[None, :-1], t[None, 1:], H)
    R = np.diag(np.diff(t))
    return np.block([[P, Q], [Q.T, R]])


def cholesky_pivots(A):
    """Pivots of the unpivoted LDL^T factorisation, computed without repair."""
    A = np.array(A, dtype=float)
    n = A.shape[0]
    d = np.zeros(n)
    for k in range(n):
        d[k] = A[k, k]
        if d[k] > 0:
            col = A[k + 1:, k] / d[k]
            A[k + 1:, k + 1:] -= np.outer(col, A[k, k + 1:])
    return d


def cholesky_with_jitter(A, start=1e-12, stop=1e-8):
    """Cholesky factor, adding jitter*trace/dim (x10 steps) if needed."""
    A = np.asarray(A, dtype=float)
    dim = A.shape[0]
    if dim == 0:
        return np.zeros((0, 0)), 0.0
    try:
        return np.linalg.cholesky(A), 0.0
    except np.linalg.LinAlgError:
        pass
    scale = max(np.trace(A) / dim, np.finfo(float).tiny)
    jitter = start
    while jitter <= stop * (1 + 1e-9):
        try:
            return np.linalg.cholesky(A + jitter * scale * np.eye(dim)), jitter * scale
        except np.linalg.LinAlgError:
            jitter *= 10
    raise FactorizationError("covariance is not positive semi-definite within jitter budget")


def grid_sampling_factor(grid: GridSpec, H):
    """Lower-triangular L with (dW, W_hat(t_1..t_M)) = L @ Z, Z standard normal.

    dW is sampled first; W_hat given dW has the Schur-complement covariance,
    which vanishes at H = 1/2 and is then treated as exactly zero.
    """
    H = check_hurst(H)
    t = grid.times()
    h = np.diff(t)
    upper = t[1:]
    P = covariance_matrix(upper, H)
    Q = integrated_K(upper[:, None], t[None, :-1], t[None, 1:], H)
    A = Q / h[None, :]
    S = P - (A * h[None, :]) @ A.T
    S = 0.5 * (S + S.T)
    if np.max(np.abs(np.diag(S)), initial=0.0) <= 1e-13 * max(np.max(np.diag(P)), 1.0):
        LS = np.zeros_like(S)
    else:
        LS, _ = cholesky_with_jitter(S)
    M = grid.steps
    L = np.zeros((2 * M, 2 * M))
    sq = np.sqrt(h)
    L[:M, :M] = np.diag(sq)
    L[M:, :M] = A * sq[None, :]
    L[M:, M:] = LS
    return L
