"""Moments of X_T = int f(W_hat) dB and of its left-point Euler scheme.

The continuous moment sums, over nontrivial words of weighted length N, the
simplex integral of E[psi(W_hat(t_1), ..., W_hat(t_m))] times the kernel
product. The Euler moment uses the same words with frozen kernels and
W_hat(eta(t)); it is also available exactly (no quadrature) by Gaussian
calculus on the grid increments, which is the default for weak errors.
"""
import itertools
import math
import threading
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from .errors import BudgetError, PreconditionError
from .gaussian import CovarianceBatch, SymbolicFactor, expect_batch, trapezoid_expect
from .kernel import GridSpec, check_hurst, covariance_matrix, integrated_K, scaled_covariance
from .quadrature import cube_axes, cube_weights, node_count, simplex_times
from .volatility import Exponential, Linear
from .words import enumerate_words, expand_word, is_trivial

MAX_QUADRATURE_ORDER = 6
MAX_CELLS = 10_000_000
MAX_WICK_TUPLES = 3_000_000
CUBE_POINTS = 30_000_000
SLAB_POINTS = 400_000
INNER_WORK = 200_000_000
INNER_MAX = 160


def inner_nodes(m):
    """Starting trapezoid nodes per axis of the inner Gaussian rule for non-analytic f."""
    return {1: 20, 2: 20, 3: 8}.get(m, 6)


@dataclass(frozen=True)
class ModelSpec:
    """dX = f(W_hat) dB with B = rho W + sqrt(1 - rho^2) W_perp, X_0 = 0."""

    H: float
    rho: float
    f: object = field(default_factory=Linear)
    T: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "H", check_hurst(self.H))
        if not -1.0 <= self.rho <= 1.0:
            raise PreconditionError(f"rho must lie in [-1, 1], got {self.rho}")
        if not self.T > 0:
            raise PreconditionError(f"T must be positive, got {self.T}")
        object.__setattr__(self, "rho", float(self.rho))
        object.__setattr__(self, "T", float(self.T))

    def to_dict(self):
        return {"H": self.H, "rho": self.rho, "T": self.T, "model": self.f.spec}


@dataclass
class MomentReport:
    N: int
    value: float
    error_estimate: float
    method: str
    terms: dict = field(default_factory=dict)
    term_errors: dict = field(default_factory=dict)
    n: int | None = None
    converged: bool = True
    notes: list = field(default_factory=list)

    def to_dict(self):
        return {
            "N": self.N, "n": self.n, "value": self.value,
            "error_estimate": self.error_estimate, "method": self.method,
            "converged": self.converged, "terms": dict(self.terms),
            "term_errors": dict(self.term_errors), "notes": list(self.notes),
        }


def _nontrivial_words(N):
    return [w for w in enumerate_words(N) if not is_trivial(w)]


def _analytic(f):
    return isinstance(f, (Linear, Exponential))


def _term_sum(terms, cov, kernel, f, q=None):
    """sum_k coef_k E[psi_k] prod K over a batch, sharing covariance entries."""
    total = 0.0
    for term in terms:
        if term.coefficient == 0.0:
            continue
        psi = SymbolicFactor.elementary(term.orders)
        if _analytic(f):
            ev = expect_batch(psi, cov, f, "analytic")
        else:
            ev = trapezoid_expect(psi, cov.stack(), f, q or inner_nodes(psi.m))
        val = term.coefficient * ev
        for a, j in term.kernel_pattern():
            val = val * kernel(a - 1, j - 1)
        total = total + val
    return total


# ---------------------------------------------------------------------------
# continuous moment


_cache_lock = threading.Lock()
_word_cache = {}


def _start_level(m):
    return {1: 4, 2: 3, 3: 3, 4: 2, 5: 1}.get(m, 1)


def _word_integral(terms, H, T, f, level, q=None):
    """Simplex integral of one word's unit-rho terms at a tanh-sinh level.

    q is the inner trapezoid node count per axis for non-analytic f.
    """
    m = terms[0].m
    n = node_count(level)
    per_slab = max(1, SLAB_POINTS // n ** (m - 1))
    if not _analytic(f):
        per_slab = max(1, per_slab // q ** m * 8)
    beta = H - 0.5
    total = 0.0
    for start in range(0, n, per_slab):
        axes = cube_axes(m, level, slice(start, start + per_slab))
        t, ratio, gaps, jac = simplex_times(axes, T)
        scale = [np.power(ti, 2 * H) for ti in t]

        def entry(a, b, t=t, ratio=ratio, gaps=gaps, scale=scale):
            if a == b:
                return scale[a] / (2 * H)
            return scale[a] * scaled_covariance(ratio[a, b], gaps[a, b], H)

        def kernel(a, b, t=t, gaps=gaps):
            return np.power(t[a] * gaps[a, b], beta)

        cov = CovarianceBatch(m, entry)
        vals = _term_sum(terms, cov, kernel, f, q) * jac * cube_weights(axes)
        total += float(np.sum(vals))
    return total


def _continuous_word(word, model: ModelSpec, tol):
    """(value, error, converged) of a word at unit rho, cached across calls."""
    key = (word, model.H, model.T, model.f, tol)
    with _cache_lock:
        if key in _word_cache:
            return _word_cache[key]
    terms = expand_word(word, model.f, rho=1.0)
    if not terms:
        result = (0.0, 0.0, True)
    elif _analytic(model.f):
        result = _refine_levels(word, terms, model, tol, None)[:3]
    else:
        result = _refine_inner(word, terms, model, tol)
    with _cache_lock:
        _word_cache[key] = result
    return result


def _work(level, m, q):
    return node_count(level) ** m * (q ** m if q else 1)


def _refine_levels(word, terms, model, tol, q):
    """Halve the tanh-sinh step until two levels agree; returns (value, error, ok, level)."""
    m = terms[0].m
    level = _start_level(m) - (q is not None)
    if _work(level + 1, m, q) > INNER_WORK:
        raise BudgetError(f"word {word}: inner Gaussian quadrature over {m} variables exceeds the work budget")
    prev = _word_integral(terms, model.H, model.T, model.f, level, q)
    while True:
        level += 1
        cur = _word_integral(terms, model.H, model.T, model.f, level, q)
        err = abs(cur - prev)
        if err <= tol * max(1.0, abs(cur)):
            return cur, err, True, level
        if node_count(level + 1) ** m > CUBE_POINTS or _work(level + 1, m, q) > INNER_WORK:
            return cur, err, False, level
        prev = cur


def _refine_inner(word, terms, model, tol):
    """Cube refinement at a fixed inner rule, then inner node doubling at the final level.

    The error estimate adds the last cube difference and the last inner-rule difference.
    """
    m = terms[0].m
    q = inner_nodes(m)
    cur, cube_err, ok, level = _refine_levels(word, terms, model, tol, q)
    herm_err = abs(cur)  # no second inner rule yet
    while True:
        nxt = min(2 * q, INNER_MAX)
        if nxt == q or _work(level, m, nxt) > INNER_WORK:
            return cur, cube_err + herm_err, False
        new = _word_integral(terms, model.H, model.T, model.f, level, nxt)
        herm_err = abs(new - cur)
        cur, q = new, nxt
        if herm_err <= tol * max(1.0, abs(cur)):
            return cur, cube_err + herm_err, ok


def clear_cache():
    with _cache_lock:
        _word_cache.clear()


def continuous_moment(model: ModelSpec, N: int, tol=1e-6) -> MomentReport:
    """E[X_T^N] by word expansion and tanh-sinh quadrature on the simplex."""
    if N > MAX_QUADRATURE_ORDER:
        raise BudgetError(f"quadrature supports N <= {MAX_QUADRATURE_ORDER}")
    report = MomentReport(N, 0.0, 0.0, "quadrature")
    for w in _nontrivial_words(N):
        r = model.rho ** w.rho_power
        if r == 0.0:
            report.terms[w.letters] = report.term_errors[w.letters] = 0.0
            continue
        val, err, ok = _continuous_word(w.letters, model, tol)
        report.terms[w.letters] = r * val
        report.term_errors[w.letters] = abs(r) * err
        if not ok:
            report.converged = False
            report.notes.append(f"word {w}: tolerance {tol} not reached (estimate {err:.3g})")
    report.value = float(sum(report.terms.values()))
    report.error_estimate = float(sum(report.term_errors.values()))
    return report


# ---------------------------------------------------------------------------
# Euler scheme by cell quadrature


class _RunTable:
    """Cached integrals of kernel products over one cell's ordered sub-simplex."""

    def __init__(self, H, level):
        self.beta = H - 0.5
        self.level = level
        self.table = {}

    def single(self, k):
        k = np.asarray(k, dtype=float)
        p = self.beta + 1
        with np.errstate(divide="ignore", invalid="ignore"):
            out = (np.power(k, p) - np.power(np.maximum(k - 1, 0.0), p)) / p
        return np.where(k > 0, out, 1.0)

    def _compute(self, patterns):
        r = patterns.shape[1]
        axes = cube_axes(r, self.level)
        tau, _, gaps, jac = simplex_times(axes, 1.0)
        w = cube_weights(axes) * jac
        out = np.empty(len(patterns))
        for i, pat in enumerate(patterns):
            val = w
            for j, k in enumerate(pat):
                if k == 0:
                    continue
                if k == 1:
                    # 1 - tau_j accurately from the complements
                    omt = gaps_to_one(axes, j)
                    val = val * np.power(omt, self.beta)
                else:
                    val = val * np.power(k - tau[j], self.beta)
            out[i] = np.sum(val)
        return out

    def lookup(self, patterns):
        patterns = np.asarray(patterns, dtype=np.int64)
        keys = [tuple(p) for p in patterns]
        missing = sorted({k for k in keys if k not in self.table})
        if missing:
            vals = self._compute(np.array(missing, dtype=np.int64))
            self.table.update(zip(missing, vals))
        return np.array([self.table[k] for k in keys])


def gaps_to_one(axes, j):
    """1 - u_0 u_1 ... u_j computed from the complements."""
    y, z = 0.0, 1.0
    for u, v, _ in axes[: j + 1]:
        y = y + z * v
        z = z * u
    return y


def _sorted_cells(M, m):
    """All tuples M > i_1 >= i_2 >= ... >= i_m >= 0 as an array."""
    combos = np.array(list(itertools.combinations_with_replacement(range(M - 1, -1, -1), m)),
                      dtype=np.int64)
    return combos.reshape(-1, m)


def _cell_count(M, m):
    return math.comb(M + m - 1, m)


def _discrete_word(word, model, n, level):
    """Unit-rho Euler-scheme contribution of one word at run-integral level."""
    terms = expand_word(word, model.f, rho=1.0, discrete=True)
    if not terms:
        return 0.0
    m = terms[0].m
    grid = GridSpec(n, model.T)
    M = grid.steps
    if _cell_count(M, m) > MAX_CELLS:
        raise BudgetError(f"{_cell_count(M, m)} cells exceed the guard {MAX_CELLS}")
    H, beta = model.H, model.H - 0.5
    cells = _sorted_cells(M, m)
    P = covariance_matrix(np.arange(M) / n, H)
    runs = _RunTable(H, level)
    # equal consecutive indices define the runs of variables sharing a cell
    same = cells[:, 1:] == cells[:, :-1] if m > 1 else np.zeros((len(cells), 0), bool)
    total = 0.0
    for pattern in sorted({tuple(r) for r in same}):
        sel = np.all(same == np.array(pattern, dtype=bool), axis=1)
        idx = cells[sel]
        groups, cur = [], [0]
        for j in range(1, m):
            if pattern[j - 1]:
                cur.append(j)
            else:
                groups.append(cur)
                cur = [j]
        groups.append(cur)

        def entry(a, b, idx=idx):
            return P[idx[:, a], idx[:, b]]

        cov = CovarianceBatch(m, entry)
        for term in terms:
            if term.coefficient == 0.0:
                continue
            kvals = np.zeros((len(idx), m), dtype=np.int64)
            n_kernels = 0
            for a, j in term.kernel_pattern():
                kvals[:, j - 1] = idx[:, a - 1] - idx[:, j - 1]
                n_kernels += 1
            live = np.ones(len(idx), bool)
            for a, j in term.kernel_pattern():
                live &= kvals[:, j - 1] > 0
            if not np.any(live):
                continue
            vol = np.ones(len(idx))
            for g in groups:
                if len(g) == 1:
                    vol = vol * runs.single(kvals[:, g[0]])
                else:
                    vol = vol * np.where(live, runs.lookup(np.where(live[:, None], kvals[:, g], 0)), 0.0)
            psi = SymbolicFactor.elementary(term.orders)
            if _analytic(model.f):
                ev = expect_batch(psi, cov, model.f, "analytic")
            else:
                ev = trapezoid_expect(psi, cov.stack(), model.f, min(2 * inner_nodes(m), INNER_MAX))
            ev = np.broadcast_to(ev, vol.shape)
            scale = n ** (-m) * n ** (-beta * n_kernels)
            total += term.coefficient * scale * float(np.sum(np.where(live, ev * vol, 0.0)))
    return total


def discrete_moment_quadrature(model: ModelSpec, N: int, n: int, tol=1e-6, level=3) -> MomentReport:
    """E[(X_T^n)^N] by the frozen-kernel word expansion, integrated cell by cell."""
    if N > MAX_QUADRATURE_ORDER:
        raise BudgetError(f"quadrature supports N <= {MAX_QUADRATURE_ORDER}")
    grid = GridSpec(n, model.T)
    if not grid.integral:
        raise PreconditionError("the cell quadrature needs n*T to be an integer")
    report = MomentReport(N, 0.0, 0.0, "quadrature", n=n)
    for w in _nontrivial_words(N):
        r = model.rho ** w.rho_power
        if r == 0.0:
            report.terms[w.letters] = report.term_errors[w.letters] = 0.0
            continue
        lo = _discrete_word(w.letters, model, n, level)
        hi = _discrete_word(w.letters, model, n, level + 1)
        report.terms[w.letters] = r * hi
        report.term_errors[w.letters] = abs(r * (hi - lo))
    report.value = float(sum(report.terms.values()))
    report.error_estimate = float(sum(report.term_errors.values()))
    if report.error_estimate > tol * max(1.0, abs(report.value)):
        report.converged = False
        report.notes.append(f"run integrals reached {report.error_estimate:.3g} > tol")
    return report


# ---------------------------------------------------------------------------
# Euler scheme exactly, by Gaussian calculus on the grid


def grid_blocks(model: ModelSpec, n: int):
    """Covariance blocks of (W_hat(t_i), dB_i), i = 0..M-1, t_i = i/n.

    P = Cov(W_hat, W_hat), Q = Cov(W_hat(t_i), dB_j), h = Var(dB_j). The last
    increment is partial when n T is not an integer.
    """
    grid = GridSpec(n, model.T)
    t = grid.times()
    left = t[:-1]
    P = covariance_matrix(left, model.H)
    Q = model.rho * integrated_K(left[:, None], t[None, :-1], t[None, 1:], model.H)
    return P, Q, np.diff(t)


def _perfect_matchings(slots):
    if not slots:
        yield ()
        return
    first, rest = slots[0], slots[1:]
    for i, other in enumerate(rest):
        for tail in _perfect_matchings(rest[:i] + rest[i + 1:]):
            yield ((first, other),) + tail


class _Contractor:
    """Sums over grid indices of products of covariances along a chain or cycle."""

    def __init__(self, P, Q, h):
        self.G = {("W", "W"): P, ("W", "B"): Q, ("B", "W"): Q.T, ("B", "B"): np.diag(h)}
        self.cache = {}

    def path(self, seq):
        if seq not in self.cache:
            vec = np.ones(self.G["W", "W"].shape[0])
            for pair in reversed(seq):
                vec = self.G[pair] @ vec
            self.cache[seq] = float(np.sum(vec))
        return self.cache[seq]

    def cycle(self, seq):
        if seq not in self.cache:
            mat = self.G[seq[0]]
            for pair in seq[1:]:
                mat = mat @ self.G[pair]
            self.cache[seq] = float(np.trace(mat))
        return self.cache[seq]


def _matching_value(matching, quad, contractor):
    """Index sum for one slot matching; vertices < quad carry slots W and B."""
    partner = {}
    for a, b in matching:
        partner[a] = b
        partner[b] = a
    seen = set()
    value = 1.0

    def other(slot):
        kind, v = slot
        return ("B" if kind == "W" else "W", v)

    def walk(start_slot):
        # follow edges from start_slot until a degree-one vertex or the start vertex
        seq = []
        slot = start_slot
        while True:
            nxt = partner[slot]
            seq.append((slot[0], nxt[0]))
            seen.add(slot[1])
            seen.add(nxt[1])
            if nxt[1] >= quad or nxt[1] == start_slot[1]:
                return tuple(seq), nxt
            slot = other(nxt)

    vertices = sorted({s[1] for s in partner})
    for v in vertices:
        if v in seen or v < quad:
            continue
        seq, _ = walk(("B", v))
        value *= contractor.path(seq)
        if value == 0.0:
            return 0.0
    for v in vertices:
        if v in seen:
            continue
        seq, _ = walk(("W", v))
        value *= contractor.cycle(seq)
        if value == 0.0:
            return 0.0
    return value


def _wick_linear(model, N, n):
    f = model.f
    P, Q, h = grid_blocks(model, n)
    contractor = _Contractor(P, Q, h)
    total = 0.0
    for quad in range(N + 1):
        weight = math.comb(N, quad) * f.c0 ** (N - quad) * f.c1 ** quad
        if weight == 0.0 or (N + quad) % 2:
            continue
        slots = [(kind, v) for v in range(N) for kind in (("W", "B") if v < quad else ("B",))]
        s = 0.0
        for matching in _perfect_matchings(slots):
            s += _matching_value(matching, quad, contractor)
        total += weight * s
    return total


def _partial_matchings(k):
    """All sets of disjoint pairs from range(k), with the unpaired rest."""
    def rec(items):
        if not items:
            yield (), ()
            return
        first, rest = items[0], items[1:]
        for pairs, single in rec(rest):
            yield pairs, (first,) + single
        for i, other in enumerate(rest):
            for pairs, single in rec(rest[:i] + rest[i + 1:]):
                yield ((first, other),) + pairs, single
    return list(rec(tuple(range(k))))


def _wick_exponential(model, N, n):
    f = model.f
    P, Q, h = grid_blocks(model, n)
    M = len(h)
    count = math.comb(M + N - 1, N)
    if count > MAX_WICK_TUPLES:
        raise BudgetError(f"{count} index tuples exceed the Wick budget {MAX_WICK_TUPLES}")
    idx = _sorted_cells(M, N)
    mult = np.array([math.factorial(N) / math.prod(math.factorial(c) for c in Counter(row).values())
                     for row in map(tuple, idx)])
    quad = np.zeros(len(idx))
    for a in range(N):
        for b in range(N):
            quad += P[idx[:, a], idx[:, b]]
    mu = np.zeros((len(idx), N))
    for k in range(N):
        for l in range(N):
            mu[:, k] += f.c3 * Q[idx[:, l], idx[:, k]]
    shifted = np.zeros(len(idx))
    for pairs, single in _partial_matchings(N):
        term = np.ones(len(idx))
        for a, b in pairs:
            term *= np.where(idx[:, a] == idx[:, b], h[idx[:, a]], 0.0)
        for a in single:
            term *= mu[:, a]
        shifted += term
    vals = mult * f.c2 ** N * np.exp(0.5 * f.c3 ** 2 * quad) * shifted
    return float(np.sum(vals))


def discrete_moment_wick(model: ModelSpec, N: int, n: int) -> MomentReport:
    """E[(X_T^n)^N] exactly, expanding the Euler sum over the joint Gaussian grid law.

    Affine f uses pairing contractions (any n); exponential f sums over index
    multisets with the Cameron-Martin shift and is budget-limited.
    """
    if N < 1:
        raise PreconditionError("moment order must be at least 1")
    if isinstance(model.f, Linear):
        value = _wick_linear(model, N, n)
    elif isinstance(model.f, Exponential):
        value = _wick_exponential(model, N, n)
    else:
        raise PreconditionError("the exact Euler moment needs a Linear or Exponential f")
    return MomentReport(N, value, 0.0, "wick_oracle", n=n)


def discrete_moment(model: ModelSpec, N: int, n: int, tol=1e-6, method="auto") -> MomentReport:
    if method == "auto":
        method = "wick" if _analytic(model.f) else "quadrature"
    if method == "wick":
        return discrete_moment_wick(model, N, n)
    if method == "quadrature":
        return discrete_moment_quadrature(model, N, n, tol)
    raise PreconditionError(f"unknown discrete method '{method}'")


@dataclass
class WeakErrorReport:
    N: int
    n: int
    value: float
    error_estimate: float
    continuous: MomentReport
    discrete: MomentReport
    terms: dict = field(default_factory=dict)

    def to_dict(self):
        return {
            "N": self.N, "n": self.n, "value": self.value,
            "error_estimate": self.error_estimate, "terms": dict(self.terms),
            "continuous": self.continuous.to_dict(), "discrete": self.discrete.to_dict(),
        }


def weak_error_report(model: ModelSpec, N: int, n: int, tol=1e-6, method="auto") -> WeakErrorReport:
    cont = continuous_moment(model, N, tol)
    disc = discrete_moment(model, N, n, tol, method)
    terms = {}
    if disc.terms:
        terms = {w: cont.terms[w] - disc.terms.get(w, 0.0) for w in cont.terms}
    return WeakErrorReport(N, n, cont.value - disc.value,
                           cont.error_estimate + disc.error_estimate, cont, disc, terms)


def weak_error(model: ModelSpec, N: int, n: int, tol=1e-6, method="auto") -> float:
    """E[X_T^N] - E[(X_T^n)^N]."""
    return weak_error_report(model, N, n, tol, method).value
