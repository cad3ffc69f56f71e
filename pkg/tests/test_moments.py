import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate
from scipy.special import gamma, hyp2f1, roots_jacobi

from roughvol.errors import BudgetError, PreconditionError
from roughvol.kernel import GridSpec, covariance_C
from roughvol.moments import (ModelSpec, continuous_moment, discrete_moment,
                              discrete_moment_quadrature, discrete_moment_wick, weak_error,
                              weak_error_report)
from roughvol.volatility import Exponential, Linear, ShiftedTanh

# E[X_1^3] for f(x) = x, rho = 1: 6 int_0^1 c(z) (1-z)^{H-1/2} dz / (3H + 3/2),
# evaluated with mpmath (30 digits)
N3_REFERENCE = {0.1: 10.0639342000102992552, 0.3: 2.70886470141593426988, 0.02: 20.4260200793172075292}


def gauss_jacobi_N3(H, q=40):
    """Same 1-D integral by Gauss-Jacobi: z^{H+1/2} weight on [0, 1/2], (1-z)^{H-1/2} on [1/2, 1]."""
    b = H - 0.5
    x, w = roots_jacobi(q, 0.0, H + 0.5)
    z = (1 + x) / 4
    left = np.sum(w * hyp2f1(0.5 - H, 1, H + 1.5, z) / (H + 0.5) * (1 - z) ** b) * 0.25 ** (H + 1.5)
    x, w = roots_jacobi(q, 0.0, b)
    y = (1 + x) / 4
    right = np.sum(w * (1 - y) ** (H + 0.5) / (2 * H) * hyp2f1(0.5 - H, 1, 1 - 2 * H, y)) * 0.25 ** (b + 1)
    cusp = gamma(H + 0.5) * gamma(-2 * H) / gamma(0.5 - H)
    right += cusp * 0.5 ** (2 * H + b + 1) / (2 * H + b + 1)
    return 6 * (left + right) / (3 * H + 1.5)


def quadratic_form_moment(model, N, n):
    """E[(X^n)^N] for affine f from the cumulants of a Gaussian quadratic form.

    X = G'AG + b'G with G = (W_hat(t_0..t_{M-1}), dW_1..dW_M, dWperp_1..dWperp_M).
    """
    grid = GridSpec(n, model.T)
    t = grid.times()
    M = grid.steps
    H, rho = model.H, model.rho
    rbar = math.sqrt(max(0.0, 1 - rho * rho))
    S = np.zeros((3 * M, 3 * M))
    for i in range(M):
        for j in range(M):
            S[i, j] = covariance_C(t[i], t[j], H) if t[i] > 0 and t[j] > 0 else 0.0
    p = H + 0.5
    for i in range(M):
        for j in range(M):
            lo, hi = t[j], t[j + 1]
            val = (max(t[i] - lo, 0) ** p - max(t[i] - hi, 0) ** p) / p
            S[i, M + j] = S[M + j, i] = val
    h = np.diff(t)
    S[M:2 * M, M:2 * M] = np.diag(h)
    S[2 * M:, 2 * M:] = np.diag(h)
    c1, c0 = model.f.c1, model.f.c0
    A = np.zeros_like(S)
    b = np.zeros(3 * M)
    for i in range(M):
        A[i, M + i] = A[M + i, i] = c1 * rho / 2
        A[i, 2 * M + i] = A[2 * M + i, i] = c1 * rbar / 2
        b[M + i], b[2 * M + i] = c0 * rho, c0 * rbar
    AS = A @ S
    kappa = [0.0, float(np.trace(AS))]
    for k in range(2, N + 1):
        tr = np.trace(np.linalg.matrix_power(AS, k))
        lin = b @ np.linalg.matrix_power(S @ A, k - 2) @ S @ b
        kappa.append(2 ** (k - 1) * math.factorial(k - 1) * tr + math.factorial(k) * 2.0 ** (k - 3) * lin)
    mom = [1.0]
    for k in range(1, N + 1):
        mom.append(sum(math.comb(k - 1, j - 1) * kappa[j] * mom[k - j] for j in range(1, k + 1)))
    return mom[N]


def test_ito_oracles():
    m = ModelSpec(0.5, 1.0, Linear(1.0))
    assert abs(continuous_moment(m, 2).value - 0.5) <= 1e-6
    assert abs(continuous_moment(m, 3).value - 1.0) <= 1e-6
    assert abs(continuous_moment(m, 4).value - 3.75) <= 1e-6
    assert abs(continuous_moment(ModelSpec(0.5, 0.0, Linear(1.0)), 4).value - 1.75) <= 1e-6
    assert continuous_moment(m, 1).value == 0.0


@given(st.floats(0.02, 0.5), st.floats(-1, 1), st.floats(0.2, 3.0))
@settings(max_examples=15)
def test_second_moment_isometry(H, rho, T):
    got = continuous_moment(ModelSpec(H, rho, Linear(1.0), T), 2, 1e-10).value
    assert got == pytest.approx(T ** (2 * H + 1) / (2 * H * (2 * H + 1)), rel=1e-9)


@pytest.mark.parametrize("f", [Exponential(1.2, 0.5), ShiftedTanh()])
def test_second_moment_one_dimensional(f):
    H = 0.2
    model = ModelSpec(H, 0.6, f)

    def integrand(t):
        v = t ** (2 * H) / (2 * H)
        x = np.linspace(-10, 10, 4001) * math.sqrt(v)
        dens = np.exp(-x ** 2 / (2 * v)) / math.sqrt(2 * math.pi * v)
        return np.sum(f.derivative(0, x) ** 2 * dens) * (x[1] - x[0])

    ref, _ = integrate.quad(integrand, 0, 1, epsabs=1e-12, limit=200)
    assert continuous_moment(model, 2, 1e-9).value == pytest.approx(ref, abs=1e-8)


@pytest.mark.parametrize("H", sorted(N3_REFERENCE))
def test_third_moment_oracles(H):
    ref = N3_REFERENCE[H]
    assert abs(gauss_jacobi_N3(H) - ref) < 1e-12
    rep = continuous_moment(ModelSpec(H, 1.0, Linear(1.0)), 3, 1e-10)
    assert abs(rep.value - ref) < 1e-10
    assert rep.error_estimate < 1e-10


def test_report_invariants():
    rep = continuous_moment(ModelSpec(0.2, 0.7, Linear(1.0, 0.3)), 4, 1e-8)
    assert rep.error_estimate >= 0
    assert rep.value == pytest.approx(sum(rep.terms.values()), rel=1e-15)
    assert set(rep.terms) == {"IIJ", "JJ"}
    assert rep.converged


def test_odd_moments_vanish_without_correlation():
    for N in (1, 3, 5):
        assert continuous_moment(ModelSpec(0.2, 0.0, Linear(1.0)), N).value == 0.0
        assert discrete_moment_wick(ModelSpec(0.2, 0.0, Linear(1.0)), N, 8).value == 0.0


@pytest.mark.parametrize("N", [2, 3, 4])
def test_weak_error_parity_in_rho(N):
    up = weak_error(ModelSpec(0.25, 0.6, Linear(1.0)), N, 8)
    down = weak_error(ModelSpec(0.25, -0.6, Linear(1.0)), N, 8)
    assert down == pytest.approx(up if N % 2 == 0 else -up, rel=1e-10, abs=1e-14)


def test_refinement_is_monotone():
    model = ModelSpec(0.3, 1.0, Linear(1.0))
    coarse = continuous_moment(model, 3, 1e-4)
    fine = continuous_moment(model, 3, 5e-5)
    assert abs(fine.value - coarse.value) <= max(coarse.error_estimate, 1e-15)


def test_discrete_second_moment_isometry():
    model = ModelSpec(0.3, 0.4, Linear(1.0))
    n = 8
    t = np.arange(n) / n
    expected = np.sum(t ** 0.6 / 0.6) / n
    assert discrete_moment_wick(model, 2, n).value == pytest.approx(expected, rel=1e-13)
    assert discrete_moment_quadrature(model, 2, n).value == pytest.approx(expected, rel=1e-10)
    bm = ModelSpec(0.5, 1.0, Linear(1.0))
    assert abs(discrete_moment_quadrature(bm, 2, 4).value - 0.375) < 1e-10
    assert abs(discrete_moment_wick(bm, 2, 4).value - 0.375) < 1e-12


def test_brownian_third_moment_two_steps():
    # X = W_{1/2} (W_1 - W_{1/2}); odd moments of the independent increment vanish
    model = ModelSpec(0.5, 1.0, Linear(1.0))
    assert discrete_moment_wick(model, 3, 2).value == pytest.approx(0.0, abs=1e-15)
    rng = np.random.default_rng(11)
    a, b = rng.normal(scale=math.sqrt(0.5), size=(2, 2_000_000))
    x = (a * b) ** 3
    assert abs(x.mean()) < 3 * x.std() / math.sqrt(len(x))


@pytest.mark.parametrize("H,rho,c0,N,n,T", [
    (0.1, 1.0, 0.0, 3, 4, 1.0), (0.1, 0.7, 0.0, 4, 8, 1.0), (0.3, 0.0, 0.0, 4, 8, 1.0),
    (0.2, -0.5, 0.4, 3, 6, 1.0), (0.4, 0.9, 1.0, 4, 5, 0.9), (0.05, 1.0, 0.0, 5, 4, 2.0),
    (0.25, 0.3, 0.2, 6, 4, 1.0),
])
def test_wick_matches_quadratic_form_cumulants(H, rho, c0, N, n, T):
    model = ModelSpec(H, rho, Linear(1.3, c0), T)
    ref = quadratic_form_moment(model, N, n)
    assert discrete_moment_wick(model, N, n).value == pytest.approx(ref, rel=1e-10, abs=1e-12)


@pytest.mark.parametrize("model,N,n", [
    (ModelSpec(0.1, 0.7, Linear(1.0)), 3, 4),
    (ModelSpec(0.3, 1.0, Linear(1.0)), 4, 8),
    (ModelSpec(0.3, 0.5, Exponential(1.0, 0.5)), 3, 8),
    (ModelSpec(0.15, -0.4, Exponential(0.8, 0.3)), 4, 4),
    (ModelSpec(0.3, 0.9, Linear(1.0, 0.3)), 4, 8),
])
def test_quadrature_matches_wick(model, N, n):
    q = discrete_moment_quadrature(model, N, n)
    w = discrete_moment_wick(model, N, n)
    assert abs(q.value - w.value) <= max(1e-6, 3 * q.error_estimate)
    assert abs(q.value - w.value) <= 1e-9 * max(1, abs(w.value))


def test_exponential_second_moment_closed_form():
    model = ModelSpec(0.3, 0.8, Exponential(1.5, 0.5))
    n = 8
    t = np.arange(n) / n
    expected = np.sum(1.5 ** 2 * np.exp(2 * 0.25 * t ** 0.6 / 0.6)) / n
    assert discrete_moment_wick(model, 2, n).value == pytest.approx(expected, rel=1e-13)


def test_discrete_converges_to_continuous():
    model = ModelSpec(0.3, 1.0, Linear(1.0))
    errs = [abs(weak_error(model, 3, n)) for n in (4, 8, 16, 32, 64)]
    assert all(b < a for a, b in zip(errs, errs[1:]))
    assert errs[-1] < errs[0] / 4


def test_weak_error_report_terms():
    rep = weak_error_report(ModelSpec(0.2, 1.0, Linear(1.0)), 4, 4, method="quadrature")
    assert set(rep.terms) == {"IIJ", "JJ"}
    assert rep.value == pytest.approx(sum(rep.terms.values()), rel=1e-9)
    assert rep.value == pytest.approx(rep.continuous.value - rep.discrete.value)


def test_guards():
    with pytest.raises(PreconditionError):
        discrete_moment_quadrature(ModelSpec(0.2, 1.0, Linear(1.0), 0.9), 2, 4)
    with pytest.raises(BudgetError):
        continuous_moment(ModelSpec(0.2, 1.0, Linear(1.0)), 7)
    with pytest.raises(BudgetError):
        discrete_moment_wick(ModelSpec(0.2, 1.0, Exponential()), 4, 200)
    with pytest.raises(BudgetError):
        discrete_moment_quadrature(ModelSpec(0.2, 1.0, Linear(1.0)), 6, 400)
    with pytest.raises(PreconditionError):
        discrete_moment_wick(ModelSpec(0.2, 1.0, ShiftedTanh()), 2, 4)
    with pytest.raises(PreconditionError):
        discrete_moment(ModelSpec(0.2, 1.0, Linear(1.0)), 2, 4, method="nope")
    with pytest.raises(PreconditionError):
        ModelSpec(0.2, 1.5)


def test_partial_last_step_is_included():
    # with T = 0.9 and n = 4 the last increment covers [0.75, 0.9]
    model = ModelSpec(0.3, 1.0, Linear(1.0), 0.9)
    t = np.array([0.0, 0.25, 0.5, 0.75])
    h = np.array([0.25, 0.25, 0.25, 0.15])
    assert discrete_moment_wick(model, 2, 4).value == pytest.approx(np.sum(t ** 0.6 / 0.6 * h), rel=1e-13)


def test_grid_points_integer_T():
    # n T integral: the partial increment is empty and contributes nothing
    a = discrete_moment_wick(ModelSpec(0.3, 1.0, Linear(1.0), 2.0), 3, 4).value
    b = quadratic_form_moment(ModelSpec(0.3, 1.0, Linear(1.0), 2.0), 3, 4)
    assert a == pytest.approx(b, rel=1e-10)
