"""Fast end-to-end consistency checks, runnable from the command line."""
from .kernel import covariance, covariance_C
from .lower_bound import b_constants_beta, b_constants_integral, c3_factor, c3_factor_alt
from .moments import ModelSpec, continuous_moment, discrete_moment_quadrature, discrete_moment_wick
from .montecarlo import estimate_moment
from .volatility import Linear
from .words import Word, enumerate_words, expand_word


def check_covariance():
    worst = 0.0
    for H in (0.05, 0.1, 0.3, 0.45):
        for t, s in ((1.0, 0.3), (0.7, 0.69), (2.0, 1e-3), (1.0, 1.0)):
            worst = max(worst, abs(covariance(t, s, H) - covariance_C(t, s, H)))
    return worst < 1e-10, f"closed form vs quadrature max diff {worst:.2e}"


def check_word_counts():
    counts = [len(enumerate_words(N)) for N in range(1, 13)]
    fib = [1, 2]
    while len(fib) < 12:
        fib.append(fib[-1] + fib[-2])
    return counts == fib, f"counts {counts}"


def check_expansion():
    terms = expand_word(Word("IJ"))
    ok = len(terms) == 1 and terms[0].coefficient == 6
    return ok, f"IJ -> {[(t.coefficient, t.orders, t.edges) for t in terms]}"


def check_ito_oracles():
    model = ModelSpec(0.5, 1.0, Linear(1.0))
    got = [continuous_moment(model, N).value for N in (2, 3, 4)]
    rho0 = continuous_moment(ModelSpec(0.5, 0.0, Linear(1.0)), 4).value
    ok = all(abs(g - e) < 1e-6 for g, e in zip(got + [rho0], (0.5, 1.0, 3.75, 1.75)))
    return ok, f"H=1/2 moments {got}, rho=0 N=4 {rho0}"


def check_triangulation():
    worst = 0.0
    for H in (0.1, 0.3):
        for rho in (0.0, 0.7, 1.0):
            model = ModelSpec(H, rho, Linear(1.0))
            q = discrete_moment_quadrature(model, 3, 4)
            w = discrete_moment_wick(model, 3, 4)
            worst = max(worst, abs(q.value - w.value) / max(1e-6, 3 * q.error_estimate))
    return worst <= 1.0, f"max |quad - wick| / allowance {worst:.3f}"


def check_beta():
    worst = 0.0
    for H in (0.02, 0.05, 0.1, 0.15):
        a, b = b_constants_integral(H), b_constants_beta(H)
        worst = max(worst, max(abs(x - y) for x, y in zip(a, b)))
    c3 = max(abs(c3_factor(H) - c3_factor_alt(H)) for H in (0.01, 0.1, 0.15))
    return worst < 1e-8 and c3 < 1e-12, f"beta vs integral {worst:.2e}, C3 forms {c3:.2e}"


def check_monte_carlo():
    model = ModelSpec(0.2, 1.0, Linear(1.0))
    mc = estimate_moment(model, 3, 8, 100_000, seed=42)
    exact = discrete_moment_wick(model, 3, 8).value
    z = (mc.mean - exact) / mc.std_error
    return abs(z) < 4, f"MC {mc.mean:.5f} +- {mc.std_error:.5f} vs exact {exact:.5f} (z={z:.2f})"


CHECKS = [
    ("covariance", check_covariance),
    ("word-counts", check_word_counts),
    ("word-expansion", check_expansion),
    ("ito-oracles", check_ito_oracles),
    ("triangulation", check_triangulation),
    ("beta-constants", check_beta),
    ("monte-carlo", check_monte_carlo),
]


def run_selfcheck():
    """List of dicts with name, passed and detail."""
    out = []
    for name, fn in CHECKS:
        try:
            ok, detail = fn()
        except Exception as exc:  # report, keep going
            ok, detail = False, f"{type(exc).__name__}: {exc}"
        out.append({"check": name, "passed": bool(ok), "detail": detail})
    return out

