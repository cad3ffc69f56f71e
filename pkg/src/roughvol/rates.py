"""n-sweeps of the weak error and log-log slope fits."""
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .errors import PreconditionError
from .moments import continuous_moment, discrete_moment
from .montecarlo import resolve_threads

SKIP_SMALLEST = 2
SIGNAL_RATIO = 10.0
LOG_CASE_H = 1.0 / 6.0


def predicted_rate(H, rho):
    """(min(3H + 1/2, 1), log flag); the flag marks H = 1/6. rho = 0 gives (1, False)."""
    if rho == 0:
        return 1.0, False
    return min(3 * H + 0.5, 1.0), abs(H - LOG_CASE_H) < 1e-12


@dataclass
class WeakErrorCurve:
    model: object
    N: int
    points: list
    slope: float
    slope_stderr: float
    fitted: list = field(default_factory=list)
    degenerate: bool = False
    predicted: float = float("nan")
    log_flag: bool = False
    continuous: float = float("nan")
    log_fit: dict | None = None

    def to_dict(self):
        return {
            **self.model.to_dict(), "N": self.N,
            "points": [{"n": n, "error": e, "error_estimate": s} for n, e, s in self.points],
            "slope": self.slope, "slope_stderr": self.slope_stderr, "fitted_n": list(self.fitted),
            "degenerate": self.degenerate, "predicted_rate": self.predicted,
            "log_flag": self.log_flag, "continuous_moment": self.continuous, "log_fit": self.log_fit,
        }


def fit_slope(ns, errors, estimates, skip=SKIP_SMALLEST):
    """Decay rate -d log|e| / d log n on the resolved points after the first `skip`.

    Returns (slope, stderr, fitted n). Points with |e| <= 10 x estimate are left out.
    """
    keep = [(n, abs(e)) for i, (n, e, s) in enumerate(zip(ns, errors, estimates))
            if i >= skip and abs(e) > SIGNAL_RATIO * s and e != 0.0]
    if len(keep) < 2:
        return float("nan"), float("nan"), [n for n, _ in keep]
    x = np.log([n for n, _ in keep])
    y = np.log([e for _, e in keep])
    if len(keep) == 2:
        return float(-(y[1] - y[0]) / (x[1] - x[0])), float("nan"), [n for n, _ in keep]
    res = stats.linregress(x, y)
    return float(-res.slope), float(res.stderr), [n for n, _ in keep]


def log_model_fit(ns, errors):
    """Compare e ~ A n^-1 log n against a free power law, and the drift of n e in log n."""
    n = np.asarray(ns, dtype=float)
    e = np.abs(np.asarray(errors, dtype=float))
    y = np.log(e)
    base = np.log(np.log(n)) - np.log(n)
    logA = float(np.mean(y - base))
    rss_log = float(np.sum((y - base - logA) ** 2))
    power = np.polyfit(np.log(n), y, 1)
    rss_power = float(np.sum((y - np.polyval(power, np.log(n))) ** 2))
    drift = stats.linregress(np.log(n), n * np.asarray(errors, dtype=float))
    return {"A": math.exp(logA), "rss_log_model": rss_log, "rss_power": rss_power,
            "power_rate": float(-power[0]), "drift_slope": float(drift.slope),
            "drift_r": float(drift.rvalue)}


def sweep(model, N, n_list, tol=1e-6, threads=None, method="auto") -> WeakErrorCurve:
    """Weak errors over n_list with one continuous moment reused for every n."""
    ns = [int(n) for n in n_list]
    if len(ns) < 3:
        raise PreconditionError("a sweep needs at least 3 values of n")
    if any(b <= a for a, b in zip(ns, ns[1:])):
        raise PreconditionError("n values must be strictly increasing")
    cont = continuous_moment(model, N, tol)

    def one(n):
        return discrete_moment(model, N, n, tol, method)

    workers = resolve_threads(threads)
    if workers == 1:
        discs = [one(n) for n in ns]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            discs = list(pool.map(one, ns))
    errors = [cont.value - d.value for d in discs]
    estimates = [cont.error_estimate + d.error_estimate for d in discs]
    slope, stderr, used = fit_slope(ns, errors, estimates)
    rate, flag = predicted_rate(model.H, model.rho)
    curve = WeakErrorCurve(model, N, list(zip(ns, errors, estimates)), slope, stderr, used,
                           degenerate=len(used) < 2, predicted=rate, log_flag=flag,
                           continuous=cont.value)
    if flag:
        curve.log_fit = log_model_fit(ns[SKIP_SMALLEST:], errors[SKIP_SMALLEST:])
    return curve


def rate_check(curve: WeakErrorCurve, window=0.07, target=None) -> bool:
    target = curve.predicted if target is None else target
    return not curve.degenerate and abs(curve.slope - target) <= window
