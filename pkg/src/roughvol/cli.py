"""roughvol command line.

Every command writes one artifact (JSON or CSV) whose header records the
fully resolved run configuration. Exit codes: 0 success, 1 usage or numeric
error, 2 failed --check.
"""
import sys
from dataclasses import asdict, dataclass, fields

import click

from .errors import RoughVolError
from .lower_bound import (b_constants_integral, empirical_lower_bound, lower_bound_constants,
                          parse_sweep)
from .moments import (ModelSpec, continuous_moment, discrete_moment, discrete_moment_wick,
                      weak_error_report)
from .montecarlo import estimate_moment, resolve_threads, write_raw_paths
from .rates import rate_check, sweep
from .selfcheck import run_selfcheck
from .serialize import dumps_csv, dumps_json
from .volatility import Exponential, Linear, parse_volfn

COMMANDS = ("moment", "discrete-moment", "weak-error", "rate", "simulate", "lower-bound", "selfcheck")
EXIT_OK, EXIT_ERROR, EXIT_CHECK = 0, 1, 2
BETA_AGREEMENT = 1e-8
MC_SIGMAS = 4.0


@dataclass
class RunConfig:
    command: str
    hurst: float = 0.1
    rho: float = 1.0
    T: float = 1.0
    model: str = "linear:1"
    N: int = 3
    n: int = 16
    n_list: tuple = ()
    tol: float = 1e-6
    paths: int = 100_000
    seed: int = 42
    out: str | None = None
    format: str = "json"
    check: bool = False
    threads: int | None = None
    method: str = "auto"
    sweep: str | None = None
    window: float = 0.07
    antithetic: bool = True
    dump: str | None = None

    def __post_init__(self):
        if self.command not in COMMANDS:
            raise click.UsageError(f"unknown command '{self.command}'")
        if self.format not in ("json", "csv"):
            raise click.UsageError("--format must be json or csv")
        self.n_list = tuple(int(v) for v in self.n_list)

    def to_dict(self):
        d = asdict(self)
        d["n_list"] = list(self.n_list)
        return d

    @classmethod
    def from_dict(cls, d):
        names = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in d.items() if k in names})

    def model_spec(self):
        return ModelSpec(self.hurst, self.rho, parse_volfn(self.model), self.T)


def parse_n_list(text):
    """'8,16,32' or '8..256' (doubling)."""
    text = text.strip()
    try:
        if ".." in text:
            lo, hi = (int(v) for v in text.split(".."))
            if lo < 1 or hi < lo:
                raise ValueError
            out = []
            while lo <= hi:
                out.append(lo)
                lo *= 2
            return tuple(out)
        return tuple(int(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise click.UsageError(f"--n-list expects '8,16,32' or '8..256', got '{text}'") from None


# ---------------------------------------------------------------------------
# commands


def _word_rows(report, key="value"):
    rows = [{"word": w, "value": v, "error_estimate": report.term_errors.get(w, 0.0)}
            for w, v in sorted(report.terms.items())] if hasattr(report, "term_errors") else []
    rows.append({"word": "total", "value": getattr(report, key), "error_estimate": report.error_estimate})
    return rows


def _moment(cfg):
    rep = continuous_moment(cfg.model_spec(), cfg.N, cfg.tol)
    return rep.to_dict(), ["word", "value", "error_estimate"], _word_rows(rep), rep.converged


def _discrete(cfg):
    rep = discrete_moment(cfg.model_spec(), cfg.N, cfg.n, cfg.tol, cfg.method)
    return rep.to_dict(), ["word", "value", "error_estimate"], _word_rows(rep), rep.converged


def _weak(cfg):
    rep = weak_error_report(cfg.model_spec(), cfg.N, cfg.n, cfg.tol, cfg.method)
    rows = [{"word": w, "value": v, "error_estimate": ""} for w, v in sorted(rep.terms.items())]
    rows.append({"word": "total", "value": rep.value, "error_estimate": rep.error_estimate})
    ok = rep.continuous.converged and rep.discrete.converged
    return rep.to_dict(), ["word", "value", "error_estimate"], rows, ok


def _rate(cfg):
    if not cfg.n_list:
        raise click.UsageError("rate needs --n-list")
    model = cfg.model_spec()
    curve = sweep(model, cfg.N, cfg.n_list, cfg.tol, cfg.threads, cfg.method)
    cols = ["n", "error", "error_estimate", "H", "rho", "T", "model", "N"]
    rows = [{"n": n, "error": e, "error_estimate": s, **model.to_dict(), "N": cfg.N}
            for n, e, s in curve.points]
    summary = curve.to_dict()
    summary["window"] = cfg.window
    return summary, cols, rows, rate_check(curve, cfg.window)


def _simulate(cfg):
    model = cfg.model_spec()
    if cfg.dump:
        with open(cfg.dump, "wb") as fh:
            write_raw_paths(fh, model, cfg.n, cfg.paths, cfg.seed)
    est = estimate_moment(model, cfg.N, cfg.n, cfg.paths, cfg.seed, cfg.antithetic, cfg.threads)
    result = est.to_dict()
    ok = True
    if cfg.check:
        if not isinstance(model.f, (Linear, Exponential)):
            raise click.UsageError("simulate --check needs a linear or exp model")
        exact = discrete_moment_wick(model, cfg.N, cfg.n).value
        result["exact"] = exact
        result["z_score"] = (est.mean - exact) / est.std_error
        ok = abs(result["z_score"]) < MC_SIGMAS
    cols = ["N", "n", "mean", "std_error", "paths", "seed", "antithetic"]
    return result, cols, [result], ok


def _lower_bound(cfg):
    if cfg.sweep:
        consts = [lower_bound_constants(H) for H in parse_sweep(cfg.sweep)]
        rows = [c.row() for c in consts]
        worst = 0.0
        if cfg.check:
            for c in consts:
                other = b_constants_integral(c.H, 1e-12)
                worst = max(worst, max(abs(a - b) for a, b in zip((c.B1, c.B2, c.B3), other)))
        ok = all(c.gap > 0 for c in consts) and worst <= BETA_AGREEMENT
        cols = ["H", "B1", "B2", "B3", "C2", "C3", "C2_minus_C3"]
        return {"rows": rows, "max_beta_integral_diff": worst}, cols, rows, ok
    if cfg.n_list:
        curve = empirical_lower_bound(cfg.hurst, cfg.n_list, min(cfg.tol, 1e-10))
        rows = [{"n": n, "error": e, "rescaled": r}
                for n, e, r in zip(curve.ns, curve.errors, curve.rescaled)]
        return curve.to_dict(), ["n", "error", "rescaled"], rows, curve.window_min > 0
    c = lower_bound_constants(cfg.hurst)
    cols = ["H", "B1", "B2", "B3", "C2", "C3", "C2_minus_C3"]
    return c.row(), cols, [c.row()], c.gap > 0


def _selfcheck(cfg):
    rows = run_selfcheck()
    return {"checks": rows}, ["check", "passed", "detail"], rows, all(r["passed"] for r in rows)


HANDLERS = {"moment": _moment, "discrete-moment": _discrete, "weak-error": _weak, "rate": _rate,
            "simulate": _simulate, "lower-bound": _lower_bound, "selfcheck": _selfcheck}


def render(cfg, result, columns, rows, ok):
    header = cfg.to_dict()
    if cfg.format == "json":
        return dumps_json({"config": header, "result": result, "check_passed": ok}) + "\n"
    flat = {f"config.{k}": v for k, v in header.items() if v is not None}
    flat["check_passed"] = ok
    return dumps_csv(columns, rows, flat)


def run(cfg: RunConfig):
    """Execute one command; returns (exit code, rendered artifact)."""
    cfg.threads = resolve_threads(cfg.threads)
    result, columns, rows, ok = HANDLERS[cfg.command](cfg)
    text = render(cfg, result, columns, rows, ok)
    if cfg.out:
        with open(cfg.out, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    else:
        click.echo(text, nl=False)
    failed = cfg.check or cfg.command == "selfcheck"
    return (EXIT_CHECK if failed and not ok else EXIT_OK), text


# ---------------------------------------------------------------------------
# click wiring


def model_options(fn):
    opts = [
        click.option("--hurst", type=float, default=0.1, show_default=True, help="Hurst parameter in (0, 1/2]."),
        click.option("--rho", type=float, default=1.0, show_default=True, help="Correlation in [-1, 1]."),
        click.option("--T", "T", type=float, default=1.0, show_default=True, help="Horizon."),
        click.option("--model", default="linear:1", show_default=True,
                     help="Volatility: linear:c1[,c0] | exp:c2,c3 | tanh."),
        click.option("--N", "N", type=int, default=3, show_default=True, help="Moment order."),
    ]
    for opt in reversed(opts):
        fn = opt(fn)
    return fn


def common_options(fn):
    opts = [
        click.option("--tol", type=float, default=1e-6, show_default=True),
        click.option("--out", type=click.Path(dir_okay=False), default=None, help="Output file (default stdout)."),
        click.option("--format", "fmt", type=click.Choice(["json", "csv"]), default="json", show_default=True),
        click.option("--check", is_flag=True, help="Acceptance mode: exit 2 when the check fails."),
        click.option("--threads", type=int, default=None,
                     help="Worker cap (default: $ROUGHVOL_THREADS or 1)."),
    ]
    for opt in reversed(opts):
        fn = opt(fn)
    return fn


def _invoke(command, fmt, **kw):
    code, _ = run(RunConfig(command=command, format=fmt, **kw))
    return code


@click.group()
def cli():
    """Weak-error laboratory for the Euler scheme of rough volatility models."""


@cli.command()
@model_options
@common_options
def moment(**kw):
    """Continuous moment E[X_T^N]."""
    return _invoke("moment", **kw)


@cli.command("discrete-moment")
@model_options
@click.option("--n", type=int, default=16, show_default=True)
@click.option("--method", type=click.Choice(["auto", "wick", "quadrature"]), default="auto", show_default=True)
@common_options
def discrete_moment_cmd(**kw):
    """Euler moment E[(X_T^n)^N]."""
    return _invoke("discrete-moment", **kw)


@cli.command("weak-error")
@model_options
@click.option("--n", type=int, default=16, show_default=True)
@click.option("--method", type=click.Choice(["auto", "wick", "quadrature"]), default="auto", show_default=True)
@common_options
def weak_error_cmd(**kw):
    """E[X_T^N] - E[(X_T^n)^N] with its word breakdown."""
    return _invoke("weak-error", **kw)


@cli.command()
@model_options
@click.option("--n-list", "n_list", required=True, help="'8,16,32' or '8..256'.")
@click.option("--method", type=click.Choice(["auto", "wick", "quadrature"]), default="auto", show_default=True)
@click.option("--window", type=float, default=0.07, show_default=True, help="Slope tolerance for --check.")
@common_options
def rate(n_list, **kw):
    """Weak-error sweep over n and log-log slope fit."""
    return _invoke("rate", n_list=parse_n_list(n_list), **kw)


@cli.command()
@model_options
@click.option("--n", type=int, default=16, show_default=True)
@click.option("--paths", type=int, default=100_000, show_default=True)
@click.option("--seed", type=int, default=42, show_default=True)
@click.option("--antithetic/--no-antithetic", default=True, show_default=True)
@click.option("--dump", type=click.Path(dir_okay=False), default=None, help="Also write raw paths here.")
@common_options
def simulate(**kw):
    """Monte Carlo estimate of E[(X_T^n)^N]."""
    return _invoke("simulate", **kw)


@cli.command("lower-bound")
@click.option("--hurst", type=float, default=0.1, show_default=True)
@click.option("--sweep", default=None, help="lo:hi:count grid of H for the constants.")
@click.option("--n-list", "n_list", default=None, help="Rescaled-error sequence for --hurst.")
@common_options
def lower_bound(n_list, **kw):
    """Lower-bound constants or the rescaled third-moment error."""
    return _invoke("lower-bound", n_list=parse_n_list(n_list) if n_list else (), **kw)


@cli.command()
@click.option("--out", type=click.Path(dir_okay=False), default=None)
@click.option("--format", "fmt", type=click.Choice(["json", "csv"]), default="json", show_default=True)
@click.option("--threads", type=int, default=None)
def selfcheck(**kw):
    """Quick consistency suite; exit 2 on any failure."""
    return _invoke("selfcheck", **kw)


def main(argv=None):
    try:
        code = cli.main(args=argv, prog_name="roughvol", standalone_mode=False)
    except click.exceptions.Exit as exc:
        return exc.exit_code
    except click.Abort:
        click.echo("aborted", err=True)
        return EXIT_ERROR
    except click.ClickException as exc:
        exc.show()
        return EXIT_ERROR
    except (RoughVolError, ValueError, ArithmeticError, OSError) as exc:
        click.echo(f"error: {exc}", err=True)
        return EXIT_ERROR
    return code if isinstance(code, int) else EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
