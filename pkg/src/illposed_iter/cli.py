"""``illposed-iter`` command-line runner.

Exit codes: 0 success, 1 I/O failure, 2 invalid config or inadmissible
scheme, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import statistics
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace
from typing import Callable, Iterable, Sequence

import numpy as np

from . import config as cfgmod
from .config import ConfigError, ExperimentConfig
from .engine import (
    format_number,
    iterate,
    iterate_noisy,
    noise_profile,
    parse_space,
    quasi_stop,
)
from .oracle import DenseSolveError, lift, run_dense, compare_runs
from .schemes import (
    AdmissibilityError,
    RateUnavailableError,
    SchemeSpec,
    Variant,
    check_admissibility,
    fit_power_law,
    format_scheme,
    gamma_asymptotic,
    gamma_n_closed_form,
    gamma_n_numeric,
    parse_scheme,
    psi,
)
from .spectral import Power, SpectralError, parse_function

__all__ = ["main", "build_parser", "EXIT_OK", "EXIT_IO", "EXIT_INVALID", "EXIT_NUMERIC"]

EXIT_OK, EXIT_IO, EXIT_INVALID, EXIT_NUMERIC = 0, 1, 2, 3

NOISE_HEADER = ("delta", "best_n", "best_error", "stop_n", "error_at_stop")
RATES_HEADER = ("n", "gamma_numeric", "gamma_closed_form", "gamma_asymptotic")
ORACLE_HEADER = ("scheme", "seed", "max_relative_gap", "max_solve_residual", "passed")


# --------------------------------------------------------------------------
# helpers


def _pmap(fn: Callable, items: Sequence, jobs: int) -> list:
    """Map preserving input order; threads when ``jobs > 1``."""
    if jobs <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=jobs) as ex:
        return list(ex.map(fn, items))


def _schemes(cfg: ExperimentConfig) -> list[SchemeSpec]:
    tokens = cfg.schemes or (cfgmod.default_scheme_token(cfg),)
    return [parse_scheme(t) for t in tokens]


def _single_scheme(cfg: ExperimentConfig) -> SchemeSpec:
    schemes = _schemes(cfg)
    if len(schemes) != 1:
        raise ConfigError(f"{cfg.command} takes exactly one scheme, got {len(schemes)}")
    return schemes[0]


def _fn(token):
    return None if token is None else parse_function(token)


def _rate_setup(cfg: ExperimentConfig):
    if cfg.interval is None:
        raise ConfigError("rates.interval is required")
    theta = _fn(cfg.theta) if cfg.theta else None
    if not isinstance(theta, Power):
        raise ConfigError("functions.theta must be power(s) for rate tables")
    return theta, cfg.interval


def log_grid(n_max: int, points: int) -> list[int]:
    """``0`` followed by about ``points`` log-spaced integers in ``[1, n_max]``."""
    g = np.unique(np.rint(np.geomspace(1, n_max, points)).astype(int))
    return [0] + [int(n) for n in g]


def _gamma_row(scheme: SchemeSpec, theta: Power, interval, n: int) -> list:
    numeric = gamma_n_numeric(scheme, theta, interval, n)
    closed = asym = None
    if interval[0] == 0.0:
        try:
            closed = gamma_n_closed_form(scheme, theta.s, interval[1], n)
        except RateUnavailableError:
            closed = None
    if n > 0:
        try:
            C, p = gamma_asymptotic(scheme, theta.s)
            asym = C * n ** (-p)
        except RateUnavailableError:
            asym = None
    return [n, numeric, closed, asym]


def _write(rows: Iterable[Sequence], header: Sequence[str]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([v if isinstance(v, str) else format_number(v) for v in r])
    return buf.getvalue()


def noise_c(problem, scheme: SchemeSpec) -> float:
    """``max |psi|`` over the spectrum (``1`` for the direct iteration)."""
    if scheme.variant is Variant.SECOND_KIND_DIRECT:
        return 1.0
    return float(np.max(np.abs(psi(scheme, problem.operator.lambdas))))


# --------------------------------------------------------------------------
# commands; each returns the CSV text


def cmd_run(cfg: ExperimentConfig, jobs: int = 1) -> str:
    problem = cfgmod.build_problem(cfg)
    scheme = _single_scheme(cfg)
    d = iterate(problem, scheme, cfg.n_max, pi=_fn(cfg.pi), theta=_fn(cfg.theta))
    return d.to_csv()


def cmd_rates(cfg: ExperimentConfig, jobs: int = 1) -> str:
    scheme = _single_scheme(cfg)
    theta, interval = _rate_setup(cfg)
    ns = log_grid(cfg.n_max, cfg.grid_points)
    rows = _pmap(lambda n: _gamma_row(scheme, theta, interval, n), ns, jobs)
    return _write(rows, RATES_HEADER)


def cmd_compare(cfg: ExperimentConfig, jobs: int = 1) -> str:
    schemes = _schemes(cfg)
    if len(schemes) < 2:
        raise ConfigError("compare needs at least two scheme lines")
    theta, interval = _rate_setup(cfg)
    ns = log_grid(cfg.n_max, cfg.grid_points)
    tasks = [(s, n) for s in schemes for n in ns]
    vals = _pmap(lambda t: gamma_n_numeric(t[0], theta, interval, t[1]), tasks, jobs)
    table = np.array(vals, dtype=float).reshape(len(schemes), len(ns))
    header = ["n"] + [format_scheme(s) for s in schemes]
    rows = [[n] + list(table[:, j]) for j, n in enumerate(ns)]
    # power-law fit over the last decade of the grid
    ns_arr = np.array(ns, dtype=float)
    tail = ns_arr >= max(1.0, ns_arr[-1] / 10.0)
    fits = [fit_power_law(ns_arr[tail], table[i, tail]) for i in range(len(schemes))]
    rows.append(["fit_C"] + [f[0] for f in fits])
    rows.append(["fit_p"] + [f[1] for f in fits])
    return _write(rows, header)


def _noise_row(problem, scheme, space, mu, c, n_max, seeds, delta) -> list:
    if delta == 0:
        best = int(np.argmin(mu))
        return [0.0, best, float(mu[best]), n_max, float(mu[n_max])]
    stop = quasi_stop(mu, space, delta, c)
    bests, errs, at_stop = [], [], []
    for seed in seeds:
        d = iterate_noisy(problem, scheme, noise_profile(delta, n_max, space, seed), n_max,
                          thin=False)
        bests.append(d.best_n)
        errs.append(d.best_error)
        at_stop.append(d.error[d.index(stop)])
    return [delta, int(statistics.median_low(bests)), float(statistics.median(errs)), stop,
            float(statistics.median(at_stop))]


def cmd_noise(cfg: ExperimentConfig, jobs: int = 1) -> str:
    problem = cfgmod.build_problem(cfg)
    if problem.exact_solution is None:
        raise ConfigError("noise needs problem.solution")
    if not cfg.deltas:
        raise ConfigError("noise.deltas is required")
    scheme = _single_scheme(cfg)
    space = parse_space(cfg.noise_space)
    exact = iterate(problem, scheme, cfg.n_max, thin=False)
    mu = exact.column("error")
    c = cfg.noise_c if cfg.noise_c is not None else noise_c(problem, scheme)
    rows = _pmap(lambda d: _noise_row(problem, scheme, space, mu, c, cfg.n_max, cfg.seeds, d),
                 list(cfg.deltas), jobs)
    return _write(rows, NOISE_HEADER)


def cmd_oracle_check(cfg: ExperimentConfig, jobs: int = 1) -> str:
    problem = cfgmod.build_problem(cfg)
    schemes = _schemes(cfg)
    tasks = [(s, seed) for s in schemes for seed in cfg.seeds]

    def one(t):
        scheme, seed = t
        spectral = iterate(problem, scheme, cfg.n_max, thin=False)
        dense = run_dense(lift(problem, seed), scheme, cfg.n_max)
        gap = compare_runs(spectral, dense)
        solves = [r for r in dense.solve_residual if r is not None]
        return [format_scheme(scheme), seed, gap, max(solves) if solves else None,
                "yes" if gap <= cfg.tolerance else "no"]

    rows = _pmap(one, tasks, jobs)
    return _write(rows, ORACLE_HEADER)


COMMAND_FUNCS = {
    "run": cmd_run,
    "rates": cmd_rates,
    "noise": cmd_noise,
    "compare": cmd_compare,
    "oracle-check": cmd_oracle_check,
}


def _precheck(cfg: ExperimentConfig) -> None:
    """Fail early (exit 2) on inadmissible schemes for commands that iterate."""
    if cfg.command not in ("run", "noise", "oracle-check"):
        return
    A = cfgmod.build_operator(cfg)
    for scheme in _schemes(cfg):
        if scheme.operator_kind is not A.kind:
            raise ConfigError(f"scheme {format_scheme(scheme)!r} does not fit a "
                              f"{cfg.operator_kind}-kind operator")
        if scheme.first_kind:
            check_admissibility(scheme, A).raise_if_failed()


# --------------------------------------------------------------------------
# entry point


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="illposed-iter",
                                description="Iterative methods for ill-posed problems.")
    p.add_argument("command", choices=cfgmod.COMMANDS)
    p.add_argument("--config", required=True, help="experiment config file")
    p.add_argument("--set", action="append", default=[], metavar="SECTION.KEY=VALUE",
                   help="override one config value (repeatable)")
    p.add_argument("--out", help="output CSV path (default: config output or stdout)")
    p.add_argument("--jobs", type=int, default=1, help="parallel sweep workers")
    p.add_argument("--dry-run", action="store_true",
                   help="print the resolved config and exit")
    return p


def resolve_config(args) -> ExperimentConfig:
    with open(args.config, encoding="utf-8") as fh:
        cfg = cfgmod.parse_config(fh.read())
    for assignment in args.set:
        cfg = cfgmod.apply_override(cfg, assignment)
    if cfg.command is not None and cfg.command != args.command:
        raise ConfigError(f"config is for {cfg.command!r}, not {args.command!r}")
    cfg = replace(cfg, command=args.command)
    if args.out:
        cfg = replace(cfg, output=args.out)
    return cfg


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    err = sys.stderr
    if args.jobs < 1:
        print("error: --jobs must be at least 1", file=err)
        return EXIT_INVALID
    try:
        cfg = resolve_config(args)
    except OSError as exc:
        print(f"error: cannot read config: {exc}", file=err)
        return EXIT_IO
    except (ConfigError, ValueError) as exc:
        print(f"error: {args.config}:{exc}" if isinstance(exc, ConfigError) and exc.line
              else f"error: {exc}", file=err)
        return EXIT_INVALID
    if args.dry_run:
        sys.stdout.write(cfgmod.serialize_config(cfg))
        return EXIT_OK
    try:
        _precheck(cfg)
        text = COMMAND_FUNCS[cfg.command](cfg, args.jobs)
    except OSError as exc:
        print(f"error: {exc}", file=err)
        return EXIT_IO
    except AdmissibilityError as exc:
        print(f"error: inadmissible scheme: {exc}", file=err)
        return EXIT_INVALID
    except (ConfigError, SpectralError, ValueError) as exc:
        print(f"error: {exc}", file=err)
        return EXIT_INVALID
    except (ArithmeticError, DenseSolveError, np.linalg.LinAlgError) as exc:
        print(f"error: numerical failure: {exc}", file=err)
        return EXIT_NUMERIC
    if cfg.output:
        try:
            with open(cfg.output, "w", encoding="utf-8", newline="") as fh:
                fh.write(text)
        except OSError as exc:
            print(f"error: cannot write output: {exc}", file=err)
            return EXIT_IO
    else:
        sys.stdout.write(text)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
