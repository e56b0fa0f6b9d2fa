"""Spectral iteration engine, noise models and stopping rules.

Both iterations are run in eigencoordinates, where every operator function
acts pointwise:

* second kind, ``x_{n+1} = B x_n + f``;
* first kind, ``x_{n+1} = phi(A) x_n + psi(A) y`` for a registry scheme.

Noisy runs replace the data at step ``n`` by ``f + delta_n e_n`` with a
seeded unit direction ``e_n``.
"""

from __future__ import annotations

import csv
import io
import math
import statistics
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .schemes import SchemeSpec, Variant, check_admissibility, phi, psi
from .spectral import (
    AssociationError,
    OperatorKind,
    ScalarFunction,
    SpectralError,
    SpectralOperator,
    SpectralVector,
    NotRepresentableError,
    weighted_norm,
    source_norm,
)

__all__ = [
    "ProblemInstance",
    "RunDiagnostics",
    "SequenceSpace",
    "LpSpace",
    "WeightedM",
    "NoiseModel",
    "ScanRow",
    "DIRECT",
    "iterate",
    "iterate_second_kind",
    "iterate_first_kind",
    "iterate_noisy",
    "noise_constant",
    "noise_profile",
    "sigma_norm",
    "sigma_norms",
    "error_budget",
    "quasi_stop",
    "semiconvergence_scan",
    "parse_space",
    "format_space",
    "CSV_HEADER",
    "format_number",
]

DIRECT = SchemeSpec(Variant.SECOND_KIND_DIRECT)

CSV_HEADER = ("n", "error", "residual", "correction", "weakened_error",
              "weakened_residual", "bound")

#: every step is recorded up to here, then steps are thinned geometrically
DENSE_RECORD_LIMIT = 1000
THINNING_RATIO = 1.05


def format_number(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return format(float(v), ".17g")


# --------------------------------------------------------------------------
# problems


@dataclass(frozen=True)
class ProblemInstance:
    """Operator, right-hand side, starting point and optional exact solution.

    ``rhs`` is ``f`` for ``x = Bx + f`` and ``y`` for ``Ax = y``.
    """

    operator: SpectralOperator
    rhs: SpectralVector
    initial: SpectralVector
    exact_solution: Optional[SpectralVector] = None

    def __post_init__(self):
        vecs = [self.rhs, self.initial]
        if self.exact_solution is not None:
            vecs.append(self.exact_solution)
        for v in vecs:
            if v.operator != self.operator:
                raise AssociationError("problem vectors must belong to the problem operator")
        if self.exact_solution is not None:
            xs = self.exact_solution
            r = weighted_norm(self.operator.weights, self.residual_coeffs(xs.coeffs))
            if r > 1e-10 * (1.0 + xs.norm()):
                raise SpectralError(
                    f"exact_solution does not solve the equation (residual {r:.3g})")

    @property
    def kind(self) -> OperatorKind:
        return self.operator.kind

    @classmethod
    def from_solution(cls, operator: SpectralOperator, solution, initial=None):
        """Build the data from a prescribed exact solution."""
        xs = solution if isinstance(solution, SpectralVector) else SpectralVector(operator, solution)
        lam = operator.lambdas
        if operator.kind is OperatorKind.SECOND_KIND:
            rhs = xs.coeffs - lam * xs.coeffs
        else:
            rhs = lam * xs.coeffs
        if initial is None:
            x0 = operator.zeros()
        elif isinstance(initial, SpectralVector):
            x0 = initial
        else:
            x0 = SpectralVector(operator, initial)
        return cls(operator, SpectralVector(operator, rhs), x0, xs)

    def residual_coeffs(self, x: np.ndarray) -> np.ndarray:
        """``x - Bx - f`` (second kind) or ``Ax - y`` (first kind)."""
        lam = self.operator.lambdas
        if self.kind is OperatorKind.SECOND_KIND:
            return x - lam * x - self.rhs.coeffs
        return lam * x - self.rhs.coeffs

    def residual(self, x: SpectralVector) -> SpectralVector:
        return SpectralVector(self.operator, self.residual_coeffs(x.coeffs))


# --------------------------------------------------------------------------
# sequence spaces and noise


@dataclass(frozen=True)
class LpSpace:
    p: float = math.inf

    def __post_init__(self):
        if not self.p >= 1:
            raise ValueError(f"need p >= 1, got {self.p}")

    def sequence_norm(self, seq) -> float:
        return float(np.linalg.norm(np.asarray(seq, dtype=float), self.p)) if len(seq) else 0.0


@dataclass(frozen=True)
class WeightedM:
    """Sequences bounded by the weight ``omega_k = (k + 1)^nu``."""

    nu: float = 2.0

    def __post_init__(self):
        if not self.nu > 0:
            raise ValueError(f"need nu > 0, got {self.nu}")

    def weights(self, n: int) -> np.ndarray:
        return np.arange(1, n + 1, dtype=float) ** self.nu

    def sequence_norm(self, seq) -> float:
        seq = np.abs(np.asarray(seq, dtype=float))
        return float(np.max(seq * self.weights(seq.size))) if seq.size else 0.0


SequenceSpace = LpSpace | WeightedM


def sigma_norm(space: SequenceSpace, n: int) -> float:
    """Norm of the partial-sum functional ``sigma_n`` on the sequence space."""
    if n < 0:
        raise ValueError("n must be nonnegative")
    if isinstance(space, LpSpace):
        if n == 0:
            return 0.0
        if space.p == math.inf:
            return float(n)
        return float(n) ** (1.0 - 1.0 / space.p)
    return math.fsum((k + 1.0) ** -space.nu for k in range(n))


def sigma_norms(space: SequenceSpace, n_max: int) -> np.ndarray:
    """``[sigma_norm(space, n) for n in 0..n_max]``, vectorised."""
    n = np.arange(n_max + 1, dtype=float)
    if isinstance(space, LpSpace):
        if space.p == math.inf:
            return n
        out = n ** (1.0 - 1.0 / space.p)
        out[0] = 0.0
        return out
    return np.concatenate(([0.0], np.cumsum(1.0 / space.weights(n_max))))


def parse_space(token: str) -> SequenceSpace:
    """``lp p=inf``, ``lp p=2`` or ``weighted nu=2``."""
    parts = token.split()
    if len(parts) != 2:
        raise ValueError(f"bad sequence space {token!r}")
    name, (key, _, val) = parts[0].lower(), parts[1].partition("=")
    if name == "lp" and key == "p":
        return LpSpace(math.inf if val.strip().lower() in ("inf", "infinity", "∞") else float(val))
    if name == "weighted" and key == "nu":
        return WeightedM(float(val))
    raise ValueError(f"bad sequence space {token!r}")


def format_space(space: SequenceSpace) -> str:
    if isinstance(space, LpSpace):
        return "lp p=inf" if space.p == math.inf else f"lp p={space.p!r}"
    return f"weighted nu={space.nu!r}"


@dataclass(frozen=True)
class NoiseModel:
    """Per-step data errors ``||f_n - f|| = delta_n`` in seeded directions."""

    delta_sequence: tuple
    space: SequenceSpace = LpSpace()
    direction_seed: int = 0

    def __post_init__(self):
        seq = tuple(float(d) for d in self.delta_sequence)
        if any(not (d >= 0 and math.isfinite(d)) for d in seq):
            raise ValueError("noise levels must be finite and nonnegative")
        object.__setattr__(self, "delta_sequence", seq)

    def level(self) -> float:
        """``||(delta_n)||`` in the declared sequence space."""
        return self.space.sequence_norm(self.delta_sequence)

    def cumulative(self, n_max: int) -> np.ndarray:
        """``Delta_n = delta_0 + ... + delta_{n-1}`` for ``n = 0..n_max``."""
        d = np.asarray(self.delta_sequence[:n_max], dtype=float)
        return np.concatenate(([0.0], np.cumsum(d)))

    def directions(self, operator: SpectralOperator):
        """Yield unit vectors (in the weighted norm), uniform on the sphere."""
        rng = np.random.default_rng(self.direction_seed)
        scale = 1.0 / np.sqrt(operator.weights)
        while True:
            z = rng.standard_normal(operator.size)
            yield z * scale / np.linalg.norm(z)


def noise_constant(delta: float, n_max: int, space: SequenceSpace = LpSpace(),
                   seed: int = 0) -> NoiseModel:
    return NoiseModel((delta,) * n_max, space, seed)


def noise_profile(delta: float, n_max: int, space: SequenceSpace = LpSpace(),
                  seed: int = 0) -> NoiseModel:
    """Canonical ``n_max``-step sequence whose norm in ``space`` equals ``delta``.

    Constant ``delta`` for ``l_inf``, constant ``delta n_max^{-1/p}`` for
    ``l_p`` and ``delta / omega_k`` for the weighted space.
    """
    if isinstance(space, WeightedM):
        seq = delta / space.weights(n_max)
    elif space.p == math.inf:
        seq = np.full(n_max, float(delta))
    else:
        seq = np.full(n_max, delta * float(n_max) ** (-1.0 / space.p))
    return NoiseModel(tuple(seq), space, seed)


# --------------------------------------------------------------------------
# diagnostics


@dataclass
class RunDiagnostics:
    """Recorded norms per iteration step ``n`` (thinned for long runs)."""

    steps: list = field(default_factory=list)
    error: list = field(default_factory=list)
    residual: list = field(default_factory=list)
    correction: list = field(default_factory=list)
    weakened_error: list = field(default_factory=list)
    weakened_residual: list = field(default_factory=list)
    bound: list = field(default_factory=list)
    deviation: list = field(default_factory=list)
    noise_bound: list = field(default_factory=list)
    final: Optional[SpectralVector] = None
    best_n: Optional[int] = None
    best_error: Optional[float] = None

    def index(self, n: int) -> int:
        try:
            return self.steps.index(n)
        except ValueError:
            raise KeyError(f"step {n} was not recorded") from None

    def row(self, n: int) -> dict:
        i = self.index(n)
        return {name: getattr(self, name)[i] if name != "n" else n for name in CSV_HEADER}

    def column(self, name: str) -> np.ndarray:
        return np.array([np.nan if v is None else v for v in getattr(self, name)], dtype=float)

    def write_csv(self, fh) -> None:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for i, n in enumerate(self.steps):
            w.writerow([n] + [format_number(getattr(self, c)[i]) for c in CSV_HEADER[1:]])

    def to_csv(self) -> str:
        buf = io.StringIO()
        self.write_csv(buf)
        return buf.getvalue()


def _record_steps(n_max: int, thin: bool) -> np.ndarray:
    if not thin or n_max <= DENSE_RECORD_LIMIT:
        return np.ones(n_max + 1, dtype=bool)
    mask = np.zeros(n_max + 1, dtype=bool)
    mask[: DENSE_RECORD_LIMIT + 1] = True
    m = DENSE_RECORD_LIMIT
    while m <= n_max:
        mask[m] = True
        m = max(m + 1, math.ceil(m * THINNING_RATIO))
    mask[n_max] = True
    return mask


def iterate(problem: ProblemInstance, scheme: SchemeSpec, n_max: int,
            pi: Optional[ScalarFunction] = None, theta: Optional[ScalarFunction] = None,
            noise: Optional[NoiseModel] = None, thin: bool = True,
            check: bool = True) -> RunDiagnostics:
    """Run ``n_max`` steps of ``x_{n+1} = phi(A) x_n + psi(A) (rhs + noise_n)``.

    Parameters
    ----------
    problem : ProblemInstance
    scheme : SchemeSpec
        ``DIRECT`` for second-kind problems, a first-kind variant otherwise.
    n_max : int
        Number of steps; the final iterate is ``x_{n_max}``.
    pi : ScalarFunction, optional
        Weakening function; enables the ``weakened_*`` columns.
    theta : ScalarFunction, optional
        Source function; with an exact solution, the ``bound`` column holds
        ``gamma_n * ||x_0 - x_*||_theta`` for exact runs.
    noise : NoiseModel, optional
        Perturbs the data at each step; ``bound`` then holds
        ``||x_n - x_*|| + c (delta_0 + ... + delta_{n-1})`` with
        ``c = max |psi|`` over the spectrum.
    thin : bool
        Record every step up to 1000 and geometrically thinned steps beyond.
    """
    A = problem.operator
    if n_max < 0:
        raise ValueError("n_max must be nonnegative")
    if scheme.operator_kind is not A.kind:
        raise SpectralError(
            f"scheme {scheme} needs a {scheme.operator_kind.value}-kind operator, "
            f"got {A.kind.value}-kind")
    if check and scheme.first_kind:
        check_admissibility(scheme, A).raise_if_failed()

    lam, w = A.lambdas, A.weights
    ph = np.asarray(phi(scheme, lam), dtype=float)
    ps = np.asarray(psi(scheme, lam), dtype=float)
    rhs = problem.rhs.coeffs
    drive = ps * rhs
    xs = None if problem.exact_solution is None else problem.exact_solution.coeffs
    pi_vals = None if pi is None else pi.values(lam, allow_negative=True)
    residual_of = problem.residual_coeffs

    gamma_scale = None
    abs_phi = np.abs(ph)
    if theta is not None and xs is not None and noise is None:
        try:
            src = source_norm(problem.initial - problem.exact_solution, theta, A,
                              allow_negative=True)
            gamma_scale = (np.abs(theta.values(lam, allow_negative=True)), src)
        except NotRepresentableError:
            gamma_scale = None

    if noise is not None:
        if len(noise.delta_sequence) < n_max:
            raise ValueError(
                f"noise sequence has {len(noise.delta_sequence)} levels, need {n_max}")
        c = float(np.max(np.abs(ps)))
        cum = noise.cumulative(n_max)
        dirs = noise.directions(A)
        x_clean = problem.initial.coeffs.copy()

    record = _record_steps(n_max, thin)
    diag = RunDiagnostics()
    x = problem.initial.coeffs.copy()
    best_n, best_err = None, math.inf

    for n in range(n_max + 1):
        if noise is not None:
            step_drive = ps * (rhs + noise.delta_sequence[n] * next(dirs)) if n < n_max else drive
        else:
            step_drive = drive
        x_next = ph * x + step_drive
        err = None
        if xs is not None:
            e = x - xs
            err = weighted_norm(w, e)
            if err < best_err:
                best_n, best_err = n, err
        if record[n]:
            r = residual_of(x)
            diag.steps.append(n)
            diag.error.append(err)
            diag.residual.append(weighted_norm(w, r))
            diag.correction.append(weighted_norm(w, x_next - x))
            if pi_vals is not None:
                diag.weakened_error.append(None if xs is None else weighted_norm(w, pi_vals * e))
                diag.weakened_residual.append(weighted_norm(w, pi_vals * r))
            else:
                diag.weakened_error.append(None)
                diag.weakened_residual.append(None)
            if noise is not None:
                dev = weighted_norm(w, x - x_clean)
                diag.deviation.append(dev)
                diag.noise_bound.append(c * cum[n])
                clean_err = None if xs is None else weighted_norm(w, x_clean - xs)
                diag.bound.append(c * cum[n] + (clean_err or 0.0))
            elif gamma_scale is not None:
                th, src = gamma_scale
                diag.bound.append(float(np.max(np.power(abs_phi, n) * th)) * src)
            else:
                diag.bound.append(None)
        if n < n_max:
            if not np.all(np.isfinite(x_next)):
                raise FloatingPointError(f"iterate became non-finite at step {n + 1}")
            x = x_next
            if noise is not None:
                x_clean = ph * x_clean + drive

    diag.final = SpectralVector(A, x)
    if xs is not None:
        diag.best_n, diag.best_error = best_n, best_err
    return diag


def iterate_second_kind(problem: ProblemInstance, n_max: int,
                        pi: Optional[ScalarFunction] = None,
                        theta: Optional[ScalarFunction] = None,
                        thin: bool = True) -> RunDiagnostics:
    """Successive approximations ``x_{n+1} = B x_n + f``."""
    if problem.kind is not OperatorKind.SECOND_KIND:
        raise SpectralError("iterate_second_kind needs a second-kind operator")
    return iterate(problem, DIRECT, n_max, pi=pi, theta=theta, thin=thin)


def iterate_first_kind(problem: ProblemInstance, scheme: SchemeSpec, n_max: int,
                       pi: Optional[ScalarFunction] = None,
                       theta: Optional[ScalarFunction] = None,
                       thin: bool = True) -> RunDiagnostics:
    """``x_{n+1} = phi(A) x_n + psi(A) y``; raises ``AdmissibilityError`` first if needed."""
    if problem.kind is not OperatorKind.FIRST_KIND or not scheme.first_kind:
        raise SpectralError("iterate_first_kind needs a first-kind operator and scheme")
    return iterate(problem, scheme, n_max, pi=pi, theta=theta, thin=thin)


def iterate_noisy(problem: ProblemInstance, scheme: Optional[SchemeSpec], noise: NoiseModel,
                  n_max: int, pi: Optional[ScalarFunction] = None,
                  thin: bool = True) -> RunDiagnostics:
    """Iterate with data ``rhs + delta_n e_n`` at step ``n``.

    ``scheme=None`` selects the direct second-kind iteration.  Besides the
    usual columns the result carries ``deviation`` (``||x~_n - x_n||``) and
    ``noise_bound`` (``c * Delta_n``).
    """
    return iterate(problem, DIRECT if scheme is None else scheme, n_max, pi=pi,
                   noise=noise, thin=thin)


# --------------------------------------------------------------------------
# error budgets and stopping


def error_budget(mu: Sequence[float], space: SequenceSpace, delta: float,
                 c: float = 1.0) -> np.ndarray:
    """``mu_n + c ||sigma_n|| delta`` for ``n = 0..len(mu)-1``."""
    mu = np.asarray(mu, dtype=float)
    if mu.size == 0:
        return mu.copy()
    return mu + c * sigma_norms(space, mu.size - 1) * delta


def quasi_stop(mu: Sequence[float], space: SequenceSpace, delta: float,
               c: float = 1.0) -> int:
    """Largest ``N`` such that one more step shrinks the error budget for all ``n < N``.

    Step ``n -> n+1`` is useful when
    ``c delta (||sigma_{n+1}|| - ||sigma_n||) < mu_n - mu_{n+1}``.  A step
    with zero noise increment is useful whenever ``mu`` does not increase;
    ``delta = 0`` never stops.  Returns ``len(mu) - 1`` if no step fails.
    """
    mu = np.asarray(mu, dtype=float)
    if mu.size < 2:
        raise ValueError("need at least two majorant values")
    last = mu.size - 1
    if delta == 0:
        return last
    growth = c * delta * np.diff(sigma_norms(space, last))
    drop = mu[:-1] - mu[1:]
    useful = (drop > growth) | ((growth == 0) & (drop >= 0))
    failed = np.flatnonzero(~useful)
    return int(failed[0]) if failed.size else last


@dataclass(frozen=True)
class ScanRow:
    delta: float
    best_n: int
    best_error: float


def semiconvergence_scan(problem: ProblemInstance, scheme: Optional[SchemeSpec],
                         space: SequenceSpace, deltas: Sequence[float], n_max: int,
                         seeds: Sequence[int] = (0,)) -> list[ScanRow]:
    """For each noise level, the best true error over ``n <= n_max``.

    Medians are taken over ``seeds`` (``median_low`` for the index).
    """
    if problem.exact_solution is None:
        raise SpectralError("semiconvergence_scan needs an exact solution")
    rows = []
    for delta in deltas:
        ns, errs = [], []
        for seed in seeds:
            d = iterate_noisy(problem, scheme, noise_profile(delta, n_max, space, seed),
                              n_max, thin=True)
            ns.append(d.best_n)
            errs.append(d.best_error)
        rows.append(ScanRow(float(delta), int(statistics.median_low(ns)),
                            float(statistics.median(errs))))
    return rows
