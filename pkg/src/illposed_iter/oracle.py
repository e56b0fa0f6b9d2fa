"""Dense-matrix realisation of the iterations, for cross-checking the engine.

A unit-weight spectral problem is lifted to ``M = Q diag(lambda) Q^T`` with a
seeded orthogonal ``Q``.  The iterations are then carried out with ordinary
matrix arithmetic; implicit schemes solve their linear system at every step
instead of using the diagonal form.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.linalg as sla

from .engine import ProblemInstance, iterate
from .schemes import SchemeSpec, Variant
from .spectral import OperatorKind, SpectralError

__all__ = [
    "DenseInstance",
    "DenseDiagnostics",
    "UnsupportedWeights",
    "DenseSolveError",
    "householder_basis",
    "lift",
    "run_dense",
    "compare_runs",
    "equivalence_gap",
]


class UnsupportedWeights(SpectralError):
    """Only unit-weight spectra have a finite matrix realisation."""


class DenseSolveError(ArithmeticError):
    """The implicit system matrix could not be factorised."""


@dataclass(frozen=True)
class DenseInstance:
    matrix: np.ndarray
    basis_seed: Optional[int]
    rhs: np.ndarray
    initial: np.ndarray
    exact_solution: Optional[np.ndarray]
    kind: OperatorKind
    basis: np.ndarray = field(repr=False)


def householder_basis(m: int, seed: Optional[int]) -> np.ndarray:
    """Product of ``m`` seeded Householder reflectors; identity for ``seed=None``."""
    Q = np.eye(m)
    if seed is None:
        return Q
    rng = np.random.default_rng(seed)
    for _ in range(m):
        v = rng.standard_normal(m)
        v /= np.linalg.norm(v)
        Q -= 2.0 * np.outer(Q @ v, v)
    return Q


def lift(problem: ProblemInstance, seed: Optional[int] = None,
         size_cap: int = 256) -> DenseInstance:
    """Conjugate a spectral problem into a dense symmetric one.

    Raises
    ------
    UnsupportedWeights
        If any spectral weight differs from 1.
    """
    A = problem.operator
    if A.size > size_cap:
        raise SpectralError(f"operator has {A.size} points, size cap is {size_cap}")
    if not np.all(A.weights == 1.0):
        raise UnsupportedWeights("dense lift needs unit spectral weights")
    Q = householder_basis(A.size, seed)
    M = (Q * A.lambdas) @ Q.T
    M = 0.5 * (M + M.T)
    xs = problem.exact_solution
    return DenseInstance(
        matrix=M,
        basis_seed=seed,
        rhs=Q @ problem.rhs.coeffs,
        initial=Q @ problem.initial.coeffs,
        exact_solution=None if xs is None else Q @ xs.coeffs,
        kind=A.kind,
        basis=Q,
    )


@dataclass
class DenseDiagnostics:
    steps: list = field(default_factory=list)
    error: list = field(default_factory=list)
    residual: list = field(default_factory=list)
    correction: list = field(default_factory=list)
    solve_residual: list = field(default_factory=list)
    final: Optional[np.ndarray] = None


class _Solver:
    """Cholesky solve with one step of iterative refinement."""

    def __init__(self, L: np.ndarray):
        self.L = L
        try:
            self.factor = sla.cho_factor(L, lower=True, check_finite=True)
        except (np.linalg.LinAlgError, ValueError) as exc:
            raise DenseSolveError(f"implicit system matrix not factorisable: {exc}") from exc

    def __call__(self, b: np.ndarray) -> tuple[np.ndarray, float]:
        x = sla.cho_solve(self.factor, b)
        x += sla.cho_solve(self.factor, b - self.L @ x)
        if not np.all(np.isfinite(x)):
            raise DenseSolveError("implicit solve produced non-finite values")
        return x, float(np.linalg.norm(self.L @ x - b))


def _stepper(inst: DenseInstance, scheme: SchemeSpec):
    A, y = inst.matrix, inst.rhs
    m = A.shape[0]
    eye = np.eye(m)
    a, k, v = scheme.alpha, scheme.k, scheme.variant
    if v is Variant.SECOND_KIND_DIRECT:
        return lambda x: (A @ x + y, None)
    Ak = np.linalg.matrix_power(A, k)
    Ak1y = np.linalg.matrix_power(A, k - 1) @ y
    if v is Variant.EXPLICIT_POWER:
        T = eye - a * A
        Phi = np.linalg.matrix_power(T, k)
        # psi(A) y = a * sum_{j<k} (E - aA)^j y, no inverse of A needed
        acc, term = y.copy(), y.copy()
        for _ in range(k - 1):
            term = T @ term
            acc += term
        drive = a * acc
        return lambda x: (Phi @ x + drive, None)
    if v is Variant.EXPLICIT_MONOMIAL:
        drive = a * Ak1y
        return lambda x: (x - a * (Ak @ x) + drive, None)
    if v is Variant.IMPLICIT_EULER:
        solve = _Solver(eye + a * Ak)
        drive = a * Ak1y
        return lambda x: solve(x + drive)
    if v is Variant.IMPLICIT_CAYLEY:
        solve = _Solver(eye + a * Ak)
        R = eye - a * Ak
        drive = 2.0 * a * Ak1y
        return lambda x: solve(R @ x + drive)
    solve = _Solver(eye + a * a * (Ak @ Ak))
    R = eye - a * Ak
    R2 = R @ R
    drive = 2.0 * a * Ak1y
    return lambda x: solve(R2 @ x + drive)


def run_dense(instance: DenseInstance, scheme: SchemeSpec, n_max: int) -> DenseDiagnostics:
    """Iterate on the dense instance, recording every step.

    ``solve_residual[n]`` is ``||L x_{n+1} - b_n||`` for the implicit system
    ``L x_{n+1} = b_n`` solved at step ``n`` (``None`` for explicit schemes).
    """
    if scheme.operator_kind is not instance.kind:
        raise SpectralError("scheme kind does not match the instance")
    A, y = instance.matrix, instance.rhs
    xs = instance.exact_solution
    step = _stepper(instance, scheme)

    def residual(x):
        if instance.kind is OperatorKind.SECOND_KIND:
            return x - A @ x - y
        return A @ x - y

    diag = DenseDiagnostics()
    x = instance.initial.copy()
    for n in range(n_max + 1):
        x_next, solve_res = step(x)
        diag.steps.append(n)
        diag.error.append(None if xs is None else float(np.linalg.norm(x - xs)))
        diag.residual.append(float(np.linalg.norm(residual(x))))
        diag.correction.append(float(np.linalg.norm(x_next - x)))
        diag.solve_residual.append(solve_res)
        if n < n_max:
            if not np.all(np.isfinite(x_next)):
                raise DenseSolveError(f"iterate overflowed at step {n + 1}")
            x = x_next
    diag.final = x
    return diag


def compare_runs(spectral, dense, floor: float = 0.0) -> float:
    """Largest relative disagreement over the error, residual and correction columns."""
    worst = 0.0
    for name in ("error", "residual", "correction"):
        for a, b in zip(getattr(spectral, name), getattr(dense, name)):
            if a is None or b is None:
                continue
            scale = max(abs(a), abs(b), floor)
            if scale > 0:
                worst = max(worst, abs(a - b) / scale)
    return worst


def equivalence_gap(problem: ProblemInstance, scheme: SchemeSpec, n_max: int,
                    seed: Optional[int]) -> float:
    """Run engine and oracle on the same problem; return the relative gap."""
    spectral = iterate(problem, scheme, n_max, thin=False)
    dense = run_dense(lift(problem, seed), scheme, n_max)
    return compare_runs(spectral, dense)

