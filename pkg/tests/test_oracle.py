import numpy as np
import pytest
from scipy.linalg import eigvalsh

from illposed_iter.engine import ProblemInstance, iterate
from illposed_iter.oracle import (
    UnsupportedWeights,
    compare_runs,
    equivalence_gap,
    householder_basis,
    lift,
    run_dense,
)
from illposed_iter.schemes import FIRST_KIND_VARIANTS, SchemeSpec, Variant
from illposed_iter.spectral import OperatorKind, SpectralOperator, SpectralVector


def problem(seed, m=32, kind=OperatorKind.FIRST_KIND):
    rng = np.random.default_rng(seed)
    if kind is OperatorKind.FIRST_KIND:
        lam = np.geomspace(1e-4, 1, m) * rng.uniform(0.9, 1.0)
    else:
        # accumulates at 1 so that norms stay far above rounding level
        lam = np.sort(1.0 - np.geomspace(1e-3, 1.9, m) * rng.uniform(0.9, 1.0))
    A = SpectralOperator(lam, kind=kind)
    return ProblemInstance.from_solution(A, rng.standard_normal(m),
                                         initial=0.1 * rng.standard_normal(m))


def test_diagonal_lift():
    p = problem(0, 8)
    inst = lift(p, seed=None)
    np.testing.assert_array_equal(inst.matrix, np.diag(p.operator.lambdas))


def test_basis_orthogonal():
    Q = householder_basis(40, 3)
    np.testing.assert_allclose(Q @ Q.T, np.eye(40), atol=1e-13)


def test_lift_preserves_eigenvalues_and_norms():
    p = problem(1, 48)
    inst = lift(p, seed=11)
    np.testing.assert_allclose(eigvalsh(inst.matrix), p.operator.lambdas, atol=1e-12)
    assert np.linalg.norm(inst.rhs) == pytest.approx(p.rhs.norm(), rel=1e-12)


def test_lift_needs_unit_weights():
    A = SpectralOperator([0.1, 0.2], [1.0, 2.0])
    with pytest.raises(UnsupportedWeights):
        lift(ProblemInstance.from_solution(A, [1.0, 1.0]))


def test_hand_iteration_2x2():
    A = SpectralOperator([0.5, 1.0])
    p = ProblemInstance(A, SpectralVector(A, [0.5, 1.0]), A.zeros())
    d = run_dense(lift(p), SchemeSpec(Variant.EXPLICIT_POWER), 1)
    np.testing.assert_allclose(d.final, [0.5, 1.0], rtol=0, atol=1e-16)


@pytest.mark.parametrize("variant", FIRST_KIND_VARIANTS)
@pytest.mark.parametrize("k", [1, 2])
def test_diagonal_lift_trajectories(variant, k):
    p = problem(2)
    s = SchemeSpec(variant, 1.0, k)
    spec = iterate(p, s, 100, thin=False)
    dense = run_dense(lift(p, seed=None), s, 100)
    np.testing.assert_allclose(dense.final, spec.final.coeffs, rtol=1e-10, atol=1e-14)
    assert compare_runs(spec, dense) < 1e-10


@pytest.mark.parametrize("variant", FIRST_KIND_VARIANTS)
def test_conjugated_lift_norms(variant):
    p = problem(3, 64)
    assert equivalence_gap(p, SchemeSpec(variant, 0.8, 2), 200, seed=5) < 1e-8


def test_second_kind_equivalence():
    p = problem(4, 30, OperatorKind.SECOND_KIND)
    assert equivalence_gap(p, SchemeSpec(Variant.SECOND_KIND_DIRECT), 200, seed=6) < 1e-8


def test_implicit_solves_are_accurate():
    p = problem(5)
    d = run_dense(lift(p, seed=1), SchemeSpec(Variant.IMPLICIT_SQUARED, 1.0, 2), 20)
    assert max(d.solve_residual) < 1e-13


def test_lift_exactly_symmetric():
    M = lift(problem(6, 64), seed=9).matrix
    assert np.max(np.abs(M - M.T)) == 0.0


@pytest.mark.parametrize("variant", [Variant.IMPLICIT_EULER, Variant.IMPLICIT_CAYLEY,
                                     Variant.IMPLICIT_SQUARED])
def test_implicit_solve_consistency(variant):
    p = problem(7, 64)
    inst = lift(p, seed=2)
    d = run_dense(inst, SchemeSpec(variant, 1.0, 2), 200)
    # iterate norms are bounded by the error plus the solution norm
    scale = 1.0 + max(d.error) + np.linalg.norm(inst.exact_solution)
    assert max(d.solve_residual) <= 1e-11 * scale
