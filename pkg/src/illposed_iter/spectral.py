"""Finite spectral model of self-adjoint operators.

A self-adjoint operator with simple spectrum is unitarily equivalent to
multiplication by the independent variable on ``L2(Omega, sigma)``.  Here the
measure ``sigma`` is replaced by finitely many weighted point masses, so an
operator is a list of ``(lambda, weight)`` pairs and a vector is one real
coefficient per point.  Every spectral integral becomes a weighted sum.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Sequence

import numpy as np

__all__ = [
    "OperatorKind",
    "SpectrumPoint",
    "SpectralOperator",
    "SpectralVector",
    "ScalarFunction",
    "Power",
    "OneMinusLambda",
    "Identity",
    "Constant",
    "Custom",
    "SpectralError",
    "AssociationError",
    "DomainError",
    "NotRepresentableError",
    "apply_operator",
    "apply_function",
    "inner",
    "norm",
    "weighted_norm",
    "source_norm",
    "weakened_norm",
    "eigen_projection",
    "check_weakening",
    "operator_from_table",
    "format_table",
    "parse_table",
    "parse_function",
    "format_function",
    "REPRESENTABILITY_TOL",
]

#: squared-norm mass below which a coefficient on a zero of theta is ignored
REPRESENTABILITY_TOL = 1e-24


class SpectralError(ValueError):
    """Base class for structural errors in the spectral model."""


class AssociationError(SpectralError):
    """A vector was used with an operator it does not belong to."""


class DomainError(SpectralError):
    """A scalar function cannot be evaluated on part of the spectrum."""


class NotRepresentableError(SpectralError):
    """The vector is not in the range ``theta(A)X``."""


class OperatorKind(enum.Enum):
    SECOND_KIND = "second"  # x = Bx + f
    FIRST_KIND = "first"  # Ax = y


@dataclass(frozen=True)
class SpectrumPoint:
    lam: float
    weight: float = 1.0

    def __post_init__(self):
        if not math.isfinite(self.lam):
            raise SpectralError(f"spectral abscissa must be finite, got {self.lam}")
        if not (self.weight > 0 and math.isfinite(self.weight)):
            raise SpectralError(f"spectral weight must be positive, got {self.weight}")


def _frozen(values, dtype=float) -> np.ndarray:
    arr = np.array(values, dtype=dtype)
    arr.setflags(write=False)
    return arr


class SpectralOperator:
    """Multiplication operator on a finite weighted spectrum.

    Parameters
    ----------
    lambdas : array_like
        Spectral abscissae, strictly increasing.
    weights : array_like, optional
        Spectral-measure masses, all positive.  Defaults to unit weights.
    kind : OperatorKind
        Whether the operator plays the role of ``B`` in ``x = Bx + f`` or of
        ``A`` in ``Ax = y``.
    """

    __slots__ = ("lambdas", "weights", "kind")

    def __init__(self, lambdas, weights=None, kind: OperatorKind = OperatorKind.FIRST_KIND):
        lambdas = np.asarray(lambdas, dtype=float).reshape(-1)
        if weights is None:
            weights = np.ones_like(lambdas)
        weights = np.asarray(weights, dtype=float).reshape(-1)
        if lambdas.size == 0:
            raise SpectralError("operator needs at least one spectrum point")
        if weights.shape != lambdas.shape:
            raise SpectralError(
                f"got {lambdas.size} lambdas but {weights.size} weights")
        if not np.all(np.isfinite(lambdas)):
            raise SpectralError("spectral abscissae must be finite")
        if not np.all((weights > 0) & np.isfinite(weights)):
            raise SpectralError("spectral weights must be positive and finite")
        if np.any(np.diff(lambdas) <= 0):
            raise SpectralError("spectral abscissae must be strictly increasing")
        kind = OperatorKind(kind)
        if kind is OperatorKind.SECOND_KIND and np.max(np.abs(lambdas)) > 1.0:
            raise SpectralError(
                "second-kind operator must satisfy max|lambda| <= 1, got "
                f"{np.max(np.abs(lambdas))!r}")
        object.__setattr__(self, "lambdas", _frozen(lambdas))
        object.__setattr__(self, "weights", _frozen(weights))
        object.__setattr__(self, "kind", kind)

    def __setattr__(self, name, value):
        raise AttributeError("SpectralOperator is immutable")

    @classmethod
    def from_points(cls, points: Iterable[SpectrumPoint | tuple], kind=OperatorKind.FIRST_KIND):
        pts = [p if isinstance(p, SpectrumPoint) else SpectrumPoint(*p) for p in points]
        return cls([p.lam for p in pts], [p.weight for p in pts], kind)

    @property
    def points(self) -> list[SpectrumPoint]:
        return [SpectrumPoint(float(l), float(w)) for l, w in zip(self.lambdas, self.weights)]

    @property
    def size(self) -> int:
        return self.lambdas.size

    def __len__(self):
        return self.lambdas.size

    @property
    def operator_norm(self) -> float:
        return float(np.max(np.abs(self.lambdas)))

    def vector(self, coeffs) -> SpectralVector:
        return SpectralVector(self, coeffs)

    def zeros(self) -> SpectralVector:
        return SpectralVector(self, np.zeros(self.size))

    def tabulate(self, f: ScalarFunction, allow_negative: bool = False) -> np.ndarray:
        return f.values(self.lambdas, allow_negative=allow_negative)

    def __eq__(self, other):
        if self is other:
            return True
        if not isinstance(other, SpectralOperator):
            return NotImplemented
        return (self.kind is other.kind
                and np.array_equal(self.lambdas, other.lambdas)
                and np.array_equal(self.weights, other.weights))

    def __hash__(self):
        return hash((self.kind, self.lambdas.tobytes(), self.weights.tobytes()))

    def __repr__(self):
        return (f"SpectralOperator(n={self.size}, kind={self.kind.value}, "
                f"range=[{self.lambdas[0]:.6g}, {self.lambdas[-1]:.6g}])")


class SpectralVector:
    """Element of the Hilbert space in the eigencoordinates of ``operator``."""

    __slots__ = ("operator", "coeffs")

    def __init__(self, operator: SpectralOperator, coeffs):
        coeffs = np.asarray(coeffs, dtype=float).reshape(-1)
        if coeffs.size != operator.size:
            raise AssociationError(
                f"vector has {coeffs.size} coefficients, operator has {operator.size} points")
        object.__setattr__(self, "operator", operator)
        object.__setattr__(self, "coeffs", _frozen(coeffs))

    def __setattr__(self, name, value):
        raise AttributeError("SpectralVector is immutable")

    def _check(self, other: SpectralVector):
        if not isinstance(other, SpectralVector):
            return NotImplemented
        if other.operator != self.operator:
            raise AssociationError("vectors belong to different operators")
        return None

    def __add__(self, other):
        if self._check(other) is NotImplemented:
            return NotImplemented
        return SpectralVector(self.operator, self.coeffs + other.coeffs)

    def __sub__(self, other):
        if self._check(other) is NotImplemented:
            return NotImplemented
        return SpectralVector(self.operator, self.coeffs - other.coeffs)

    def __neg__(self):
        return SpectralVector(self.operator, -self.coeffs)

    def __mul__(self, c):
        if isinstance(c, SpectralVector):
            return NotImplemented
        return SpectralVector(self.operator, float(c) * self.coeffs)

    __rmul__ = __mul__

    def __eq__(self, other):
        if not isinstance(other, SpectralVector):
            return NotImplemented
        return self.operator == other.operator and np.array_equal(self.coeffs, other.coeffs)

    __hash__ = None

    def norm(self) -> float:
        return norm(self, self.operator)

    def __repr__(self):
        return f"SpectralVector({np.array2string(self.coeffs, threshold=6)})"


# --------------------------------------------------------------------------
# scalar functions of the spectral variable


class ScalarFunction:
    """A real function of the spectral variable, evaluable on a spectrum."""

    def values(self, lambdas: np.ndarray, allow_negative: bool = False) -> np.ndarray:
        raise NotImplementedError

    def __call__(self, lam, allow_negative: bool = False):
        out = self.values(np.atleast_1d(np.asarray(lam, dtype=float)), allow_negative)
        return out if np.ndim(lam) else float(out[0])


def _odd_denominator(s: float) -> Fraction | None:
    frac = Fraction(s).limit_denominator(10**6)
    if abs(float(frac) - s) > 1e-15 * max(1.0, abs(s)) or frac.denominator % 2 == 0:
        return None
    return frac


@dataclass(frozen=True)
class Power(ScalarFunction):
    """``lambda ** s`` for ``s > 0``.

    On negative abscissae the power is real only for rationals ``p/q`` with
    ``q`` odd; it is evaluated there only when ``allow_negative`` is set,
    which the scheme admissibility code does.
    """

    s: float

    def __post_init__(self):
        if not (self.s > 0 and math.isfinite(self.s)):
            raise SpectralError(f"Power exponent must be positive, got {self.s}")

    def values(self, lambdas, allow_negative=False):
        lambdas = np.asarray(lambdas, dtype=float)
        neg = lambdas < 0
        if not np.any(neg):
            return np.power(lambdas, self.s)
        if not allow_negative:
            raise DomainError(
                f"Power({self.s}) evaluated on negative spectrum point {lambdas[neg][0]!r}")
        frac = _odd_denominator(self.s)
        if frac is None:
            raise DomainError(
                f"Power({self.s}) is not real on negative spectrum; need s = p/q with q odd")
        mag = np.power(np.abs(lambdas), self.s)
        sign = np.where(neg & (frac.numerator % 2 == 1), -1.0, 1.0)
        return sign * mag


@dataclass(frozen=True)
class OneMinusLambda(ScalarFunction):
    """``(1 - lambda) ** s``; ``s = 1`` by default."""

    s: float = 1.0

    def __post_init__(self):
        if not (self.s > 0 and math.isfinite(self.s)):
            raise SpectralError(f"exponent must be positive, got {self.s}")

    def values(self, lambdas, allow_negative=False):
        base = 1.0 - np.asarray(lambdas, dtype=float)
        if self.s == 1.0:
            return base
        if float(self.s).is_integer():
            return base ** int(self.s)
        if np.any(base < 0):
            raise DomainError(f"(1 - lambda)^{self.s} is not real for lambda > 1")
        return np.power(base, self.s)


@dataclass(frozen=True)
class Identity(ScalarFunction):
    def values(self, lambdas, allow_negative=False):
        return np.array(lambdas, dtype=float)


@dataclass(frozen=True)
class Constant(ScalarFunction):
    c: float = 1.0

    def values(self, lambdas, allow_negative=False):
        return np.full(np.shape(lambdas), float(self.c))


@dataclass(frozen=True)
class Custom(ScalarFunction):
    """Values tabulated on the abscissae of one operator, in order."""

    table: tuple

    def __init__(self, table):
        object.__setattr__(self, "table", tuple(float(v) for v in np.asarray(table).reshape(-1)))

    def values(self, lambdas, allow_negative=False):
        if np.shape(lambdas) != (len(self.table),):
            raise AssociationError(
                f"Custom function tabulated on {len(self.table)} points, "
                f"evaluated on {np.size(lambdas)}")
        return np.array(self.table)


_FUNCTION_NAMES = {"power", "one-minus-lambda", "identity", "const"}


def parse_function(token: str) -> ScalarFunction:
    """Parse ``power(0.5)``, ``one-minus-lambda``, ``one-minus-lambda(3)``,
    ``identity`` or ``const(2)``."""
    tok = token.strip().lower()
    name, _, rest = tok.partition("(")
    name = name.strip()
    if name not in _FUNCTION_NAMES:
        raise ValueError(f"unknown function token {token!r}")
    if rest:
        if not rest.endswith(")"):
            raise ValueError(f"unbalanced parenthesis in {token!r}")
        arg = rest[:-1].strip()
    else:
        arg = ""
    if name == "power":
        return Power(float(arg))
    if name == "const":
        return Constant(float(arg) if arg else 1.0)
    if name == "one-minus-lambda":
        return OneMinusLambda(float(arg) if arg else 1.0)
    if arg:
        raise ValueError(f"{name} takes no argument")
    return Identity()


def format_function(f: ScalarFunction) -> str:
    if isinstance(f, Power):
        return f"power({f.s!r})"
    if isinstance(f, Constant):
        return f"const({f.c!r})"
    if isinstance(f, OneMinusLambda):
        return "one-minus-lambda" if f.s == 1.0 else f"one-minus-lambda({f.s!r})"
    if isinstance(f, Identity):
        return "identity"
    raise ValueError(f"{f!r} has no text form")


# --------------------------------------------------------------------------
# operations


def _associated(x: SpectralVector, A: SpectralOperator) -> np.ndarray:
    if x.operator is not A and x.operator != A:
        raise AssociationError("vector is not associated with this operator")
    return x.coeffs


def apply_operator(A: SpectralOperator, x: SpectralVector) -> SpectralVector:
    return SpectralVector(A, A.lambdas * _associated(x, A))


def apply_function(f: ScalarFunction, A: SpectralOperator, x: SpectralVector,
                   allow_negative: bool = False) -> SpectralVector:
    """Evaluate ``f(A) x`` pointwise in eigencoordinates."""
    coeffs = _associated(x, A)
    return SpectralVector(A, f.values(A.lambdas, allow_negative) * coeffs)


def inner(x: SpectralVector, y: SpectralVector, A: SpectralOperator) -> float:
    return float(np.dot(A.weights, _associated(x, A) * _associated(y, A)))


def weighted_norm(weights: np.ndarray, coeffs: np.ndarray) -> float:
    """``sqrt(sum w_i c_i^2)`` without underflow or overflow of the squares."""
    sq = float(np.dot(weights, coeffs * coeffs))
    if 1e-280 < sq < 1e280:
        return math.sqrt(sq)
    v = np.sqrt(weights) * np.abs(coeffs)
    scale = float(np.max(v)) if v.size else 0.0
    if scale == 0.0 or not math.isfinite(scale):
        return scale
    return scale * math.sqrt(float(np.dot(v / scale, v / scale)))


def norm(x: SpectralVector, A: SpectralOperator) -> float:
    return weighted_norm(A.weights, _associated(x, A))


def source_norm(x: SpectralVector, theta: ScalarFunction, A: SpectralOperator,
                allow_negative: bool = False) -> float:
    """Norm of ``x`` in ``theta(A)X``: the norm of the unique preimage ``h``.

    Raises
    ------
    NotRepresentableError
        If ``x`` carries mass above ``REPRESENTABILITY_TOL`` on a point where
        ``theta`` vanishes.
    """
    c = _associated(x, A)
    t = theta.values(A.lambdas, allow_negative)
    zero = t == 0
    mass = A.weights * c * c
    if np.any(zero):
        bad = zero & (mass > REPRESENTABILITY_TOL)
        if np.any(bad):
            lam = A.lambdas[bad][0]
            raise NotRepresentableError(
                f"vector has mass {mass[bad][0]:.3g} on lambda={lam!r} where theta vanishes")
    h = np.divide(c, t, out=np.zeros_like(c), where=~zero)
    return math.sqrt(float(np.dot(A.weights, h * h)))


def weakened_norm(x: SpectralVector, pi: ScalarFunction, A: SpectralOperator,
                  allow_negative: bool = False) -> float:
    """``||pi(A) x||``; a norm when no zero of ``pi`` is an eigenvalue of ``A``."""
    return norm(apply_function(pi, A, x, allow_negative), A)


def eigen_projection(A: SpectralOperator, eigenvalue: float, x: SpectralVector) -> SpectralVector:
    """Orthoprojection of ``x`` onto the eigenspace of ``eigenvalue``.

    Matching is exact on the stored abscissae.
    """
    c = _associated(x, A)
    return SpectralVector(A, np.where(A.lambdas == eigenvalue, c, 0.0))


def check_weakening(pi: ScalarFunction, A: SpectralOperator, allow_negative: bool = False):
    """Raise if a zero of ``pi`` falls on a spectrum point, i.e. ``||pi(A).||`` is not a norm."""
    vals = pi.values(A.lambdas, allow_negative)
    if np.any(vals == 0):
        lam = A.lambdas[vals == 0][0]
        raise DomainError(f"weakening function vanishes at eigenvalue {lam!r}")


def operator_from_table(rows: Sequence[Sequence[float]], kind=OperatorKind.FIRST_KIND):
    """Build an operator and its vectors from ``lambda weight coeff...`` rows."""
    arr = np.asarray(rows, dtype=float)
    if arr.ndim != 2 or arr.shape[1] < 2:
        raise SpectralError("table rows need at least 'lambda weight' columns")
    op = SpectralOperator(arr[:, 0], arr[:, 1], kind)
    return op, [SpectralVector(op, arr[:, j]) for j in range(2, arr.shape[1])]



def format_table(A: SpectralOperator, columns: dict | None = None) -> str:
    """Plain-text table: ``# kind=..`` and ``# columns=..`` headers, then one
    ``lambda weight coeff...`` line per spectrum point (17 significant digits)."""
    columns = dict(columns or {})
    for name, v in columns.items():
        if not name.isidentifier():
            raise SpectralError(f"bad column name {name!r}")
        if v.operator != A:
            raise AssociationError(f"column {name!r} belongs to another operator")
    lines = [f"# kind={A.kind.value}",
             "# columns=" + " ".join(["lambda", "weight", *columns])]
    data = [A.lambdas, A.weights, *(v.coeffs for v in columns.values())]
    for row in zip(*data):
        lines.append(" ".join(format(float(x), ".17g") for x in row))
    return "\n".join(lines) + "\n"


def parse_table(text: str) -> tuple[SpectralOperator, dict]:
    """Inverse of :func:`format_table`; returns the operator and named columns.

    Without a ``# columns=`` header the extra columns are named ``c0, c1, ...``.
    """
    kind = OperatorKind.FIRST_KIND
    names = None
    rows = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            key, _, val = line[1:].strip().partition("=")
            if key.strip() == "kind":
                kind = OperatorKind(val.strip())
            elif key.strip() == "columns":
                names = val.split()
            continue
        try:
            rows.append([float(t) for t in line.split()])
        except ValueError:
            raise SpectralError(f"line {lineno}: non-numeric entry in {line!r}") from None
        if len(rows[-1]) != len(rows[0]):
            raise SpectralError(f"line {lineno}: expected {len(rows[0])} columns")
    if not rows:
        raise SpectralError("table has no data rows")
    A, vectors = operator_from_table(rows, kind)
    extra = names[2:] if names else [f"c{j}" for j in range(len(vectors))]
    if len(extra) != len(vectors):
        raise SpectralError("columns header does not match the data width")
    return A, dict(zip(extra, vectors))
