"""Iteration schemes as spectral filter pairs and their rate constants.

Every first-kind scheme turns ``Ax = y`` into the fixed-point form
``x = phi(A) x + psi(A) y`` with ``phi(lam) = 1 - lam * psi(lam)``.  The
second-kind direct iteration ``x_{n+1} = B x_n + f`` is included as the
filter pair ``phi(lam) = lam``, ``psi = 1``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize_scalar

from .spectral import OperatorKind, ScalarFunction, SpectralOperator

__all__ = [
    "Variant",
    "SchemeSpec",
    "AdmissibilityReport",
    "AdmissibilityError",
    "RateUnavailableError",
    "phi",
    "psi",
    "check_admissibility",
    "required_interval",
    "gamma_n_numeric",
    "gamma_n_on_spectrum",
    "gamma_n_closed_form",
    "gamma_asymptotic",
    "fit_power_law",
    "parse_scheme",
    "format_scheme",
    "FIRST_KIND_VARIANTS",
]

_EPS = np.finfo(float).eps


class AdmissibilityError(ValueError):
    """The scheme violates condition b) or c) on the operator's spectrum."""

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


class RateUnavailableError(ValueError):
    """No closed-form or asymptotic rate is known; use the numeric maximum."""


class Variant(enum.Enum):
    SECOND_KIND_DIRECT = "second-kind"
    EXPLICIT_POWER = "explicit-power"
    EXPLICIT_MONOMIAL = "explicit-monomial"
    IMPLICIT_EULER = "implicit-euler"
    IMPLICIT_CAYLEY = "implicit-cayley"
    IMPLICIT_SQUARED = "implicit-squared"


FIRST_KIND_VARIANTS = (
    Variant.EXPLICIT_POWER,
    Variant.EXPLICIT_MONOMIAL,
    Variant.IMPLICIT_EULER,
    Variant.IMPLICIT_CAYLEY,
    Variant.IMPLICIT_SQUARED,
)

_IMPLICIT = {Variant.IMPLICIT_EULER, Variant.IMPLICIT_CAYLEY, Variant.IMPLICIT_SQUARED}


@dataclass(frozen=True)
class SchemeSpec:
    variant: Variant
    alpha: float = 1.0
    k: int = 1

    def __post_init__(self):
        object.__setattr__(self, "variant", Variant(self.variant))
        if not (self.alpha > 0 and math.isfinite(self.alpha)):
            raise ValueError(f"alpha must be positive, got {self.alpha}")
        if int(self.k) != self.k or self.k < 1:
            raise ValueError(f"k must be a positive integer, got {self.k}")
        object.__setattr__(self, "alpha", float(self.alpha))
        object.__setattr__(self, "k", int(self.k))

    @property
    def first_kind(self) -> bool:
        return self.variant is not Variant.SECOND_KIND_DIRECT

    @property
    def implicit(self) -> bool:
        return self.variant in _IMPLICIT

    @property
    def operator_kind(self) -> OperatorKind:
        return OperatorKind.FIRST_KIND if self.first_kind else OperatorKind.SECOND_KIND

    def phi(self, lam):
        return phi(self, lam)

    def psi(self, lam):
        return psi(self, lam)

    def __str__(self):
        return format_scheme(self)


def _scalar_or_array(lam, out):
    return out if np.ndim(lam) else float(out)


def phi(scheme: SchemeSpec, lam):
    """Iteration filter ``phi(lam)``; vectorised over ``lam``."""
    lam = np.asarray(lam, dtype=float)
    a, k, v = scheme.alpha, scheme.k, scheme.variant
    if v is Variant.SECOND_KIND_DIRECT:
        out = lam.copy()
    elif v is Variant.EXPLICIT_POWER:
        out = (1.0 - a * lam) ** k
    else:
        u = a * lam**k
        if v is Variant.EXPLICIT_MONOMIAL:
            out = 1.0 - u
        elif v is Variant.IMPLICIT_EULER:
            out = 1.0 / (1.0 + u)
        elif v is Variant.IMPLICIT_CAYLEY:
            out = (1.0 - u) / (1.0 + u)
        else:
            out = (1.0 - u) ** 2 / (1.0 + u * u)
    return _scalar_or_array(lam, out)


def psi(scheme: SchemeSpec, lam):
    """Data filter ``psi(lam)`` with ``phi = 1 - lam * psi``.

    For the explicit power scheme ``(1 - (1 - a lam)^k) / lam`` is evaluated
    as the geometric sum ``a * sum_j (1 - a lam)^j``, which has no removable
    singularity and equals ``a k`` at the origin.
    """
    lam = np.asarray(lam, dtype=float)
    a, k, v = scheme.alpha, scheme.k, scheme.variant
    if v is Variant.SECOND_KIND_DIRECT:
        out = np.ones_like(lam)
    elif v is Variant.EXPLICIT_POWER:
        q = 1.0 - a * lam
        acc = np.ones_like(lam)
        term = np.ones_like(lam)
        for _ in range(k - 1):
            term = term * q
            acc = acc + term
        out = a * acc
    else:
        lk1 = lam ** (k - 1)
        u = a * lam**k
        if v is Variant.EXPLICIT_MONOMIAL:
            out = a * lk1
        elif v is Variant.IMPLICIT_EULER:
            out = a * lk1 / (1.0 + u)
        elif v is Variant.IMPLICIT_CAYLEY:
            out = 2.0 * a * lk1 / (1.0 + u)
        else:
            out = 2.0 * a * lk1 / (1.0 + u * u)
    return _scalar_or_array(lam, out)


# --------------------------------------------------------------------------
# admissibility


@dataclass(frozen=True)
class AdmissibilityReport:
    condition_a_ok: bool
    condition_b_ok: bool
    condition_c_ok: bool
    offending_lambdas: tuple = ()
    required_spectrum_interval: tuple = (-math.inf, math.inf)
    messages: tuple = field(default=(), compare=False)

    @property
    def ok(self) -> bool:
        return self.condition_a_ok and self.condition_b_ok and self.condition_c_ok

    def raise_if_failed(self):
        if not self.ok:
            raise AdmissibilityError("; ".join(self.messages), self)


def required_interval(scheme: SchemeSpec) -> tuple[float, float]:
    """Spectrum interval on which ``|phi| <= 1`` holds for the scheme."""
    a, k, v = scheme.alpha, scheme.k, scheme.variant
    if v is Variant.SECOND_KIND_DIRECT:
        return (-1.0, 1.0)
    if v is Variant.EXPLICIT_POWER:
        return (0.0, 2.0 / a)
    if v is Variant.EXPLICIT_MONOMIAL:
        r = (2.0 / a) ** (1.0 / k)
        return (-r, r) if k % 2 == 0 else (0.0, r)
    return (-math.inf, math.inf) if k % 2 == 0 else (0.0, math.inf)


def check_admissibility(scheme: SchemeSpec, A: SpectralOperator) -> AdmissibilityReport:
    """Check conditions b) and c) pointwise on the spectrum of ``A``.

    Condition c) is checked on eigen-directions: no spectrum point (all have
    positive weight) may satisfy ``phi(lam) = -1``.  For the direct
    second-kind scheme this is the requirement that ``-1`` is not an
    eigenvalue of ``B``.
    """
    lams = A.lambdas
    ph = np.asarray(phi(scheme, lams))
    tol = 4 * _EPS
    bad_b = np.abs(ph) > 1.0 + tol
    bad_c = np.abs(ph + 1.0) <= tol
    msgs = []
    if np.any(bad_b):
        msgs.append("condition b) |phi(lambda)| <= 1 fails at lambda = "
                    + ", ".join(repr(float(l)) for l in lams[bad_b][:8]))
    if np.any(bad_c):
        msgs.append("condition c) phi(lambda) = -1 at eigenvalue lambda = "
                    + ", ".join(repr(float(l)) for l in lams[bad_c][:8]))
    offending = tuple(float(l) for l in lams[bad_b | bad_c])
    return AdmissibilityReport(
        condition_a_ok=True,
        condition_b_ok=not np.any(bad_b),
        condition_c_ok=not np.any(bad_c),
        offending_lambdas=offending,
        required_spectrum_interval=required_interval(scheme),
        messages=tuple(msgs),
    )


# --------------------------------------------------------------------------
# rate constants


def _maximand(scheme, theta, n):
    def f(lam):
        lam = np.asarray(lam, dtype=float)
        return (np.power(np.abs(phi(scheme, lam)), n)
                * np.abs(theta.values(np.atleast_1d(lam), allow_negative=True)).reshape(lam.shape))
    return f


def _grid(lo, hi, n_uniform=4096, n_geometric=2048):
    pts = [np.linspace(lo, hi, n_uniform)]
    width = hi - lo
    if width > 0:
        offsets = np.geomspace(width * 1e-12, width, n_geometric)
        pts += [lo + offsets, hi - offsets]
        if lo < 0 < hi:
            # peaks of |phi|^n |theta| concentrate at the origin for large n
            side = min(-lo, hi)
            small = np.geomspace(side * 1e-12, side, n_geometric)
            pts += [small, -small]
    return np.unique(np.clip(np.concatenate(pts), lo, hi))


def gamma_n_numeric(scheme: SchemeSpec, theta: ScalarFunction, interval, n: int,
                    xatol: float = 1e-12) -> float:
    """``max |phi(lam)|^n |theta(lam)|`` over a closed interval.

    A dense scan (uniform plus geometrically clustered points) locates the
    best grid point; a bounded Brent search between its neighbours refines
    it to ``xatol`` in ``lam``.
    """
    lo, hi = (float(v) for v in interval)
    if not (math.isfinite(lo) and math.isfinite(hi)) or hi < lo:
        raise ValueError(f"need a finite closed interval, got {interval!r}")
    if n < 0:
        raise ValueError("n must be nonnegative")
    f = _maximand(scheme, theta, n)
    g = _grid(lo, hi)
    vals = f(g)
    i = int(np.argmax(vals))
    best = float(vals[i])
    a, b = g[max(i - 1, 0)], g[min(i + 1, g.size - 1)]
    if b > a:
        res = minimize_scalar(lambda t: -float(f(t)), bounds=(a, b), method="bounded",
                              options={"xatol": xatol})
        best = max(best, -float(res.fun))
    return best


def gamma_n_on_spectrum(scheme: SchemeSpec, theta: ScalarFunction, A: SpectralOperator,
                        n: int) -> float:
    """``max`` of ``|phi|^n |theta|`` over the spectrum points of ``A`` (exact)."""
    return float(np.max(_maximand(scheme, theta, n)(A.lambdas)))


def gamma_n_closed_form(scheme: SchemeSpec, s: float, M: float, n: int) -> float:
    """Closed-form ``gamma_n`` for ``theta = lam^s`` on ``[0, M]``.

    Available for the two explicit polynomial schemes.  The value is the
    larger of the interior critical point (when it lies in ``[0, M]``) and
    the endpoint ``M``; for ``M <= 1/alpha`` (power) or
    ``M <= alpha^{-1/k}`` (monomial) with the peak inside, this is the bare
    interior formula.
    """
    a, k, v = scheme.alpha, scheme.k, scheme.variant
    if s <= 0 or M <= 0 or n < 0:
        raise ValueError("need s > 0, M > 0, n >= 0")
    kn = k * n
    if v is Variant.EXPLICIT_POWER:
        if M >= 2.0 / a:
            raise RateUnavailableError("spectrum bound must satisfy M < 2/alpha")
        peak_at = s / (a * (s + kn))
        peak = (s / (a * (s + kn))) ** s * (kn / (s + kn)) ** kn
        end = M**s * abs(1.0 - a * M) ** kn
    elif v is Variant.EXPLICIT_MONOMIAL:
        if a * M**k >= 2.0:
            raise RateUnavailableError("spectrum bound must satisfy M < (2/alpha)^(1/k)")
        peak_at = (s / (a * (s + kn))) ** (1.0 / k)
        peak = (s / (a * (s + kn))) ** (s / k) * (kn / (s + kn)) ** n
        end = M**s * abs(1.0 - a * M**k) ** n
    else:
        raise RateUnavailableError(
            f"no closed form for {v.value}; use gamma_n_numeric")
    if peak_at <= M:
        return max(peak, end)
    return end


def gamma_asymptotic(scheme: SchemeSpec, s: float) -> tuple[float, float]:
    """``(C, p)`` with ``gamma_n ~ C n^{-p}`` for ``theta = lam^s``."""
    a, k, v = scheme.alpha, scheme.k, scheme.variant
    e = math.e
    if v is Variant.SECOND_KIND_DIRECT:
        raise RateUnavailableError("direct second-kind iteration has no universal rate")
    if v is Variant.EXPLICIT_POWER:
        return (s / (e * a * k)) ** s, float(s)
    if v in (Variant.EXPLICIT_MONOMIAL, Variant.IMPLICIT_EULER):
        return (s / (e * a * k)) ** (s / k), s / k
    return (s / (2 * e * a * k)) ** (s / k), s / k


def fit_power_law(ns, gammas) -> tuple[float, float]:
    """Least-squares fit of ``log gamma = log C - p log n``; returns ``(C, p)``."""
    ns = np.asarray(ns, dtype=float)
    gammas = np.asarray(gammas, dtype=float)
    slope, intercept = np.polyfit(np.log(ns), np.log(gammas), 1)
    return float(np.exp(intercept)), float(-slope)


# --------------------------------------------------------------------------
# text tokens


def parse_scheme(token: str) -> SchemeSpec:
    """Parse ``explicit-power alpha=0.5 k=2`` style descriptors."""
    parts = token.split()
    if not parts:
        raise ValueError("empty scheme token")
    try:
        variant = Variant(parts[0].lower())
    except ValueError:
        names = ", ".join(v.value for v in Variant)
        raise ValueError(f"unknown scheme {parts[0]!r}; expected one of {names}") from None
    kwargs = {}
    for p in parts[1:]:
        key, eq, val = p.partition("=")
        if not eq or key not in ("alpha", "k"):
            raise ValueError(f"bad scheme parameter {p!r}")
        kwargs[key] = float(val) if key == "alpha" else int(val)
    if variant is Variant.SECOND_KIND_DIRECT and kwargs:
        raise ValueError("second-kind takes no parameters")
    return SchemeSpec(variant, **kwargs)


def format_scheme(scheme: SchemeSpec) -> str:
    if scheme.variant is Variant.SECOND_KIND_DIRECT:
        return scheme.variant.value
    return f"{scheme.variant.value} alpha={scheme.alpha!r} k={scheme.k}"
