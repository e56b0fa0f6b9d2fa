"""Experiment configuration files.

A config is a sequence of ``[section]`` headers and ``key = value`` lines.
``#`` starts a comment.  ``pin`` and ``scheme`` may repeat; every other key
appears at most once.  Example::

    [experiment]
    command = run
    n_max = 200

    [operator]
    kind = first
    spectrum = geometric-to-zero(1, 0.5, 40)
    weights = unit

    [problem]
    solution = power(0.5)

    [scheme]
    scheme = explicit-power alpha=1.0 k=1

Instead of a generator, ``table = path`` reads the operator from a plain-text
``lambda weight coeff...`` table (path relative to the working directory);
problem vectors may then name a column as ``table(<column>)``.

``parse_config(serialize_config(c)) == c`` holds for every valid config.
"""

from __future__ import annotations

import dataclasses
import math
import re
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .engine import ProblemInstance, format_space, parse_space
from .schemes import Variant, format_scheme, parse_scheme
from .spectral import (
    OperatorKind,
    SpectralError,
    SpectralOperator,
    SpectralVector,
    format_function,
    parse_function,
    parse_table,
)

__all__ = [
    "COMMANDS",
    "ConfigError",
    "ExperimentConfig",
    "parse_config",
    "serialize_config",
    "apply_override",
    "parse_spectrum",
    "format_spectrum",
    "spectrum_points",
    "build_operator",
    "build_problem",
    "default_scheme_token",
]

COMMANDS = ("run", "rates", "noise", "compare", "oracle-check")
_GENERATORS = ("uniform", "geometric-to-zero", "geometric-to-one", "points")


class ConfigError(ValueError):
    """Malformed or inconsistent config; carries a 1-based line and column."""

    def __init__(self, message: str, line: int = 0, col: int = 0):
        self.line, self.col = line, col
        where = f"{line}:{col}: " if line else ""
        super().__init__(where + message)


@dataclass(frozen=True)
class ExperimentConfig:
    command: Optional[str] = None
    n_max: int = 100
    seeds: tuple = (0,)
    output: Optional[str] = None
    operator_kind: str = "first"
    spectrum: str = "uniform(0.0, 1.0, 65)"
    table: Optional[str] = None
    weights: str = "unit"
    pins: tuple = ()
    solution: Optional[str] = None
    rhs: Optional[str] = None
    initial: str = "const(0.0)"
    schemes: tuple = ()
    theta: Optional[str] = None
    pi: Optional[str] = None
    interval: Optional[tuple] = None
    grid_points: int = 40
    noise_space: str = "lp p=inf"
    deltas: tuple = ()
    noise_c: Optional[float] = None
    tolerance: float = 1e-8


# --------------------------------------------------------------------------
# value converters; each returns the canonical form


def _int(text: str) -> int:
    v = float(text)
    if not v.is_integer():
        raise ValueError(f"expected an integer, got {text!r}")
    return int(v)


def _float(text: str) -> float:
    t = text.strip().lower()
    if t in ("inf", "infinity", "∞"):
        return math.inf
    return float(t)


def _floats(text: str) -> tuple:
    return tuple(_float(t) for t in re.split(r"[\s,]+", text.strip()) if t)


def _ints(text: str) -> tuple:
    return tuple(_int(t) for t in re.split(r"[\s,]+", text.strip()) if t)


def _function(text: str) -> str:
    return format_function(parse_function(text))


def _vector(text: str) -> str:
    m = re.fullmatch(r"\s*table\(\s*([A-Za-z_]\w*)\s*\)\s*", text)
    return f"table({m.group(1)})" if m else _function(text)


def _scheme(text: str) -> str:
    return format_scheme(parse_scheme(text))


def _kind(text: str) -> str:
    t = text.strip().lower()
    if t not in ("first", "second"):
        raise ValueError(f"operator kind must be 'first' or 'second', got {text!r}")
    return t


def _weights(text: str) -> str:
    t = text.strip().lower()
    if t not in ("unit", "measure"):
        raise ValueError(f"weights must be 'unit' or 'measure', got {text!r}")
    return t


def _command(text: str) -> str:
    t = text.strip().lower()
    if t not in COMMANDS:
        raise ValueError(f"unknown command {text!r}; expected one of {', '.join(COMMANDS)}")
    return t


def _pin(text: str) -> tuple:
    parts = text.split()
    if len(parts) == 1:
        return (_float(parts[0]), 1.0)
    if len(parts) == 3 and parts[1].lower() == "weight":
        w = _float(parts[2])
        if not (w > 0 and math.isfinite(w)):
            raise ValueError(f"pin weight must be positive, got {parts[2]!r}")
        return (_float(parts[0]), w)
    raise ValueError(f"expected 'pin = <lambda> [weight <w>]', got {text!r}")


def _interval(text: str) -> tuple:
    vals = _floats(text)
    if len(vals) != 2 or not vals[0] <= vals[1]:
        raise ValueError(f"interval needs two increasing numbers, got {text!r}")
    return vals


def _positive(conv):
    def f(text):
        v = conv(text)
        if not v > 0:
            raise ValueError(f"expected a positive value, got {text!r}")
        return v
    return f


def _nonneg_list(text: str) -> tuple:
    vals = _floats(text)
    if any(not (v >= 0 and math.isfinite(v)) for v in vals):
        raise ValueError("noise levels must be finite and nonnegative")
    return vals


def _space(text: str) -> str:
    return format_space(parse_space(text))


# (section, key) -> (field, converter, repeatable)
_KEYS = {
    ("experiment", "command"): ("command", _command, False),
    ("experiment", "n_max"): ("n_max", _positive(_int), False),
    ("experiment", "seeds"): ("seeds", _ints, False),
    ("experiment", "output"): ("output", str.strip, False),
    ("operator", "kind"): ("operator_kind", _kind, False),
    ("operator", "spectrum"): ("spectrum", lambda t: format_spectrum(parse_spectrum(t)), False),
    ("operator", "weights"): ("weights", _weights, False),
    ("operator", "pin"): ("pins", _pin, True),
    ("operator", "table"): ("table", str.strip, False),
    ("problem", "solution"): ("solution", _vector, False),
    ("problem", "rhs"): ("rhs", _vector, False),
    ("problem", "initial"): ("initial", _vector, False),
    ("scheme", "scheme"): ("schemes", _scheme, True),
    ("functions", "theta"): ("theta", _function, False),
    ("functions", "pi"): ("pi", _function, False),
    ("rates", "interval"): ("interval", _interval, False),
    ("rates", "points"): ("grid_points", _positive(_int), False),
    ("noise", "space"): ("noise_space", _space, False),
    ("noise", "deltas"): ("deltas", _nonneg_list, False),
    ("noise", "c"): ("noise_c", _positive(_float), False),
    ("oracle", "tolerance"): ("tolerance", _positive(_float), False),
}
_SECTIONS = sorted({s for s, _ in _KEYS})


def _convert(section: str, key: str, value: str, line: int, col: int):
    entry = _KEYS.get((section, key))
    if entry is None:
        raise ConfigError(f"unknown key {key!r} in section [{section}]", line, col)
    field, conv, repeatable = entry
    try:
        return field, conv(value), repeatable
    except (ValueError, SpectralError) as exc:
        raise ConfigError(f"bad value for {section}.{key}: {exc}", line, col) from None


def parse_config(text: str) -> ExperimentConfig:
    """Parse config text; errors carry the offending line and column."""
    values: dict = {}
    repeated: dict = {}
    seen = set()
    section = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        body = raw.split("#", 1)[0].rstrip()
        stripped = body.lstrip()
        if not stripped:
            continue
        indent = len(body) - len(stripped)
        if stripped.startswith("["):
            if not stripped.endswith("]"):
                raise ConfigError("unterminated section header", lineno, len(body) + 1)
            section = stripped[1:-1].strip().lower()
            if section not in _SECTIONS:
                raise ConfigError(f"unknown section [{section}]", lineno, indent + 2)
            continue
        if "=" not in stripped:
            raise ConfigError("expected 'key = value'", lineno, indent + 1)
        if section is None:
            raise ConfigError("key outside of any section", lineno, indent + 1)
        key, _, value = stripped.partition("=")
        key = key.strip().lower()
        value_col = body.index("=") + 2 + (len(value) - len(value.lstrip()))
        if (section, key) not in _KEYS:
            raise ConfigError(f"unknown key {key!r} in section [{section}]", lineno, indent + 1)
        if not value.strip():
            raise ConfigError(f"empty value for {key!r}", lineno, value_col)
        field, val, repeatable = _convert(section, key, value.strip(), lineno, value_col)
        if repeatable:
            repeated.setdefault(field, []).append(val)
        else:
            if (section, key) in seen:
                raise ConfigError(f"duplicate key {section}.{key}", lineno, indent + 1)
            seen.add((section, key))
            values[field] = val
    for field, vals in repeated.items():
        values[field] = tuple(vals)
    return ExperimentConfig(**values)


def serialize_config(cfg: ExperimentConfig) -> str:
    """Canonical text form of ``cfg``."""
    default = ExperimentConfig()
    by_section: dict = {}
    for (section, key), (field, _, repeatable) in _KEYS.items():
        v = getattr(cfg, field)
        if v is None or v == getattr(default, field):
            continue
        items = v if repeatable else (v,)
        for item in items:
            text = f"{_render(item[0])} weight {_render(item[1])}" if key == "pin" else _render(item)
            by_section.setdefault(section, []).append(f"{key} = {text}")
    out = []
    for section in ("experiment", "operator", "problem", "scheme", "functions",
                    "rates", "noise", "oracle"):
        if section in by_section:
            out.append(f"[{section}]")
            out.extend(by_section[section])
            out.append("")
    return "\n".join(out)


def _render(v) -> str:
    if isinstance(v, float):
        return "inf" if v == math.inf else repr(v)
    if isinstance(v, tuple):
        return " ".join(_render(x) for x in v)
    return str(v)


def apply_override(cfg: ExperimentConfig, assignment: str) -> ExperimentConfig:
    """Apply a ``section.key=value`` override (repeatable keys are replaced)."""
    lhs, eq, value = assignment.partition("=")
    if not eq or "." not in lhs:
        raise ConfigError(f"override must look like section.key=value, got {assignment!r}")
    section, _, key = lhs.strip().lower().partition(".")
    field, val, repeatable = _convert(section, key, value.strip(), 0, 0)
    return dataclasses.replace(cfg, **{field: (val,) if repeatable else val})


# --------------------------------------------------------------------------
# spectrum generators


def parse_spectrum(token: str) -> tuple:
    """``uniform(a, b, n)``, ``geometric-to-zero(M, ratio, n)``,
    ``geometric-to-one(M, ratio, n)`` or ``points(l1, l2, ...)``.

    Returns ``(name, args)``.
    """
    m = re.fullmatch(r"\s*([a-z-]+)\s*\((.*)\)\s*", token.lower())
    if not m or m.group(1) not in _GENERATORS:
        raise ValueError(f"unknown spectrum generator {token!r}; expected one of "
                         f"{', '.join(_GENERATORS)}")
    name = m.group(1)
    args = _floats(m.group(2))
    if name == "points":
        if not args:
            raise ValueError("points() needs at least one value")
        return name, args
    if len(args) != 3:
        raise ValueError(f"{name} takes three arguments")
    a, b, n = args
    if not float(n).is_integer() or n < 1:
        raise ValueError(f"{name}: point count must be a positive integer")
    if name != "uniform" and not (a > 0 and 0 < b < 1):
        raise ValueError(f"{name}: need M > 0 and 0 < ratio < 1")
    return name, (a, b, float(int(n)))


def format_spectrum(parsed: tuple) -> str:
    name, args = parsed
    if name == "points":
        return f"points({', '.join(_render(a) for a in args)})"
    a, b, n = args
    return f"{name}({_render(a)}, {_render(b)}, {int(n)})"


def spectrum_points(token: str) -> np.ndarray:
    """Eigenvalue sample produced by a generator token (unsorted order kept)."""
    name, args = parse_spectrum(token)
    if name == "points":
        return np.array(args, dtype=float)
    a, b, n = args
    n = int(n)
    if name == "uniform":
        return np.linspace(a, b, n)
    powers = a * b ** np.arange(n, dtype=float)
    return powers if name == "geometric-to-zero" else 1.0 - powers


def _measure_weights(lam: np.ndarray) -> np.ndarray:
    """Cell widths of the midpoint partition: a quadrature for ``d lambda``."""
    if lam.size == 1:
        return np.ones(1)
    mid = 0.5 * (lam[1:] + lam[:-1])
    edges = np.concatenate(([lam[0]], mid, [lam[-1]]))
    return np.diff(edges)


def _load_table(cfg: ExperimentConfig):
    with open(cfg.table, encoding="utf-8") as fh:
        A, columns = parse_table(fh.read())
    if A.kind.value != cfg.operator_kind:
        raise SpectralError(f"table {cfg.table!r} holds a {A.kind.value}-kind operator, "
                            f"config says {cfg.operator_kind}")
    return A, columns


def build_operator(cfg: ExperimentConfig) -> SpectralOperator:
    if cfg.table is not None:
        if cfg.pins:
            raise SpectralError("pins cannot be combined with a table")
        return _load_table(cfg)[0]
    lam = np.sort(spectrum_points(cfg.spectrum))
    if np.any(np.diff(lam) <= 0):
        raise SpectralError("spectrum generator produced repeated eigenvalues")
    w = np.ones_like(lam) if cfg.weights == "unit" else _measure_weights(lam)
    if cfg.pins:
        pl = np.array([p[0] for p in cfg.pins])
        clash = np.intersect1d(pl, lam)
        if clash.size:
            raise SpectralError(f"pinned eigenvalue {clash[0]!r} already in the spectrum")
        lam = np.concatenate((lam, pl))
        w = np.concatenate((w, [p[1] for p in cfg.pins]))
        order = np.argsort(lam, kind="stable")
        lam, w = lam[order], w[order]
    kind = OperatorKind.SECOND_KIND if cfg.operator_kind == "second" else OperatorKind.FIRST_KIND
    return SpectralOperator(lam, w, kind)


def build_problem(cfg: ExperimentConfig, operator: Optional[SpectralOperator] = None
                  ) -> ProblemInstance:
    """Tabulate the configured vectors on the spectrum.

    With only ``solution`` the data are generated from it; with only ``rhs``
    there is no exact solution; with both they must be consistent.
    """
    A = operator if operator is not None else build_operator(cfg)
    columns = _load_table(cfg)[1] if cfg.table is not None else {}

    def tab(token):
        m = re.fullmatch(r"table\((\w+)\)", token)
        if m is None:
            return A.tabulate(parse_function(token), allow_negative=True)
        if m.group(1) not in columns:
            raise SpectralError(f"no table column named {m.group(1)!r}")
        return columns[m.group(1)].coeffs

    x0 = tab(cfg.initial)
    if cfg.solution is None and cfg.rhs is None:
        raise SpectralError("config needs problem.solution or problem.rhs")
    if cfg.rhs is None:
        return ProblemInstance.from_solution(A, tab(cfg.solution), x0)
    xs = None if cfg.solution is None else SpectralVector(A, tab(cfg.solution))
    return ProblemInstance(A, SpectralVector(A, tab(cfg.rhs)), SpectralVector(A, x0), xs)


def default_scheme_token(cfg: ExperimentConfig) -> str:
    return Variant.SECOND_KIND_DIRECT.value if cfg.operator_kind == "second" else "explicit-power alpha=1.0 k=1"
