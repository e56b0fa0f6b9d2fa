"""Iterative methods for ill-posed linear equations with self-adjoint operators.

Operators are modelled by a finite weighted sample of their spectrum, so every
iteration ``x_{n+1} = phi(A) x_n + psi(A) y`` acts coefficient-wise.
"""

from .spectral import *  # noqa: F401,F403
from .schemes import *  # noqa: F401,F403
from .engine import *  # noqa: F401,F403
from .oracle import *  # noqa: F401,F403
from .config import ExperimentConfig, ConfigError, parse_config, serialize_config  # noqa: F401

__version__ = "0.1.0"
