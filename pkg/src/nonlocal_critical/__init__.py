"""Numerics for -Delta u = lambda I_alpha *_Omega u + |u|^{2*-2} u on bounded domains."""
from .constants import (
    DomainError,
    DomainSpec,
    ProblemConfig,
    Regime,
    critical_exponent,
    hls_sharp_constant,
    regime,
    riesz_constant,
    sobolev_constant,
)
from .forms import AssemblyError, OperatorBundle, SolverError

__version__ = "0.1.0"

__all__ = [
    "AssemblyError",
    "DomainError",
    "DomainSpec",
    "OperatorBundle",
    "ProblemConfig",
    "Regime",
    "SolverError",
    "__version__",
    "critical_exponent",
    "hls_sharp_constant",
    "regime",
    "riesz_constant",
    "sobolev_constant",
]
