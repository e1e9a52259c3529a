"""Residual checks for solutions of -Delta u = lambda I_alpha * u + m |u|^{2*-2} u.

All reports are plain dataclasses with a ``to_json`` method that embeds the
tolerances used, so a stored report can be re-checked without the code.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .constants import ProblemConfig, hls_sharp_constant, riesz_constant, sobolev_constant
from .forms import OperatorBundle


class SpectrumTooShortError(ValueError):
    pass


@dataclass
class PohozaevReport:
    boundary_term: float
    grad_term: float
    nonlocal_term: float
    critical_term: float
    residual: float
    multiplier: float = 1.0

    @property
    def signed_sum(self) -> float:
        return self.boundary_term + self.grad_term - self.nonlocal_term - self.critical_term

    def to_json(self) -> dict:
        out = asdict(self)
        out["signed_sum"] = self.signed_sum
        return out


def pohozaev_residual(bundle: OperatorBundle, config: ProblemConfig, u,
                      multiplier: float = 1.0) -> PohozaevReport:
    """Terms of the Pohozaev identity for the equation with coefficient ``multiplier``.

    0 = int |du/dn|^2 x.n + (N-2) |grad u|^2 - lambda (N+alpha) D_alpha(u)
        - (N-2) multiplier int |u|^{2*}

    The residual is |sum| divided by the largest term in absolute value.
    Passing ``multiplier=0`` checks the identity of the linear eigenproblem.
    """
    u = np.asarray(u, dtype=float)
    N, lam = config.N, config.lam
    bnd = bundle.boundary_flux_moment(u)
    grad = (N - 2) * bundle.dirichlet_energy(u)
    nonloc = lam * (N + config.alpha) * bundle.dalpha_form(u)
    crit = (N - 2) * multiplier * bundle.integral(np.abs(u) ** config.p_crit)
    scale = max(abs(bnd), abs(grad), abs(nonloc), abs(crit))
    total = bnd + grad - nonloc - crit
    res = abs(total) / scale if scale > 0 else 0.0
    return PohozaevReport(bnd, grad, nonloc, crit, res, multiplier)


def pde_residual(bundle: OperatorBundle, config: ProblemConfig, u, multiplier: float) -> float:
    """Relative dual norm of -Delta u - lambda I_alpha*u - multiplier |u|^{2*-2} u.

    The residual vector r is measured as sqrt(r . A^-1 r) / sqrt(u . A u),
    the same quantity the minimizer drives below its tolerance.
    """
    u = np.asarray(u, dtype=float)
    energy = bundle.dirichlet_energy(u)
    if not energy > 0:
        raise ValueError("pde_residual needs a nonzero field")
    p = config.p_crit
    r = (bundle.stiffness(u) - config.lam * bundle.gram(u)
         - multiplier * bundle.weights * np.abs(u) ** (p - 2) * u)
    return bundle.dual_norm(r) / math.sqrt(energy)


@dataclass
class MaximumPrincipleVerdict:
    applicable: bool
    lam: float
    lambda1: float
    s_min: float = math.nan
    s_max: float = math.nan
    u_min: float = math.nan
    u_max: float = math.nan
    tol: float = 1e-8
    hypothesis_holds: bool = False
    sign_ok: bool = False
    reason: str = ""

    @property
    def passed(self) -> bool:
        """Hypothesis verified and conclusion observed."""
        return self.applicable and self.hypothesis_holds and self.sign_ok

    @property
    def consistent(self) -> bool:
        """No counterexample to the implication was seen."""
        return (not self.applicable) or (not self.hypothesis_holds) or self.sign_ok

    def to_json(self) -> dict:
        out = asdict(self)
        out.update(passed=self.passed, consistent=self.consistent)
        return out


def maximum_principle_check(bundle: OperatorBundle, config: ProblemConfig, u,
                            lambda1: float | None = None, tol: float = 1e-8,
                            s_tol: float | None = None) -> MaximumPrincipleVerdict:
    """Check that S(u) = -Delta u - lambda I_alpha * u >= 0 forces u >= 0.

    Only meaningful for 0 < lambda < lambda_1; outside that range the verdict
    is marked inapplicable. Both minima are taken relative to the respective
    maxima: S(u) >= -s_tol max|S(u)| and u >= -tol max|u|.
    """
    if lambda1 is None:
        from .spectral import solve_spectrum
        lambda1 = float(solve_spectrum(bundle, 1).eigenvalues[0])
    lam = config.lam
    s_tol = tol if s_tol is None else s_tol
    if not 0 < lam < lambda1:
        return MaximumPrincipleVerdict(False, lam, lambda1, tol=tol,
                                       reason=f"needs 0 < lambda < lambda_1 = {lambda1:.6g}")
    u = np.asarray(u, dtype=float)
    s = bundle.laplacian(u) - lam * bundle.riesz_apply(u)
    s_scale = float(np.max(np.abs(s))) or 1.0
    u_scale = float(np.max(np.abs(u))) or 1.0
    hyp = bool(s.min() >= -s_tol * s_scale)
    sign = bool(u.min() >= -tol * u_scale)
    return MaximumPrincipleVerdict(True, lam, lambda1, float(s.min()), float(s.max()),
                                   float(u.min()), float(u.max()), tol, hyp, sign)


def multiplicity_upsilon(config: ProblemConfig) -> float:
    """Width of the eigenvalue window, S |Omega|^{-(2+alpha)/N} / (C_HLS C_{N,alpha})."""
    N, a = config.N, config.alpha
    return (sobolev_constant(N) * config.volume ** (-(2.0 + a) / N)
            / (hls_sharp_constant(N, a) * riesz_constant(N, a)))


@dataclass
class MultiplicityReport:
    upsilon: float
    window: tuple[float, float]
    count_m: int
    eigenvalues_in_window: list[float] = field(default_factory=list)

    def to_json(self) -> dict:
        return {"upsilon": self.upsilon, "window": list(self.window),
                "count_m": self.count_m, "eigenvalues_in_window": self.eigenvalues_in_window}


def multiplicity_window(config: ProblemConfig, spec) -> MultiplicityReport:
    """Count computed eigenvalues strictly inside (lambda, lambda + upsilon)."""
    ups = multiplicity_upsilon(config)
    lo, hi = config.lam, config.lam + ups
    lams = np.asarray(getattr(spec, "eigenvalues", spec), dtype=float)
    if lams.size == 0 or lams.max() < hi:
        top = lams.max() if lams.size else float("nan")
        raise SpectrumTooShortError(
            f"largest computed eigenvalue {top:.6g} is below the window end {hi:.6g}")
    inside = [float(x) for x in lams if lo < x < hi]
    return MultiplicityReport(ups, (lo, hi), len(inside), inside)
