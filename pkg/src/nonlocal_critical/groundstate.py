"""Constrained minimization of J(u) = |grad u|^2 - lambda D_alpha(u).

m = inf { J(u) : int |u|^{2*} = 1 }, and the positive-cone variant
m+ = inf { J(u) : int (u_+)^{2*} = 1 }. On the constraint the Euler-Lagrange
equation reads -Delta u - lambda I_alpha * u = m |u|^{2*-2} u, so the
multiplier is the energy itself.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .constants import ProblemConfig, sobolev_constant
from .forms import OperatorBundle

log = logging.getLogger(__name__)

EPS = float(np.finfo(float).eps)


class MinimizationError(RuntimeError):
    pass


@dataclass
class MinimizeOptions:
    tol: float = 1e-8
    maxiter: int = 20000
    step0: float = 0.5
    armijo: float = 1e-4
    concentration_cells: float = 10.0
    concentration_fraction: float = 0.1
    check_every: int = 1


@dataclass
class GroundStateResult:
    u: np.ndarray
    m_value: float
    iterations: int
    grad_norm: float
    ipr: float
    max_abs: float
    max_growth: float
    mass_radius: float
    concentrated: bool
    converged: bool
    positive: bool = False
    history: list[float] = field(default_factory=list, repr=False)

    def summary(self) -> dict:
        return {
            "m_value": self.m_value,
            "iterations": self.iterations,
            "grad_norm": self.grad_norm,
            "ipr": self.ipr,
            "max_abs": self.max_abs,
            "max_growth": self.max_growth,
            "mass_radius": self.mass_radius,
            "concentrated": self.concentrated,
            "converged": self.converged,
            "positive_variant": self.positive,
        }


def energy_J(bundle: OperatorBundle, lam: float, u) -> float:
    return bundle.dirichlet_energy(u) - lam * bundle.dalpha_form(u)


def energy_E(bundle: OperatorBundle, lam: float, u) -> float:
    p = bundle.p_crit
    return (0.5 * bundle.dirichlet_energy(u) - 0.5 * lam * bundle.dalpha_form(u)
            - bundle.integral(np.abs(u) ** p) / p)


def energy_E_gradient(bundle: OperatorBundle, lam: float, u) -> np.ndarray:
    """Dof-space gradient of E (a dual vector)."""
    p = bundle.p_crit
    return (bundle.stiffness(u) - lam * bundle.gram(u)
            - bundle.weights * np.abs(u) ** (p - 2) * u)


def _coords_norm(bundle) -> np.ndarray:
    if bundle.kind == "radial":
        return bundle.nodes
    return np.linalg.norm(bundle.coords(), axis=1)


def min_cell_width(bundle) -> float:
    if bundle.kind == "radial":
        return float(bundle.mesh.widths[0])
    return float(bundle.h)


def inradius(bundle) -> float:
    if bundle.kind == "radial":
        return float(bundle.mesh.R)
    dom = bundle.grid.domain
    return float(dom.radius if dom.shape == "ball" else min(dom.halfwidths))


def concentration_radius(bundle, opts: MinimizeOptions) -> float:
    """Mass radius below which a field counts as collapsed onto the mesh scale."""
    return min(opts.concentration_cells * min_cell_width(bundle),
               opts.concentration_fraction * inradius(bundle))


def concentration(bundle, u) -> tuple[float, float, float]:
    """(inverse participation ratio, max |u|, radius holding half of |u|^{2*})."""
    p = bundle.p_crit
    w = bundle.weights
    l2 = np.dot(w, u * u)
    ipr = float(np.dot(w, u ** 4) / l2 ** 2) if l2 > 0 else math.inf
    if bundle.kind == "radial":
        dist = bundle.nodes
    else:
        x = bundle.coords()
        dist = np.linalg.norm(x - x[np.argmax(np.abs(u))], axis=1)
    order = np.argsort(dist, kind="stable")
    mass = np.cumsum((w * np.abs(u) ** p)[order])
    k = int(np.searchsorted(mass, 0.5 * mass[-1]))
    return ipr, float(np.max(np.abs(u))), float(dist[order][min(k, len(order) - 1)])


def default_init(bundle, mu: float | None = None, delta: float | None = None) -> np.ndarray:
    """Cutoff Talenti profile centered at the origin."""
    from .instanton import cutoff
    from .radial import talenti
    rad = _coords_norm(bundle)
    R = float(rad.max())
    delta = 0.25 * R if delta is None else delta
    mu = 2.0 / R if mu is None else mu
    return cutoff(delta, rad) * talenti(rad, bundle.N, mu)


def _constraint(bundle, u, positive) -> float:
    v = np.maximum(u, 0.0) if positive else np.abs(u)
    return float(np.dot(bundle.weights, v ** bundle.p_crit))


def _normalize(bundle, u, positive):
    c = _constraint(bundle, u, positive)
    if not c > 1e-300 or not math.isfinite(c):
        what = "positive part" if positive else "critical norm"
        raise MinimizationError(f"constraint projection failed: {what} collapsed to {c:.3e}")
    return u / c ** (1.0 / bundle.p_crit)


def _residual(bundle, lam, u, J, positive):
    p = bundle.p_crit
    nl = np.maximum(u, 0.0) ** (p - 1) if positive else np.abs(u) ** (p - 2) * u
    return bundle.stiffness(u) - lam * bundle.gram(u) - J * bundle.weights * nl


def _minimize(bundle, lam, init, opts, positive):
    opts = opts or MinimizeOptions()
    u = _normalize(bundle, np.asarray(init, dtype=float).copy(), positive)
    J = energy_J(bundle, lam, u)
    r = _residual(bundle, lam, u, J, positive)
    d = bundle.solve_stiffness(r)
    tau = opts.step0
    history = [J]
    collapse = concentration_radius(bundle, opts)
    max0 = float(np.max(np.abs(u)))
    converged = concentrated = False
    gnorm = math.inf
    it = 0
    for it in range(1, opts.maxiter + 1):
        rd = float(np.dot(r, d))
        gnorm = math.sqrt(max(rd, 0.0) / bundle.dirichlet_energy(u))
        if gnorm <= opts.tol:
            converged = True
            it -= 1
            break
        # energies agree only to round-off; below that level the Armijo
        # test is noise, so allow a slack of a few ulps of the energy terms
        slack = 64 * EPS * (bundle.dirichlet_energy(u) + abs(lam) * bundle.dalpha_form(u))
        while True:
            u_new = _normalize(bundle, u - tau * d, positive)
            J_new = energy_J(bundle, lam, u_new)
            if not math.isfinite(J_new):
                raise MinimizationError("non-finite energy during line search")
            if J_new <= J - opts.armijo * 2.0 * tau * rd + slack or tau < 1e-14:
                break
            tau *= 0.5
        if J_new > J + slack:
            # no decrease at any step length: stalled at round-off level
            break
        r_new = _residual(bundle, lam, u_new, J_new, positive)
        d_new = bundle.solve_stiffness(r_new)
        s = u_new - u
        y = r_new - r
        sy = float(np.dot(s, y))
        ss = bundle.dirichlet_energy(s)
        tau = ss / sy if sy > 0 else opts.step0
        tau = min(max(tau, 1e-6), 1e3)
        u, J, r, d = u_new, J_new, r_new, d_new
        history.append(J)
        if it % opts.check_every == 0:
            _, mx, rad = concentration(bundle, u)
            if rad < collapse and mx > max0:
                concentrated = True
                break
    ipr, mx, rad = concentration(bundle, u)
    if rad < collapse and mx > max0:
        concentrated = True
    if concentrated:
        converged = False
    r = _residual(bundle, lam, u, J, positive)
    gnorm = bundle.dual_norm(r) / math.sqrt(bundle.dirichlet_energy(u))
    log.debug("minimize lam=%g: J=%.10g after %d its, grad %.2e, conc=%s",
              lam, J, it, gnorm, concentrated)
    return GroundStateResult(u=u, m_value=J, iterations=it, grad_norm=gnorm, ipr=ipr,
                             max_abs=mx, max_growth=mx / max0, mass_radius=rad, concentrated=concentrated,
                             converged=converged, positive=positive, history=history)


def minimize_m(bundle: OperatorBundle, lam: float, init=None,
               opts: MinimizeOptions | None = None) -> GroundStateResult:
    init = default_init(bundle) if init is None else init
    if not np.any(init):
        raise ValueError("initial field must be nonzero")
    return _minimize(bundle, lam, init, opts, positive=False)


def minimize_m_plus(bundle: OperatorBundle, lam: float, init=None,
                    opts: MinimizeOptions | None = None) -> GroundStateResult:
    init = default_init(bundle) if init is None else init
    if not np.any(np.asarray(init) > 0):
        raise ValueError("initial field needs a nonzero positive part")
    return _minimize(bundle, lam, init, opts, positive=True)


@dataclass
class ScanRow:
    lam: float
    m_value: float
    converged: bool
    grad_norm: float
    ipr: float
    concentrated: bool
    pohozaev_residual: float
    attained: bool

    def as_dict(self) -> dict:
        return {
            "lambda": self.lam, "m_value": self.m_value, "converged": self.converged,
            "grad_norm": self.grad_norm, "ipr": self.ipr, "concentrated": self.concentrated,
            "pohozaev_residual": self.pohozaev_residual, "attained": self.attained,
        }


SCAN_COLUMNS = ["lambda", "m_value", "converged", "grad_norm", "ipr",
                "pohozaev_residual", "concentrated", "attained"]


def lambda_scan(bundle: OperatorBundle, config: ProblemConfig, lambdas,
                opts: MinimizeOptions | None = None, init=None,
                pohozaev_tol: float = 0.05) -> list[ScanRow]:
    """One minimization per lambda from a shared initial field.

    A row counts as ``attained`` when the minimizer converged without
    concentrating, lies strictly below S and satisfies the Pohozaev
    identity to ``pohozaev_tol``.
    """
    from .verifier import pohozaev_residual
    lambdas = list(lambdas)
    if not lambdas:
        raise ValueError("lambda list is empty")
    S = sobolev_constant(bundle.N)
    init = default_init(bundle) if init is None else init
    rows = []
    for lam in lambdas:
        res = minimize_m(bundle, lam, init, opts)
        rep = pohozaev_residual(bundle, config.with_lambda(lam), res.u, multiplier=res.m_value)
        attained = (res.converged and not res.concentrated and res.m_value < S
                    and rep.residual <= pohozaev_tol)
        rows.append(ScanRow(float(lam), res.m_value, res.converged, res.grad_norm, res.ipr,
                            res.concentrated, rep.residual, attained))
    return rows
