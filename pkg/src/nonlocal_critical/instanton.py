"""Cutoff Talenti test functions and the energy comparison m < S.

v_mu = xi U_{0,mu} / |xi U_{0,mu}|_{2*} is admissible for the constrained
infimum, so a quotient J(v_mu) below S certifies m < S. The three energy
quantities are integrated on a radial mesh graded towards the origin.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .constants import DomainError, ProblemConfig, critical_exponent, regime, sobolev_constant
from .radial import RadialBundle, RadialMesh, assemble_radial_bundle, talenti, talenti_dr


class UnderResolvedError(ValueError):
    pass


def cutoff(delta: float, x_norm):
    """Quintic smoothstep: 1 for |x| <= delta, 0 for |x| >= 2 delta, C^2 in between."""
    if not delta > 0:
        raise DomainError("cutoff radius must be positive")
    t = np.clip((np.asarray(x_norm, dtype=float) - delta) / delta, 0.0, 1.0)
    out = 1.0 - t ** 3 * (10.0 - 15.0 * t + 6.0 * t * t)
    return float(out) if out.ndim == 0 else out


def cutoff_dr(delta: float, x_norm):
    t = np.asarray(x_norm, dtype=float)
    t = (t - delta) / delta
    inside = (t > 0) & (t < 1)
    t = np.where(inside, t, 0.0)
    return np.where(inside, -30.0 * t * t * (1.0 - t) ** 2 / delta, 0.0)


@dataclass
class InstantonProbe:
    mu: float
    delta: float
    grad_energy: float
    crit_norm: float
    dalpha: float
    lam: float = math.nan
    quotient: float = math.nan
    T_value: float = math.nan
    below_S: bool = False

    def with_lambda(self, N: int, lam: float) -> "InstantonProbe":
        """Fill in J(v_mu) and T = J(v_mu) - S for the given lambda."""
        p = float(critical_exponent(N))
        q = (self.grad_energy - lam * self.dalpha) / self.crit_norm ** (2.0 / p)
        S = sobolev_constant(N)
        return InstantonProbe(self.mu, self.delta, self.grad_energy, self.crit_norm,
                              self.dalpha, lam, q, q - S, bool(q < S))

    def as_dict(self) -> dict:
        return {"mu": self.mu, "delta": self.delta, "grad_energy": self.grad_energy,
                "crit_norm": self.crit_norm, "dalpha": self.dalpha, "lambda": self.lam,
                "quotient": self.quotient, "T_value": self.T_value, "below_S": self.below_S}


PROBE_COLUMNS = ["mu", "delta", "grad_energy", "crit_norm", "dalpha", "lambda",
                 "quotient", "T_value", "below_S"]


def instanton_mesh(N: int, mu: float, delta: float, n: int = 400) -> RadialMesh:
    """Mesh of the cutoff support B_{2 delta}, half of the cells inside r < 10/mu."""
    return RadialMesh.graded(N, 2.0 * delta, n, 10.0 / mu)


def _cell_gauss(mesh: RadialMesh, order: int):
    x, w = np.polynomial.legendre.leggauss(order)
    a, b = mesh.edges[:-1, None], mesh.edges[1:, None]
    pts = 0.5 * (a + b) + 0.5 * (b - a) * x
    wts = 0.5 * (b - a) * w
    return pts, wts


def energy_terms(mesh: RadialMesh, alpha: float, mu: float, delta: float,
                 bundle: RadialBundle | None = None, min_nodes: int = 4,
                 order: int = 8) -> InstantonProbe:
    """grad_energy, crit_norm and dalpha of xi U_{0,mu} (lambda-free part of the probe).

    The two local integrals use Gauss-Legendre on every cell with the exact
    profile. D_alpha uses the Galerkin matrix of ``bundle`` applied to the
    cell averages of the profile.
    """
    N = mesh.N
    if not mu > 0:
        raise DomainError("mu must be positive")
    if 2.0 * delta > mesh.R * (1 + 1e-12):
        raise DomainError(f"cutoff support 2*delta = {2 * delta:g} exceeds the mesh radius {mesh.R:g}")
    resolved = int(np.count_nonzero(mesh.nodes < 1.0 / mu))
    if resolved < min_nodes:
        raise UnderResolvedError(f"only {resolved} nodes inside r < 1/mu = {1 / mu:.3g}")
    if bundle is None:
        bundle = assemble_radial_bundle(mesh, alpha)
    elif bundle.mesh is not mesh:
        raise ValueError("bundle was assembled on a different mesh")
    from .constants import sphere_area
    area = sphere_area(N)
    p = float(critical_exponent(N))
    r, w = _cell_gauss(mesh, order)
    jac = w * r ** (N - 1)
    xi = cutoff(delta, r)
    U = talenti(r, N, mu)
    v = xi * U
    dv = cutoff_dr(delta, r) * U + xi * talenti_dr(r, N, mu)
    grad = area * float(np.sum(jac * dv * dv))
    crit = area * float(np.sum(jac * np.abs(v) ** p))
    avg = np.sum(jac * v, axis=1) / mesh.weights
    dalpha = bundle.dalpha_form(avg)
    return InstantonProbe(float(mu), float(delta), grad, crit, dalpha)


def default_delta(config: ProblemConfig) -> float:
    dom = config.domain
    inradius = dom.radius if dom.shape == "ball" else min(dom.halfwidths)
    return 0.25 * inradius


@dataclass
class ProbeTable:
    rows: list[InstantonProbe]
    regime: str
    any_below_S: bool
    first_mu_below_S: float | None
    min_quotient: float = math.nan

    def to_json(self) -> dict:
        return {"regime": self.regime, "any_below_S": self.any_below_S,
                "first_mu_below_S": self.first_mu_below_S, "min_quotient": self.min_quotient,
                "rows": [r.as_dict() for r in self.rows]}


def t_sign_probe(config: ProblemConfig, mu_values, delta: float | None = None,
                 nodes: int = 400) -> ProbeTable:
    """Quotient J(v_mu) and the sign of T = J(v_mu) - S for every mu.

    The test function vanishes outside B_{2 delta}, so each mu is integrated
    on its own graded mesh of that ball only; the domain enters through the
    default delta (a quarter of the inradius).
    """
    delta = default_delta(config) if delta is None else float(delta)
    mus = [float(m) for m in mu_values]
    if not mus or min(mus) <= 0:
        raise DomainError("mu values must be positive and nonempty")
    rows = []
    for mu in mus:
        mesh = instanton_mesh(config.N, mu, delta, nodes)
        probe = energy_terms(mesh, config.alpha, mu, delta)
        rows.append(probe.with_lambda(config.N, config.lam))
    below = [r.mu for r in rows if r.below_S]
    return ProbeTable(rows, regime(config.N, config.alpha).name, bool(below),
                      below[0] if below else None, min(r.quotient for r in rows))


@dataclass
class DRCurve:
    N: int
    alpha: float
    R: list[float]
    D: list[float]
    tail_exponent: float
    increments: list[float] = field(default_factory=list)
    increment_ratios: list[float] = field(default_factory=list)

    @property
    def converging(self) -> bool:
        """Increments shrink from one R to the next."""
        return bool(self.increment_ratios) and all(q > 1.0 for q in self.increment_ratios)

    def rows(self) -> list[dict]:
        out = []
        for k, (R, D) in enumerate(zip(self.R, self.D)):
            out.append({"R": R, "D_R": D,
                        "increment": self.increments[k - 1] if k else math.nan,
                        "increment_ratio": self.increment_ratios[k - 2] if k > 1 else math.nan,
                        "tail_exponent": self.tail_exponent})
        return out


def d_r_curve(N: int, alpha: float, R_values, n_per: int = 64,
              first_width: float = 0.02) -> DRCurve:
    """D_R = C_{N,alpha} double integral of U_{0,1} U_{0,1} |x-y|^{alpha-N} over B_R x B_R.

    One Galerkin matrix on a mesh whose edges include every R. D_R is the
    leading block sum. The tail exponent is the least-squares slope of
    log D_R against log R over the largest decade of R.
    """
    R_values = [float(R) for R in R_values]
    if not R_values or R_values[0] <= 0 or np.any(np.diff(R_values) <= 0):
        raise DomainError("R values must be positive and strictly increasing")
    mesh = RadialMesh.segmented(N, R_values, n_per, first_width)
    bundle = assemble_radial_bundle(mesh, alpha)
    r, w = _cell_gauss(mesh, 6)
    avg = np.sum(w * r ** (N - 1) * talenti(r, N, 1.0), axis=1) / mesh.weights
    G = bundle.gram_matrix
    D = []
    for R in R_values:
        k = int(np.searchsorted(mesh.edges, R * (1 - 1e-12)))
        D.append(float(avg[:k] @ G[:k, :k] @ avg[:k]))
    Rs = np.array(R_values)
    tail = Rs >= Rs[-1] / 10.0
    if tail.sum() >= 2:
        slope = float(np.polyfit(np.log(Rs[tail]), np.log(np.array(D)[tail]), 1)[0])
    else:
        slope = math.nan
    inc = list(np.diff(D))
    ratios = [inc[k - 1] / inc[k] for k in range(1, len(inc))]
    return DRCurve(N, float(alpha), R_values, D, slope, [float(x) for x in inc],
                   [float(x) for x in ratios])
