"""Radial discretization of the ball B_R in R^N, any N >= 3.

Cells [rho_i, rho_{i+1}] partition (0, R); a field is one value per cell,
sampled at the cell midpoint and extended by zero outside the ball.

* Dirichlet form: cell-centered finite volumes, flux through each face
  rho^(N-1) (u_{i+1} - u_i) / (r_{i+1} - r_i), zero flux at the origin,
  u = 0 at r = R.
* D_alpha form: exact Galerkin matrix of the piecewise-constant space,
  G_ij = int_{I_i} int_{I_j} k(r, s) r^(N-1) s^(N-1) dr ds with k the
  angularly reduced Riesz kernel. Coincident and touching cells are
  integrated in difference coordinates with geometric grading toward the
  r = s singularity.
"""
from __future__ import annotations

import functools
import math
from dataclasses import dataclass

import mpmath
import numpy as np
import scipy.sparse as sp
from scipy.integrate import quad
from scipy.interpolate import CubicSpline
from scipy.special import beta, hyp2f1, roots_jacobi, roots_legendre
from scipy.sparse.linalg import factorized

from .constants import (DomainError, riesz_constant, sphere_area,
                        talenti_normalization)
from .forms import AssemblyError, OperatorBundle

_W_MIN = 1e-40


def _angular_prefactor(N: int, alpha: float) -> float:
    return riesz_constant(N, alpha) * sphere_area(N - 1)


class ReducedKernel:
    """k(r, s) = C_{N,a} |S^{N-2}| int_0^pi |r e - s e(theta)|^(a-N) sin^(N-2)

    Evaluated through the closed form
    k = c M^(a-N) 2F1(nu, nu - m; m + 1; 1 - w),
    with M = max(r, s), w = 1 - (min/max)^2, nu = (N-a)/2, m = (N-2)/2.
    log 2F1 is tabulated against log w and interpolated by a cubic spline,
    which keeps the r = s singularity (w -> 0) well resolved.
    """

    def __init__(self, N: int, alpha: float):
        if not 0 < alpha < N:
            raise DomainError(f"alpha must lie in (0, N), got {alpha}")
        self.N = N
        self.alpha = float(alpha)
        nu = (N - alpha) / 2.0
        m = (N - 2) / 2.0
        self._abc = (nu, nu - m, m + 1.0)
        self.prefactor = _angular_prefactor(N, alpha) * beta(0.5, m + 0.5)
        self._spline = _log_hyp_table(N, float(alpha))

    def hyp(self, w):
        """2F1(nu, nu - m; m + 1; 1 - w) for w in (0, 1]."""
        w = np.clip(np.asarray(w, dtype=float), _W_MIN, 1.0)
        return np.exp(self._spline(np.log(w)))

    def __call__(self, r, s, diff=None):
        r = np.asarray(r, dtype=float)
        s = np.asarray(s, dtype=float)
        big = np.maximum(r, s)
        small = np.minimum(r, s)
        d = np.abs(r - s) if diff is None else np.abs(diff)
        w = d * (big + small) / (big * big)
        return self.prefactor * big ** (self.alpha - self.N) * self.hyp(w)


@functools.lru_cache(maxsize=64)
def _log_hyp_table(N: int, alpha: float) -> CubicSpline:
    nu = (N - alpha) / 2.0
    m = (N - 2) / 2.0
    a, b, c = nu, nu - m, m + 1.0
    x_far = np.linspace(math.log(_W_MIN), math.log(1e-3), 800)
    vals_far = []
    for x in x_far:
        with mpmath.workdps(25 + int(-x / 2.3)):
            vals_far.append(float(mpmath.log(
                mpmath.hyp2f1(a, b, c, 1 - mpmath.exp(mpmath.mpf(x))))))
    x_near = np.linspace(math.log(1e-3), 0.0, 2000)[1:]
    vals_near = np.log(hyp2f1(a, b, c, -np.expm1(x_near)))
    x = np.concatenate([x_far, x_near])
    y = np.concatenate([vals_far, vals_near])
    return CubicSpline(x, y)


@functools.lru_cache(maxsize=64)
def reduced_kernel_table(N: int, alpha: float) -> ReducedKernel:
    return ReducedKernel(N, alpha)


def reduced_kernel(N: int, alpha: float, r: float, s: float) -> float:
    """Angularly reduced Riesz kernel by adaptive quadrature in theta.

    Independent of the tabulated closed form used during assembly. At
    r = s the integrand behaves like theta^(alpha-2) and is integrated with
    that algebraic weight; for alpha <= 1 the value is +inf.
    """
    if not (r > 0 and s > 0):
        raise DomainError("reduced_kernel needs r, s > 0")
    c = _angular_prefactor(N, alpha)
    e = (alpha - N) / 2.0
    rs = r * s
    d2 = (r - s) ** 2

    def f(th):
        return (d2 + 4.0 * rs * math.sin(0.5 * th) ** 2) ** e * math.sin(th) ** (N - 2)

    if r == s:
        if alpha <= 1:
            return math.inf
        # (2 r^2 (1 - cos t))^e sin^(N-2) t = t^(alpha-2) * g(t), g smooth
        def g(th):
            if th == 0.0:
                return r ** (alpha - N)
            return f(th) / th ** (alpha - 2.0)
        split = 1.0
        head, err1 = quad(g, 0.0, split, weight="alg", wvar=(alpha - 2.0, 0.0),
                          epsabs=0.0, epsrel=1e-12, limit=200)
        tail, err2 = quad(f, split, math.pi, epsabs=0.0, epsrel=1e-12, limit=200)
        return c * (head + tail)

    scale = abs(r - s) / math.sqrt(rs)
    pts = []
    p = scale
    while p < math.pi:
        pts.append(p)
        p *= 4.0
    total = 0.0
    edges = [0.0] + pts + [math.pi]
    for lo, hi in zip(edges[:-1], edges[1:]):
        val, err = quad(f, lo, hi, epsabs=0.0, epsrel=1e-12, limit=400)
        if not math.isfinite(val):
            raise AssemblyError(f"angular quadrature failed near r={r}, s={s}")
        total += val
    return c * total


@dataclass(frozen=True, eq=False)
class RadialMesh:
    """Cells [edges[i], edges[i+1]] of (0, R); nodes are cell midpoints."""

    N: int
    edges: np.ndarray

    def __post_init__(self):
        e = np.asarray(self.edges, dtype=float)
        if e[0] != 0.0 or np.any(np.diff(e) <= 0):
            raise DomainError("radial edges must start at 0 and increase strictly")
        object.__setattr__(self, "edges", e)

    @property
    def R(self) -> float:
        return float(self.edges[-1])

    @property
    def size(self) -> int:
        return self.edges.shape[0] - 1

    @property
    def nodes(self) -> np.ndarray:
        return 0.5 * (self.edges[1:] + self.edges[:-1])

    @property
    def widths(self) -> np.ndarray:
        return np.diff(self.edges)

    @property
    def weights(self) -> np.ndarray:
        """Exact cell integrals of s^(N-1); they sum to R^N / N."""
        e = self.edges
        return (e[1:] ** self.N - e[:-1] ** self.N) / self.N

    @classmethod
    def uniform(cls, N: int, R: float, n: int) -> "RadialMesh":
        return cls(N, np.linspace(0.0, R, n + 1))

    @classmethod
    def graded(cls, N: int, R: float, n: int, inner: float) -> "RadialMesh":
        """Geometric grading with about half of the cells inside r < inner.

        Edges rho(x) = a (q^(2x) - 1), x in [0, 1], with q = R/inner - 1 so
        that rho(1/2) = inner. Falls back to uniform when R <= 2 inner.
        """
        if R <= 2.0 * inner:
            return cls.uniform(N, R, n)
        q = R / inner - 1.0
        a = inner / (q - 1.0)
        x = np.linspace(0.0, 1.0, n + 1)
        edges = a * (q ** (2.0 * x) - 1.0)
        edges[0], edges[-1] = 0.0, R
        return cls(N, edges)

    @classmethod
    def segmented(cls, N: int, breaks, n_per: int, first_width: float) -> "RadialMesh":
        """Uniform cells on [0, breaks[0]], geometric cells between breaks.

        Every break is a cell edge, so sub-balls B_b are unions of cells.
        """
        breaks = [float(b) for b in breaks]
        n0 = max(int(math.ceil(breaks[0] / first_width)), 2)
        edges = list(np.linspace(0.0, breaks[0], n0 + 1))
        for lo, hi in zip(breaks[:-1], breaks[1:]):
            edges.extend(np.geomspace(lo, hi, n_per + 1)[1:])
        return cls(N, np.array(edges))


def _gauss(n):
    x, w = roots_legendre(n)
    return 0.5 * (x + 1.0), 0.5 * w


def _graded_rule(alpha: float, ratio: float = 0.15, levels: int = 18, order: int = 8):
    """Quadrature on (0, 1] for integrands with a power singularity at 0."""
    gx, gw = _gauss(order)
    xs, ws = [], []
    hi = 1.0
    for _ in range(levels):
        lo = hi * ratio
        xs.append(lo + (hi - lo) * gx)
        ws.append((hi - lo) * gw)
        hi = lo
    expo = min(alpha - 1.0, 0.0)
    if expo < 0.0:
        jx, jw = roots_jacobi(order, 0.0, expo)
        # weight (1+x)^expo on [-1, 1] mapped to sigma^expo on [0, hi]
        s = 0.5 * hi * (jx + 1.0)
        xs.append(s)
        ws.append(jw * (0.5 * hi) ** (expo + 1.0) / s ** expo)
    else:
        xs.append(hi * gx)
        ws.append(hi * gw)
    return np.concatenate(xs), np.concatenate(ws)


def _galerkin_matrix(mesh: RadialMesh, kern: ReducedKernel, far_order: int = 3,
                     band: int = 4, band_order: int = 8, chunk: int = 256) -> np.ndarray:
    N = mesh.N
    e = mesh.edges
    lo, h = e[:-1], mesh.widths
    n = mesh.size
    G = np.empty((n, n))

    gx, gw = _gauss(far_order)
    P = (lo[:, None] + h[:, None] * gx[None, :]).ravel()
    W = (h[:, None] * gw[None, :]).ravel() * P ** (N - 1)
    q = far_order
    for start in range(0, n, chunk):
        stop = min(start + chunk, n)
        rows = slice(start * q, stop * q)
        K = kern(P[rows, None], P[None, :])
        K *= W[rows, None]
        K *= W[None, :]
        G[start:stop] = K.reshape(stop - start, q, n, q).sum(axis=(1, 3))

    # nearby but separated cells: higher tensor Gauss order
    bx, bw = _gauss(band_order)
    for off in range(2, band + 1):
        i = np.arange(n - off)
        j = i + off
        r = lo[i, None, None] + h[i, None, None] * bx[None, :, None]
        s = lo[j, None, None] + h[j, None, None] * bx[None, None, :]
        wr = h[i, None, None] * bw[None, :, None] * r ** (N - 1)
        ws = h[j, None, None] * bw[None, None, :] * s ** (N - 1)
        vals = (kern(r, s) * wr * ws).sum(axis=(1, 2))
        G[i, j] = vals
        G[j, i] = vals

    sx, sw = _graded_rule(kern.alpha)
    tx, tw = _gauss(8)

    # coincident cells: 2 int_0^h dsig int_{a+sig/2}^{b-sig/2} f(tau+sig/2, tau-sig/2)
    sig = h[:, None, None] * sx[None, :, None]
    length = h[:, None, None] - sig
    tau = lo[:, None, None] + 0.5 * sig + length * tx[None, None, :]
    r = tau + 0.5 * sig
    s = tau - 0.5 * sig
    wts = 2.0 * (h[:, None, None] * sw[None, :, None]) * (length * tw[None, None, :])
    vals = (kern(r, s, diff=sig) * (r * s) ** (N - 1) * wts).sum(axis=(1, 2))
    G[np.arange(n), np.arange(n)] = vals

    # touching cells I = [a, b], J = [b, c]; sig = s - r in (0, h1 + h2)
    if n > 1:
        a, b, c = e[:-2], e[1:-1], e[2:]
        h1, h2 = b - a, c - b
        m1, m2 = np.minimum(h1, h2), np.maximum(h1, h2)
        total = np.zeros(n - 1)
        gx8, gw8 = _gauss(8)
        pieces = [(np.zeros_like(m1), m1, sx, sw), (m1, m2, gx8, gw8), (m2, h1 + h2, gx8, gw8)]
        for p_lo, p_hi, xr, wr_ in pieces:
            span = p_hi - p_lo
            sg = p_lo[:, None, None] + span[:, None, None] * xr[None, :, None]
            r_lo = np.maximum(a[:, None, None], b[:, None, None] - sg)
            r_hi = np.minimum(b[:, None, None], c[:, None, None] - sg)
            ln = np.maximum(r_hi - r_lo, 0.0)
            rr = r_lo + ln * tx[None, None, :]
            ss = rr + sg
            wts = (span[:, None, None] * wr_[None, :, None]) * (ln * tw[None, None, :])
            kv = kern(rr, ss, diff=sg)
            total += np.where(wts > 0, kv * (rr * ss) ** (N - 1) * wts, 0.0).sum(axis=(1, 2))
        idx = np.arange(n - 1)
        G[idx, idx + 1] = total
        G[idx + 1, idx] = total

    if not np.all(np.isfinite(G)):
        raise AssemblyError("non-finite entries in the D_alpha Galerkin matrix")
    return 0.5 * (G + G.T)


def _difference_form(mesh: RadialMesh):
    """Face differences D and face coefficients c with A = D^T diag(c) D.

    Rows of D are the interior faces (u_{i+1} - u_i) followed by the
    Dirichlet face at R (0 - u_{n-1}).
    """
    N = mesh.N
    r = mesh.nodes
    e = mesh.edges
    n = mesh.size
    face = e[1:-1] ** (N - 1) / np.diff(r)
    bnd = e[-1] ** (N - 1) / (e[-1] - r[-1])
    rows = np.concatenate([np.arange(n - 1), np.arange(n - 1), [n - 1]])
    cols = np.concatenate([np.arange(1, n), np.arange(n - 1), [n - 1]])
    vals = np.concatenate([np.ones(n - 1), -np.ones(n - 1), [-1.0]])
    D = sp.csr_matrix((vals, (rows, cols)), shape=(n, n))
    return D, np.append(face, bnd)


def _stiffness_matrix(mesh: RadialMesh) -> sp.csr_matrix:
    D, c = _difference_form(mesh)
    return (D.T @ sp.diags(c) @ D).tocsc()


class RadialBundle(OperatorBundle):
    kind = "radial"

    def __init__(self, mesh: RadialMesh, alpha: float, kernel: ReducedKernel | None = None):
        self.mesh = mesh
        self.N = mesh.N
        self.alpha = float(alpha)
        self.kernel = kernel or reduced_kernel_table(mesh.N, float(alpha))
        self.area = sphere_area(mesh.N)
        self.weights = self.area * mesh.weights
        self.difference_op, faces = _difference_form(mesh)
        self.face_coefficients = self.area * faces
        self.stiffness_matrix = (self.area * _stiffness_matrix(mesh)).tocsc()
        self.gram_matrix = self.area * _galerkin_matrix(mesh, self.kernel)
        self._solve = factorized(self.stiffness_matrix)

    @property
    def nodes(self) -> np.ndarray:
        return self.mesh.nodes

    def stiffness(self, u):
        return self.stiffness_matrix @ u

    def gram(self, u):
        return self.gram_matrix @ u

    def solve_stiffness(self, f):
        return self._solve(np.asarray(f, dtype=float))

    def boundary_derivative(self, u) -> float:
        """u'(R) from the quadratic through (R, 0) and the last two nodes."""
        R = self.mesh.R
        r1, r2 = self.nodes[-1], self.nodes[-2]
        u1, u2 = u[-1], u[-2]
        d1 = (R - r2) / ((r1 - R) * (r1 - r2))
        d2 = (R - r1) / ((r2 - R) * (r2 - r1))
        return float(u1 * d1 + u2 * d2)

    def boundary_flux_moment(self, u) -> float:
        R = self.mesh.R
        return self.area * R ** self.N * self.boundary_derivative(u) ** 2


def assemble_radial_bundle(mesh: RadialMesh, alpha: float) -> RadialBundle:
    if not 0 < alpha < mesh.N:
        raise DomainError(f"alpha must lie in (0, N), got {alpha}")
    return RadialBundle(mesh, alpha)


def talenti(r, N: int, mu: float = 1.0):
    """U_{0,mu}(r) with the PDE normalization -Delta U = U^(2*-1)."""
    r = np.asarray(r, dtype=float)
    return (talenti_normalization(N) * mu ** ((N - 2) / 2.0)
            * (1.0 + (mu * r) ** 2) ** (-(N - 2) / 2.0))


def talenti_dr(r, N: int, mu: float = 1.0):
    r = np.asarray(r, dtype=float)
    return (-(N - 2) * talenti_normalization(N) * mu ** ((N + 2) / 2.0) * r
            * (1.0 + (mu * r) ** 2) ** (-N / 2.0))


def talenti_profile(mesh: RadialMesh, mu: float) -> np.ndarray:
    if not mu > 0:
        raise DomainError("mu must be positive")
    return talenti(mesh.nodes, mesh.N, mu)
