"""Uniform Cartesian discretization of a ball or box in R^3.

Dofs are the grid nodes strictly inside the domain (``mask``); every
other node carries 0, which is the zero extension. The Riesz potential is
a direct cell-volume-weighted lattice sum evaluated by zero-padded FFT on
the doubled grid.

The Dirichlet form is the 7-point stencil. Where a stencil arm leaves the
domain, the boundary point along that arm (at distance theta*h, theta in
(0, 1]) carries the zero value, which keeps the matrix symmetric and
removes the O(h) staircase shift of the boundary.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import pyamg
import scipy.sparse as sp
from scipy.fft import irfftn, rfftn

from .constants import DomainError, DomainSpec, riesz_constant
from .forms import AssemblyError, OperatorBundle, SolverError

THETA_MIN = 1e-3


@dataclass(frozen=True, eq=False)
class Grid3:
    h: float
    dims: tuple[int, int, int]
    origin: tuple[float, float, float]
    mask: np.ndarray
    domain: DomainSpec

    def axes(self):
        return [self.origin[k] + self.h * np.arange(self.dims[k]) for k in range(3)]

    def coords(self) -> np.ndarray:
        """Node coordinates, shape dims + (3,)."""
        return np.stack(np.meshgrid(*self.axes(), indexing="ij"), axis=-1)

    @property
    def size(self) -> int:
        return int(self.mask.sum())


def make_grid(domain: DomainSpec, n: int) -> Grid3:
    """Grid with n interior nodes across the widest extent of the domain."""
    if n < 3:
        raise DomainError("grid resolution must be at least 3")
    if domain.shape == "ball":
        half = (domain.radius,) * 3
    else:
        if len(domain.halfwidths) != 3:
            raise DomainError("grid3d supports N = 3 only")
        half = domain.halfwidths
    h = 2.0 * max(half) / (n + 1)
    dims = tuple(int(math.ceil(2.0 * a / h - 1e-9)) - 1 for a in half)
    origin = tuple(-a + h for a in half)
    g = Grid3(h, dims, origin, np.zeros(dims, dtype=bool), domain)
    x = g.coords()
    if domain.shape == "ball":
        mask = np.einsum("...k,...k->...", x, x) < domain.radius ** 2
    else:
        mask = np.all(np.abs(x) < np.asarray(half), axis=-1)
    return Grid3(h, dims, origin, mask, domain)


def _crossing(domain: DomainSpec, x: np.ndarray, axis: int, sign: int) -> np.ndarray:
    """Distance from interior points x to the boundary along sign*e_axis."""
    xk = x[:, axis]
    if domain.shape == "ball":
        disc = xk ** 2 + domain.radius ** 2 - np.einsum("ij,ij->i", x, x)
        return -sign * xk + np.sqrt(np.maximum(disc, 0.0))
    return domain.halfwidths[axis] - sign * xk


def _outward_normal(domain: DomainSpec, xb: np.ndarray, axis: int, sign: int) -> np.ndarray:
    if domain.shape == "ball":
        return xb / domain.radius
    n = np.zeros_like(xb)
    n[:, axis] = sign
    return n


@dataclass(frozen=True, eq=False)
class KernelTensor:
    alpha: float
    spectrum: np.ndarray
    diagonal_value: float
    shape: tuple[int, int, int]
    h: float


def make_kernel(grid: Grid3, alpha: float) -> KernelTensor:
    """Transform of h^3 C|z|^(alpha-3) sampled on the doubled grid.

    The self cell uses the mean of the kernel over the ball of volume h^3,
    C 4 pi rho^alpha / alpha / h^3 with rho = h (3/(4 pi))^(1/3).
    """
    if not 0 < alpha < 3:
        raise DomainError(f"alpha must lie in (0, 3), got {alpha}")
    c = riesz_constant(3, alpha)
    h = grid.h
    full = tuple(2 * d for d in grid.dims)
    offs = [np.fft.fftfreq(m, d=1.0 / m) * h for m in full]
    z2 = (offs[0][:, None, None] ** 2 + offs[1][None, :, None] ** 2
          + offs[2][None, None, :] ** 2)
    with np.errstate(divide="ignore"):
        ker = c * z2 ** ((alpha - 3.0) / 2.0)
    rho = h * (3.0 / (4.0 * math.pi)) ** (1.0 / 3.0)
    diag = c * 4.0 * math.pi * rho ** alpha / alpha / h ** 3
    ker[0, 0, 0] = diag
    return KernelTensor(alpha, rfftn(ker * h ** 3), diag, grid.dims, h)


def riesz_apply(kernel: KernelTensor, u: np.ndarray) -> np.ndarray:
    """Lattice sum sum_y K(x - y) u(y) h^3 at every node of the grid."""
    if u.shape != kernel.shape:
        raise ValueError(f"field shape {u.shape} does not match kernel grid {kernel.shape}")
    full = tuple(2 * d for d in kernel.shape)
    out = irfftn(rfftn(u, s=full) * kernel.spectrum, s=full)
    return out[: u.shape[0], : u.shape[1], : u.shape[2]]


class GridBundle(OperatorBundle):
    kind = "grid"

    def __init__(self, grid: Grid3, alpha: float, tol: float = 1e-12):
        self.grid = grid
        self.N = 3
        self.alpha = float(alpha)
        self.tol = tol
        self.kernel = make_kernel(grid, alpha)
        self.index = np.flatnonzero(grid.mask.ravel())
        self.weights = np.full(self.index.size, grid.h ** 3)
        self.stiffness_matrix, self._crossings = self._assemble_stiffness()
        # "local" Jacobi weighting avoids pyamg's randomized spectral radius
        # estimate, so the hierarchy (and every solve) is reproducible
        self._amg = pyamg.smoothed_aggregation_solver(
            self.stiffness_matrix, symmetry="symmetric",
            smooth=("jacobi", {"omega": 4.0 / 3.0, "weighting": "local"}))

    @property
    def h(self) -> float:
        return self.grid.h

    def embed(self, u: np.ndarray) -> np.ndarray:
        out = np.zeros(self.grid.dims)
        out.ravel()[self.index] = u
        return out

    def restrict(self, field: np.ndarray) -> np.ndarray:
        return np.asarray(field).ravel()[self.index]

    def coords(self) -> np.ndarray:
        return self.grid.coords().reshape(-1, 3)[self.index]

    def _assemble_stiffness(self):
        """A = D^T diag(c) D over grid links (c = h) and cut arms (c = h/theta)."""
        g = self.grid
        h = g.h
        n = self.index.size
        dof = -np.ones(g.dims, dtype=np.int64)
        dof.ravel()[self.index] = np.arange(n)
        x = self.coords()
        ijk = np.array(np.unravel_index(self.index, g.dims)).T
        heads, tails, coef = [], [], []
        crossings = []
        for axis in range(3):
            for sign in (1, -1):
                nb = ijk.copy()
                nb[:, axis] += sign
                inside = (nb[:, axis] >= 0) & (nb[:, axis] < g.dims[axis])
                nb_dof = np.full(n, -1)
                nb_dof[inside] = dof[tuple(nb[inside].T)]
                link = nb_dof >= 0
                if sign > 0:
                    heads.append(nb_dof[link])
                    tails.append(np.flatnonzero(link))
                    coef.append(np.full(link.sum(), h))
                cut = np.flatnonzero(~link)
                if cut.size:
                    t = _crossing(g.domain, x[cut], axis, sign)
                    theta = np.clip(t / h, THETA_MIN, 1.0)
                    heads.append(np.full(cut.size, -1))
                    tails.append(cut)
                    coef.append(h / theta)
                    crossings.append((axis, sign, cut, theta))
        if not crossings:
            raise AssemblyError("degenerate mask: no boundary faces")
        heads, tails = np.concatenate(heads), np.concatenate(tails)
        m = heads.size
        real = heads >= 0
        rows = np.concatenate([np.arange(m)[real], np.arange(m)])
        cols = np.concatenate([heads[real], tails])
        vals = np.concatenate([np.ones(real.sum()), -np.ones(m)])
        self.difference_op = sp.csr_matrix((vals, (rows, cols)), shape=(m, n))
        self.face_coefficients = np.concatenate(coef)
        A = (self.difference_op.T @ sp.diags(self.face_coefficients) @ self.difference_op).tocsr()
        return A, crossings

    def stiffness(self, u):
        return self.stiffness_matrix @ u

    def potential(self, u: np.ndarray) -> np.ndarray:
        """Unrestricted lattice potential on the whole grid."""
        return riesz_apply(self.kernel, self.embed(u))

    def riesz_apply(self, u):
        return self.restrict(self.potential(u))

    def gram(self, u):
        return self.weights * self.riesz_apply(u)

    def solve_stiffness(self, f):
        f = np.asarray(f, dtype=float)
        if not np.any(f):
            return np.zeros_like(f)
        residuals = []
        x = self._amg.solve(f, tol=self.tol, accel="cg", maxiter=500, residuals=residuals)
        rel = residuals[-1] / residuals[0] if residuals else 0.0
        if not rel <= 10 * self.tol:
            raise SolverError(f"AMG-CG did not reach tol {self.tol}", residual=rel)
        return x

    def boundary_flux_moment(self, u) -> float:
        """int |du/dn|^2 x.n dS from one-sided differences at every crossing."""
        g = self.grid
        h = g.h
        u = np.asarray(u, dtype=float)
        field = self.embed(u)
        x = self.coords()
        ijk = np.array(np.unravel_index(self.index, g.dims)).T
        total = 0.0
        for axis, sign, cut, theta in self._crossings:
            tb = theta * h
            u1 = u[cut]
            back = ijk[cut].copy()
            back[:, axis] -= sign
            ok = (back[:, axis] >= 0) & (back[:, axis] < g.dims[axis])
            u2 = np.zeros(cut.size)
            u2[ok] = field[tuple(back[ok].T)]
            inner = np.zeros(cut.size, dtype=bool)
            inner[ok] = g.mask[tuple(back[ok].T)]
            # quadratic through (tb, 0), (0, u1), (-h, u2); linear if no inner node
            quad_d = u1 * (tb + h) / ((0.0 - tb) * h) + u2 * tb / ((-h - tb) * (-h))
            lin_d = -u1 / tb
            du = np.where(inner, quad_d, lin_d)
            xb = x[cut].copy()
            xb[:, axis] += sign * tb
            nrm = _outward_normal(g.domain, xb, axis, sign)
            xn = np.einsum("ij,ij->i", xb, nrm)
            w = np.abs(nrm[:, axis]) / np.sum(nrm ** 4, axis=1)
            total += float(np.sum(du ** 2 * xn * w)) * h * h
        return total


def assemble_grid_bundle(grid: Grid3, alpha: float, tol: float = 1e-12) -> GridBundle:
    return GridBundle(grid, alpha, tol=tol)
