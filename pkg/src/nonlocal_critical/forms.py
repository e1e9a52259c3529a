"""Discretization-independent interface for the quadratic forms.

Fields are plain 1-D arrays of degrees of freedom. Each bundle fixes the
meaning of a dof (radial cell value, masked grid node value) and owns the
zero extension outside the domain.
"""
from __future__ import annotations

import numpy as np

from .constants import critical_exponent


class AssemblyError(RuntimeError):
    pass


class SolverError(RuntimeError):
    """Iterative solve or eigensolve failed; ``residual`` holds the best value."""

    def __init__(self, msg: str, residual: float = float("nan")):
        super().__init__(msg)
        self.residual = residual


class OperatorBundle:
    """Base class for assembled discrete forms on one discretization.

    Subclasses provide ``weights`` (full quadrature measure, so that
    ``weights @ f`` approximates the integral over the domain), and the
    matrix actions ``stiffness``, ``gram`` and ``solve_stiffness``.
    ``stiffness`` is the symmetric matrix of the Dirichlet form and
    ``gram`` the symmetric matrix of D_alpha.
    """

    N: int
    alpha: float
    weights: np.ndarray
    kind: str = "abstract"

    @property
    def size(self) -> int:
        return self.weights.shape[0]

    @property
    def p_crit(self) -> float:
        return float(critical_exponent(self.N))

    def stiffness(self, u: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def gram(self, u: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def solve_stiffness(self, f: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def boundary_flux_moment(self, u: np.ndarray) -> float:
        raise NotImplementedError

    # derived quantities

    # Optional factorization A = D^T diag(c) D. Evaluating the form as a sum
    # of weighted squared differences avoids the cancellation in u . (A u),
    # whose absolute error grows like the largest matrix entry.
    difference_op = None
    face_coefficients = None

    def dirichlet_energy(self, u, v=None) -> float:
        u = np.asarray(u)
        v = u if v is None else np.asarray(v)
        if self.difference_op is not None:
            du = self.difference_op @ u
            dv = du if v is u else self.difference_op @ v
            return float(np.dot(self.face_coefficients * du, dv))
        return float(np.dot(u, self.stiffness(v)))

    def dalpha_form(self, u, v=None) -> float:
        v = u if v is None else v
        return float(np.dot(np.asarray(u), self.gram(np.asarray(v))))

    def riesz_apply(self, u: np.ndarray) -> np.ndarray:
        """Pointwise values of I_alpha * u (zero extension of u)."""
        return self.gram(u) / self.weights

    def laplacian(self, u: np.ndarray) -> np.ndarray:
        """Pointwise -Delta_h u with homogeneous Dirichlet data."""
        return self.stiffness(u) / self.weights

    def laplace_solve(self, f: np.ndarray) -> np.ndarray:
        """Solve -Delta u = f in the domain, u = 0 on the boundary."""
        return self.solve_stiffness(self.weights * f)

    def lp_norm(self, u: np.ndarray, p: float) -> float:
        return float(np.dot(self.weights, np.abs(u) ** p) ** (1.0 / p))

    def integral(self, f: np.ndarray) -> float:
        return float(np.dot(self.weights, f))

    def dual_norm(self, r: np.ndarray) -> float:
        """H^-1 norm sqrt(r . A^-1 r) of a residual given in dof space."""
        return float(np.sqrt(max(np.dot(r, self.solve_stiffness(r)), 0.0)))
