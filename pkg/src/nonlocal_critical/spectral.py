"""Nonlocal eigenproblem -Delta phi = lambda I_alpha * phi.

Discretely A phi = lambda G phi with A the Dirichlet form and G the
D_alpha form, both symmetric and positive definite. We compute the
largest eigenvalues mu = 1/lambda of G x = mu A x, which are the first
ones to converge.
"""
from __future__ import annotations

import csv
import io
import logging
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
from scipy.sparse.linalg import LinearOperator, lobpcg

from .forms import OperatorBundle, SolverError

log = logging.getLogger(__name__)

CLUSTER_RTOL = 1e-6


class IndefiniteFormError(RuntimeError):
    pass


@dataclass
class EigenPair:
    lam: float
    phi: np.ndarray
    residual: float


@dataclass
class Spectrum:
    pairs: list[EigenPair]
    grad_offdiag: float = 0.0
    dalpha_offdiag: float = 0.0

    @property
    def eigenvalues(self) -> np.ndarray:
        return np.array([p.lam for p in self.pairs])

    def __len__(self):
        return len(self.pairs)

    def clusters(self, rtol: float = CLUSTER_RTOL) -> list[int]:
        return cluster_ids(self.eigenvalues, rtol)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["k", "lambda_k", "residual", "cluster_id"])
        for k, (p, c) in enumerate(zip(self.pairs, self.clusters()), start=1):
            w.writerow([k, repr(float(p.lam)), repr(float(p.residual)), c])
        return buf.getvalue()


def cluster_ids(values, rtol: float = CLUSTER_RTOL) -> list[int]:
    ids, cur = [], 0
    for i, v in enumerate(values):
        if i and abs(v - values[i - 1]) > rtol * abs(v):
            cur += 1
        ids.append(cur)
    return ids


def rayleigh(bundle: OperatorBundle, u: np.ndarray, floor: float = 1e-300) -> float:
    d = bundle.dalpha_form(u)
    if not d > floor:
        raise ZeroDivisionError("D_alpha(u) vanishes; u is (numerically) zero")
    return bundle.dirichlet_energy(u) / d


def _gram_offdiag(M: np.ndarray) -> float:
    d = np.sqrt(np.abs(np.diag(M)))
    R = np.abs(M) / np.outer(d, d)
    np.fill_diagonal(R, 0.0)
    return float(R.max()) if R.size > 1 else 0.0


def _finish(bundle: OperatorBundle, X: np.ndarray, count: int) -> Spectrum:
    """Rayleigh-Ritz on span(X), normalization, sign fix and diagnostics."""
    AX = np.column_stack([bundle.stiffness(x) for x in X.T])
    GX = np.column_stack([bundle.gram(x) for x in X.T])
    As = X.T @ AX
    Gs = X.T @ GX
    As = 0.5 * (As + As.T)
    Gs = 0.5 * (Gs + Gs.T)
    mu, C = sla.eigh(Gs, As)
    if mu[-1] <= 0:
        raise IndefiniteFormError("D_alpha form is not positive on the computed subspace")
    order = np.argsort(mu)[::-1][:count]
    mu, C = mu[order], C[:, order]
    if np.any(mu <= 0):
        raise IndefiniteFormError("non-positive D_alpha Rayleigh quotient; assembled form is indefinite")
    V = X @ C
    AV = AX @ C
    GV = GX @ C
    pairs = []
    for j in range(V.shape[1]):
        scale = 1.0 / np.sqrt(float(V[:, j] @ GV[:, j]))
        if float(bundle.weights @ V[:, j]) < 0:
            scale = -scale
        V[:, j] *= scale
        AV[:, j] *= scale
        GV[:, j] *= scale
        lam = 1.0 / mu[j]
        res = np.linalg.norm(AV[:, j] - lam * GV[:, j]) / np.linalg.norm(AV[:, j])
        pairs.append(EigenPair(lam, V[:, j].copy(), float(res)))
    spec = Spectrum(pairs)
    spec.grad_offdiag = _gram_offdiag(V.T @ AV)
    spec.dalpha_offdiag = _gram_offdiag(V.T @ GV)
    return spec


def solve_spectrum(bundle: OperatorBundle, count: int, tol: float = 1e-9,
                   seed: int = 0, maxiter: int = 400) -> Spectrum:
    """The ``count`` smallest eigenvalues with D_alpha-normalized eigenvectors."""
    n = bundle.size
    if not 1 <= count <= n:
        raise ValueError(f"count must lie in [1, {n}], got {count}")
    gram_matrix = getattr(bundle, "gram_matrix", None)
    if gram_matrix is not None:
        A = bundle.stiffness_matrix.toarray()
        mu, X = sla.eigh(gram_matrix, A, subset_by_index=[n - count, n - 1])
        if mu[0] <= 0:
            raise IndefiniteFormError("assembled D_alpha matrix is not positive definite")
        spec = _finish(bundle, X, count)
    else:
        spec = _lobpcg(bundle, count, tol, seed, maxiter)
    worst = max(p.residual for p in spec.pairs)
    if worst > tol:
        raise SolverError(f"eigen residual {worst:.3e} above tolerance {tol:.1e}", residual=worst)
    return spec


def _lobpcg(bundle, count, tol, seed, maxiter):
    n = bundle.size
    block = min(n, count + max(3, count // 2))
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n, block))
    X[:, 0] = np.abs(X[:, 0]) + 1.0
    G = LinearOperator((n, n), matvec=lambda y: bundle.gram(np.ravel(y)),
                       matmat=lambda Y: np.column_stack([bundle.gram(y) for y in Y.T]),
                       dtype=float)
    prec = bundle._amg.aspreconditioner(cycle="V")
    # lobpcg's tol is absolute on residuals of G x - mu A x; scale by the
    # Rayleigh quotient of a positive start vector so it acts relatively
    mu_scale = bundle.dalpha_form(X[:, 0]) / bundle.dirichlet_energy(X[:, 0])
    best = None
    for attempt in range(4):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", UserWarning)
            mu, X = lobpcg(G, X, B=bundle.stiffness_matrix, M=prec, largest=True,
                           tol=0.1 * tol * mu_scale, maxiter=maxiter)
        spec = _finish(bundle, X, count)
        worst = max(p.residual for p in spec.pairs)
        best = spec
        log.debug("lobpcg pass %d: worst residual %.3e", attempt, worst)
        if worst <= tol:
            break
        # polish with one block step of A^-1 G before restarting
        X = np.column_stack([bundle.solve_stiffness(bundle.gram(x)) for x in X.T])
    return best


@dataclass
class SpectrumReport:
    grad_offdiag: float = 0.0
    dalpha_offdiag: float = 0.0
    phi1_min: float = float("nan")
    phi1_max: float = float("nan")
    phi1_positive: bool | None = None
    gap: float | None = None
    clusters: list[list[int]] = field(default_factory=list)
    eigenvalues: list[float] = field(default_factory=list)

    def to_json(self) -> dict:
        return {
            "grad_gram_offdiag": self.grad_offdiag,
            "dalpha_gram_offdiag": self.dalpha_offdiag,
            "phi1_min": self.phi1_min,
            "phi1_max": self.phi1_max,
            "phi1_positive": self.phi1_positive,
            "lambda2_minus_lambda1": self.gap,
            "clusters": self.clusters,
            "eigenvalues": self.eigenvalues,
        }


def validate_spectrum(bundle: OperatorBundle, spec: Spectrum,
                      positivity_rtol: float = 1e-8) -> SpectrumReport:
    if not spec.pairs:
        return SpectrumReport()
    V = np.column_stack([p.phi for p in spec.pairs])
    AV = np.column_stack([bundle.stiffness(v) for v in V.T])
    GV = np.column_stack([bundle.gram(v) for v in V.T])
    phi1 = spec.pairs[0].phi
    lo, hi = float(phi1.min()), float(phi1.max())
    groups: dict[int, list[int]] = {}
    for k, c in enumerate(spec.clusters(), start=1):
        groups.setdefault(c, []).append(k)
    lams = spec.eigenvalues
    return SpectrumReport(
        grad_offdiag=_gram_offdiag(V.T @ AV),
        dalpha_offdiag=_gram_offdiag(V.T @ GV),
        phi1_min=lo,
        phi1_max=hi,
        phi1_positive=bool(lo >= -positivity_rtol * hi),
        gap=float(lams[1] - lams[0]) if len(lams) > 1 else None,
        clusters=list(groups.values()),
        eigenvalues=[float(x) for x in lams],
    )
