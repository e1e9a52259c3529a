import math

import numpy as np
import pytest

from nonlocal_critical.constants import DomainError, DomainSpec, sphere_area
from nonlocal_critical.grid3d import (
    assemble_grid_bundle,
    make_grid,
    make_kernel,
    riesz_apply,
)
from nonlocal_critical.radial import RadialMesh, assemble_radial_bundle


def smooth_bump(x, a=0.5):
    r2 = np.einsum("ij,ij->i", x, x) / a ** 2
    out = np.zeros(len(x))
    inside = r2 < 1
    out[inside] = np.exp(-1.0 / (1.0 - r2[inside]))
    return out


def poly_bump(x, a=0.7, k=4):
    r2 = np.minimum(np.einsum("ij,ij->i", x, x) / a ** 2, 1.0)
    return (1.0 - r2) ** k


def newton_error(n):
    """Max interior error of -Delta_h(I_2 * u) - u for a bump on ball(1)."""
    b = assemble_grid_bundle(make_grid(DomainSpec.ball(1.0), n), 2.0)
    x = b.coords()
    u = poly_bump(x)
    resid = b.laplacian(b.riesz_apply(u)) - u
    inner = np.linalg.norm(x, axis=1) < 0.85
    return b.h, float(np.max(np.abs(resid[inner])))


def test_mask_and_zero_extension():
    g = make_grid(DomainSpec.ball(1.0), 20)
    x = g.coords()
    assert np.all(np.linalg.norm(x[g.mask], axis=-1) < 1.0)
    # nodes one step beyond the stored block sit on the enclosing box [-R, R]^3
    assert g.origin[0] - g.h == pytest.approx(-1.0)
    assert g.origin[0] + g.h * g.dims[0] == pytest.approx(1.0)
    assert g.mask.sum() == pytest.approx(4 / 3 * math.pi / g.h ** 3, rel=0.05)
    b = assemble_grid_bundle(g, 1.0)
    f = b.embed(np.ones(b.size))
    assert np.all(f[~g.mask] == 0)


def test_grid_rejects():
    with pytest.raises(DomainError):
        make_grid(DomainSpec.ball(1.0), 2)
    with pytest.raises(DomainError):
        make_grid(DomainSpec.box(1.0, 1.0), 10)
    with pytest.raises(DomainError):
        make_kernel(make_grid(DomainSpec.ball(1.0), 8), 3.0)


def test_kernel_samples():
    g = make_grid(DomainSpec.ball(1.0), 12)
    k = make_kernel(g, 1.5)
    assert k.diagonal_value > 0
    delta = np.zeros(g.dims)
    c = tuple(d // 2 for d in g.dims)
    delta[c] = 1.0
    pot = riesz_apply(k, delta)
    assert np.all(pot > 0)
    # radial symmetry of the sampled kernel about the impulse
    assert pot[c[0] + 2, c[1], c[2]] == pytest.approx(pot[c[0], c[1] - 2, c[2]], rel=1e-12)


def test_riesz_apply_linear_and_symmetric(grid_a2):
    assert np.all(grid_a2.riesz_apply(np.zeros(grid_a2.size)) == 0)
    rng = np.random.default_rng(2)
    u, v = rng.standard_normal((2, grid_a2.size))
    a = grid_a2.dalpha_form(u, v)
    assert a == pytest.approx(grid_a2.dalpha_form(v, u), rel=1e-12)


def test_dalpha_nonnegative(grid_a2):
    rng = np.random.default_rng(4)
    for _ in range(5):
        assert grid_a2.dalpha_form(rng.standard_normal(grid_a2.size)) >= 0


def test_riesz_apply_shape_check():
    g = make_grid(DomainSpec.ball(1.0), 8)
    with pytest.raises(ValueError):
        riesz_apply(make_kernel(g, 1.0), np.zeros((3, 3, 3)))


def test_newtonian_identity_second_order():
    hs, errs = zip(*(newton_error(n) for n in (32, 48)))
    order = math.log(errs[0] / errs[1]) / math.log(hs[0] / hs[1])
    assert 1.7 < order < 2.3


def test_cube_eigenvalue_second_order():
    L = 2.0
    vals = []
    for n in (15, 31):
        b = assemble_grid_bundle(make_grid(DomainSpec.box(1.0, 1.0, 1.0), n), 1.0)
        x = b.coords() + 1.0
        u = np.prod(np.sin(math.pi * x / L), axis=1)
        vals.append(b.dirichlet_energy(u) / b.integral(u * u))
    exact = 3 * math.pi ** 2 / L ** 2
    e = [abs(v - exact) for v in vals]
    assert e[1] < 2e-3 * exact
    assert math.log2(e[0] / e[1]) > 1.8


def test_lp_norm_additive(grid_a2):
    x = grid_a2.coords()
    left = np.where(x[:, 0] < 0, 1.0, 0.0)
    right = np.where(x[:, 0] >= 0, 2.0, 0.0)
    total = grid_a2.lp_norm(left + right, 2) ** 2
    assert total == pytest.approx(grid_a2.lp_norm(left, 2) ** 2 + grid_a2.lp_norm(right, 2) ** 2)


def test_boundary_flux_basic(grid_a2):
    assert grid_a2.boundary_flux_moment(np.zeros(grid_a2.size)) == 0.0
    u = 1 - np.einsum("ij,ij->i", grid_a2.coords(), grid_a2.coords())
    assert grid_a2.boundary_flux_moment(2 * u) == pytest.approx(4 * grid_a2.boundary_flux_moment(u))


def test_boundary_flux_matches_radial_reduction():
    """A radial profile transferred to the grid: compare with |S^2| R^3 u'(R)^2."""
    rb = assemble_radial_bundle(RadialMesh.uniform(3, 1.0, 400), 1.0)
    f = smooth_bump(np.c_[rb.nodes, 0 * rb.nodes, 0 * rb.nodes], 0.5)
    phi = rb.laplace_solve(f)       # -Delta phi = f, phi(1) = 0, radial
    gb = assemble_grid_bundle(make_grid(DomainSpec.ball(1.0), 40), 1.0)
    rad = np.linalg.norm(gb.coords(), axis=1)
    u = np.interp(rad, np.r_[0.0, rb.nodes, 1.0], np.r_[phi[0], phi, 0.0])
    ref = rb.boundary_flux_moment(phi)
    assert gb.boundary_flux_moment(u) == pytest.approx(ref, rel=0.05)
    assert ref == pytest.approx(sphere_area(3) * rb.boundary_derivative(phi) ** 2)


def test_solve_stiffness(grid_a2):
    f = smooth_bump(grid_a2.coords(), 0.8)
    u = grid_a2.laplace_solve(f)
    assert np.linalg.norm(grid_a2.laplacian(u) - f) < 1e-9 * np.linalg.norm(f) * 1e3
