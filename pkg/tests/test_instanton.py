import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.integrate import dblquad

from nonlocal_critical.constants import DomainError, DomainSpec, ProblemConfig, sobolev_constant
from nonlocal_critical.instanton import (
    UnderResolvedError,
    cutoff,
    cutoff_dr,
    d_r_curve,
    default_delta,
    energy_terms,
    instanton_mesh,
    t_sign_probe,
)
from nonlocal_critical.radial import RadialMesh, talenti


def test_cutoff_values():
    assert cutoff(0.5, 0.0) == 1.0 and cutoff(0.5, 0.5) == 1.0
    assert cutoff(0.5, 1.0) == 0.0 and cutoff(0.5, 3.0) == 0.0
    assert cutoff(0.5, 0.75) == pytest.approx(0.5)
    assert isinstance(cutoff(0.5, 0.6), float)
    with pytest.raises(DomainError):
        cutoff(0.0, 1.0)


@given(st.floats(min_value=0.01, max_value=2.0), st.floats(min_value=0.0, max_value=1.0))
def test_cutoff_monotone_and_bounded(delta, t):
    x = np.linspace(0, 3 * delta, 50)
    c = cutoff(delta, x)
    assert np.all(np.diff(c) <= 1e-15) and np.all((0 <= c) & (c <= 1))
    # symmetric about the midpoint of the transition layer
    assert cutoff(delta, delta * (1 + t)) + cutoff(delta, delta * (2 - t)) == pytest.approx(1.0)


def test_cutoff_derivative_matches_finite_differences():
    x = np.linspace(0.05, 1.5, 300)
    h = 1e-6
    fd = (cutoff(0.5, x + h) - cutoff(0.5, x - h)) / (2 * h)
    np.testing.assert_allclose(cutoff_dr(0.5, x), fd, atol=1e-6)


@pytest.mark.parametrize("N", [3, 4, 5])
def test_cutoff_errors_decay_at_expected_rates(N):
    """grad excess ~ mu^{2-N}, critical deficit ~ mu^{-N}."""
    ref = sobolev_constant(N) ** (N / 2)
    mus = [64.0, 128.0, 256.0]
    probes = [energy_terms(instanton_mesh(N, mu, 0.25), 1.0, mu, 0.25) for mu in mus]
    ge = [p.grad_energy - ref for p in probes]
    ce = [ref - p.crit_norm for p in probes]
    assert all(g > 0 for g in ge) and all(c > 0 for c in ce)
    slope_g = np.polyfit(np.log(mus), np.log(ge), 1)[0]
    slope_c = np.polyfit(np.log(mus), np.log(ce), 1)[0]
    assert slope_g == pytest.approx(2 - N, rel=0.15)
    assert slope_c == pytest.approx(-N, rel=0.15)


def test_dalpha_bracketed_by_truncated_integrals():
    """1_{B_delta} <= xi <= 1_{B_2delta} and a positive kernel give D_{mu delta} <= mu^{2+alpha} D <= D_{2 mu delta}."""
    curve = d_r_curve(3, 1.0, [1.0, 2.0, 4.0, 8.0])
    D = dict(zip(curve.R, curve.D))
    for mu in (8.0, 16.0):
        p = energy_terms(instanton_mesh(3, mu, 0.25), 1.0, mu, 0.25)
        scaled = p.dalpha * mu ** 3
        assert D[mu * 0.25] <= scaled <= D[mu * 0.5]


def test_d_r_matches_newtonian_quadrature():
    """For N=3, alpha=2 the shell-averaged kernel is 1/max(r,s)."""
    curve = d_r_curve(3, 2.0, [1.0, 2.0])
    for R, D in zip(curve.R, curve.D):
        val = dblquad(lambda s, r: talenti(r, 3, 1.0) * talenti(s, 3, 1.0) * r * s * s,
                      0, R, 0, lambda r: r, epsabs=1e-13, epsrel=1e-11)[0]
        assert D == pytest.approx(8 * math.pi * val, rel=1e-4)


def test_d_r_increasing_and_rows():
    curve = d_r_curve(3, 1.0, [1.0, 2.0, 4.0])
    assert np.all(np.diff(curve.D) > 0)
    rows = curve.rows()
    assert len(rows) == 3 and math.isnan(rows[0]["increment"])
    assert rows[2]["increment_ratio"] == pytest.approx(curve.increments[0] / curve.increments[1])


def test_d_r_convergent_case_tail_rate():
    """D_inf - D_R ~ R^{-(N-alpha-4)}, so increment ratios tend to 2^{N-alpha-4}."""
    curve = d_r_curve(5, 0.5, [2.0, 4.0, 8.0, 16.0, 32.0, 64.0, 128.0])
    ratios = curve.increment_ratios
    assert np.all(np.diff(ratios) > 0) and ratios[-1] > 1
    assert ratios[-1] == pytest.approx(2 ** 0.5, rel=0.01)
    assert curve.tail_exponent < 0.2


@pytest.mark.parametrize("bad", [[], [2.0, 1.0], [0.0, 1.0]])
def test_d_r_rejects_bad_radii(bad):
    with pytest.raises(DomainError):
        d_r_curve(3, 1.0, bad)


@pytest.mark.parametrize("N", [3, 4, 5])
def test_zero_lambda_quotient_never_below_S(N):
    cfg = ProblemConfig(N, 1.0, 0.0, DomainSpec.ball(1.0))
    table = t_sign_probe(cfg, [1, 4, 16, 64, 256])
    assert not table.any_below_S and table.first_mu_below_S is None
    assert table.min_quotient >= sobolev_constant(N)


def test_quotient_linear_in_lambda():
    p = energy_terms(instanton_mesh(3, 8.0, 0.25), 1.0, 8.0, 0.25)
    q0, q1, q2 = (p.with_lambda(3, lam).quotient for lam in (0.0, 1.0, 2.0))
    assert q2 - q1 == pytest.approx(q1 - q0, rel=1e-12)
    assert q0 - q1 == pytest.approx(p.dalpha / p.crit_norm ** (1 / 3), rel=1e-12)


def test_probe_detects_certificate():
    cfg = ProblemConfig(3, 1.0, 44.0, DomainSpec.ball(1.0))
    table = t_sign_probe(cfg, [2, 4, 8], delta=0.4)
    assert table.any_below_S
    row = next(r for r in table.rows if r.below_S)
    assert row.T_value < 0 and row.quotient == pytest.approx(row.T_value + sobolev_constant(3))
    assert table.to_json()["regime"] == table.regime


def test_default_delta():
    assert default_delta(ProblemConfig(3, 1.0, 0.0, DomainSpec.ball(2.0))) == 0.5
    assert default_delta(ProblemConfig(3, 1.0, 0.0, DomainSpec.box(1.0, 0.4, 2.0))) == pytest.approx(0.1)


def test_energy_terms_validation():
    mesh = instanton_mesh(3, 4.0, 0.25)
    with pytest.raises(DomainError):
        energy_terms(mesh, 1.0, 4.0, 0.5)
    with pytest.raises(DomainError):
        energy_terms(mesh, 1.0, -1.0, 0.25)
    coarse = RadialMesh.uniform(3, 0.5, 10)
    with pytest.raises(UnderResolvedError):
        energy_terms(coarse, 1.0, 1000.0, 0.25)
    with pytest.raises(DomainError):
        t_sign_probe(ProblemConfig(3, 1.0, 0.0, DomainSpec.ball(1.0)), [])
