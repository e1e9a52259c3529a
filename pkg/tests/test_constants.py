import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from nonlocal_critical.constants import (
    DomainError,
    DomainSpec,
    ProblemConfig,
    Regime,
    critical_exponent,
    hls_sharp_constant,
    regime,
    riesz_constant,
    sobolev_constant,
    sphere_area,
    talenti_normalization,
    unit_ball_volume,
)


def test_riesz_constant_newton_kernel():
    # -Delta (1/(4 pi |x|)) = delta in R^3
    assert riesz_constant(3, 2) == pytest.approx(1 / (4 * math.pi), rel=1e-14)


def test_riesz_constant_n3_alpha1():
    assert riesz_constant(3, 1) == pytest.approx(1 / (2 * math.pi ** 2), rel=1e-14)


@given(st.integers(3, 9), st.floats(0.01, 0.99))
def test_riesz_constant_positive(N, frac):
    assert riesz_constant(N, frac * N) > 0


@pytest.mark.parametrize("N,alpha", [(3, 0.0), (3, 3.0), (3, -1.0), (2, 1.0), (3.5, 1.0)])
def test_riesz_constant_rejects(N, alpha):
    with pytest.raises(DomainError):
        riesz_constant(N, alpha)


@pytest.mark.parametrize("N,p", [(3, 6), (4, 4), (6, 3)])
def test_critical_exponent(N, p):
    assert critical_exponent(N) == Fraction(p)


def test_critical_exponent_is_rational():
    assert critical_exponent(5) == Fraction(10, 3)


@pytest.mark.parametrize("N,alpha,expected", [(5, 1, Regime.CaseOne), (3, 1, Regime.CaseTwo),
                                              (7, 2, Regime.CaseOne)])
def test_regime(N, alpha, expected):
    assert regime(N, alpha) is expected


def _talenti_quotient(N):
    """Sobolev quotient of (1+r^2)^(-(N-2)/2) by adaptive quadrature on (0, inf)."""
    p = 2 * N / (N - 2)
    du2 = lambda r: ((N - 2) * r * (1 + r * r) ** (-N / 2)) ** 2 * r ** (N - 1)
    up = lambda r: (1 + r * r) ** (-(N - 2) * p / 2) * r ** (N - 1)
    g = integrate.quad(du2, 0, 1)[0] + integrate.quad(du2, 1, np.inf)[0]
    c = integrate.quad(up, 0, 1)[0] + integrate.quad(up, 1, np.inf)[0]
    area = sphere_area(N)
    return area * g / (area * c) ** (2 / p)


@pytest.mark.parametrize("N", [3, 4, 5, 6])
def test_sobolev_constant_matches_talenti_quotient(N):
    assert sobolev_constant(N) == pytest.approx(_talenti_quotient(N), rel=1e-9)


def test_sobolev_constant_n3_value():
    assert sobolev_constant(3) == pytest.approx(5.478, abs=5e-4)


def test_talenti_normalization_solves_pde():
    # -Delta U = U^5 at a few radii for N = 3, by finite differences
    N, C0 = 3, talenti_normalization(3)
    U = lambda r: C0 * (1 + r * r) ** -0.5
    h = 1e-4
    for r in (0.3, 1.0, 2.5):
        lap = (U(r + h) - 2 * U(r) + U(r - h)) / h ** 2 + (N - 1) / r * (U(r + h) - U(r - h)) / (2 * h)
        assert -lap == pytest.approx(U(r) ** 5, rel=1e-6)


def _hls_quotient_n3(alpha):
    """HLS quotient of f = (1+r^2)^(-(3+alpha)/2), kernel |x-y|^(alpha-3), in R^3.

    Angular averages: for alpha = 2 the kernel reduces to (4 pi)^2 / max(r, s);
    for alpha = 1 to 8 pi^2 / (r s) log((r+s)/|r-s|).
    """
    f = lambda r: (1 + r * r) ** (-(3 + alpha) / 2)
    if alpha == 2:
        ker = lambda r, s: (4 * math.pi) ** 2 / max(r, s)
    else:
        ker = lambda r, s: 8 * math.pi ** 2 / (r * s) * math.log((r + s) / abs(r - s))
    # substitution r = t/(1-t) maps (0,1) onto (0, inf)
    def g(t, s):
        r, q = t / (1 - t), s / (1 - s)
        jac = 1 / (1 - t) ** 2 / (1 - s) ** 2
        return f(r) * f(q) * r * r * q * q * ker(r, q) * jac
    num = 0.0
    for lo, hi in ((0, 0.5), (0.5, 1)):
        # split along the diagonal where the alpha=1 kernel is log-singular
        num += integrate.dblquad(lambda s, t: g(t, s), lo, hi, lo, lambda t: t, epsabs=1e-12)[0]
        num += integrate.dblquad(lambda s, t: g(t, s), lo, hi, lambda t: t, hi, epsabs=1e-12)[0]
    num += 2 * integrate.dblquad(lambda s, t: g(t, s), 0, 0.5, 0.5, 1, epsabs=1e-12)[0]
    p = 6 / (3 + alpha)
    norm = 4 * math.pi * integrate.quad(lambda r: f(r) ** p * r * r, 0, np.inf)[0]
    return num / norm ** (2 / p)


@pytest.mark.parametrize("alpha", [2, 1])
def test_hls_constant_attained_by_extremal_profile(alpha):
    assert hls_sharp_constant(3, alpha) == pytest.approx(_hls_quotient_n3(alpha), rel=1e-5)


def test_hls_quotient_of_other_profile_is_smaller():
    # a Gaussian is not extremal, its quotient must stay below the sharp constant
    r = np.linspace(1e-4, 12, 4000)
    f = np.exp(-r ** 2)
    w = 4 * math.pi * r ** 2 * np.gradient(r)
    K = (4 * math.pi) ** 2 / np.maximum.outer(r, r)
    num = (f * r * r * np.gradient(r)) @ K @ (f * r * r * np.gradient(r))
    den = (w @ f ** 1.2) ** (2 / 1.2)
    assert num / den < hls_sharp_constant(3, 2)


@given(st.integers(3, 8), st.floats(0.05, 0.95))
@settings(max_examples=30)
def test_hls_constant_positive(N, frac):
    assert hls_sharp_constant(N, frac * N) > 0


def test_domain_volume_and_star_constant():
    d = DomainSpec.ball(2.0)
    assert d.volume(3) == pytest.approx(4 / 3 * math.pi * 8)
    assert d.star_constant == 2.0
    b = DomainSpec.box(1.0, 0.5, 2.0)
    assert b.volume(3) == pytest.approx(8.0)
    assert b.star_constant == 0.5
    assert unit_ball_volume(2) == pytest.approx(math.pi)


def test_domain_json_roundtrip():
    for d in (DomainSpec.ball(1.5), DomainSpec.box(1.0, 2.0, 3.0)):
        assert DomainSpec.from_json(d.to_json()) == d


@pytest.mark.parametrize("bad", [{"shape": "ball", "radius": -1}, {"shape": "box", "halfwidths": [1, 0]},
                                 {"shape": "torus"}])
def test_domain_rejects(bad):
    with pytest.raises(DomainError):
        DomainSpec.from_json(bad)


def test_problem_config():
    cfg = ProblemConfig(3, 1.0, 2.0)
    assert cfg.p_crit == 6.0
    assert cfg.regime is Regime.CaseTwo
    assert cfg.with_lambda(5.0).lam == 5.0
    with pytest.raises(DomainError):
        ProblemConfig(3, 4.0)
