"""Closed-form constants and the problem parameterization.

Everything here is a pure function of the dimension ``N`` and the Riesz
exponent ``alpha``; the discretizations and diagnostics pull their
normalizations from this module.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from fractions import Fraction

from scipy.special import gamma, gammaln


class DomainError(ValueError):
    """Raised when a parameter lies outside the admissible range."""


class Regime(enum.Enum):
    CaseOne = "CaseOne"   # N - alpha - 4 >= 0
    CaseTwo = "CaseTwo"   # N - alpha - 4 < 0


def _check_dim(N: int) -> None:
    if int(N) != N or N < 3:
        raise DomainError(f"dimension N must be an integer >= 3, got {N}")


def _check_pair(N: int, alpha: float) -> None:
    _check_dim(N)
    if not (0.0 < alpha < N):
        raise DomainError(f"alpha must satisfy alpha in (0,N) = (0,{N}), got {alpha}")


def riesz_constant(N: int, alpha: float) -> float:
    """Normalization C_{N,alpha} of the Riesz kernel C |x|^(alpha-N)."""
    _check_pair(N, alpha)
    return (gamma((N - alpha) / 2.0)
            / (gamma(alpha / 2.0) * math.pi ** (N / 2.0) * 2.0 ** alpha))


def critical_exponent(N: int) -> Fraction:
    _check_dim(N)
    return Fraction(2 * N, N - 2)


def regime(N: int, alpha: float) -> Regime:
    _check_pair(N, alpha)
    return Regime.CaseOne if N - alpha - 4 >= 0 else Regime.CaseTwo


def sphere_area(N: int) -> float:
    """Surface measure |S^{N-1}| of the unit sphere in R^N."""
    return 2.0 * math.pi ** (N / 2.0) / gamma(N / 2.0)


def unit_ball_volume(N: int) -> float:
    return math.pi ** (N / 2.0) / gamma(N / 2.0 + 1.0)


def sobolev_constant(N: int) -> float:
    """Best constant S in ||grad u||_2^2 >= S |u|_{2*}^2 on R^N.

    Uses S = pi N (N-2) (Gamma(N/2)/Gamma(N))^(2/N), the value attained by
    the Talenti profile. Tests cross-check it against direct quadrature of
    that profile's Sobolev quotient.
    """
    _check_dim(N)
    log_ratio = gammaln(N / 2.0) - gammaln(float(N))
    return math.pi * N * (N - 2) * math.exp(2.0 * log_ratio / N)


def hls_sharp_constant(N: int, alpha: float) -> float:
    """Sharp HLS constant for kernel |x-y|^-(N-alpha), p = q = 2N/(N+alpha).

    Lieb's diagonal-case formula. Does not include C_{N,alpha}.
    """
    _check_pair(N, alpha)
    lam = N - alpha
    log_c = (0.5 * lam * math.log(math.pi)
             + gammaln(N / 2.0 - lam / 2.0) - gammaln(N - lam / 2.0)
             + (-1.0 + lam / N) * (gammaln(N / 2.0) - gammaln(float(N))))
    return math.exp(log_c)


def talenti_normalization(N: int) -> float:
    """C_0 making U = C_0 (1+r^2)^(-(N-2)/2) solve -Delta U = U^(2*-1)."""
    _check_dim(N)
    return (N * (N - 2.0)) ** ((N - 2.0) / 4.0)


@dataclass(frozen=True)
class DomainSpec:
    """A ball or an axis-aligned box centered at the origin."""

    shape: str
    radius: float | None = None
    halfwidths: tuple[float, ...] | None = None

    def __post_init__(self):
        if self.shape == "ball":
            if self.radius is None or not self.radius > 0:
                raise DomainError("ball domain needs a positive radius")
        elif self.shape == "box":
            if not self.halfwidths or any(not a > 0 for a in self.halfwidths):
                raise DomainError("box domain needs positive half-widths")
            object.__setattr__(self, "halfwidths", tuple(float(a) for a in self.halfwidths))
        else:
            raise DomainError(f"unknown domain shape {self.shape!r}; expected 'ball' or 'box'")

    @classmethod
    def ball(cls, radius: float) -> "DomainSpec":
        return cls("ball", radius=float(radius))

    @classmethod
    def box(cls, *halfwidths: float) -> "DomainSpec":
        return cls("box", halfwidths=tuple(halfwidths))

    def volume(self, N: int) -> float:
        if self.shape == "ball":
            return unit_ball_volume(N) * self.radius ** N
        if len(self.halfwidths) != N:
            raise DomainError(f"box has {len(self.halfwidths)} half-widths but N = {N}")
        return math.prod(2.0 * a for a in self.halfwidths)

    @property
    def star_constant(self) -> float:
        """c0 = inf over the boundary of x . n_x."""
        if self.shape == "ball":
            return self.radius
        return min(self.halfwidths)

    def to_json(self) -> dict:
        if self.shape == "ball":
            return {"shape": "ball", "radius": self.radius}
        return {"shape": "box", "halfwidths": list(self.halfwidths)}

    @classmethod
    def from_json(cls, data: dict) -> "DomainSpec":
        shape = data.get("shape")
        if shape == "ball":
            return cls.ball(data["radius"])
        if shape == "box":
            return cls.box(*data["halfwidths"])
        raise DomainError(f"unknown domain shape {shape!r}")


@dataclass(frozen=True)
class ProblemConfig:
    N: int
    alpha: float
    lam: float = 0.0
    domain: DomainSpec = field(default_factory=lambda: DomainSpec.ball(1.0))

    def __post_init__(self):
        _check_pair(self.N, self.alpha)

    @property
    def p_crit(self) -> float:
        return float(critical_exponent(self.N))

    @property
    def volume(self) -> float:
        return self.domain.volume(self.N)

    @property
    def regime(self) -> Regime:
        return regime(self.N, self.alpha)

    def with_lambda(self, lam: float) -> "ProblemConfig":
        return ProblemConfig(self.N, self.alpha, float(lam), self.domain)
