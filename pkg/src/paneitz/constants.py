"""Closed-form constants attached to the dimension N.

Every Gamma-function value goes through ``log_gamma`` so that Γ(N) never
has to be formed directly; the constants below are products and ratios of
such values, exponentiated once at the end.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache


class DomainError(ValueError):
    """Argument outside the domain of a closed-form expression."""


class DimensionError(DomainError):
    """Dimension outside the supported range N >= 5."""


def _check_dim(N: int, minimum: int = 5) -> int:
    if isinstance(N, bool) or int(N) != N:
        raise DimensionError(f"dimension must be an integer, got {N!r}")
    N = int(N)
    if N < minimum:
        raise DimensionError(f"dimension N={N} not supported; N >= {minimum} required")
    return N


def log_gamma(x: float) -> float:
    """ln Γ(x) for x > 0."""
    x = float(x)
    if not x > 0.0 or math.isinf(x):
        raise DomainError(f"log_gamma requires a finite x > 0, got {x}")
    return math.lgamma(x)


def log_beta(a: float, b: float) -> float:
    return log_gamma(a) + log_gamma(b) - log_gamma(a + b)


def sphere_area(k: int) -> float:
    """Surface measure of the unit sphere S^k in R^{k+1}."""
    if k < 0:
        raise DomainError(f"sphere dimension must be >= 0, got {k}")
    return 2.0 * math.exp(0.5 * (k + 1) * math.log(math.pi) - log_gamma(0.5 * (k + 1)))


def ball_volume(N: int, radius: float = 1.0) -> float:
    """Lebesgue measure of the ball of given radius in R^N."""
    if N < 1:
        raise DomainError(f"dimension must be >= 1, got {N}")
    if radius < 0:
        raise DomainError(f"radius must be nonnegative, got {radius}")
    return math.exp(0.5 * N * math.log(math.pi) - log_gamma(0.5 * N + 1.0)) * radius**N


def critical_exponent(N: int) -> Fraction:
    """2* = 2N/(N-4) as an exact rational."""
    N = _check_dim(N)
    return Fraction(2 * N, N - 4)


def bubble_normalizer(N: int) -> float:
    """γ_N = [(N-4)(N-2)N(N+2)]^{(N-4)/8}."""
    N = _check_dim(N)
    return math.exp((N - 4) / 8.0 * math.log((N - 4) * (N - 2) * N * (N + 2)))


def sobolev_constant(N: int) -> float:
    """Sharp constant S of the embedding D^{2,2}(R^N) into L^{2N/(N-4)}.

    S = π²(N-4)(N-2)N(N+2) (Γ(N/2)/Γ(N))^{4/N}
    """
    N = _check_dim(N)
    log_ratio = log_gamma(0.5 * N) - log_gamma(float(N))
    return math.pi**2 * (N - 4) * (N - 2) * N * (N + 2) * math.exp(4.0 / N * log_ratio)


def curvature_coefficient(N: int) -> float:
    """d_N = γ_N² (N-4)² (N-1)."""
    N = _check_dim(N)
    return bubble_normalizer(N) ** 2 * (N - 4) ** 2 * (N - 1)


def alpha_bar(N: int, volume: float) -> float:
    """Upper threshold S / (2|Ω|)^{4/N} above which constants are not minimizers."""
    N = _check_dim(N)
    volume = float(volume)
    if not volume > 0.0:
        raise DomainError(f"volume must be positive, got {volume}")
    if math.isinf(volume):
        return 0.0
    return sobolev_constant(N) * math.exp(-4.0 / N * math.log(2.0 * volume))


def beta_closed_form(N: int) -> float:
    """Γ((N-3)/2) Γ((N+1)/2) / Γ(N), the Gamma factor carrying the sign of β_N."""
    N = _check_dim(N)
    return math.exp(log_gamma(0.5 * (N - 3)) + log_gamma(0.5 * (N + 1)) - log_gamma(float(N)))


@dataclass(frozen=True)
class DimensionParams:
    """N together with the N-dependent constants used everywhere else."""

    N: int
    two_star: float
    gamma_N: float
    S: float
    d_N: float

    @property
    def exponent(self) -> float:
        """Power (N+4)/(N-4) of the right-hand side, 2* - 1."""
        return self.two_star - 1.0

    @property
    def sphere_area(self) -> float:
        """|S^{N-1}|, the factor turning radial integrals into integrals over R^N."""
        return sphere_area(self.N - 1)

    @property
    def bubble_energy(self) -> float:
        """S^{N/4}: common value of ∫|Δu_ε|² and ∫|u_ε|^{2*} over R^N."""
        return self.S ** (self.N / 4.0)


@lru_cache(maxsize=None)
def dimension_params(N: int) -> DimensionParams:
    N = _check_dim(N)
    return DimensionParams(
        N=N,
        two_star=float(critical_exponent(N)),
        gamma_N=bubble_normalizer(N),
        S=sobolev_constant(N),
        d_N=curvature_coefficient(N),
    )
