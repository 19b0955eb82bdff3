"""Radial quadrature and the half-space integrals of the curvature expansion.

Integrals over R^N, R^N_+ or half-balls of functions of the form
g(|y|) y_N^a (y_j²)^b reduce to a one-dimensional radial integral times an
angular moment over the upper half-sphere. The radial part is computed by an
adaptive Gauss-Kronrod (7, 15) rule; the half-line [c, ∞) is mapped onto
[0, 1) by r = c + s/(1-s), which turns algebraic decay into a bounded
integrand.
"""

from __future__ import annotations

import heapq
import math
import warnings
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from paneitz.bubble import BubbleParams, bubble_laplacian, bubble_value
from paneitz.chart import CurvatureModel
from paneitz.constants import DimensionParams, DomainError, log_beta, log_gamma, sphere_area

# Gauss-Kronrod 7-15 nodes and weights on [-1, 1] (QUADPACK qk15).
_XGK = np.array([
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.000000000000000000000000000000000,
])
_WGK = np.array([
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
])
_WG = np.array([
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
])
KRONROD_NODES = np.concatenate([-_XGK[:-1], _XGK[::-1]])
KRONROD_WEIGHTS = np.concatenate([_WGK[:-1], _WGK[::-1]])
# Gauss nodes are the odd-indexed Kronrod nodes (0-based 1, 3, ..., 13)
GAUSS_WEIGHTS = np.zeros(15)
GAUSS_WEIGHTS[1:15:2] = np.concatenate([_WG[:-1], _WG[::-1]])


class QuadratureError(ArithmeticError):
    """Adaptive quadrature failed to reach its tolerance."""

    def __init__(self, message: str, estimate: float, error: float):
        super().__init__(f"{message} (estimate={estimate!r}, error={error!r})")
        self.estimate = estimate
        self.error = error


@dataclass(frozen=True)
class QuadratureSpec:
    abs_tol: float = 1e-12
    rel_tol: float = 1e-10
    max_subdivisions: int = 2000

    def __post_init__(self):
        if not (self.abs_tol > 0 and self.rel_tol > 0):
            raise ValueError("quadrature tolerances must be positive")
        if self.max_subdivisions < 1:
            raise ValueError("max_subdivisions must be >= 1")


DEFAULT_SPEC = QuadratureSpec()


@dataclass(frozen=True)
class QuadResult:
    value: float
    error: float
    panels: int


def _gk15(g, lo: float, hi: float) -> tuple[float, float]:
    half = 0.5 * (hi - lo)
    x = lo + half * (KRONROD_NODES + 1.0)
    fx = np.asarray(g(x), dtype=float)
    if not np.all(np.isfinite(fx)):
        raise QuadratureError(f"non-finite integrand on [{lo}, {hi}]", math.nan, math.inf)
    k = half * float(np.dot(KRONROD_WEIGHTS, fx))
    gs = half * float(np.dot(GAUSS_WEIGHTS, fx))
    return k, abs(k - gs)


def integrate(
    f: Callable[[np.ndarray], np.ndarray],
    a: float,
    b: float,
    spec: QuadratureSpec = DEFAULT_SPEC,
    points: Sequence[float] = (),
) -> QuadResult:
    """∫_a^b f(x) dx for vectorized f; b may be +inf.

    ``points`` are interior breakpoints (e.g. the scale ε of a bubble). The
    panel with the largest error estimate is bisected until the summed error
    meets max(abs_tol, rel_tol·|value|); ties are broken by creation order,
    so the result is deterministic.
    """
    if not b > a:
        raise ValueError(f"need b > a, got [{a}, {b}]")
    cuts = sorted({float(p) for p in points if a < p < b})
    pieces: list[tuple[Callable, float, float]] = []
    if math.isinf(b):
        c = cuts[-1] if cuts else (a if a > 0 else 1.0)
        if c > a:
            finite = [a] + [p for p in cuts if p < c] + [c]
            pieces += [(f, lo, hi) for lo, hi in zip(finite[:-1], finite[1:])]

        def tail(s, c=c):
            one_minus = 1.0 - s
            return np.asarray(f(c + s / one_minus)) / one_minus**2

        pieces.append((tail, 0.0, 1.0))
    else:
        edges = [a] + cuts + [b]
        pieces += [(f, lo, hi) for lo, hi in zip(edges[:-1], edges[1:])]

    heap = []
    total = 0.0
    err_total = 0.0
    for idx, (g, lo, hi) in enumerate(pieces):
        val, err = _gk15(g, lo, hi)
        total += val
        err_total += err
        heapq.heappush(heap, (-err, idx, g, lo, hi, val))
    counter = len(pieces)
    while err_total > max(spec.abs_tol, spec.rel_tol * abs(total)):
        if counter >= spec.max_subdivisions:
            raise QuadratureError("subdivision cap reached", total, err_total)
        neg_err, _, g, lo, hi, val = heapq.heappop(heap)
        mid = 0.5 * (lo + hi)
        if not (lo < mid < hi):
            raise QuadratureError("panel width underflow", total, err_total)
        v1, e1 = _gk15(g, lo, mid)
        v2, e2 = _gk15(g, mid, hi)
        total += v1 + v2 - val
        err_total += e1 + e2 + neg_err
        heapq.heappush(heap, (-e1, counter, g, lo, mid, v1))
        heapq.heappush(heap, (-e2, counter + 1, g, mid, hi, v2))
        counter += 2
    # resum to shed accumulated cancellation in the running totals
    total = math.fsum(item[5] for item in heap)
    err_total = math.fsum(-item[0] for item in heap)
    return QuadResult(total, err_total, len(heap))


def radial_integral(
    f: Callable[[np.ndarray], np.ndarray],
    N: int,
    interval: tuple[float, float] = (0.0, math.inf),
    spec: QuadratureSpec = DEFAULT_SPEC,
    points: Sequence[float] = (),
) -> float:
    """∫ f(r) r^{N-1} dr over ``interval`` (the sphere area is not included)."""
    a, b = interval
    res = integrate(lambda r: np.asarray(f(r)) * r ** (N - 1), a, b, spec, points)
    return res.value


def algebraic_moment(k: float, m: float) -> float:
    """Closed form of ∫_0^∞ r^k / (1 + r²)^m dr = B((k+1)/2, m-(k+1)/2) / 2."""
    a = 0.5 * (k + 1)
    b = m - a
    if not (a > 0 and b > 0):
        raise DomainError(f"∫ r^{k}/(1+r²)^{m} diverges")
    return 0.5 * math.exp(log_beta(a, b))


# --- angular moments over the upper half-sphere ------------------------------


@dataclass(frozen=True)
class AngularMoments:
    """m1 = ∫ y_N dσ, m3 = ∫ y_N³ dσ over S^{N-1} ∩ {y_N > 0}; omega = |S^{N-1}|."""

    N: int
    m1: float
    m3: float
    omega: float

    @property
    def tangential(self) -> float:
        """∫ y_j² y_N dσ over the half-sphere, for any single j < N."""
        return (self.m1 - self.m3) / (self.N - 1)


def angular_moment(N: int, k: int) -> float:
    """∫_{S^{N-1}, y_N>0} y_N^k dσ in closed form (k = 1 or 3).

    In latitude coordinates this is |S^{N-2}| ∫_0^{π/2} cos^k θ sin^{N-2} θ dθ
    = |S^{N-2}| B((k+1)/2, (N-1)/2) / 2.
    """
    if N < 5:
        raise DomainError(f"dimension N={N} not supported; N >= 5 required")
    if k not in (1, 3):
        raise DomainError(f"only the first and third moments are provided, got k={k}")
    return sphere_area(N - 2) * 0.5 * math.exp(log_beta(0.5 * (k + 1), 0.5 * (N - 1)))


def angular_moment_latitude(N: int, k: int, spec: QuadratureSpec = DEFAULT_SPEC) -> float:
    """The same moment by quadrature over the polar angle."""
    res = integrate(
        lambda t: np.cos(t) ** k * np.sin(t) ** (N - 2), 0.0, 0.5 * math.pi, spec
    )
    return sphere_area(N - 2) * res.value


def angular_moments(N: int) -> AngularMoments:
    return AngularMoments(N, angular_moment(N, 1), angular_moment(N, 3), sphere_area(N - 1))


# --- the J integrals and β_N ------------------------------------------------


@dataclass(frozen=True)
class JIntegrals:
    N: int
    J1: float
    J2: Optional[float]
    J3: float
    beta_N: float
    J2_divergent: bool = False


def j_integrals(N: int, spec: QuadratureSpec = DEFAULT_SPEC) -> JIntegrals:
    """J1, J2, J3 over R^N_+ by radial quadrature times angular moments.

    J2 diverges logarithmically for N = 5; it is then reported as None with
    ``J2_divergent`` set.
    """
    if N < 5:
        raise DomainError(f"dimension N={N} not supported; N >= 5 required")
    ang = angular_moments(N)
    pts = (1.0, 10.0)

    def radial(num):
        return integrate(lambda r: num(r) / (1.0 + r * r) ** N, 0.0, math.inf, spec, pts).value

    J1 = ang.m1 * radial(lambda r: (N + 2 * r * r) * r**N)
    J3 = ang.m1 * radial(lambda r: r**N)
    if N >= 6:
        J2 = (ang.m1 - ang.m3) * radial(lambda r: (N + 2 * r * r) * r ** (N + 2))
        divergent = False
    else:
        J2, divergent = None, True
    return JIntegrals(N, J1, J2, J3, J1 / (N + 2) - J3, divergent)


def beta_reduction_factor(N: int) -> float:
    """Ratio β_N / [Γ((N-3)/2)Γ((N+1)/2)/Γ(N)] = 2 m1 / (N+2).

    The substitution t = r² contributes 1/2, the difference of the two Beta
    values contributes 2, and the bracket (N+2r²)/(N+2) - 1 = 2(r²-1)/(N+2).
    """
    return 2.0 * angular_moment(N, 1) / (N + 2)


# --- curvature terms of the Laplacian expansion -------------------------------


@dataclass(frozen=True)
class ITerms:
    eps: float
    r0: float
    I1: float
    I2: float
    I3: float
    I4: float
    I5_order: str
    remainder: float
    warning: Optional[str] = None


def i5_order(N: int) -> str:
    if N >= 7:
        return "O(eps^2)"
    if N == 6:
        return "O(eps^2 log(1/eps))"
    return "O(eps)"


@dataclass(frozen=True)
class CurvatureSlopes:
    """Predicted first-order coefficients of the boundary expansion."""

    lap_i23: float
    lap_i4: Optional[float]
    lap_i4_log: Optional[float]
    critical: float

    @property
    def lap_total(self) -> Optional[float]:
        return None if self.lap_i4 is None else self.lap_i23 + self.lap_i4


def curvature_slopes(
    dims: DimensionParams, model: CurvatureModel, jint: Optional[JIntegrals] = None
) -> CurvatureSlopes:
    N = dims.N
    J = jint if jint is not None else j_integrals(N)
    d, H = dims.d_N, model.H
    i23 = -d * H * (N - 2) * J.J1
    if N >= 6:
        i4, i4_log = -4.0 * d * (N - 2) / (N - 1) * H * J.J2, None
    else:
        i4, i4_log = None, -8.0 * math.pi**2 * 105.0**0.25 * H
    crit = -dims.gamma_N**dims.two_star * (N - 1) * H * J.J3
    return CurvatureSlopes(i23, i4, i4_log, crit)


def _regime_check(eps: float, r0: float) -> Optional[str]:
    if not eps > 0:
        raise DomainError(f"eps must be positive, got {eps}")
    if not r0 > 0:
        raise DomainError(f"r0 must be positive, got {r0}")
    if eps > r0 / 10:
        msg = f"eps={eps:g} > r0/10={r0 / 10:g}: outside the asymptotic regime"
        warnings.warn(msg, stacklevel=3)
        return msg
    return None


def i_terms(
    dims: DimensionParams,
    eps: float,
    r0: float,
    model: CurvatureModel,
    spec: QuadratureSpec = DEFAULT_SPEC,
    jint: Optional[JIntegrals] = None,
) -> ITerms:
    """I1..I4 of the Laplacian expansion over the half-ball B+_{r0/2}.

    Each term is its displayed integrand reduced to polar form; the tangential
    factor y_j² y_N of I4 integrates to (m1 - m3)/(N-1) over the half-sphere.
    ``remainder`` is I1+...+I4 minus the first-order prediction.
    """
    N = dims.N
    if model.N != N:
        raise DomainError(f"curvature model is for N={model.N}, expected {N}")
    warn = _regime_check(eps, r0)
    rho = 0.5 * r0
    ang = angular_moments(N)
    e2 = eps * eps
    pts = [eps * t for t in (0.5, 1.0, 2.0, 5.0, 20.0, 100.0)]
    bp = BubbleParams(dims, eps)
    d, H = dims.d_N, model.H
    scale = eps ** (N - 4)

    def rad(fun):
        return integrate(fun, 0.0, rho, spec, pts).value

    I1 = 0.5 * ang.omega * rad(lambda r: np.asarray(bubble_laplacian(bp, r)) ** 2 * r ** (N - 1))
    I2 = -d * H * scale * ang.m1 * rad(lambda r: (N * e2 + 2 * r * r) ** 2 / (e2 + r * r) ** N * r**N)
    I3 = 2 * d * H * scale * ang.m1 * rad(lambda r: (N * e2 + 2 * r * r) / (e2 + r * r) ** (N - 1) * r**N)
    tang = rad(lambda r: (N * e2 + 2 * r * r) / (e2 + r * r) ** N * r ** (N + 2))
    I4 = -8.0 * d * (N - 2) / (N - 1) * scale * math.fsum(model.kappas) * ang.tangential * tang

    slopes = curvature_slopes(dims, model, jint)
    prediction = 0.5 * dims.bubble_energy + slopes.lap_i23 * eps
    if N >= 6:
        prediction += slopes.lap_i4 * eps
    else:
        prediction += slopes.lap_i4_log * eps * math.log(1.0 / eps)
    remainder = I1 + I2 + I3 + I4 - prediction
    return ITerms(eps, r0, I1, I2, I3, I4, i5_order(N), remainder, warn)


def chart_critical_norm(
    dims: DimensionParams,
    eps: float,
    r0: float,
    model: CurvatureModel,
    spec: QuadratureSpec = DEFAULT_SPEC,
) -> float:
    """∫_{B+_{r0/2}} u_ε^{2*} (1 - (N-1) H y_N) dy, the first-order pullback of
    ∫|ψ_ε|^{2*} through the chart."""
    N = dims.N
    _regime_check(eps, r0)
    ang = angular_moments(N)
    bp = BubbleParams(dims, eps)
    pts = [eps * t for t in (0.5, 1.0, 2.0, 5.0, 20.0, 100.0)]
    q = dims.two_star

    def rad(power):
        return integrate(
            lambda r: np.asarray(bubble_value(bp, r)) ** q * r**power, 0.0, 0.5 * r0, spec, pts
        ).value

    return 0.5 * ang.omega * rad(N - 1) - (N - 1) * model.H * ang.m1 * rad(N)


def full_space_norms(dims: DimensionParams, eps: float, spec: QuadratureSpec = DEFAULT_SPEC):
    """(∫|Δu_ε|², ∫|u_ε|^{2*}) over R^N; both equal S^{N/4}."""
    N = dims.N
    bp = BubbleParams(dims, eps)
    pts = [eps * t for t in (1.0, 10.0, 100.0)]
    w = dims.sphere_area
    lap2 = integrate(
        lambda r: np.asarray(bubble_laplacian(bp, r)) ** 2 * r ** (N - 1), 0.0, math.inf, spec, pts
    ).value
    lp = integrate(
        lambda r: np.asarray(bubble_value(bp, r)) ** dims.two_star * r ** (N - 1),
        0.0,
        math.inf,
        spec,
        pts,
    ).value
    return w * lap2, w * lp


def log_gamma_ratio(N: int) -> float:
    """ln(Γ(N/2)/Γ(N)), exposed for reporting."""
    return log_gamma(0.5 * N) - log_gamma(float(N))
