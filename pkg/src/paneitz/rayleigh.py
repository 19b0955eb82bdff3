"""Energy J(u), the Rayleigh quotient Q_α and ε-asymptotics.

Radial fields live on a uniform grid of [0, R]. Derivatives are 4th-order
finite differences; r = 0 is closed by even reflection and Δu(0) = N u''(0).
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.integrate import simpson

from paneitz.bubble import (
    BubbleParams,
    CutoffParams,
    GluedBubbleParams,
    bubble_derivative,
    bubble_value,
    cutoff_derivative,
    cutoff_value,
    glued_derivative,
    glued_laplacian,
    glued_value,
)
from paneitz.constants import DimensionParams, DomainError, ball_volume, dimension_params
from paneitz.quadrature import DEFAULT_SPEC, QuadratureSpec, integrate, j_integrals

MIN_NODES = 16


class FitError(ValueError):
    """Least-squares fit is underdetermined or ill-posed."""


@dataclass(frozen=True)
class RadialGrid:
    R: float
    n: int

    def __post_init__(self):
        if self.n < MIN_NODES:
            raise DomainError(f"grid needs at least {MIN_NODES} nodes, got {self.n}")
        if not (self.R > 0 and math.isfinite(self.R)):
            raise DomainError(f"grid radius must be positive and finite, got {self.R}")

    @property
    def nodes(self) -> np.ndarray:
        return np.linspace(0.0, self.R, self.n)

    @property
    def h(self) -> float:
        return self.R / (self.n - 1)


@dataclass(frozen=True)
class RadialField:
    grid: RadialGrid
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape != (self.grid.n,):
            raise DomainError(f"field has shape {v.shape}, grid has {self.grid.n} nodes")
        if not np.all(np.isfinite(v)):
            raise DomainError("field values must be finite")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @classmethod
    def sample(cls, grid: RadialGrid, fun) -> "RadialField":
        return cls(grid, np.asarray(fun(grid.nodes), dtype=float))


@dataclass(frozen=True)
class QuotientBreakdown:
    lap2: float
    grad2: float
    l2: float
    lp: float
    alpha: float
    two_star: float
    J: float
    Q: float

    @classmethod
    def from_integrals(cls, lap2, grad2, l2, lp, alpha, two_star) -> "QuotientBreakdown":
        J = lap2 + grad2 + alpha * l2
        Q = J / lp ** (2.0 / two_star) if lp > 0 else math.inf
        return cls(lap2, grad2, l2, lp, alpha, two_star, J, Q)


# --- finite differences -----------------------------------------------------


def fd_weights(offsets: Sequence[int], order: int) -> np.ndarray:
    """Weights w with Σ w_k f(x + k h) ≈ h^order f^{(order)}(x)."""
    offsets = np.asarray(offsets, dtype=float)
    m = offsets.size
    V = np.vander(offsets, m, increasing=True).T
    rhs = np.zeros(m)
    rhs[order] = math.factorial(order)
    return np.linalg.solve(V, rhs)


_C1 = fd_weights([-2, -1, 0, 1, 2], 1)
_C2 = fd_weights([-2, -1, 0, 1, 2], 2)


def radial_derivatives(u: RadialField, boundary: str = "one_sided") -> tuple[np.ndarray, np.ndarray]:
    """(u', u'') at every node.

    Near r = 0 the field is extended evenly. Near r = R either a one-sided
    4th-order stencil is used (``"one_sided"``, no constraint on u'(R)) or the
    field is reflected evenly about R (``"neumann_ghost"``, imposes u'(R) = 0).
    """
    v = u.values
    n, h = u.grid.n, u.grid.h
    if boundary == "neumann_ghost":
        ext = np.concatenate([v[2:0:-1], v, v[-2:-4:-1]])
        d1 = sum(c * ext[k : k + n] for k, c in enumerate(_C1)) / h
        d2 = sum(c * ext[k : k + n] for k, c in enumerate(_C2)) / h**2
        d1[-1] = 0.0
    elif boundary == "one_sided":
        ext = np.concatenate([v[2:0:-1], v])
        m = n - 2
        d1 = np.empty(n)
        d2 = np.empty(n)
        d1[:m] = sum(c * ext[k : k + m] for k, c in enumerate(_C1)) / h
        d2[:m] = sum(c * ext[k : k + m] for k, c in enumerate(_C2)) / h**2
        for i, shift in ((n - 2, 1), (n - 1, 0)):
            offs1 = list(range(-4 + shift, shift + 1))
            offs2 = list(range(-5 + shift, shift + 1))
            d1[i] = fd_weights(offs1, 1) @ v[[i + k for k in offs1]] / h
            d2[i] = fd_weights(offs2, 2) @ v[[i + k for k in offs2]] / h**2
    else:
        raise ValueError(f"unknown boundary closure {boundary!r}")
    d1[0] = 0.0
    return d1, d2


def radial_laplacian(u: RadialField, N: int, boundary: str = "one_sided") -> np.ndarray:
    d1, d2 = radial_derivatives(u, boundary)
    r = u.grid.nodes
    lap = np.empty_like(d2)
    lap[1:] = d2[1:] + (N - 1) * d1[1:] / r[1:]
    lap[0] = N * d2[0]
    return lap


def field_norms(
    u: RadialField, dims: DimensionParams, alpha: float, boundary: str = "one_sided"
) -> QuotientBreakdown:
    """The four integrals of J(u) and ∫|u|^{2*} over the ball of radius R."""
    if not alpha > 0:
        raise DomainError(f"alpha must be positive, got {alpha}")
    N = dims.N
    r = u.grid.nodes
    w = dims.sphere_area * r ** (N - 1)
    d1, _ = radial_derivatives(u, boundary)
    lap = radial_laplacian(u, N, boundary)
    v = u.values

    def integral(g):
        return float(simpson(g * w, x=r))

    return QuotientBreakdown.from_integrals(
        integral(lap**2),
        integral(d1**2),
        integral(v**2),
        integral(np.abs(v) ** dims.two_star),
        alpha,
        dims.two_star,
    )


def constant_quotient(dims: DimensionParams, alpha: float, R: float = 1.0) -> float:
    """Q_α of a constant on B_R: α|B_R|^{4/N}."""
    return alpha * ball_volume(dims.N, R) ** (4.0 / dims.N)


# --- half-space quotient of the glued bubble ---------------------------------


def halfspace_bubble_quotient(
    dims: DimensionParams, alpha: float, eps: float, spec: QuadratureSpec = DEFAULT_SPEC
) -> QuotientBreakdown:
    """Q_α(z_ε) over the half-space.

    z_ε is radial, so every integral over R^N_+ is half the full-space one;
    the pieces on [0, 1/2] and [1/2, 1] are integrated separately because
    z_ε is only C¹ across r = 1/2.
    """
    if not (0 < eps <= 0.25):
        raise DomainError(f"eps must lie in (0, 1/4], got {eps}")
    N = dims.N
    g = GluedBubbleParams.of(dims, eps)
    half_area = 0.5 * dims.sphere_area
    pts = [eps * t for t in (1.0, 10.0, 100.0) if eps * t < 0.5]

    def integral(fun):
        inner = integrate(lambda r: fun(r) * r ** (N - 1), 0.0, 0.5, spec, pts).value
        outer = integrate(lambda r: fun(r) * r ** (N - 1), 0.5, 1.0, spec).value
        return half_area * (inner + outer)

    return QuotientBreakdown.from_integrals(
        integral(lambda r: np.asarray(glued_laplacian(g, r)) ** 2),
        integral(lambda r: np.asarray(glued_derivative(g, r)) ** 2),
        integral(lambda r: np.asarray(glued_value(g, r)) ** 2),
        integral(lambda r: np.abs(np.asarray(glued_value(g, r))) ** dims.two_star),
        alpha,
        dims.two_star,
    )


def halfspace_constant(dims: DimensionParams) -> float:
    return dims.S / 2.0 ** (4.0 / dims.N)


# --- asymptotic fits ---------------------------------------------------------


class FitModel(enum.Enum):
    LINEAR = "linear"
    LINEAR_LOG = "linear_log"


@dataclass(frozen=True)
class FitResult:
    intercept: float
    slope: float
    residual: float
    linear: Optional[float] = None


def asymptotic_fit(
    samples: Sequence[tuple[float, float]], model: FitModel, extra_linear: bool = False
) -> FitResult:
    """Least squares value ≈ intercept + slope·φ(ε) [+ linear·ε].

    φ(ε) = ε for LINEAR and ε·ln(1/ε) for LINEAR_LOG. ``extra_linear`` adds a
    plain ε column, which is needed when the expansion carries both
    ε·log(1/ε) and ε terms. ``residual`` is the RMS misfit.
    """
    model = FitModel(model)
    eps = np.array([s[0] for s in samples], dtype=float)
    vals = np.array([s[1] for s in samples], dtype=float)
    cols = 2 + (1 if extra_linear else 0)
    if eps.size < max(3, cols + 1 if extra_linear else 3):
        raise FitError(f"need at least {max(3, cols + 1 if extra_linear else 3)} samples, got {eps.size}")
    if np.unique(eps).size != eps.size:
        raise FitError("sample eps values must be distinct")
    if np.any(eps <= 0) or np.any(eps >= 1):
        raise FitError("sample eps values must lie in (0, 1)")
    phi = eps if model is FitModel.LINEAR else eps * np.log(1.0 / eps)
    X = [np.ones_like(eps), phi]
    if extra_linear:
        if model is FitModel.LINEAR:
            raise FitError("extra_linear duplicates the LINEAR basis")
        X.append(eps)
    X = np.column_stack(X)
    # column scaling keeps the normal matrix well conditioned
    scale = np.max(np.abs(X), axis=0)
    coef, _, rank, _ = np.linalg.lstsq(X / scale, vals, rcond=None)
    if rank < X.shape[1]:
        raise FitError("samples are collinear for this model")
    coef = coef / scale
    resid = vals - X @ coef
    rms = float(np.sqrt(np.mean(resid**2)))
    return FitResult(float(coef[0]), float(coef[1]), rms, float(coef[2]) if extra_linear else None)


def fit_window(n: int = 8, lo: float = 1e-3, hi: float = 1e-2) -> np.ndarray:
    return np.geomspace(lo, hi, n)


# --- orders of the lower-order norms ----------------------------------------


@dataclass(frozen=True)
class OrderEstimate:
    """Empirical ε-order of a norm: value ~ ε^exponent [· log(1/ε)]."""

    exponent: float
    log_corrected: bool
    residual_power: float
    residual_log: float


@dataclass(frozen=True)
class SecondaryOrders:
    N: int
    grad2: OrderEstimate
    l2: OrderEstimate


def expected_orders(N: int) -> tuple[tuple[int, bool], tuple[int, bool]]:
    """((k, log?) for ∫|∇ψ_ε|², (k, log?) for ∫|ψ_ε|²)."""
    if N < 5:
        raise DomainError(f"dimension N={N} not supported; N >= 5 required")
    grad = {5: (1, False), 6: (2, True)}.get(N, (2, False))
    l2 = {5: (1, False), 6: (2, False), 7: (3, False), 8: (4, True)}.get(N, (4, False))
    return grad, l2


def _order_fit(eps: np.ndarray, vals: np.ndarray) -> OrderEstimate:
    x = np.log(eps)
    # the ε column absorbs the O(ε) relative correction, whose curvature in
    # log-log coordinates would otherwise pass for a log(1/ε) factor
    X = np.column_stack([np.ones_like(x), x, eps])
    out = []
    for y in (np.log(vals), np.log(vals) - np.log(np.log(1.0 / eps))):
        coef, *_ = np.linalg.lstsq(X, y, rcond=None)
        out.append((float(coef[1]), float(np.sqrt(np.mean((y - X @ coef) ** 2)))))
    (k_pow, r_pow), (k_log, r_log) = out
    if r_log < r_pow:
        return OrderEstimate(k_log, True, r_pow, r_log)
    return OrderEstimate(k_pow, False, r_pow, r_log)


def cutoff_bubble_norms(
    dims: DimensionParams, eps: float, r0: float = 1.0, spec: QuadratureSpec = DEFAULT_SPEC
) -> tuple[float, float]:
    """(∫|∇ψ_ε|², ∫|ψ_ε|²) over B+_{r0/2} for ψ_ε = η u_ε in flat coordinates."""
    N = dims.N
    bp = BubbleParams(dims, eps)
    c = CutoffParams(r0)
    pts = [t for t in (eps, 10 * eps, 0.25 * r0) if t < 0.5 * r0]

    def grad(r):
        return (
            np.asarray(cutoff_derivative(c, r)) * np.asarray(bubble_value(bp, r))
            + np.asarray(cutoff_value(c, r)) * np.asarray(bubble_derivative(bp, r))
        )

    def val(r):
        return np.asarray(cutoff_value(c, r)) * np.asarray(bubble_value(bp, r))

    half_area = 0.5 * dims.sphere_area
    g2 = integrate(lambda r: grad(r) ** 2 * r ** (N - 1), 0.0, 0.5 * r0, spec, pts).value
    l2 = integrate(lambda r: val(r) ** 2 * r ** (N - 1), 0.0, 0.5 * r0, spec, pts).value
    return half_area * g2, half_area * l2


def secondary_norm_orders(
    dims: DimensionParams, eps: Optional[Sequence[float]] = None, r0: float = 1.0
) -> SecondaryOrders:
    """Log-log exponents of ∫|∇ψ_ε|² and ∫|ψ_ε|² against ε.

    Two models are fitted to each norm, log v = c + k log ε + dε and
    log v - log log(1/ε) = c + k log ε + dε; the one with the smaller RMS
    residual decides whether a logarithmic correction is reported.
    """
    eps = fit_window() if eps is None else np.asarray(eps, dtype=float)
    if eps.size < 3:
        raise FitError("need at least 3 eps values")
    if np.any(eps <= 0) or np.any(eps >= 0.1 * r0):
        raise DomainError("eps values must lie in (0, r0/10)")
    norms = np.array([cutoff_bubble_norms(dims, float(e), r0) for e in eps])
    return SecondaryOrders(dims.N, _order_fit(eps, norms[:, 0]), _order_fit(eps, norms[:, 1]))


def composite_bracket(N: int) -> float:
    """d_N(N-2)(J1 + 4J2/(N-1)) - ((N-4)(N-1)/N) γ_N^{2*} J3; positive for N >= 6."""
    if N < 6:
        raise DomainError("the composite coefficient needs a finite J2 (N >= 6)")
    d = dimension_params(N)
    J = j_integrals(N)
    return d.d_N * (N - 2) * (J.J1 + 4 * J.J2 / (N - 1)) - (N - 4) * (N - 1) / N * d.gamma_N**d.two_star * J.J3
