"""The bubble family u_ε, the compactly supported glued family z_ε and the
radial cutoff η.

All functions accept scalars or numpy arrays of radii and return arrays of
the same shape (0-d arrays come back as floats).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from paneitz.constants import DimensionParams, DomainError, dimension_params

GLUE_RADIUS = 0.5


def _radii(r):
    r = np.asarray(r, dtype=float)
    if np.any(r < 0):
        raise DomainError("radii must be nonnegative")
    return r


def _out(x):
    return float(x) if np.ndim(x) == 0 else x


@dataclass(frozen=True)
class BubbleParams:
    dims: DimensionParams
    eps: float

    def __post_init__(self):
        if not self.eps > 0:
            raise DomainError(f"concentration scale must be positive, got {self.eps}")

    @classmethod
    def of(cls, N: int, eps: float) -> "BubbleParams":
        return cls(dimension_params(N), float(eps))

    @property
    def amplitude(self) -> float:
        """γ_N ε^{(N-4)/2}, the factor shared by u_ε and all its derivatives."""
        return self.dims.gamma_N * self.eps ** (0.5 * (self.dims.N - 4))


def bubble_value(p: BubbleParams, r):
    """u_ε(r) = γ_N ε^{(N-4)/2} / (ε² + r²)^{(N-4)/2}."""
    r = _radii(r)
    N = p.dims.N
    return _out(p.amplitude * (p.eps**2 + r**2) ** (-0.5 * (N - 4)))


def bubble_derivative(p: BubbleParams, r):
    """∂_r u_ε = -γ_N (N-4) ε^{(N-4)/2} r / (ε² + r²)^{(N-2)/2}."""
    r = _radii(r)
    N = p.dims.N
    return _out(-p.amplitude * (N - 4) * r * (p.eps**2 + r**2) ** (-0.5 * (N - 2)))


def bubble_second_derivative(p: BubbleParams, r):
    """∂_r² u_ε, the radial-radial entry of the Hessian."""
    r = _radii(r)
    N = p.dims.N
    s = p.eps**2 + r**2
    return _out(p.amplitude * (N - 4) * (-(s ** (-0.5 * (N - 2))) + (N - 2) * r**2 * s ** (-0.5 * N)))


def bubble_laplacian(p: BubbleParams, r):
    """Δu_ε = -γ_N (N-4) ε^{(N-4)/2} (Nε² + 2r²) / (ε² + r²)^{N/2}; always negative."""
    r = _radii(r)
    N = p.dims.N
    e2 = p.eps**2
    return _out(-p.amplitude * (N - 4) * (N * e2 + 2 * r**2) * (e2 + r**2) ** (-0.5 * N))


def bubble_laplacian_derivative(p: BubbleParams, r):
    """∂_r Δu_ε = γ_N (N-4)(N-2) ε^{(N-4)/2} r ((N+2)ε² + 2r²) / (ε² + r²)^{N/2+1}."""
    r = _radii(r)
    N = p.dims.N
    e2 = p.eps**2
    c = p.amplitude * (N - 4) * (N - 2)
    return _out(c * r * ((N + 2) * e2 + 2 * r**2) * (e2 + r**2) ** (-0.5 * N - 1))


def bubble_bilaplacian(p: BubbleParams, r):
    """Δ²u_ε from the radial Laplacian of the closed-form Δu_ε.

    With s = ε² + r², P = (N+2)ε² + 2r² and c = γ_N(N-4)(N-2)ε^{(N-4)/2}:
        r^{N-1} ∂_r Δu_ε = c r^N s^{-N/2-1} P
        ∂_r(...) / r^{N-1} = c s^{-N/2-2} [N s P - (N+2) r² P + 4 r² s]
    and the bracket collapses to N(N+2)ε⁴ (the ε²r² and r⁴ terms cancel).
    """
    r = _radii(r)
    N = p.dims.N
    e2 = p.eps**2
    c = p.amplitude * (N - 4) * (N - 2)
    return _out(c * N * (N + 2) * e2**2 * (e2 + r**2) ** (-0.5 * N - 2))


def _fd_radial_laplacian(g, r, N: int, h):
    """Radial Laplacian of a smooth even function by 6th-order central differences."""
    gm3, gm2, gm1 = g(np.abs(r - 3 * h)), g(np.abs(r - 2 * h)), g(np.abs(r - h))
    g0 = g(r)
    gp1, gp2, gp3 = g(r + h), g(r + 2 * h), g(r + 3 * h)
    d1 = (-gm3 + 9 * gm2 - 45 * gm1 + 45 * gp1 - 9 * gp2 + gp3) / (60 * h)
    d2 = (2 * gm3 - 27 * gm2 + 270 * gm1 - 490 * g0 + 270 * gp1 - 27 * gp2 + 2 * gp3) / (180 * h**2)
    with np.errstate(divide="ignore", invalid="ignore"):
        lap = np.where(r > 0, d2 + (N - 1) * d1 / np.where(r > 0, r, 1.0), N * d2)
    return lap


def bubble_pde_residual(p: BubbleParams, r, method: str = "analytic"):
    """Δ²u_ε - u_ε^{(N+4)/(N-4)} at r.

    ``method="analytic"`` uses the hand-derived Δ²u_ε; ``method="fd"``
    applies a 6th-order finite-difference radial Laplacian to the closed-form
    Δu_ε and serves as a cross-check (its error is the scheme error).
    """
    r = _radii(r)
    rhs = np.asarray(bubble_value(p, r)) ** p.dims.exponent
    if method == "analytic":
        lhs = np.asarray(bubble_bilaplacian(p, r))
    elif method == "fd":
        h = 2e-2 * np.hypot(p.eps, r)
        lhs = _fd_radial_laplacian(lambda x: np.asarray(bubble_laplacian(p, x)), r, p.dims.N, h)
    else:
        raise ValueError(f"unknown method {method!r}")
    return _out(lhs - rhs)


# --- glued compactly supported family ---------------------------------------


def glued_coefficients(dims: DimensionParams, eps: float) -> tuple[float, float]:
    """(a(ε), b(ε)) making w(r) = a(r-1)³ + b(r-1)² a C¹ continuation of
    ϑ_ε = u_ε - u_ε(1) at r = 1/2."""
    bp = BubbleParams(dims, float(eps))
    t = GLUE_RADIUS - 1.0
    theta = bubble_value(bp, GLUE_RADIUS) - bubble_value(bp, 1.0)
    dtheta = bubble_derivative(bp, GLUE_RADIUS)
    system = np.array([[t**3, t**2], [3 * t**2, 2 * t]])
    a, b = np.linalg.solve(system, np.array([theta, dtheta]))
    return float(a), float(b)


@dataclass(frozen=True)
class GluedBubbleParams:
    bubble: BubbleParams
    a_eps: float
    b_eps: float
    r0: float = field(default=GLUE_RADIUS, init=False)

    @classmethod
    def of(cls, dims: DimensionParams, eps: float) -> "GluedBubbleParams":
        a, b = glued_coefficients(dims, eps)
        return cls(BubbleParams(dims, float(eps)), a, b)

    @property
    def shift(self) -> float:
        """u_ε(1), subtracted so that the inner piece vanishes at r = 1."""
        return bubble_value(self.bubble, 1.0)


def _glued(g: GluedBubbleParams, r, inner, outer):
    r = _radii(r)
    t = r - 1.0
    res = np.where(r <= g.r0, inner(np.minimum(r, g.r0)), outer(t))
    return _out(np.where(r >= 1.0, 0.0, res))


def glued_value(g: GluedBubbleParams, r):
    """z_ε: ϑ_ε on [0, 1/2], the cubic blend w_ε on [1/2, 1], zero beyond."""
    return _glued(
        g,
        r,
        lambda x: np.asarray(bubble_value(g.bubble, x)) - g.shift,
        lambda t: g.a_eps * t**3 + g.b_eps * t**2,
    )


def glued_derivative(g: GluedBubbleParams, r):
    return _glued(
        g,
        r,
        lambda x: np.asarray(bubble_derivative(g.bubble, x)),
        lambda t: 3 * g.a_eps * t**2 + 2 * g.b_eps * t,
    )


def glued_second_derivative(g: GluedBubbleParams, r):
    # one-sided value from the inner piece at r = 1/2; z_ε is only C¹ there
    return _glued(
        g,
        r,
        lambda x: np.asarray(bubble_second_derivative(g.bubble, x)),
        lambda t: 6 * g.a_eps * t + 2 * g.b_eps,
    )


def glued_laplacian(g: GluedBubbleParams, r):
    r = _radii(r)
    N = g.bubble.dims.N
    d1 = np.asarray(glued_derivative(g, r))
    d2 = np.asarray(glued_second_derivative(g, r))
    inner = np.asarray(bubble_laplacian(g.bubble, np.minimum(r, g.r0)))
    with np.errstate(divide="ignore", invalid="ignore"):
        outer = d2 + (N - 1) * d1 / np.where(r > 0, r, 1.0)
    res = np.where(r <= g.r0, inner, outer)
    return _out(np.where(r >= 1.0, 0.0, res))


# --- smooth radial cutoff ----------------------------------------------------


@dataclass(frozen=True)
class CutoffParams:
    """η ≡ 1 on [0, r0/4], η ≡ 0 on [r0/2, ∞), quintic smoothstep in between (C²)."""

    r0: float

    def __post_init__(self):
        if not self.r0 > 0:
            raise DomainError(f"cutoff radius must be positive, got {self.r0}")


def _smoothstep(c: CutoffParams, r):
    r = _radii(r)
    lo = 0.25 * c.r0
    width = 0.25 * c.r0
    t = np.clip((r - lo) / width, 0.0, 1.0)
    return t, width


def cutoff_value(c: CutoffParams, r):
    t, _ = _smoothstep(c, r)
    return _out(1.0 - t**3 * (10 - 15 * t + 6 * t**2))


def cutoff_derivative(c: CutoffParams, r):
    t, w = _smoothstep(c, r)
    return _out(-30 * t**2 * (1 - t) ** 2 / w)


def cutoff_second_derivative(c: CutoffParams, r):
    t, w = _smoothstep(c, r)
    return _out(-60 * t * (1 - t) * (1 - 2 * t) / w**2)
