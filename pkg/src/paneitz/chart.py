"""Boundary-straightening chart for a quadratic osculating boundary.

Near a boundary point placed at the origin with inner normal e_N, the
boundary is the graph x_N = ρ(x') with ρ(x') = Σ κ_j x_j². The chart

    Φ(y', y_N) = (y', ρ(y')) - y_N ν(y'),   ν = (∇ρ(y'), -1)

sends the flat half-space {y_N > 0} to the domain side. ν is deliberately
not normalized.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from paneitz.constants import DomainError


@dataclass(frozen=True)
class CurvatureModel:
    N: int
    kappas: tuple[float, ...]
    H: float
    chart_radius: float

    def __post_init__(self):
        if len(self.kappas) != self.N - 1:
            raise DomainError(f"need N-1={self.N - 1} principal curvatures, got {len(self.kappas)}")
        if not math.isclose(self.H, mean_curvature(self.kappas), rel_tol=1e-14, abs_tol=1e-300):
            raise DomainError("stored H does not match the principal curvatures")
        if self.H <= 0:
            warnings.warn(f"mean curvature H={self.H} is not positive", stacklevel=3)

    @classmethod
    def from_kappas(cls, kappas, chart_radius: float | None = None) -> "CurvatureModel":
        kappas = tuple(float(k) for k in kappas)
        if chart_radius is None:
            chart_radius = 0.2 / max(1.0, max(abs(k) for k in kappas))
        return cls(len(kappas) + 1, kappas, mean_curvature(kappas), float(chart_radius))

    @classmethod
    def uniform(cls, N: int, kappa: float = 1.0) -> "CurvatureModel":
        return cls.from_kappas([kappa] * (N - 1))

    @property
    def kappa_array(self) -> np.ndarray:
        return np.asarray(self.kappas)


def mean_curvature(kappas) -> float:
    """H = (2/(N-1)) Σ κ_j."""
    kappas = list(kappas)
    return 2.0 * math.fsum(kappas) / len(kappas)


def _point(model: CurvatureModel, y, size: int) -> np.ndarray:
    y = np.asarray(y, dtype=float)
    if y.shape != (size,):
        raise DomainError(f"expected a point with {size} coordinates, got shape {y.shape}")
    if np.linalg.norm(y) > model.chart_radius * (1 + 1e-12):
        raise DomainError(f"|y|={np.linalg.norm(y):.3g} exceeds chart radius {model.chart_radius:.3g}")
    return y


def rho_value(model: CurvatureModel, xprime) -> float:
    xp = _point(model, xprime, model.N - 1)
    return float(np.dot(model.kappa_array, xp * xp))


def rho_gradient(model: CurvatureModel, xprime) -> np.ndarray:
    xp = _point(model, xprime, model.N - 1)
    return 2.0 * model.kappa_array * xp


def normal_vector(model: CurvatureModel, xprime, normalized: bool = False) -> np.ndarray:
    nu = np.append(rho_gradient(model, xprime), -1.0)
    if normalized:
        nu /= np.linalg.norm(nu)
    return nu


def phi_map(model: CurvatureModel, y, normalized: bool = False) -> np.ndarray:
    """Φ(y). ``normalized=True`` swaps ν for ν/|ν|; that variant is not the
    one the determinant and Jacobian expansions refer to."""
    y = _point(model, y, model.N)
    yp, yN = y[:-1], y[-1]
    base = np.append(yp, rho_value(model, yp))
    return base - yN * normal_vector(model, yp, normalized=normalized)


def phi_jacobian(model: CurvatureModel, y) -> np.ndarray:
    """Analytic DΦ(y) for the un-normalized ν.

    Rows j < N: ∂Φ_j/∂y_j = 1 - 2κ_j y_N, ∂Φ_j/∂y_N = -2κ_j y_j.
    Row N: ∂Φ_N/∂y_j = 2κ_j y_j, ∂Φ_N/∂y_N = 1.
    """
    y = _point(model, y, model.N)
    k = model.kappa_array
    yp, yN = y[:-1], y[-1]
    D = np.eye(model.N)
    D[:-1, :-1] -= np.diag(2.0 * k * yN)
    D[:-1, -1] = -2.0 * k * yp
    D[-1, :-1] = 2.0 * k * yp
    return D


def a_matrix(model: CurvatureModel, y) -> np.ndarray:
    """First-order part A(y) of DΦ(y) = Id + A(y) + O(|y|²)."""
    y = _point(model, y, model.N)
    k = model.kappa_array
    yp, yN = y[:-1], y[-1]
    A = np.zeros((model.N, model.N))
    A[:-1, :-1] = np.diag(-2.0 * yN * k)
    A[:-1, -1] = -2.0 * k * yp
    A[-1, :-1] = 2.0 * k * yp
    return A


def jacobian_determinant(model: CurvatureModel, y) -> float:
    # LU with partial pivoting
    return float(np.linalg.det(phi_jacobian(model, y)))


def jacobian_expansion_error(model: CurvatureModel, y) -> float:
    """|det DΦ(y) - (1 - (N-1) H y_N)|."""
    y = _point(model, y, model.N)
    return abs(jacobian_determinant(model, y) - (1.0 - (model.N - 1) * model.H * y[-1]))


def inverse_jacobian_model(model: CurvatureModel, y) -> np.ndarray:
    """First-order inverse Id - A(y) of the chart Jacobian."""
    return np.eye(model.N) - a_matrix(model, y)


def inverse_jacobian_error(model: CurvatureModel, y) -> float:
    """max-entry distance between (DΦ(y))^{-1} and Id - A(y)."""
    inv = np.linalg.inv(phi_jacobian(model, y))
    return float(np.max(np.abs(inv - inverse_jacobian_model(model, y))))


def numerical_jacobian(fun, y, h: float = 1e-6) -> np.ndarray:
    """Central-difference Jacobian of a map R^N -> R^N."""
    y = np.asarray(y, dtype=float)
    cols = []
    for i in range(y.size):
        e = np.zeros_like(y)
        e[i] = h
        cols.append((np.asarray(fun(y + e)) - np.asarray(fun(y - e))) / (2 * h))
    return np.column_stack(cols)
