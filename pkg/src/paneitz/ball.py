"""Radial minimization of Q_α on a ball with Neumann conditions.

Problem:  Δ²u - c Δu + αu = |u|^{p-1}u in B_R,  ∂_r u = ∂_r Δu = 0 on ∂B_R
(c = 1 is the equation of interest; other values of c only serve the scaling
identity R ↔ (1, c R², α R⁴)).

Discretization: C¹ piecewise cubic Hermite elements in r with nodal value and
slope unknowns. The slope unknowns at r = 0 (regularity) and r = R (Neumann)
are removed; ∂_r Δu = 0 at r = R is the natural condition of the weak form
∫ΔuΔv. Element integrals are Gauss-Legendre with N+4 points, exact for the
three bilinear forms, so a constant is an exact discrete solution and the
discrete energy is the continuum energy of the piecewise cubic.

A vertex-centred finite-difference closure of Δ² at r = 0 admits a
grid-scale spike whose discrete quotient stays far below S at every
resolution; conforming elements have no such mode, which is why they are
used here.
"""

from __future__ import annotations

import dataclasses
import enum
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Optional, Sequence

import numpy as np
from scipy.linalg import cho_solve_banded, cholesky_banded
from scipy.sparse import coo_matrix, csr_matrix
from scipy.sparse.linalg import eigsh

from paneitz.constants import DimensionParams, DomainError, alpha_bar, ball_volume, dimension_params
from paneitz.rayleigh import QuotientBreakdown, RadialField, RadialGrid

CLASSIFICATION_THRESHOLD = 1e-3
# relative slack on the Q-decrease test; a strict test stalls on roundoff
# once the flow is within ~1e-8 of a critical point
_ACCEPT_SLACK = 1e-12


class Classification(enum.Enum):
    CONSTANT = "CONSTANT"
    NONCONSTANT = "NONCONSTANT"


class BracketError(RuntimeError):
    """The classification does not change between the two ends of a scan."""

    def __init__(self, message: str, lo_class: Classification, hi_class: Classification):
        super().__init__(message)
        self.lo_class = lo_class
        self.hi_class = hi_class


class EigenError(RuntimeError):
    pass


@dataclass(frozen=True)
class BallProblem:
    dims: DimensionParams
    R: float
    alpha: float
    grid: RadialGrid
    exponent_p: Optional[float] = None
    grad_coeff: float = 1.0

    def __post_init__(self):
        if not self.alpha > 0:
            raise DomainError(f"alpha must be positive, got {self.alpha}")
        if not math.isclose(self.grid.R, self.R, rel_tol=1e-14):
            raise DomainError("grid radius differs from the ball radius")
        crit = self.dims.exponent
        if self.exponent_p is None:
            object.__setattr__(self, "exponent_p", crit)
        elif not (1.0 < self.exponent_p <= crit * (1 + 1e-15)):
            raise DomainError(f"exponent_p must lie in (1, {crit:g}], got {self.exponent_p}")
        if not self.grad_coeff >= 0:
            raise DomainError("grad_coeff must be nonnegative")

    @classmethod
    def create(cls, N: int, alpha: float, R: float = 1.0, n: int = 512, **kw) -> "BallProblem":
        return cls(dimension_params(N), float(R), float(alpha), RadialGrid(float(R), int(n)), **kw)

    @property
    def q(self) -> float:
        """Integrability exponent p + 1 of the constraint."""
        return self.exponent_p + 1.0

    @property
    def volume(self) -> float:
        return ball_volume(self.dims.N, self.R)

    @property
    def constant_solution(self) -> float:
        """u₁ = α^{1/(p-1)}, i.e. α^{(N-4)/8} for the critical power."""
        return self.alpha ** (1.0 / (self.exponent_p - 1.0))

    def with_alpha(self, alpha: float) -> "BallProblem":
        return dataclasses.replace(self, alpha=float(alpha))


# --- Hermite elements ---------------------------------------------------------


def hermite_basis(t: np.ndarray, h: float):
    """Cubic Hermite shape functions on [0, h] at t ∈ [0, 1] with their first
    and second r-derivatives; order (u_left, u'_left, u_right, u'_right)."""
    H = np.array([1 - 3 * t**2 + 2 * t**3, h * (t - 2 * t**2 + t**3), 3 * t**2 - 2 * t**3, h * (-(t**2) + t**3)])
    D = np.array([-6 * t + 6 * t**2, h * (1 - 4 * t + 3 * t**2), 6 * t - 6 * t**2, h * (-2 * t + 3 * t**2)]) / h
    D2 = np.array([-6 + 12 * t, h * (-4 + 6 * t), 6 - 12 * t, h * (-2 + 6 * t)]) / h**2
    return H, D, D2


@dataclass(frozen=True, eq=False)
class DiscreteOperator:
    """Weighted FE matrices on the admissible unknowns.

    mass ~ ∫uv, stiffness ~ ∫∇u·∇v (the form of -Δ), bilaplacian ~ ∫ΔuΔv
    (the form of Δ²), all over the ball (sphere area included).
    ``*_banded`` hold the upper band in LAPACK layout (bandwidth 3).
    """

    N: int
    grid: RadialGrid
    keep: np.ndarray
    mass: csr_matrix
    stiffness: csr_matrix
    bilaplacian: csr_matrix
    quad_weights: np.ndarray = field(repr=False)
    quad_basis: np.ndarray = field(repr=False)
    quad_slope: np.ndarray = field(repr=False)
    quad_laplacian: np.ndarray = field(repr=False)

    @property
    def size(self) -> int:
        return self.keep.size

    def full(self, x: np.ndarray) -> np.ndarray:
        f = np.zeros(2 * self.grid.n)
        f[self.keep] = x
        return f

    def nodal_values(self, x: np.ndarray) -> np.ndarray:
        return self.full(x)[0::2]

    def nodal_slopes(self, x: np.ndarray) -> np.ndarray:
        return self.full(x)[1::2]

    def from_nodal(self, values, slopes) -> np.ndarray:
        f = np.empty(2 * self.grid.n)
        f[0::2] = values
        f[1::2] = slopes
        return f[self.keep]

    def constant_vector(self, c: float = 1.0) -> np.ndarray:
        return self.from_nodal(np.full(self.grid.n, c), np.zeros(self.grid.n))

    def _local(self, x: np.ndarray) -> np.ndarray:
        f = self.full(x).reshape(self.grid.n, 2)
        return np.concatenate([f[:-1], f[1:]], axis=1)

    def at_quadrature(self, x: np.ndarray) -> np.ndarray:
        return self._local(x) @ self.quad_basis

    def energy_parts(self, x: np.ndarray) -> tuple[float, float, float]:
        """(∫|Δu|², ∫|∇u|², ∫u²) from pointwise values at the Gauss points.

        Algebraically equal to the quadratic forms of the three matrices, but
        free of the O(h⁻⁴) cancellation that x·Bx suffers on smooth fields.
        """
        loc = self._local(x)
        w = self.quad_weights
        lap = np.einsum("ej,ejg->eg", loc, self.quad_laplacian)
        grad = loc @ self.quad_slope
        val = loc @ self.quad_basis
        return float(np.sum(w * lap**2)), float(np.sum(w * grad**2)), float(np.sum(w * val**2))

    def _scatter(self, g: np.ndarray) -> np.ndarray:
        f = np.zeros((self.grid.n, 2))
        f[:-1] += g[:, :2]
        f[1:] += g[:, 2:]
        return f.reshape(-1)[self.keep]

    def apply(self, x: np.ndarray, alpha: float, grad_coeff: float = 1.0) -> np.ndarray:
        """(B + cK + αM) x, assembled from pointwise Δu, ∇u, u."""
        loc = self._local(x)
        w = self.quad_weights
        lap = np.einsum("ej,ejg->eg", loc, self.quad_laplacian) * w
        grad = (loc @ self.quad_slope) * w
        val = (loc @ self.quad_basis) * w
        g = (
            np.einsum("eg,ejg->ej", lap, self.quad_laplacian)
            + grad_coeff * grad @ self.quad_slope.T
            + alpha * val @ self.quad_basis.T
        )
        return self._scatter(g)

    def lp_integral(self, x: np.ndarray, q: float) -> float:
        return float(np.sum(self.quad_weights * np.abs(self.at_quadrature(x)) ** q))

    def lp_gradient(self, x: np.ndarray, q: float) -> np.ndarray:
        """Load vector of |u|^{q-2}u, i.e. (1/q) times the gradient of ∫|u|^q."""
        uq = self.at_quadrature(x)
        g = (np.abs(uq) ** (q - 2) * uq * self.quad_weights) @ self.quad_basis.T
        return self._scatter(g)

    def system(self, alpha: float, grad_coeff: float = 1.0) -> csr_matrix:
        return (self.bilaplacian + grad_coeff * self.stiffness + alpha * self.mass).tocsr()


def to_banded(A: csr_matrix, bandwidth: int = 3) -> np.ndarray:
    n = A.shape[0]
    ab = np.zeros((bandwidth + 1, n))
    for k in range(bandwidth + 1):
        ab[bandwidth - k, k:] = A.diagonal(k)
    return ab


@lru_cache(maxsize=16)
def _assemble(N: int, R: float, n: int) -> DiscreteOperator:
    grid = RadialGrid(R, n)
    r = grid.nodes
    h = grid.h
    gx, gw = np.polynomial.legendre.leggauss(N + 4)
    gx = 0.5 * (gx + 1.0)
    gw = 0.5 * gw
    H, D, D2 = hermite_basis(gx, h)
    omega = dimension_params(N).sphere_area
    rq = r[:-1, None] + h * gx[None, :]
    w = omega * h * gw[None, :] * rq ** (N - 1)
    L = D2[None, :, :] + (N - 1) * D[None, :, :] / rq[:, None, :]
    Me = np.einsum("ig,eg,jg->eij", H, w, H)
    Ke = np.einsum("ig,eg,jg->eij", D, w, D)
    Be = np.einsum("eig,eg,ejg->eij", L, w, L)
    ne = n - 1
    loc = 2 * np.arange(ne)[:, None] + np.arange(4)[None, :]
    rows = np.broadcast_to(loc[:, :, None], (ne, 4, 4)).ravel()
    cols = np.broadcast_to(loc[:, None, :], (ne, 4, 4)).ravel()
    keep = np.array([i for i in range(2 * n) if i not in (1, 2 * n - 1)])

    def build(E):
        A = coo_matrix((E.ravel(), (rows, cols)), shape=(2 * n, 2 * n)).tocsr()
        A = A[keep][:, keep]
        # exact symmetrization of roundoff-level asymmetry
        return ((A + A.T) * 0.5).tocsr()

    return DiscreteOperator(N, grid, keep, build(Me), build(Ke), build(Be), w, H, D, L)


def assemble_operator(problem: BallProblem) -> DiscreteOperator:
    return _assemble(problem.dims.N, float(problem.R), problem.grid.n)


# --- energies -----------------------------------------------------------------


def fe_breakdown(op: DiscreteOperator, problem: BallProblem, x: np.ndarray) -> QuotientBreakdown:
    """Integrals of J and ∫|u|^q for the piecewise-cubic field x.

    ``grad2`` carries the factor grad_coeff so that J = lap2 + grad2 + α l2.
    """
    lap2, grad2, l2 = op.energy_parts(x)
    grad2 *= problem.grad_coeff
    lp = op.lp_integral(x, problem.q)
    return QuotientBreakdown.from_integrals(lap2, grad2, l2, lp, problem.alpha, problem.q)


def deviation_from_mean(op: DiscreteOperator, x: np.ndarray) -> float:
    """‖u - ū‖₂ / ‖ū‖₂ with ū the mean of u over the ball."""
    one = op.constant_vector()
    vol = float(one @ (op.mass @ one))
    mean = float(x @ (op.mass @ one)) / vol
    if mean == 0.0:
        return math.inf
    y = x - mean * one
    return math.sqrt(max(float(y @ (op.mass @ y)), 0.0)) / (abs(mean) * math.sqrt(vol))


@dataclass(frozen=True)
class MinimizeResult:
    field: RadialField
    coefficients: np.ndarray = field(repr=False)
    breakdown: QuotientBreakdown
    iterations: int
    converged: bool
    residual: float
    classification: Classification
    deviation: float
    q_history: tuple = field(repr=False, default=())


# --- gradient flow --------------------------------------------------------------


def _as_coefficients(op: DiscreteOperator, init) -> np.ndarray:
    if isinstance(init, RadialField):
        if init.grid != op.grid:
            raise DomainError("initial field lives on a different grid")
        from paneitz.rayleigh import radial_derivatives

        d1, _ = radial_derivatives(init)
        return op.from_nodal(init.values, d1)
    x = np.asarray(init, dtype=float)
    if x.shape != (op.size,):
        raise DomainError(f"coefficient vector must have length {op.size}")
    return x.copy()


def minimize_quotient(
    problem: BallProblem,
    init,
    flow: float = 1.0,
    tol: float = 1e-10,
    max_iter: int = 20000,
) -> MinimizeResult:
    """Preconditioned normalized gradient flow for Q_α over radial fields.

    With u normalized to ∫|u|^q = 1 and λ = J(u), a critical point solves
    A u = λ |u|^{q-2}u where A is the full discrete operator. Each step moves
    along d = λ A⁻¹(|u|^{q-2}u) - u, renormalizes, and halves the step until
    Q does not increase. ``init`` is a RadialField (slopes from finite
    differences) or a coefficient vector. The returned field is rescaled to
    solve the equation itself, not the normalized problem.
    """
    if not flow > 0:
        raise DomainError("flow step must be positive")
    op = assemble_operator(problem)
    q = problem.q
    A = problem.alpha
    Amat = op.system(A, problem.grad_coeff)
    chol = cholesky_banded(to_banded(Amat))
    x = _as_coefficients(op, init)
    lp = op.lp_integral(x, q)
    if not lp > 0:
        raise DomainError("initial field must not vanish identically")

    def normalize(v):
        return v / op.lp_integral(v, q) ** (1.0 / q)

    def energy(v):
        lap2, grad2, l2 = op.energy_parts(v)
        return lap2 + problem.grad_coeff * grad2 + A * l2

    x = normalize(x)
    Q = energy(x)
    history = [Q]
    residual = math.inf
    it = 0
    converged = False
    for it in range(max_iter + 1):
        lam = energy(x)
        # solve for the correction only; A⁻¹(λF) - x would lose ~cond(A)·eps
        r = lam * op.lp_gradient(x, q) - op.apply(x, A, problem.grad_coeff)
        d = cho_solve_banded((chol, False), r)
        residual = math.sqrt(float(d @ (op.mass @ d)) / float(x @ (op.mass @ x)))
        if residual <= tol:
            converged = True
            break
        if it == max_iter:
            break
        tau = flow
        while True:
            xn = normalize(x + tau * d)
            Qn = energy(xn)
            if Qn <= Q * (1.0 + _ACCEPT_SLACK):
                break
            tau *= 0.5
            if tau < 1e-12:
                break
        if Qn > Q * (1.0 + _ACCEPT_SLACK):
            break
        x, Q = xn, Qn
        history.append(Q)
    # rescale the normalized minimizer to a solution of the equation
    lam = energy(x)
    scale = lam ** (1.0 / (q - 2.0))
    U = scale * x
    dev = deviation_from_mean(op, U)
    cls = Classification.NONCONSTANT if dev > CLASSIFICATION_THRESHOLD else Classification.CONSTANT
    fld = RadialField(op.grid, op.nodal_values(U))
    return MinimizeResult(fld, U, fe_breakdown(op, problem, U), it, converged, residual, cls, dev, tuple(history))


# --- linear stability of the constant ----------------------------------------


def stability_mode(problem: BallProblem) -> tuple[float, np.ndarray]:
    """(Λ₁, φ₁): smallest nonzero eigenpair of Δ² - cΔ with Neumann conditions.

    Solved as the generalized problem (B + cK) φ = Λ M φ by shift-invert
    about -1; the constant mode (Λ = 0) is the other eigenvalue returned.
    """
    op = assemble_operator(problem)
    A = (op.bilaplacian + problem.grad_coeff * op.stiffness).tocsc()
    v0 = np.linspace(1.0, 2.0, op.size)
    try:
        vals, vecs = eigsh(A, k=2, M=op.mass.tocsc(), sigma=-1.0, which="LM", v0=v0)
    except Exception as exc:  # ARPACK failures surface as several types
        raise EigenError(f"eigensolver failed: {exc}") from exc
    order = np.argsort(vals)
    lam0, lam1 = vals[order]
    if not (abs(lam0) < 1e-6 * max(1.0, abs(lam1)) and lam1 > 0):
        raise EigenError(f"unexpected spectrum bottom {vals}")
    phi = vecs[:, order[1]]
    if op.nodal_values(phi)[0] < 0:
        phi = -phi
    return float(lam1), phi


def neumann_laplacian_eigenvalue(problem: BallProblem) -> float:
    """First nonzero eigenvalue of the radial Neumann -Δ (pencil K, M)."""
    op = assemble_operator(problem)
    vals = eigsh(op.stiffness.tocsc(), k=2, M=op.mass.tocsc(), sigma=-1.0, which="LM",
                 v0=np.linspace(1.0, 2.0, op.size), return_eigenvectors=False)
    return float(np.max(vals))


def linear_stability_alpha(problem: BallProblem) -> float:
    """α at which u₁ acquires a neutral radial mode: Λ₁/(p-1).

    Linearizing at u₁ = α^{1/(p-1)} gives Δ²φ - Δφ + αφ = pαφ; for the
    critical power p - 1 = 8/(N-4), so α_lin = (N-4)Λ₁/8.
    """
    lam1, _ = stability_mode(problem)
    return lam1 / (problem.exponent_p - 1.0)


def perturbed_constant_init(problem: BallProblem, amplitude: float = 1e-2) -> np.ndarray:
    """u₁ (1 + amplitude φ₁/max|φ₁|) in coefficient form."""
    op = assemble_operator(problem)
    _, phi = stability_mode(problem)
    phi = phi / np.max(np.abs(op.nodal_values(phi)))
    return problem.constant_solution * (op.constant_vector() + amplitude * phi)


def bubble_init(problem: BallProblem, eps: float) -> np.ndarray:
    """Coefficients of the bubble profile (ε/(ε²+r²))^{(N-4)/2} restricted to the ball."""
    op = assemble_operator(problem)
    N = problem.dims.N
    r = op.grid.nodes
    s = eps * eps + r * r
    vals = (eps / s) ** (0.5 * (N - 4))
    slopes = -(N - 4) * r * eps ** (0.5 * (N - 4)) * s ** (-0.5 * (N - 2))
    return op.from_nodal(vals, slopes)


def multistart_minimize(
    problem: BallProblem, inits: Sequence, tol: float = 1e-10, max_iter: int = 20000
) -> tuple[MinimizeResult, list[MinimizeResult]]:
    """Run the flow from each start; return the lowest-Q result and all runs."""
    runs = [minimize_quotient(problem, x0, tol=tol, max_iter=max_iter) for x0 in inits]
    best = min(runs, key=lambda res: res.breakdown.Q)
    return best, runs


# --- threshold scan ------------------------------------------------------------


@dataclass(frozen=True)
class ThresholdResult:
    alpha_star_bracket: tuple[float, float]
    alpha_lin: float
    alpha_bar: float
    evaluations: tuple = ()

    @property
    def within_alpha_bar(self) -> bool:
        lo, hi = self.alpha_star_bracket
        return 0 < lo < hi <= self.alpha_bar * (1 + 1e-12)

    @property
    def width(self) -> float:
        return self.alpha_star_bracket[1] - self.alpha_star_bracket[0]


def classify_alpha(problem: BallProblem, alpha: float, tol: float = 1e-10, max_iter: int = 20000):
    """Classification of the flow started from the perturbed constant at α."""
    p = problem.with_alpha(alpha)
    return minimize_quotient(p, perturbed_constant_init(p), tol=tol, max_iter=max_iter)


def threshold_scan(
    problem: BallProblem,
    alpha_lo: float,
    alpha_hi: Optional[float] = None,
    bisection_tol: Optional[float] = None,
    expand: bool = False,
    max_expand: int = 12,
    tol: float = 1e-10,
    max_iter: int = 20000,
) -> ThresholdResult:
    """Bisect in α on the CONSTANT → NONCONSTANT flip of the flow started at
    the perturbed constant.

    ``alpha_hi`` defaults to ᾱ(N, |B_R|) and ``bisection_tol`` to
    1e-2·α_lin. When both ends classify alike a BracketError is raised,
    unless ``expand`` is set, in which case alpha_hi is doubled (at most
    ``max_expand`` times) until the flip is enclosed.
    """
    abar = alpha_bar(problem.dims.N, problem.volume)
    a_lin = linear_stability_alpha(problem)
    hi = abar if alpha_hi is None else float(alpha_hi)
    lo = float(alpha_lo)
    width = 1e-2 * a_lin if bisection_tol is None else float(bisection_tol)
    if not (0 < lo < hi):
        raise DomainError(f"need 0 < alpha_lo < alpha_hi, got {lo}, {hi}")
    evals = []

    def cls_at(a):
        res = classify_alpha(problem, a, tol, max_iter)
        evals.append((a, res.classification.value, res.deviation, res.breakdown.Q, res.converged))
        return res.classification

    c_lo = cls_at(lo)
    if c_lo is not Classification.CONSTANT:
        raise BracketError(f"alpha_lo={lo:g} is not classified CONSTANT", c_lo, c_lo)
    c_hi = cls_at(hi)
    expansions = 0
    while c_hi is Classification.CONSTANT:
        if not expand or expansions >= max_expand:
            raise BracketError(
                f"both alpha_lo={lo:g} and alpha_hi={hi:g} classify CONSTANT", c_lo, c_hi
            )
        lo, hi = hi, 2.0 * hi
        c_hi = cls_at(hi)
        expansions += 1
    while hi - lo > width:
        mid = 0.5 * (lo + hi)
        if cls_at(mid) is Classification.CONSTANT:
            lo = mid
        else:
            hi = mid
    return ThresholdResult((lo, hi), a_lin, abar, tuple(evals))


# --- balance identity ------------------------------------------------------------


@dataclass(frozen=True)
class BalanceResult:
    applicable: bool
    defect: float
    slack: float
    alpha_mass: float
    bound: float


def balance_check(result: MinimizeResult, problem: BallProblem) -> BalanceResult:
    """Testing the equation against 1: α∫u = ∫u^p, with α∫u ≤ α^{p/(p-1)}|Ω|.

    ``defect`` is |α∫u - ∫u^p|/(α∫u), ``slack`` is the bound minus α∫u.
    Not applicable (NaNs) to unconverged or sign-changing fields.
    """
    op = assemble_operator(problem)
    x = result.coefficients
    uq = op.at_quadrature(x)
    p = problem.exponent_p
    bound = problem.alpha ** (p / (p - 1.0)) * problem.volume
    if not result.converged or np.any(uq < 0):
        return BalanceResult(False, math.nan, math.nan, math.nan, bound)
    mass = problem.alpha * float(np.sum(op.quad_weights * uq))
    power = float(np.sum(op.quad_weights * uq**p))
    return BalanceResult(True, abs(mass - power) / mass, bound - mass, mass, bound)
