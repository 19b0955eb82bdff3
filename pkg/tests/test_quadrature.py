import math
import warnings

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.stats import norm, qmc

from paneitz.chart import CurvatureModel
from paneitz.constants import ball_volume, beta_closed_form, dimension_params
from paneitz.quadrature import (
    GAUSS_WEIGHTS,
    KRONROD_NODES,
    KRONROD_WEIGHTS,
    QuadratureError,
    QuadratureSpec,
    algebraic_moment,
    angular_moment,
    angular_moment_latitude,
    angular_moments,
    beta_reduction_factor,
    chart_critical_norm,
    curvature_slopes,
    full_space_norms,
    i_terms,
    integrate,
    j_integrals,
    radial_integral,
)

# 40-digit mpmath quadrature of the defining integrals, frozen
J_REF = {
    5: (2.2617843419163113501, None, 0.20561675835602830456),
    6: (1.0335425560099940058, 3.8757845850374775219, 0.096894614625936938048),
    7: (0.47370700483791391935, 1.0981389657606186312, 0.043064273167083083577),
    8: (0.21018330654658263987, 0.38895991211494028758, 0.018119250564360572403),
    12: (0.0052948985270630620398, 0.0070786809732804688676, 0.0003556275130116981967),
}
M3_REF = {5: 1.6449340668482264365, 6: 1.5039397182612355991, 9: 0.81174242528335364364}


def test_kronrod_rule_exactness():
    x, wk, wg = KRONROD_NODES, KRONROD_WEIGHTS, GAUSS_WEIGHTS
    for k in range(24):
        exact = 0.0 if k % 2 else 2.0 / (k + 1)
        if k <= 22:
            assert np.dot(wk, x**k) == pytest.approx(exact, abs=1e-14)
        if k <= 13:
            assert np.dot(wg, x**k) == pytest.approx(exact, abs=1e-14)
    assert np.count_nonzero(wg) == 7


@pytest.mark.parametrize(
    "f, a, b, exact",
    [
        (lambda x: 1.0 / (1.0 + x * x), 0.0, math.inf, 0.5 * math.pi),
        (np.sqrt, 0.0, 1.0, 2.0 / 3.0),
        (np.exp, -1.0, 2.0, math.exp(2) - math.exp(-1)),
        (lambda x: x**4 / (1 + x * x) ** 5, 0.0, math.inf, 0.5 * math.gamma(2.5) * math.gamma(2.5) / math.gamma(5)),
    ],
)
def test_integrate_known(f, a, b, exact):
    res = integrate(f, a, b)
    assert res.value == pytest.approx(exact, rel=1e-10)
    assert res.error <= max(1e-12, 1e-10 * abs(exact))


def test_integrate_deterministic():
    f = lambda r: r**5 / (0.01 + r * r) ** 4
    first = integrate(f, 0.0, math.inf, points=(0.1,))
    assert all(integrate(f, 0.0, math.inf, points=(0.1,)) == first for _ in range(3))


def test_integrate_cap_reports_partial_estimate():
    with pytest.raises(QuadratureError) as info:
        integrate(lambda x: np.sin(200 * x) ** 2, 0.0, 10.0, QuadratureSpec(max_subdivisions=3))
    assert math.isfinite(info.value.estimate)
    assert info.value.error > 0


def test_integrate_rejects_bad_input():
    with pytest.raises(ValueError):
        integrate(np.exp, 1.0, 0.0)
    with pytest.raises(ValueError):
        QuadratureSpec(abs_tol=0.0)


@given(st.integers(0, 12), st.integers(5, 14))
def test_algebraic_moment_two_routes(k, m):
    if 2 * m <= k + 1:
        return
    quad = integrate(lambda r: r**k / (1 + r * r) ** m, 0.0, math.inf, points=(1.0,)).value
    assert algebraic_moment(k, m) == pytest.approx(quad, rel=1e-9)


def test_radial_integral_weight():
    # ∫_0^1 r^{N-1} dr = 1/N
    assert radial_integral(lambda r: np.ones_like(r), 6, (0.0, 1.0)) == pytest.approx(1 / 6, rel=1e-14)


def test_angular_moments_n5():
    assert angular_moment(5, 1) == pytest.approx(math.pi**2 / 2, rel=1e-14)
    assert angular_moment(5, 3) == pytest.approx(math.pi**2 / 6, rel=1e-14)


@pytest.mark.parametrize("N", [5, 6, 9])
def test_third_moment_reference(N):
    assert angular_moment(N, 3) == pytest.approx(M3_REF[N], rel=1e-13)


@given(st.integers(5, 30), st.sampled_from([1, 3]))
def test_angular_moment_latitude_route(N, k):
    assert angular_moment(N, k) == pytest.approx(angular_moment_latitude(N, k), rel=1e-11)


@given(st.integers(5, 30))
def test_first_moment_is_ball_volume(N):
    # ∫_{S^{N-1}_+} y_N dσ = |B^{N-1}| (divergence theorem on the half ball)
    assert angular_moment(N, 1) == pytest.approx(ball_volume(N - 1), rel=1e-13)


def test_symmetry_reduction_by_monte_carlo():
    """Direct N-dimensional estimate of ∫_{B+} g(|y|) y_1² y_N dy against the
    radial form (m1 - m3)/(N-1) ∫ g(r) r^{N+2} dr."""
    for N in (5, 6, 8):
        s = qmc.Sobol(N + 1, scramble=True, seed=11).random_base2(16)
        z = norm.ppf(s[:, :N])
        y = z / np.linalg.norm(z, axis=1)[:, None] * (s[:, N] ** (1.0 / N))[:, None]
        y[:, -1] = np.abs(y[:, -1])
        r2 = np.sum(y * y, axis=1)
        g = 1.0 / (1.0 + r2) ** 2
        half = 0.5 * ball_volume(N)
        direct = half * np.mean(g * y[:, 0] ** 2 * y[:, -1])
        averaged = half * np.mean(g * (r2 - y[:, -1] ** 2) * y[:, -1]) / (N - 1)
        reduced = angular_moments(N).tangential * integrate(lambda r: r ** (N + 2) / (1 + r * r) ** 2, 0.0, 1.0).value
        assert direct == pytest.approx(reduced, rel=1e-3)
        assert averaged == pytest.approx(reduced, rel=1e-3)


@pytest.mark.parametrize("N", sorted(J_REF))
def test_j_integrals_reference(N):
    J = j_integrals(N)
    J1, J2, J3 = J_REF[N]
    assert J.J1 == pytest.approx(J1, rel=1e-10)
    assert J.J3 == pytest.approx(J3, rel=1e-10)
    if J2 is None:
        assert J.J2 is None and J.J2_divergent
    else:
        assert J.J2 == pytest.approx(J2, rel=1e-10)


@pytest.mark.parametrize("N", range(5, 13))
def test_beta_positive_and_reduced(N):
    J = j_integrals(N)
    assert J.beta_N > 0
    assert J.beta_N == pytest.approx(J.J1 / (N + 2) - J.J3, rel=1e-12)
    assert J.beta_N == pytest.approx(beta_reduction_factor(N) * beta_closed_form(N), rel=1e-8)


@pytest.mark.parametrize("N", [5, 6, 7, 8])
@pytest.mark.parametrize("eps", [0.1, 1.0])
def test_full_space_norms_equal_bubble_energy(N, eps):
    d = dimension_params(N)
    lap2, lp = full_space_norms(d, eps)
    assert lap2 == pytest.approx(d.bubble_energy, rel=1e-8)
    assert lp == pytest.approx(d.bubble_energy, rel=1e-8)


def test_sobolev_ratio_by_quadrature():
    d = dimension_params(6)
    lap2, lp = full_space_norms(d, 1.0)
    assert lap2 / lp ** (2 / d.two_star) == pytest.approx(d.S, rel=1e-6)


def test_n5_log_coefficient_consistency():
    # the tail (N+2r²) r^{N+2}/(1+r²)^N ~ 2/r gives the log coefficient
    d = dimension_params(5)
    m = CurvatureModel.uniform(5)
    ang = angular_moments(5)
    from_terms = 4 * d.d_N * 3 / 4 * m.H * (ang.m1 - ang.m3) * 2
    assert curvature_slopes(d, m).lap_i4_log == pytest.approx(-from_terms, rel=1e-13)
    assert from_terms == pytest.approx(8 * math.pi**2 * 105**0.25 * m.H, rel=1e-13)


def test_i_terms_basic_shape():
    d = dimension_params(6)
    m = CurvatureModel.uniform(6)
    t = i_terms(d, 1e-3, 1.0, m)
    assert t.warning is None
    assert t.I1 == pytest.approx(0.5 * d.bubble_energy, rel=1e-3)
    assert t.I5_order == "O(eps^2 log(1/eps))"
    assert abs(t.remainder) < 1e-2 * abs(t.I2 + t.I3 + t.I4)


def test_i_terms_regime_warning():
    d = dimension_params(7)
    m = CurvatureModel.uniform(7)
    with pytest.warns(UserWarning):
        t = i_terms(d, 0.2, 1.0, m)
    assert t.warning is not None


def test_i_terms_dimension_mismatch():
    with pytest.raises(ValueError):
        i_terms(dimension_params(6), 1e-3, 1.0, CurvatureModel.uniform(7))


def test_chart_critical_norm_flat_limit():
    # zero curvature leaves the half-ball integral of u^{2*}
    d = dimension_params(6)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        flat = CurvatureModel.from_kappas([0.0] * 5)
    val = chart_critical_norm(d, 1e-3, 1.0, flat)
    assert val == pytest.approx(0.5 * d.bubble_energy, rel=1e-5)
