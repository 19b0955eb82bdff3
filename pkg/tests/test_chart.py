import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from paneitz.chart import (
    CurvatureModel,
    a_matrix,
    inverse_jacobian_error,
    jacobian_determinant,
    jacobian_expansion_error,
    mean_curvature,
    normal_vector,
    numerical_jacobian,
    phi_jacobian,
    phi_map,
    rho_gradient,
    rho_value,
)
from paneitz.constants import DomainError


def _random_model(N, seed):
    rng = np.random.default_rng(seed)
    return CurvatureModel.from_kappas(rng.uniform(0.1, 2.0, N - 1))


def _loglog_slope(fun, direction, ts):
    errs = [fun(t * direction) for t in ts]
    return np.polyfit(np.log(ts), np.log(errs), 1)[0]


def test_model_invariants():
    m = CurvatureModel.from_kappas([1.0, 2.0, 3.0, 4.0])
    assert m.N == 5
    assert m.H == pytest.approx(mean_curvature([1, 2, 3, 4]), rel=1e-14)
    assert m.chart_radius == pytest.approx(0.05)
    with pytest.raises(DomainError):
        CurvatureModel(5, (1.0, 1.0, 1.0, 1.0), 3.0, 0.1)
    with pytest.raises(DomainError):
        CurvatureModel(6, (1.0, 1.0), 1.0, 0.1)


def test_nonpositive_mean_curvature_warns():
    with pytest.warns(UserWarning):
        CurvatureModel.from_kappas([-1.0, 0.5, 0.1, 0.2])


def test_rho_values():
    m = CurvatureModel.uniform(6)
    assert rho_value(m, np.zeros(5)) == 0.0
    x = np.array([0.01, -0.02, 0.03, 0.0, 0.05])
    assert rho_value(m, x) == pytest.approx(np.sum(x * x), rel=1e-15)
    assert np.allclose(rho_gradient(m, x), 2 * x)


def test_ball_osculation():
    # κ = 1/(2R) against the Taylor oracle of R - sqrt(R² - |x'|²)
    R = 3.0
    m = CurvatureModel.from_kappas([1 / (2 * R)] * 4)
    for s in (1e-3, 1e-2, 5e-2):
        x = s * np.array([1.0, -1.0, 0.5, 0.2])
        exact = R - math.sqrt(R * R - x @ x)
        assert abs(rho_value(m, x) - exact) <= (x @ x) ** 2 / (8 * R**3) * 1.01


def test_chart_radius_enforced():
    m = CurvatureModel.uniform(5)
    with pytest.raises(DomainError):
        phi_map(m, np.full(5, 0.2))
    with pytest.raises(DomainError):
        phi_map(m, np.zeros(4))


def test_phi_map_special_points():
    m = CurvatureModel.uniform(5)
    assert np.allclose(phi_map(m, np.zeros(5)), 0.0, atol=0)
    t = 0.07
    assert np.allclose(phi_map(m, np.array([0, 0, 0, 0, t])), [0, 0, 0, 0, t], atol=1e-16)
    d = 0.05
    # by the definition: Φ_1 = δ - 2δ², Φ_N = ρ(y') + y_N = δ² + δ
    assert np.allclose(phi_map(m, np.array([d, 0, 0, 0, d])), [d - 2 * d * d, 0, 0, 0, d + d * d], rtol=1e-15)


@given(st.lists(st.floats(-0.03, 0.03), min_size=5, max_size=5))
def test_boundary_maps_to_graph(yp):
    m = CurvatureModel.from_kappas([1.0, 0.5, 2.0, 1.5, 0.3])
    y = np.append(yp, 0.0)
    img = phi_map(m, y)
    assert np.allclose(img[:-1], yp, atol=1e-14)
    assert img[-1] == pytest.approx(rho_value(m, np.array(yp)), abs=1e-14)


def test_normal_vector_variants():
    m = CurvatureModel.uniform(5)
    x = np.array([0.05, 0.0, 0.0, 0.0])
    nu = normal_vector(m, x)
    assert nu[-1] == -1.0 and np.linalg.norm(nu) > 1
    assert np.linalg.norm(normal_vector(m, x, normalized=True)) == pytest.approx(1.0)
    y = np.array([0.05, 0, 0, 0, 0.05])
    assert not np.allclose(phi_map(m, y), phi_map(m, y, normalized=True))


def test_jacobian_identity_at_origin():
    for N in (5, 8, 12):
        m = _random_model(N, N)
        assert np.max(np.abs(phi_jacobian(m, np.zeros(N)) - np.eye(N))) <= 1e-14
        assert np.all(a_matrix(m, np.zeros(N)) == 0)
        assert jacobian_expansion_error(m, np.zeros(N)) == 0.0


@pytest.mark.parametrize("seed", range(4))
def test_jacobian_matches_differences(seed):
    N = 6
    m = _random_model(N, seed)
    rng = np.random.default_rng(100 + seed)
    y = rng.uniform(-0.02, 0.02, N)
    y[-1] = abs(y[-1])
    num = numerical_jacobian(lambda v: phi_map(m, v), y, h=1e-6)
    assert np.max(np.abs(num - phi_jacobian(m, y))) < 1e-8


@given(st.integers(0, 10_000))
def test_a_matrix_structure(seed):
    N = 7
    m = _random_model(N, seed)
    rng = np.random.default_rng(seed)
    y = rng.uniform(-0.01, 0.01, N)
    A = a_matrix(m, y)
    assert np.allclose(A[:-1, -1], -A[-1, :-1], rtol=0, atol=0)
    assert np.trace(A) == pytest.approx(-(N - 1) * m.H * y[-1], rel=1e-12, abs=1e-18)
    # in the quadratic model DΦ = Id + A exactly
    assert np.allclose(phi_jacobian(m, y), np.eye(N) + A, rtol=0, atol=1e-16)


@pytest.mark.parametrize("N", [5, 6, 9])
def test_determinant_closed_form_unit_curvature(N):
    m = CurvatureModel.uniform(N)
    d = 0.03
    y = np.zeros(N)
    y[0] = d
    y[-1] = d
    exact = (1 - 2 * d) ** (N - 2) * (1 - 2 * d + 4 * d * d)
    assert jacobian_determinant(m, y) == pytest.approx(exact, rel=1e-14)
    assert jacobian_expansion_error(m, y) == pytest.approx(abs(exact - (1 - (N - 1) * 2 * d)), rel=1e-10)


@pytest.mark.parametrize("N", [5, 8])
@pytest.mark.parametrize("seed", range(3))
def test_determinant_error_is_quadratic(N, seed):
    m = _random_model(N, seed)
    rng = np.random.default_rng(seed)
    direction = rng.normal(size=N)
    direction[-1] = abs(direction[-1]) + 0.5
    direction /= np.linalg.norm(direction)
    ts = np.geomspace(1e-3, 1e-1, 9)
    slope = _loglog_slope(lambda y: jacobian_expansion_error(m, y), direction, ts)
    assert abs(slope - 2.0) <= 0.1


@pytest.mark.parametrize("N", [5, 8])
def test_inverse_jacobian_table_is_second_order(N):
    m = _random_model(N, 42)
    direction = np.ones(N) / math.sqrt(N)
    ts = np.geomspace(1e-3, 1e-1, 9)
    slope = _loglog_slope(lambda y: inverse_jacobian_error(m, y), direction, ts)
    assert abs(slope - 2.0) <= 0.1
