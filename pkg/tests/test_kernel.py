import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from linobs.kernel import (
    DimensionError,
    GuardViolation,
    IntegrationDiverged,
    OdeConfig,
    RankDeficiency,
    central_difference,
    integrate_ode,
    least_squares,
    rodrigues_exp,
    rotation_log,
    skew,
    time_grid,
    vee,
)

vec3 = arrays(np.float64, 3, elements=st.floats(-1.5, 1.5))


def test_zero_field_keeps_state():
    path = integrate_ode(lambda t, x: np.zeros_like(x), [1.0, 2.0], 0.0, 1.0)
    assert np.all(path.states == np.array([1.0, 2.0]))


def test_exponential_growth():
    path = integrate_ode(lambda t, x: x, np.array([1.0]), 0.0, 1.0, OdeConfig(1e-3))
    assert abs(path.states[-1, 0] - np.e) < 1e-9


def test_time_dependent_antiderivative():
    path = integrate_ode(lambda t, x: np.array([np.cos(t), np.sin(t)]), np.zeros(2), 0.0, np.pi)
    assert np.allclose(path.states[-1], [0.0, 2.0], atol=1e-9)


@pytest.mark.parametrize("lam,h", [(-2.0, 1e-2), (1.5, 5e-3), (0.7, 1e-3)])
def test_rk4_error_model(lam, h):
    T = 1.0
    path = integrate_ode(lambda t, x: lam * x, np.array([1.0]), 0.0, T, OdeConfig(h))
    exact = np.exp(lam * T)
    rel = abs(path.states[-1, 0] - exact) / exact
    assert rel < 10 * h**4 * abs(lam * T) * np.exp(abs(lam * T))


def test_partial_last_step_lands_on_end():
    g = time_grid(0.0, 0.0105, 1e-3)
    assert g[-1] == 0.0105 and len(g) == 12


def test_divergence_reports_time():
    with pytest.raises(IntegrationDiverged) as err, np.errstate(over="ignore", invalid="ignore"):
        integrate_ode(lambda t, x: x**2, np.array([1.0]), 0.0, 2.0, OdeConfig(1e-2))
    assert 0.9 < err.value.last_time < 1.1


def test_integration_is_deterministic():
    f = lambda t, x: np.array([x[1], -np.sin(x[0])])
    a = integrate_ode(f, [1.0, 0.0], 0.0, 3.0).states
    b = integrate_ode(f, [1.0, 0.0], 0.0, 3.0).states
    assert np.array_equal(a, b)


def test_skew_examples():
    assert np.all(skew([0, 0, 0]) == 0)
    assert np.array_equal(skew([0, 0, 1]), [[0, -1, 0], [1, 0, 0], [0, 0, 0]])
    with pytest.raises(DimensionError):
        skew([1.0, 2.0])


@given(vec3, vec3)
def test_skew_is_cross_product(a, b):
    assert np.allclose(skew(a) @ b, np.cross(a, b))
    assert np.allclose(skew(a) @ b + skew(b) @ a, 0.0)
    assert np.allclose(vee(skew(a)), a)


def test_rodrigues_examples():
    assert np.allclose(rodrigues_exp(np.zeros(3)), np.eye(3))
    R = rodrigues_exp([0, 0, np.pi / 2])
    assert np.allclose(R @ [1, 0, 0], [0, 1, 0], atol=1e-15)


def test_log_exp_roundtrip_1000(rng):
    w = rng.standard_normal((1000, 3))
    w *= (3.0 * rng.uniform(size=(1000, 1))) / np.linalg.norm(w, axis=1, keepdims=True)
    assert np.max(np.abs(rotation_log(rodrigues_exp(w)) - w)) < 1e-9


@given(arrays(np.float64, 3, elements=st.floats(-1e-3, 1e-3)))
def test_small_angle_series(w):
    R = rodrigues_exp(w)
    assert np.allclose(R.T @ R, np.eye(3), atol=1e-14)
    assert np.allclose(rotation_log(R), w, atol=1e-15)


def test_rotation_log_guard():
    with pytest.raises(GuardViolation):
        rotation_log(rodrigues_exp([np.pi - 1e-8, 0, 0]))


def test_least_squares_examples(rng):
    assert np.allclose(least_squares(np.eye(2), [3.0, 4.0]), [3, 4])
    A = rng.standard_normal((8, 3))
    x = rng.standard_normal(3)
    assert np.max(np.abs(least_squares(A, A @ x) - x)) < 1e-12
    b = rng.standard_normal(8)
    r = b - A @ least_squares(A, b)
    assert np.max(np.abs(A.T @ r)) < 1e-10
    assert np.allclose(least_squares(A, b), np.linalg.lstsq(A, b, rcond=None)[0])


def test_least_squares_rank_deficient():
    A = np.array([[1.0, 2.0], [2.0, 4.0], [3.0, 6.0]])
    with pytest.raises(RankDeficiency) as err:
        least_squares(A, np.ones(3))
    assert err.value.rank == 1
    with pytest.raises(DimensionError):
        least_squares(np.ones((1, 2)), np.ones(1))


def test_central_difference():
    A = np.array([[1.0, 2.0], [3.0, 4.0]])
    d = np.array([0.3, -0.7])
    assert np.allclose(central_difference(lambda x: A @ x, np.ones(2), d), A @ d, atol=1e-12)
    g = central_difference(lambda x: x @ x, np.array([1.0, 0.0]), np.array([1.0, 0.0]), 1e-5)
    assert abs(g - 2.0) < 1e-8


def test_central_difference_second_order():
    f = lambda x: np.sin(3 * x[0])
    x, d = np.array([0.4]), np.array([1.0])
    exact = 3 * np.cos(1.2)
    e1 = abs(central_difference(f, x, d, 1e-2) - exact)
    e2 = abs(central_difference(f, x, d, 5e-3) - exact)
    assert 3.8 < e1 / e2 < 4.2
