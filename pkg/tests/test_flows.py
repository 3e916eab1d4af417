import numpy as np
import pytest

from linobs.attitude import gravity_field
from linobs.flows import (
    ConstantInput,
    GradientLike,
    LeftInvariant,
    PiecewiseConstantInput,
    SigmaCross,
    SinusoidInput,
    Trajectory,
    error_trace,
    flow,
    velocity_residual,
)
from linobs.kernel import OdeConfig, rodrigues_exp
from linobs.manifolds import SO3, Euclidean, Sphere2

S2 = Sphere2()
IDENTITY_SIGMA = SigmaCross(np.eye(3), np.zeros(3))


def test_sigma_cross_quarter_turn():
    u = ConstantInput([0, 0, 1.0])
    # W = sigma x q with sigma = u turns x toward +y
    end = flow(S2, IDENTITY_SIGMA, u, [1.0, 0, 0], np.pi / 2).states[-1]
    assert np.allclose(end, [0, 1, 0], atol=1e-8)
    # gravity kinematics q' = -omega x q turns it toward -y
    end = flow(S2, gravity_field(), u, [1.0, 0, 0], np.pi / 2).states[-1]
    assert np.allclose(end, [0, -1, 0], atol=1e-8)


def test_zero_sigma_is_constant():
    tr = flow(S2, IDENTITY_SIGMA, ConstantInput(np.zeros(3)), [0.6, 0.0, 0.8], 1.0)
    assert np.all(tr.states == np.array([0.6, 0.0, 0.8]))


def test_left_invariant_closed_form(rng):
    G = SO3(1.0)
    u = np.array([0.3, -0.7, 0.4])
    R0 = G.random_point(rng)
    tr = flow(G, LeftInvariant(np.eye(3), np.zeros(3)), ConstantInput(u), R0, 1.3)
    assert np.max(np.abs(tr.states[-1] - R0 @ rodrigues_exp(1.3 * u))) < 1e-8


def test_group_property_for_constant_input(rng):
    f, u = IDENTITY_SIGMA, ConstantInput([0.2, 0.5, -0.4])
    p = S2.random_point(rng)
    direct = flow(S2, f, u, p, 1.5).states[-1]
    mid = flow(S2, f, u, p, 0.7).states[-1]
    composed = flow(S2, f, u, mid, 0.8).states[-1]
    assert np.max(np.abs(direct - composed)) < 1e-8


def test_flow_is_deterministic(rng):
    u = SinusoidInput([0.3, 0.2, 0.5], [0.4, 0.3, 0.2])
    p = S2.random_point(rng)
    assert np.array_equal(flow(S2, IDENTITY_SIGMA, u, p, 1.0).states,
                          flow(S2, IDENTITY_SIGMA, u, p, 1.0).states)


def test_fields_are_tangent(rng):
    q = np.stack([S2.random_point(rng) for _ in range(20)])
    for f in (IDENTITY_SIGMA, GradientLike([0.3, 0.1, 1.0])):
        W = f(q, np.array([0.4, -0.3, 0.2]))
        assert np.max(np.abs(np.sum(W * q, axis=1))) < 1e-10


def test_piecewise_input_segments():
    u = PiecewiseConstantInput([0.3, 0.6], [[0, 0, 1.0], [1.0, 0, 0], [0, 1.0, 0]])
    assert np.array_equal(u(0.3), [1.0, 0, 0])
    assert u.breakpoints(0, 1) == [0.3, 0.6]
    tr = flow(S2, IDENTITY_SIGMA, u, [1.0, 0, 0], 1.0)
    expected = rodrigues_exp([0, 0.4, 0]) @ rodrigues_exp([0.3, 0, 0]) @ rodrigues_exp([0, 0, 0.3]) @ [1, 0, 0]
    assert np.max(np.abs(tr.states[-1] - expected)) < 1e-10
    with pytest.raises(ValueError):
        PiecewiseConstantInput([0.5, 0.2], [[0.0], [1.0], [2.0]])


def test_error_trace_isometry():
    u = ConstantInput([0.2, -0.4, 0.9])
    p = np.array([0.0, 0.0, 1.0])
    q = S2.exp(p, [0.3, 0.0, 0.0])
    tr = flow(S2, IDENTITY_SIGMA, u, np.stack([p, q]), 2.0)
    a = Trajectory(tr.times, tr.states[:, 1])
    b = Trajectory(tr.times, tr.states[:, 0])
    err = error_trace(S2, a, b)
    assert np.max(np.abs(np.linalg.norm(err.errors, axis=1) - 0.3)) < 1e-7
    assert np.allclose(error_trace(S2, a, a).errors, 0.0)


def test_error_trace_contracts_under_gradient_flow():
    g = GradientLike([0, 0, 1.0])
    p = S2.project(np.array([1.0, 0.0, 0.3]))
    q = S2.exp(p, [0.0, 0.2, 0.0])
    tr = flow(S2, g, ConstantInput([0.0]), np.stack([p, q]), 2.0)
    err = error_trace(S2, Trajectory(tr.times, tr.states[:, 1]), Trajectory(tr.times, tr.states[:, 0]))
    norms = np.linalg.norm(err.errors, axis=1)
    assert norms[-1] < 0.5 * norms[0]
    assert np.all(np.diff(norms) < 1e-12)


def test_error_trace_truncates_at_guard():
    E = Euclidean(1)
    t = np.linspace(0, 1, 11)
    a = Trajectory(t, np.stack([np.array([0.0, 0.0, 1.0])] * 11))
    angles = np.linspace(0, np.pi, 11)
    b = Trajectory(t, np.stack([np.sin(angles), 0 * angles, np.cos(angles)], axis=1))
    tr = error_trace(S2, b, a)
    assert tr.validity_end == 1.0 and len(tr.errors) == 10
    assert E.dim == 1


def test_velocity_residual():
    h = 1e-3
    u = SinusoidInput([0.3, 0.2, 0.5], [0.4, 0.3, 0.2])
    tr = flow(S2, IDENTITY_SIGMA, u, [0.0, 0.6, 0.8], 1.0, OdeConfig(h))
    assert velocity_residual(S2, IDENTITY_SIGMA, u, tr) < 10 * h**2
    geo = S2.geodesic(np.array([0.0, 0, 1]), np.array([1.0, 0, 0]), 1.0, 101)
    fake = Trajectory(geo.s, geo.points)
    assert velocity_residual(S2, IDENTITY_SIGMA, ConstantInput([0, 0, 1.0]), fake) > 1e-2
    still = Trajectory(np.linspace(0, 1, 5), np.tile([0.0, 0, 1], (5, 1)))
    assert velocity_residual(S2, IDENTITY_SIGMA, ConstantInput(np.zeros(3)), still) == 0.0
