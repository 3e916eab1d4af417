import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from linobs.kernel import GuardViolation, rodrigues_exp
from linobs.manifolds import (
    SO3,
    Euclidean,
    Frame,
    Heisenberg,
    InsufficientSamples,
    Sphere2,
    is_affine_transformation,
    make_manifold,
)

S2 = Sphere2()
seeds = st.integers(0, 2**32 - 1)


def _in_guard_pairs(m, rng, n):
    if isinstance(m, Sphere2):
        p = np.stack([m.random_point(rng) for _ in range(n)])
        v = np.stack([m.random_tangent(rng, q) for q in p])
        v *= (3.0 * rng.uniform(size=(n, 1))) / np.linalg.norm(v, axis=1, keepdims=True)
        return p, v
    if isinstance(m, SO3):
        p = np.stack([m.random_point(rng) for _ in range(n)])
        v = rng.standard_normal((n, 3))
        v *= (3.0 * rng.uniform(size=(n, 1))) / np.linalg.norm(v, axis=1, keepdims=True)
        return p, v
    if isinstance(m, Heisenberg):
        return m.group_exp(2 * rng.standard_normal((n, 3))), 2 * rng.standard_normal((n, 3))
    return rng.standard_normal((n, m.n_components)) * 5, rng.standard_normal((n, m.n_components)) * 5


@pytest.mark.parametrize("m", [Euclidean(3), Sphere2(), SO3(1.0), Heisenberg(1.0)], ids=repr)
def test_exp_log_roundtrip(m, rng):
    p, v = _in_guard_pairs(m, rng, 1000)
    assert np.max(np.abs(m.log(p, m.exp(p, v)) - v)) < 1e-9


@pytest.mark.parametrize("m", [Euclidean(3), Sphere2(), SO3(1.0)], ids=repr)
def test_exp_of_zero_and_log_of_self(m, rng):
    p, _ = _in_guard_pairs(m, rng, 5)
    assert np.allclose(m.exp(p, np.zeros((5, m.n_components))), p)
    assert np.allclose(m.log(p, p), 0.0, atol=1e-12)


def test_sphere_exp_log_examples():
    assert np.allclose(S2.exp([0, 0, 1], [np.pi / 2, 0, 0]), [1, 0, 0])
    assert np.allclose(S2.log([0, 0, 1], [1, 0, 0]), [np.pi / 2, 0, 0])
    with pytest.raises(GuardViolation):
        S2.log([0, 0, 1], [0, 0, -1])
    with pytest.raises(GuardViolation):
        S2.exp([0, 0, 1], [np.pi, 0, 0])


def test_so3_exp_is_rodrigues():
    assert np.allclose(SO3(1.0).exp(np.eye(3), [0, 0, np.pi / 2]), rodrigues_exp([0, 0, np.pi / 2]))


def test_sphere_transport_examples():
    w = S2.transport([0, 0, 1], [1, 0, 0], [0, 1, 0], np.pi / 2)
    assert np.allclose(w, [0, 1, 0])
    w = S2.transport([0, 0, 1], [1, 0, 0], [1, 0, 0], np.pi / 2)
    assert np.allclose(w, [0, 0, -1])


@settings(max_examples=50, deadline=None)
@given(seeds)
def test_sphere_transport_is_isometric(seed):
    rng = np.random.default_rng(seed)
    p = S2.random_point(rng)
    d, a, b = (S2.random_tangent(rng, p) for _ in range(3))
    s = rng.uniform(0.1, 1.0)
    q = S2.exp(p, s * d)
    ta, tb = S2.transport(p, d, a, s), S2.transport(p, d, b, s)
    assert abs(ta @ tb - a @ b) < 1e-9
    assert abs(ta @ q) < 1e-12


def test_group_transport_is_identity_at_mu_one(rng):
    G = SO3(1.0)
    w = rng.standard_normal(3)
    assert np.array_equal(G.transport(G.random_point(rng), rng.standard_normal(3), w, 0.7), w)


def _octant_path(n):
    """North pole -> (1,0,0) -> (0,1,0) -> north pole along great circles."""
    corners = np.eye(3)[[2, 0, 1, 2]]
    pts = [corners[0]]
    for a, b in zip(corners[:-1], corners[1:]):
        s = np.linspace(0, 1, n + 1)[1:]
        pts.extend(S2.exp(np.broadcast_to(a, (n, 3)), s[:, None] * S2.log(a, b)))
    return np.array(pts)


def test_holonomy_of_octant_triangle():
    w0 = np.array([1.0, 0.0, 0.0])
    w = S2.transport_curve(_octant_path(8), w0)
    angle = np.arctan2(np.cross(w0, w) @ [0, 0, 1], w0 @ w)
    assert abs(abs(angle) - np.pi / 2) < 1e-4


def test_euclidean_transport_curve_is_identity(rng):
    E = Euclidean(3)
    w = rng.standard_normal(3)
    assert np.allclose(E.transport_curve(rng.standard_normal((10, 3)), w), w)


def test_transport_refinement_on_latitude_circle():
    theta = 0.6  # colatitude
    exact = 2 * np.pi * (1 - np.cos(theta))

    def holonomy_error(n):
        phi = np.linspace(0, 2 * np.pi, n + 1)
        path = np.stack([np.sin(theta) * np.cos(phi), np.sin(theta) * np.sin(phi),
                         np.cos(theta) * np.ones_like(phi)], axis=1)
        w0 = np.array([np.cos(theta), 0.0, -np.sin(theta)])
        w = S2.transport_curve(path, w0)
        angle = np.arccos(np.clip(w @ w0, -1, 1))
        return abs(angle - exact)

    ratio = holonomy_error(40) / holonomy_error(80)
    assert 3.5 < ratio < 4.5


def test_sphere_curvature_example():
    assert np.allclose(S2.curvature([0, 0, 1], [1, 0, 0], [0, 1, 0], [0, 1, 0]), [1, 0, 0])


def test_curvature_fd_matches_closed_form(rng):
    for m in (S2, SO3(0.0), SO3(0.5), SO3(1.0), Heisenberg(0.5), Euclidean(3)):
        p = S2.random_point(rng) if m is S2 else (
            rng.standard_normal(3) if isinstance(m, Euclidean) else m.random_point(rng, 0.5))
        for _ in range(3):
            X, Y, Z = (m.random_tangent(rng, p) for _ in range(3))
            fX, fY, fZ = (m.extend_field(p, v, rng) for v in (X, Y, Z))
            assert np.max(np.abs(m.curvature_fd(p, fX, fY, fZ) - m.curvature(p, X, Y, Z))) < 1e-6
            assert np.max(np.abs(m.torsion_fd(p, fX, fY) - m.torsion(p, X, Y))) < 1e-6


@settings(max_examples=30, deadline=None)
@given(seeds)
def test_sphere_curvature_symmetries(seed):
    rng = np.random.default_rng(seed)
    p = S2.random_point(rng)
    X, Y, Z = (S2.random_tangent(rng, p) for _ in range(3))
    R = S2.curvature
    assert np.allclose(R(p, X, Y, Z), -R(p, Y, X, Z), atol=1e-10)
    assert np.max(np.abs(R(p, X, Y, Z) + R(p, Y, Z, X) + R(p, Z, X, Y))) < 1e-9
    assert np.max(np.abs(S2.torsion(p, X, Y))) < 1e-10


def test_mu_family_closed_forms():
    e1, e2, e3 = np.eye(3)
    assert np.allclose(SO3(1.0).curvature(np.eye(3), e1, e2, e3), 0.0)
    x, y, z = np.array([0.3, -1.0, 0.5]), np.array([1.2, 0.4, 0.0]), np.array([-0.2, 0.9, 0.7])
    half = SO3(0.5).curvature(np.eye(3), x, y, z)
    assert np.allclose(half, -0.25 * np.cross(np.cross(x, y), z))
    # bracket of left-trivialised fields is the matrix commutator
    assert np.allclose(SO3(1.0).bracket(e1, e2), e3)
    assert np.allclose(SO3(1.0).torsion(np.eye(3), e1, e2), -e3)
    assert np.allclose(SO3(0.5).torsion(np.eye(3), e1, e2), 0.0)
    assert np.allclose(SO3(0.0).torsion(np.eye(3), e1, e2), e3)


def test_covariant_derivative_of_curvature(rng):
    E = Euclidean(3)
    args = [rng.standard_normal(3) for _ in range(4)]
    assert np.allclose(E.covariant_derivative_curvature(np.zeros(3), *args), 0.0)
    p = S2.random_point(rng)
    for order in (1, 2):
        args = [S2.random_tangent(rng, p) for _ in range(4)]
        assert np.max(np.abs(S2.covariant_derivative_curvature(p, *args, order=order))) < 1e-4
    G = SO3(1.0)
    args = [rng.standard_normal(3) for _ in range(4)]
    assert np.max(np.abs(G.covariant_derivative_curvature(G.random_point(rng), *args))) < 1e-6


def test_normal_frames(rng):
    p_ref = np.array([0.0, 0.0, 1.0])
    ref = S2.identity_frame(p_ref)
    same = S2.normal_frame(ref, p_ref)
    assert np.allclose(same.basis, ref.basis)
    for _ in range(10):
        fr = S2.normal_frame(ref, S2.random_point(rng, p_ref, 2.0))
        assert np.max(np.abs(fr.basis @ fr.basis.T - np.eye(2))) < 1e-9
        assert np.max(np.abs(fr.basis @ fr.base)) < 1e-12
    E = Euclidean(3)
    ef = E.identity_frame(np.zeros(3))
    assert np.array_equal(E.normal_frame(ef, rng.standard_normal(3)).basis, ef.basis)
    with pytest.raises(ValueError):
        Frame(np.zeros(3), np.array([[1.0, 0, 0], [2.0, 0, 0]]))


def test_sphere_lift_is_rotation_for_rotations(rng):
    Q = rodrigues_exp(rng.standard_normal(3))
    p = S2.random_point(rng)
    lifted = S2.lift_linear_map(p, Q @ p, Q - np.outer(Q @ p, p))
    assert np.allclose(lifted, Q)


def test_affine_transformation_checks(rng):
    Q = rodrigues_exp([0.3, -0.4, 1.1])
    center = np.array([0.0, 0.0, 1.0])
    rep = is_affine_transformation(S2, lambda x: x @ Q.T, center, rng)
    assert rep.passed and rep.max_residual < 1e-8
    bent = is_affine_transformation(S2, lambda x: S2.project(x + 0.3 * np.array([0, 0, 1.0])), center, rng)
    assert not bent.passed and bent.max_residual > 1e-3
    A, b = rng.standard_normal((3, 3)), rng.standard_normal(3)
    assert is_affine_transformation(Euclidean(3), lambda x: x @ A.T + b, np.zeros(3), rng).passed
    with pytest.raises(InsufficientSamples):
        is_affine_transformation(S2, lambda x: x, center, rng, n_points=10)


def test_heisenberg_group_law(rng):
    H = Heisenberg(1.0)
    x, y = rng.standard_normal(3), rng.standard_normal(3)
    g, h = H.group_exp(x), H.group_exp(y)
    # Baker-Campbell-Hausdorff terminates after one bracket
    assert np.allclose(H.group_log(g @ h), x + y + 0.5 * H.bracket(x, y))
    assert np.max(H.membership_residual(g)) < 1e-12


def test_make_manifold():
    assert isinstance(make_manifold("sphere2"), Sphere2)
    assert make_manifold("lie_group", group="so3", mu=0.5).mu == 0.5
    assert make_manifold("euclidean", n=4).dim == 4
    with pytest.raises(ValueError):
        make_manifold("torus")
