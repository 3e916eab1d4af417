import numpy as np
import pytest

from linobs.attitude import (
    AttitudeEstimate,
    FilterTuning,
    FullAttitude,
    ImuSample,
    NoiseSpec,
    ObserverConfig,
    classify_s2_systems,
    error_angle,
    fit_sigma,
    propagate,
    propagate_error,
    quotient_project,
    retract,
    riccati_rms_bound,
    riccati_steady_state,
    run_observer,
    update,
)
from linobs.flows import ConstantInput, GradientLike, LeftInvariant, SigmaCross, SinusoidInput, flow
from linobs.kernel import GuardViolation, OdeConfig, rodrigues_exp
from linobs.manifolds import SO3, Sphere2
from linobs.suite import SuiteConfig

S2 = Sphere2()
FAST = SuiteConfig(horizon=0.5, n_base_points=3, magnitudes=(0.1, 0.5), n_t=11, n_s=7, t_fits=(0.0, 0.5))


def _check_invariants(est):
    r = est.invariant_residuals()
    assert r["unit"] < 1e-9 and r["symmetry"] < 1e-10
    assert r["min_eigenvalue"] > -1e-10 and r["null"] < 1e-8


def test_quotient_project_examples(rng):
    assert np.allclose(quotient_project(np.eye(3)), [0, 0, 1])
    R = SO3().random_point(rng)
    q = quotient_project(FullAttitude(R))
    assert abs(np.linalg.norm(q) - 1) < 1e-9
    with pytest.raises(ValueError):
        quotient_project(R, [0, 0, 2.0])
    with pytest.raises(ValueError):
        FullAttitude(np.diag([1.0, 1.0, -1.0]))


def test_yaw_is_unobservable(rng):
    R = SO3().random_point(rng)
    for alpha in (0.3, 2.0, -1.1):
        world_yaw = rodrigues_exp([0, 0, alpha]) @ R
        assert np.max(np.abs(quotient_project(world_yaw) - quotient_project(R))) < 1e-12


def test_rotation_and_gravity_flows_agree(rng):
    omega = SinusoidInput([0.2, -0.1, 0.3], [0.5, 0.4, 0.3])
    R0 = SO3().random_point(rng)
    cfg = OdeConfig(1e-2)
    Rt = flow(SO3(), LeftInvariant(np.eye(3), np.zeros(3)), omega, R0, 10.0, cfg).states
    from linobs.attitude import gravity_field
    qt = flow(S2, gravity_field(), omega, quotient_project(R0), 10.0, cfg).states
    assert np.max(np.abs(quotient_project(Rt) - qt)) < 1e-7


def test_imu_sample_normalizes():
    s = ImuSample(0.0, [0, 0, 0], [0, 0, 9.81])
    assert np.allclose(s.accel_dir, [0, 0, 1])
    with pytest.raises(ValueError):
        NoiseSpec(gyro_std=-1.0)


def test_propagate_examples():
    est = AttitudeEstimate.isotropic([1.0, 0, 0], 0.1)
    out = propagate(est, [0, 0, 1.0], np.pi / 2)
    assert np.allclose(out.q_hat, [0, -1, 0], atol=1e-12)
    _check_invariants(out)
    still = propagate(est, np.zeros(3), 0.01, gyro_std=0.2)
    assert np.allclose(still.q_hat, est.q_hat)
    assert np.allclose(still.P - est.P, 0.01 * 0.04 * S2.tangent_projector(est.q_hat))
    with pytest.raises(ValueError):
        propagate(est, np.zeros(3), 0.0)


def test_propagation_preserves_error_angle(rng):
    q = S2.random_point(rng)
    qh = S2.exp(q, 0.7 * S2.project_tangent(q, rng.standard_normal(3)) / 1.0)
    a0 = error_angle(q, qh)
    e_t, e_h = AttitudeEstimate.isotropic(q, 0.1), AttitudeEstimate.isotropic(qh, 0.1)
    for _ in range(200):
        w = rng.standard_normal(3)
        e_t, e_h = propagate(e_t, w, 0.01), propagate(e_h, w, 0.01)
    assert abs(error_angle(e_t.q_hat, e_h.q_hat) - a0) < 1e-9


def test_update_zero_innovation():
    est = AttitudeEstimate.isotropic([0, 0, 1.0], 0.2)
    out = update(est, [0, 0, 1.0], 0.01)
    assert np.allclose(out.q_hat, est.q_hat)
    assert np.trace(out.P) < np.trace(est.P)
    _check_invariants(out)


def test_update_scalar_kalman():
    s2, r = 0.04, 0.01
    est = AttitudeEstimate.isotropic([0, 0, 1.0], np.sqrt(s2))
    info = []
    a = S2.exp(np.array([0, 0, 1.0]), [0.05, -0.02, 0])
    out = update(est, a, r, info=info)
    k = s2 / (s2 + r)
    assert np.allclose(info[0].gain, k * np.eye(2))
    assert np.allclose(info[0].correction, k * S2.log(est.q_hat, a))
    assert np.allclose(np.linalg.eigvalsh(out.P)[1:], s2 * r / (s2 + r))
    _check_invariants(out)


def test_update_rejects_antipodal():
    est = AttitudeEstimate.isotropic([0, 0, 1.0], 0.2)
    with pytest.raises(GuardViolation):
        update(est, [0, 0, -1.0], 0.01)


def test_ninety_degree_recovery():
    q = np.array([0, 0, 1.0])
    est = AttitudeEstimate.isotropic([1.0, 0, 0], 1.0)
    for _ in range(10):
        est = update(est, q, 1e-4)
    assert error_angle(q, est.q_hat) < 1e-3


def test_retractions_agree_to_second_order():
    q = np.array([0, 0, 1.0])
    for h in (1e-1, 1e-2, 1e-3):
        dq = h * np.array([0.6, -0.8, 0])
        gap = np.linalg.norm(retract(q, dq, "geodesic") - retract(q, dq, "projected"))
        assert gap < h**2
    with pytest.raises(ValueError):
        retract(q, dq, "other")


def test_riccati_fixed_point():
    q, r = 1e-5, 4e-4
    prior, post = riccati_steady_state(q, r)
    assert np.isclose(post + q, prior)
    assert np.isclose(post, prior * r / (prior + r))
    with pytest.raises(ValueError):
        riccati_steady_state(1.0, 0.0)


@pytest.mark.parametrize("angle", [0.1, 0.5, 1.0])
def test_error_propagation_is_exact(angle):
    omega = SinusoidInput([0.3, -0.2, 0.5], [0.7, 0.5, 0.3])
    qh = np.array([0.6, 0.0, 0.8])
    e0 = angle * np.array([0.0, 1.0, 0.0])
    _, pred, meas = propagate_error(omega, qh, e0, 5.0)
    assert np.max(np.linalg.norm(pred - meas, axis=1)) < 1e-6


def test_observer_zero_noise_zero_error():
    run = run_observer(ObserverConfig(initial_error_rad=0.0, duration=5.0))
    assert run.err_angle.max() < 1e-7


def test_observer_converges_from_sixty_degrees():
    run = run_observer(ObserverConfig())
    assert run.err_angle[0] == pytest.approx(np.pi / 3)
    assert run.err_angle[-1] < 1e-5
    inv = run.invariant_worst
    assert inv["symmetry"] < 1e-10 and inv["min_eigenvalue"] > -1e-10 and inv["null"] < 1e-8


def test_observer_noisy_rms_near_riccati():
    cfg = ObserverConfig(duration=40.0, convergence_window=20.0,
                         noise=NoiseSpec(0.01, 0.02, 42), tuning=FilterTuning(0.01, 0.02, 1.0))
    run = run_observer(cfg)
    bound = riccati_rms_bound(cfg)
    assert run.rms_after(20.0) < 3 * bound
    again = run_observer(cfg)
    assert np.array_equal(run.q_est, again.q_est)
    other = run_observer(cfg, seed=7)
    assert np.array_equal(run.q_true, other.q_true)
    assert not np.array_equal(run.q_est, other.q_est)


def test_observer_config_validation():
    with pytest.raises(ValueError):
        ObserverConfig(propagation_rate=10.0, update_rate=100.0)
    with pytest.raises(ValueError):
        ObserverConfig(propagation_rate=100.0, update_rate=30.0)
    with pytest.raises(ValueError):
        ObserverConfig(retraction="linear")


def test_fit_sigma_recovers_affine_map(rng):
    S, c = rng.standard_normal((3, 3)), rng.standard_normal(3)
    inputs = [rng.standard_normal(3) for _ in range(4)]
    sig, res = fit_sigma(SigmaCross(S, c), inputs)
    assert res < 1e-10
    assert np.allclose(sig, [S @ u + c for u in inputs])
    _, res = fit_sigma(GradientLike([0, 0, 1.0]), [np.zeros(1)])
    assert res > 0.1


def test_classify_examples(rng):
    u = ConstantInput([0.3, -0.2, 0.5])
    assert classify_s2_systems(SigmaCross(np.eye(3), np.zeros(3)), u, FAST).passed
    rep = classify_s2_systems(SigmaCross(rng.standard_normal((3, 3)), rng.standard_normal(3)), u, FAST)
    assert rep.passed and rep.details[0]["suite_pass"]
    rep = classify_s2_systems(GradientLike([0, 0, 1.0]), ConstantInput([0.0]),
                              SuiteConfig(horizon=1.0, n_base_points=3, magnitudes=(0.1, 0.5), n_t=11, n_s=7,
                                          t_fits=(0.0, 0.5), reference_point=np.array([0.6, 0, 0.8])))
    assert rep.passed
    assert not rep.details[0]["good_fit"] and not rep.details[0]["suite_pass"]
