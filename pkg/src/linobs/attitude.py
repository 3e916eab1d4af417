"""Roll-pitch attitude on S^2 and an error-state observer for it.

The gravity direction seen in the body frame, q = R^T g, lives on S^2 and
obeys q' = -omega x q for body rate omega. This is the ``SigmaCross`` system
with sigma(omega) = -omega, so the tangent error between truth and estimate
propagates exactly by the same rotation as the estimate.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .flows import ConstantInput, FlowField, InputSignal, SigmaCross, flow
from .kernel import GuardViolation, IntegrationDiverged, OdeConfig, least_squares, rodrigues_exp, skew
from .manifolds import Sphere2
from .report import CheckReport

GRAVITY_DIR = np.array([0.0, 0.0, 1.0])
RETRACTIONS = ("geodesic", "projected")
# differences between unit vectors below this are rounding noise
ROUNDOFF_FLOOR = 1e-15

_S2 = Sphere2()


def gravity_field() -> SigmaCross:
    """q' = -omega x q as a flow field driven by the body rate."""
    return SigmaCross(-np.eye(3), np.zeros(3))


@dataclass
class FullAttitude:
    R: np.ndarray

    def __post_init__(self):
        self.R = np.asarray(self.R, dtype=float)
        if self.R.shape != (3, 3):
            raise ValueError("R must be 3x3")
        if np.linalg.norm(self.R.T @ self.R - np.eye(3)) > 1e-9 or np.linalg.det(self.R) < 0:
            raise ValueError("R is not a rotation")


@dataclass
class ImuSample:
    t: float
    omega: np.ndarray
    accel_dir: np.ndarray

    def __post_init__(self):
        self.omega = np.asarray(self.omega, dtype=float)
        a = np.asarray(self.accel_dir, dtype=float)
        self.accel_dir = a / np.linalg.norm(a)


@dataclass
class NoiseSpec:
    """Gyro noise density (rad/s/sqrt(Hz)), accelerometer direction noise
    (rad per tangent axis) and the RNG seed."""

    gyro_std: float = 0.0
    accel_angle_std: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.gyro_std < 0 or self.accel_angle_std < 0:
            raise ValueError("noise levels must be non-negative")


@dataclass
class AttitudeEstimate:
    q_hat: np.ndarray
    P: np.ndarray

    def __post_init__(self):
        self.q_hat = np.asarray(self.q_hat, dtype=float)
        self.P = np.asarray(self.P, dtype=float)
        if abs(np.linalg.norm(self.q_hat) - 1.0) > 1e-9:
            raise ValueError("q_hat must be a unit vector")

    @classmethod
    def isotropic(cls, q_hat, std: float) -> "AttitudeEstimate":
        q = np.asarray(q_hat, dtype=float)
        q = q / np.linalg.norm(q)
        return cls(q, std**2 * _S2.tangent_projector(q))

    def invariant_residuals(self) -> dict[str, float]:
        P = self.P
        return {
            "unit": abs(float(np.linalg.norm(self.q_hat)) - 1.0),
            "symmetry": float(np.max(np.abs(P - P.T))),
            "min_eigenvalue": float(np.min(np.linalg.eigvalsh(0.5 * (P + P.T)))),
            "null": float(np.linalg.norm(P @ self.q_hat)),
        }


def quotient_project(R, g_dir=GRAVITY_DIR) -> np.ndarray:
    """Body-frame gravity direction q = R^T g; forgets yaw about g."""
    g = np.asarray(g_dir, dtype=float)
    if abs(np.linalg.norm(g) - 1.0) > 1e-9:
        raise ValueError("g_dir must be a unit vector")
    R = R.R if isinstance(R, FullAttitude) else np.asarray(R, dtype=float)
    return np.swapaxes(R, -1, -2) @ g


def _sym_project(q, P):
    Pi = _S2.tangent_projector(q)
    P = Pi @ P @ Pi
    return 0.5 * (P + P.T)


def propagate(est: AttitudeEstimate, omega, dt: float, gyro_std: float = 0.0) -> AttitudeEstimate:
    """Zero-order-hold step q <- Exp(-dt omega^x) q with covariance growth
    dt * gyro_std^2 on the tangent plane."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    Phi = rodrigues_exp(-dt * np.asarray(omega, dtype=float))
    q = Phi @ est.q_hat
    q = q / np.linalg.norm(q)
    P = Phi @ est.P @ Phi.T + dt * gyro_std**2 * _S2.tangent_projector(q)
    return AttitudeEstimate(q, _sym_project(q, P))


def retract(q_hat, dq, mode: str = "geodesic") -> np.ndarray:
    if mode == "geodesic":
        return _S2.exp(q_hat, dq)
    if mode == "projected":
        v = q_hat + _S2.project_tangent(q_hat, dq)
        return v / np.linalg.norm(v)
    raise ValueError(f"unknown retraction {mode!r}; use one of {RETRACTIONS}")


@dataclass
class UpdateInfo:
    innovation: np.ndarray
    correction: np.ndarray
    gain: np.ndarray  # 2x2 on the tangent basis


def update(est: AttitudeEstimate, a, accel_var: float, mode: str = "geodesic",
           info: list | None = None) -> AttitudeEstimate:
    """Measurement update with a = q observed on the tangent plane.

    The gain and the Joseph-form covariance update are computed in an
    orthonormal basis of the tangent plane at q_hat; the posterior
    covariance is moved to the corrected estimate by parallel transport of
    that basis.
    """
    a = np.asarray(a, dtype=float)
    a = a / np.linalg.norm(a)
    q = est.q_hat
    if np.arccos(np.clip(q @ a, -1.0, 1.0)) >= np.pi - 1e-3:
        raise GuardViolation("measurement is antipodal to the estimate")
    B = _S2.tangent_basis(q)  # 2x3
    nu = _S2.log(q, a)
    Pc = B @ est.P @ B.T
    S = Pc + accel_var * np.eye(2)
    K = Pc @ np.linalg.pinv(S)
    dq = B.T @ (K @ (B @ nu))
    IK = np.eye(2) - K
    Pc_post = IK @ Pc @ IK.T + accel_var * K @ K.T
    q_new = retract(q, dq, mode)
    B_new = _S2.transport(q, _S2.log(q, q_new), B, 1.0)
    P_new = B_new.T @ Pc_post @ B_new
    if info is not None:
        info.append(UpdateInfo(nu, dq, K))
    return AttitudeEstimate(q_new, _sym_project(q_new, P_new))


def riccati_steady_state(q: float, r: float) -> tuple[float, float]:
    """Scalar predict/update Riccati fixed point: (prior, posterior) variance
    for process variance ``q`` per update interval and measurement variance ``r``."""
    if q < 0 or r <= 0:
        raise ValueError("need q >= 0 and r > 0")
    prior = 0.5 * (q + np.sqrt(q * q + 4.0 * q * r))
    return prior, prior * r / (prior + r)


def propagate_error(omega_signal: InputSignal, q_hat0, e0, horizon: float, dt: float = 1e-2):
    """Tangent error F_t e0 next to log(q_hat_t, q_t) for a noise-free pair.

    Returns (times, predicted, measured).
    """
    f = gravity_field()
    q_hat0 = np.asarray(q_hat0, dtype=float)
    q0 = _S2.exp(q_hat0, e0)
    traj = flow(_S2, f, omega_signal, np.stack([q_hat0, q0]), horizon, OdeConfig(dt))
    est, true = traj.states[:, 0], traj.states[:, 1]
    # e' = -omega x e: the error is carried by the estimate's own rotation
    predicted = [np.asarray(e0, dtype=float)]
    e = np.asarray(e0, dtype=float)
    for k in range(len(traj.times) - 1):
        h = traj.times[k + 1] - traj.times[k]
        e = _rotate_rk4(omega_signal, traj.times[k], h, e)
        predicted.append(e)
    measured = _S2.log(est, true)
    return traj.times, np.array(predicted), measured


def _rotate_rk4(signal, t, h, e):
    def rhs(s, v):
        return -np.cross(signal(s), v)

    k1 = rhs(t, e)
    k2 = rhs(t + h / 2, e + h / 2 * k1)
    k3 = rhs(t + h / 2, e + h / 2 * k2)
    k4 = rhs(t + h, e + h * k3)
    return e + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)


# ---------------------------------------------------------------------------
# observer runs


@dataclass
class FilterTuning:
    """Noise levels the filter assumes; need not equal the simulated ones."""

    gyro_std: float = 0.01
    accel_angle_std: float = 0.01
    initial_std: float = 1.0


@dataclass
class ObserverConfig:
    omega: InputSignal = field(default_factory=lambda: ConstantInput([0.3, -0.2, 0.5]))
    q0_true: np.ndarray = field(default_factory=lambda: GRAVITY_DIR.copy())
    initial_error_rad: float = np.pi / 3
    initial_error_axis: np.ndarray | None = None
    duration: float = 20.0
    propagation_rate: float = 100.0
    update_rate: float = 10.0
    noise: NoiseSpec = field(default_factory=NoiseSpec)
    tuning: FilterTuning = field(default_factory=FilterTuning)
    retraction: str = "geodesic"
    convergence_window: float = 10.0

    def __post_init__(self):
        if self.propagation_rate < self.update_rate:
            raise ValueError("propagation rate must be at least the update rate")
        ratio = self.propagation_rate / self.update_rate
        if abs(ratio - round(ratio)) > 1e-9:
            raise ValueError("propagation rate must be an integer multiple of the update rate")
        if self.retraction not in RETRACTIONS:
            raise ValueError(f"unknown retraction {self.retraction!r}")
        if not self.duration > 0:
            raise ValueError("duration must be positive")


@dataclass
class ObserverRun:
    times: np.ndarray
    q_true: np.ndarray
    q_est: np.ndarray
    err_angle: np.ndarray
    p_trace: np.ndarray
    omega_meas: np.ndarray
    updates: list[dict]
    invariant_worst: dict[str, float]

    def rms_after(self, t0: float) -> float:
        sel = self.times >= t0
        return float(np.sqrt(np.mean(self.err_angle[sel] ** 2)))

    def summary(self, window_start: float) -> dict:
        return {
            "final_error_rad": float(self.err_angle[-1]),
            "rms_error_rad": self.rms_after(window_start),
            "window_start_s": float(window_start),
            "p_trace_final": float(self.p_trace[-1]),
            "p_trace_max": float(self.p_trace.max()),
            "p_trace_min": float(self.p_trace.min()),
            "n_updates": len(self.updates),
            "max_retraction_gap_ratio": max((u["gap_ratio"] for u in self.updates), default=0.0),
            "covariance_invariants": self.invariant_worst,
        }


def _initial_estimate(cfg: ObserverConfig) -> np.ndarray:
    q0 = np.asarray(cfg.q0_true, dtype=float)
    q0 = q0 / np.linalg.norm(q0)
    if cfg.initial_error_rad == 0:
        return q0
    axis = cfg.initial_error_axis
    if axis is None:
        axis = _S2.tangent_basis(q0)[0]
    axis = _S2.project_tangent(q0, np.asarray(axis, dtype=float))
    axis = axis / np.linalg.norm(axis)
    return _S2.exp(q0, cfg.initial_error_rad * axis)


def error_angle(q, q_hat) -> np.ndarray:
    """Angle between unit vectors, accurate for tiny angles."""
    q, q_hat = np.asarray(q), np.asarray(q_hat)
    return np.arctan2(np.linalg.norm(np.cross(q, q_hat), axis=-1), np.sum(q * q_hat, axis=-1))


def run_observer(cfg: ObserverConfig, seed: int | None = None) -> ObserverRun:
    """Simulate truth, IMU samples and the observer on a common clock.

    The truth follows the noise-free body rate. Gyro samples add white noise
    of standard deviation gyro_std / sqrt(dt); accelerometer directions are
    the truth pushed along a random tangent vector with per-axis standard
    deviation accel_angle_std. Both the gyro and accelerometer noise come
    from one seeded generator, so a run is fully reproducible.
    """
    noise = cfg.noise
    rng = np.random.default_rng(noise.seed if seed is None else seed)
    dt = 1.0 / cfg.propagation_rate
    every = int(round(cfg.propagation_rate / cfg.update_rate))
    truth = flow(_S2, gravity_field(), cfg.omega, np.asarray(cfg.q0_true, float) /
                 np.linalg.norm(cfg.q0_true), cfg.duration, OdeConfig(dt))
    times, q_true = truth.times, truth.states
    n = len(times)

    tun = cfg.tuning
    est = AttitudeEstimate.isotropic(_initial_estimate(cfg), tun.initial_std)
    r = tun.accel_angle_std**2
    q_est = np.empty_like(q_true)
    p_trace = np.empty(n)
    omega_meas = np.empty((n, 3))
    updates = []
    worst = {"unit": 0.0, "symmetry": 0.0, "min_eigenvalue": 0.0, "null": 0.0}

    def record(k, e):
        q_est[k] = e.q_hat
        p_trace[k] = np.trace(e.P)
        for key, v in e.invariant_residuals().items():
            worst[key] = min(worst[key], v) if key == "min_eigenvalue" else max(worst[key], v)

    omega_meas[0] = cfg.omega(times[0])
    record(0, est)
    for k in range(n - 1):
        w = cfg.omega(times[k]) + noise.gyro_std / np.sqrt(dt) * rng.standard_normal(3)
        omega_meas[k] = w
        est = propagate(est, w, times[k + 1] - times[k], tun.gyro_std)
        if (k + 1) % every == 0:
            qt = q_true[k + 1]
            a = _S2.exp(qt, noise.accel_angle_std * (_S2.tangent_basis(qt).T @ rng.standard_normal(2)))
            info = []
            before = est
            est = update(before, a, r, cfg.retraction, info)
            other = "projected" if cfg.retraction == "geodesic" else "geodesic"
            alt = retract(before.q_hat, info[0].correction, other)
            dq = float(np.linalg.norm(info[0].correction))
            gap = float(np.linalg.norm(alt - est.q_hat))
            updates.append({"t": float(times[k + 1]), "correction_norm": dq, "retraction_gap": gap,
                            "gap_ratio": gap / (dq**2 + ROUNDOFF_FLOOR)})
        if not np.all(np.isfinite(est.q_hat)) or not np.all(np.isfinite(est.P)):
            raise IntegrationDiverged(times[k])
        record(k + 1, est)
    omega_meas[-1] = cfg.omega(times[-1])
    return ObserverRun(times, q_true, q_est, error_angle(q_true, q_est), p_trace, omega_meas, updates,
                       worst)


def riccati_rms_bound(cfg: ObserverConfig) -> float:
    """Steady-state RMS error angle predicted by the scalar Riccati recursion
    for the simulated noise levels: sqrt(2 * prior variance)."""
    q = cfg.noise.gyro_std**2 / cfg.update_rate
    prior, _ = riccati_steady_state(q, cfg.noise.accel_angle_std**2)
    return float(np.sqrt(2.0 * prior))


# ---------------------------------------------------------------------------
# classification


def fit_sigma(candidate: FlowField, inputs, n_points: int = 50, seed: int = 0):
    """Best sigma per input value for W(q) ~ sigma x q, and the worst residual."""
    rng = np.random.default_rng(seed)
    Q = rng.standard_normal((n_points, 3))
    Q /= np.linalg.norm(Q, axis=1, keepdims=True)
    A = -skew(Q).reshape(-1, 3)  # sigma x q = -q^x sigma
    sigmas, worst = [], 0.0
    for u in inputs:
        W = np.asarray(candidate(Q, u), dtype=float)
        s = least_squares(A, W.reshape(-1))
        sigmas.append(s)
        worst = max(worst, float(np.max(np.linalg.norm(W - np.cross(s, Q), axis=1))))
    return np.array(sigmas), worst


def classify_s2_systems(candidate: FlowField, signals, cfg=None, suite: dict | None = None,
                        fit_tolerance: float = 1e-8, n_inputs: int = 8) -> CheckReport:
    """Cross-check the sigma-cross form against the verifier's verdict.

    The fit looks for sigma(u) with W(q) = sigma(u) x q at sampled inputs.
    A good fit must come with a passing suite and a poor fit with a failing
    one; a ``SigmaCross`` candidate must in addition pass. The report passes
    when the two verdicts are consistent.
    """
    from .suite import SuiteConfig, core_verdict, run_suite

    if isinstance(signals, InputSignal):
        signals = [signals]
    cfg = cfg or SuiteConfig()
    if suite is None:
        suite = run_suite(_S2, candidate, signals, cfg,
                          ["exact-linearization", "state-independence", "self-similarity", "jacobi",
                           "preintegration"])
    ts = np.linspace(0.0, cfg.horizon, n_inputs)
    inputs = [u(t) for u in signals for t in ts]
    _, fit_res = fit_sigma(candidate, inputs, seed=cfg.seed)
    good_fit = fit_res <= fit_tolerance
    verdict = core_verdict(suite)
    consistent = good_fit == verdict
    if isinstance(candidate, SigmaCross):
        consistent = consistent and verdict
    details = [{"sigma_fit_residual": fit_res, "fit_tolerance": fit_tolerance,
                "good_fit": bool(good_fit), "suite_pass": bool(verdict),
                "is_sigma_cross": isinstance(candidate, SigmaCross),
                "suite": {k: v.status for k, v in suite.items()}}]
    return CheckReport("classify-s2", 0.0 if consistent else 1.0, 0.0, len(inputs), details)
