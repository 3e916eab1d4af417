"""Input-driven flow fields, flow-line integration and error traces."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .kernel import GuardViolation, OdeConfig, integrate_ode
from .manifolds import ConnectionManifold


# ---------------------------------------------------------------------------
# input signals


class InputSignal:
    dimension: int

    def __call__(self, t: float) -> np.ndarray:
        raise NotImplementedError

    def breakpoints(self, t0: float, t1: float) -> list[float]:
        return []

    def on_segment(self, a: float, b: float) -> Callable[[float], np.ndarray]:
        """Evaluator valid on [a, b], constant across its closed ends."""
        return self


@dataclass
class ConstantInput(InputSignal):
    value: np.ndarray

    def __post_init__(self):
        self.value = np.atleast_1d(np.asarray(self.value, dtype=float))
        self.dimension = len(self.value)

    def __call__(self, t):
        return self.value


@dataclass
class SinusoidInput(InputSignal):
    """offset + amplitude * sin(2 pi frequency t + phase), per axis."""

    amplitude: np.ndarray
    frequency: np.ndarray
    phase: np.ndarray | None = None
    offset: np.ndarray | None = None

    def __post_init__(self):
        self.amplitude = np.atleast_1d(np.asarray(self.amplitude, dtype=float))
        n = self.dimension = len(self.amplitude)
        self.frequency = np.broadcast_to(np.asarray(self.frequency, dtype=float), (n,)).copy()
        self.phase = np.zeros(n) if self.phase is None else np.broadcast_to(
            np.asarray(self.phase, dtype=float), (n,)).copy()
        self.offset = np.zeros(n) if self.offset is None else np.broadcast_to(
            np.asarray(self.offset, dtype=float), (n,)).copy()

    def __call__(self, t):
        return self.offset + self.amplitude * np.sin(2 * np.pi * self.frequency * t + self.phase)


@dataclass
class PiecewiseConstantInput(InputSignal):
    """``values[i]`` holds on [breakpoints[i-1], breakpoints[i]); values has one
    more row than breakpoints."""

    breakpoint_times: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        self.breakpoint_times = np.asarray(self.breakpoint_times, dtype=float)
        self.values = np.atleast_2d(np.asarray(self.values, dtype=float))
        if np.any(np.diff(self.breakpoint_times) <= 0):
            raise ValueError("breakpoints must be strictly increasing")
        if len(self.values) != len(self.breakpoint_times) + 1:
            raise ValueError("need len(breakpoints) + 1 value rows")
        self.dimension = self.values.shape[1]

    def __call__(self, t):
        return self.values[np.searchsorted(self.breakpoint_times, t, side="right")]

    def breakpoints(self, t0, t1):
        return [float(b) for b in self.breakpoint_times if t0 < b < t1]

    def on_segment(self, a, b):
        v = self(0.5 * (a + b))
        return lambda t: v


# ---------------------------------------------------------------------------
# flow fields


class FlowField:
    """Map (point, input) -> tangent components at the point."""

    def __call__(self, p, u) -> np.ndarray:
        raise NotImplementedError


@dataclass
class SigmaCross(FlowField):
    """W^u(q) = sigma(u) x q on S^2 with sigma(u) = S u + c."""

    S: np.ndarray
    c: np.ndarray

    def __post_init__(self):
        self.S = np.atleast_2d(np.asarray(self.S, dtype=float))
        self.c = np.asarray(self.c, dtype=float)

    def sigma(self, u) -> np.ndarray:
        return self.S @ np.asarray(u, dtype=float) + self.c

    def __call__(self, q, u):
        return np.cross(self.sigma(u), q)


@dataclass
class GradientLike(FlowField):
    """W(q) = (I - q q^T) b: flows toward +b, ignores the input."""

    b: np.ndarray

    def __post_init__(self):
        self.b = np.asarray(self.b, dtype=float)

    def __call__(self, q, u):
        q = np.asarray(q, dtype=float)
        return self.b - np.sum(q * self.b, axis=-1, keepdims=True) * q


@dataclass
class LeftInvariant(FlowField):
    """W^u(g) = g Lambda(u) on a matrix group, Lambda(u) = L u + c in algebra
    coordinates (so components are constant over the group)."""

    L: np.ndarray
    c: np.ndarray

    def __post_init__(self):
        self.L = np.atleast_2d(np.asarray(self.L, dtype=float))
        self.c = np.asarray(self.c, dtype=float)

    def generator(self, u) -> np.ndarray:
        return self.L @ np.asarray(u, dtype=float) + self.c

    def __call__(self, g, u):
        return np.broadcast_to(self.generator(u), np.shape(g)[:-2] + (len(self.c),))


@dataclass
class RightPerturbed(LeftInvariant):
    """Body rate with a state-dependent term: Lambda(u) + kappa * R[2, 2] * e_1.

    Not group-affine; kept as a negative control."""

    kappa: float = 0.5

    def __call__(self, g, u):
        g = np.asarray(g, dtype=float)
        base = np.broadcast_to(self.generator(u), g.shape[:-2] + (3,))
        e1 = np.array([1.0, 0.0, 0.0])
        return base + self.kappa * g[..., 2, 2][..., None] * e1


@dataclass
class LinearField(FlowField):
    """x' = A x + B u on R^n."""

    A: np.ndarray
    B: np.ndarray | None = None

    def __post_init__(self):
        self.A = np.atleast_2d(np.asarray(self.A, dtype=float))
        if self.B is not None:
            self.B = np.atleast_2d(np.asarray(self.B, dtype=float))

    def __call__(self, x, u):
        out = np.asarray(x, dtype=float) @ self.A.T
        if self.B is not None:
            out = out + self.B @ np.asarray(u, dtype=float)
        return out


@dataclass
class CustomField(FlowField):
    func: Callable[[np.ndarray, np.ndarray], np.ndarray]

    def __call__(self, p, u):
        return self.func(p, u)


# ---------------------------------------------------------------------------
# trajectories


@dataclass
class Trajectory:
    times: np.ndarray
    states: np.ndarray  # (len(times), *batch, *point_shape)
    signal: InputSignal | None = None
    max_projection: float = 0.0

    def index(self, t: float) -> int:
        i = int(np.argmin(np.abs(self.times - t)))
        if abs(self.times[i] - t) > 1e-9:
            raise ValueError(f"t={t} is not on the trajectory grid")
        return i

    def at(self, t: float) -> np.ndarray:
        return self.states[self.index(t)]


@dataclass
class ErrorTrace:
    times: np.ndarray
    errors: np.ndarray
    validity_end: float
    details: dict = field(default_factory=dict)


def flow(m: ConnectionManifold, f: FlowField, u: InputSignal, p0, horizon: float,
         cfg: OdeConfig = OdeConfig(), t0: float = 0.0) -> Trajectory:
    """Integrate p' = W^{u_t}(p) with RK4 and per-step reprojection.

    ``p0`` may carry leading batch axes; all points share the time grid.
    Integration restarts at input breakpoints so that every RK4 step sees a
    smooth input.
    """
    if not horizon > 0:
        raise ValueError("horizon must be positive")
    t1 = t0 + horizon
    cuts = [t0] + u.breakpoints(t0, t1) + [t1]
    x = np.array(p0, dtype=float)
    worst = [0.0]

    def project(y):
        z = m.project(y)
        worst[0] = max(worst[0], float(np.max(np.abs(z - y))))
        return z

    all_t, all_x = [np.array([t0])], [x[None]]
    for a, b in zip(cuts[:-1], cuts[1:]):
        ua = u.on_segment(a, b)

        def rhs(t, y, ua=ua):
            return m.to_ambient(y, f(y, ua(t)))

        path = integrate_ode(rhs, x, a, b, cfg, project)
        all_t.append(path.times[1:])
        all_x.append(path.states[1:])
        x = path.states[-1]
    return Trajectory(np.concatenate(all_t), np.concatenate(all_x), u, worst[0])


def error_trace(m: ConnectionManifold, traj_true: Trajectory, traj_est: Trajectory) -> ErrorTrace:
    """E_t = log(est_t, true_t) until the first guard violation."""
    if traj_true.times.shape != traj_est.times.shape or not np.allclose(
            traj_true.times, traj_est.times, rtol=0, atol=1e-12):
        raise ValueError("trajectories must share a time grid")
    errors = []
    end = float(traj_true.times[-1])
    for t, p, q in zip(traj_true.times, traj_true.states, traj_est.states):
        try:
            errors.append(m.log(q, p))
        except GuardViolation:
            end = float(t)
            break
    return ErrorTrace(traj_true.times[: len(errors)], np.array(errors), end)


def velocity_residual(m: ConnectionManifold, f: FlowField, u: InputSignal, traj: Trajectory,
                      skip_breakpoints: bool = True) -> float:
    """Max mismatch between the central-difference velocity and the field."""
    t, x = traj.times, traj.states
    if len(t) < 3:
        raise ValueError("need at least three samples")
    worst = 0.0
    bps = np.asarray(u.breakpoints(t[0], t[-1]))
    for i in range(1, len(t) - 1):
        if skip_breakpoints and bps.size and np.min(np.abs(bps - t[i])) < 1e-12:
            continue
        v = (x[i + 1] - x[i - 1]) / (t[i + 1] - t[i - 1])
        r = m.from_ambient(x[i], v) - f(x[i], u(t[i]))
        worst = max(worst, float(np.max(m.norm(x[i], r))))
    return worst
