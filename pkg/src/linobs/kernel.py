"""Small numerical substrate: RK4 integration, SO(3) helpers, least squares,
finite differences.

Everything here is pure and works on plain ``numpy`` arrays. Functions that
act on 3-vectors or 3x3 matrices accept leading batch dimensions.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

DEFAULT_STEP = 1e-3
DEFAULT_FD_STEP = 1e-5
LOG_GUARD = 1e-6


class DimensionError(ValueError):
    pass


class GuardViolation(ValueError):
    """A point left the region where exp/log are well defined."""


class IntegrationDiverged(ArithmeticError):
    def __init__(self, last_time: float):
        super().__init__(f"non-finite state after t={last_time:.6g}")
        self.last_time = last_time


class RankDeficiency(np.linalg.LinAlgError):
    def __init__(self, rank: int, cols: int):
        super().__init__(f"rank deficient: numerical rank {rank} < {cols}")
        self.rank = rank


@dataclass(frozen=True)
class OdeConfig:
    step_size: float = DEFAULT_STEP

    def __post_init__(self):
        if not self.step_size > 0:
            raise ValueError("step_size must be positive")


@dataclass
class SampledPath:
    times: np.ndarray
    states: np.ndarray


def rk4_step(f, t, x, h):
    k1 = f(t, x)
    k2 = f(t + 0.5 * h, x + 0.5 * h * k1)
    k3 = f(t + 0.5 * h, x + 0.5 * h * k2)
    k4 = f(t + h, x + h * k3)
    return x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def time_grid(t0: float, t1: float, h: float) -> np.ndarray:
    """Grid t0, t0+h, ..., with a final partial step landing on t1."""
    if t1 < t0:
        raise ValueError("t1 must be >= t0")
    n = int(np.floor((t1 - t0) / h + 1e-9))
    times = t0 + h * np.arange(n + 1)
    if t1 - times[-1] > 1e-12 * max(1.0, abs(t1)):
        times = np.append(times, t1)
    else:
        times[-1] = t1
    return times


def integrate_ode(
    f: Callable[[float, np.ndarray], np.ndarray],
    x0,
    t0: float,
    t1: float,
    cfg: OdeConfig = OdeConfig(),
    project: Callable[[np.ndarray], np.ndarray] | None = None,
) -> SampledPath:
    """Fixed-step classical RK4 on ``x' = f(t, x)``.

    ``x0`` may be any array shape. ``project`` is applied after every step
    (used for manifold reprojection).
    """
    times = time_grid(t0, t1, cfg.step_size)
    x = np.array(x0, dtype=float)
    states = np.empty((len(times),) + x.shape)
    states[0] = x
    for i in range(len(times) - 1):
        x = rk4_step(f, times[i], x, times[i + 1] - times[i])
        if project is not None:
            x = project(x)
        if not np.all(np.isfinite(x)):
            raise IntegrationDiverged(times[i])
        states[i + 1] = x
    return SampledPath(times, states)


def skew(v) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    if v.shape[-1] != 3:
        raise DimensionError(f"skew needs length-3 vectors, got shape {v.shape}")
    out = np.zeros(v.shape[:-1] + (3, 3))
    out[..., 0, 1] = -v[..., 2]
    out[..., 0, 2] = v[..., 1]
    out[..., 1, 0] = v[..., 2]
    out[..., 1, 2] = -v[..., 0]
    out[..., 2, 0] = -v[..., 1]
    out[..., 2, 1] = v[..., 0]
    return out


def vee(m) -> np.ndarray:
    m = np.asarray(m, dtype=float)
    return 0.5 * np.stack(
        [m[..., 2, 1] - m[..., 1, 2], m[..., 0, 2] - m[..., 2, 0], m[..., 1, 0] - m[..., 0, 1]],
        axis=-1,
    )


def rodrigues_exp(omega) -> np.ndarray:
    """Rotation matrix exp(omega^x), batched over leading axes."""
    omega = np.asarray(omega, dtype=float)
    theta = np.linalg.norm(omega, axis=-1)[..., None, None]
    k = skew(omega)
    small = theta < 1e-4
    th = np.where(small, 1.0, theta)
    # series keeps full precision near zero
    a = np.where(small, 1 - theta**2 / 6 + theta**4 / 120, np.sin(th) / th)
    b = np.where(small, 0.5 - theta**2 / 24 + theta**4 / 720, (1 - np.cos(th)) / th**2)
    return np.eye(3) + a * k + b * (k @ k)


def rotation_log(R) -> np.ndarray:
    """Inverse of :func:`rodrigues_exp` for rotation angles below pi - 1e-6."""
    R = np.asarray(R, dtype=float)
    cos = np.clip((np.trace(R, axis1=-2, axis2=-1) - 1.0) / 2.0, -1.0, 1.0)
    theta = np.arccos(cos)
    if np.any(theta >= np.pi - LOG_GUARD):
        raise GuardViolation("rotation angle too close to pi (cut locus)")
    w = 0.5 * vee(R - np.swapaxes(R, -1, -2))  # = sin(theta) * axis
    s = np.sin(theta)
    small = theta < 1e-4
    factor = np.where(small, 1 + theta**2 / 6 + 7 * theta**4 / 360, theta / np.where(small, 1.0, s))
    return factor[..., None] * w


def least_squares(A, b, rtol: float = 1e-12) -> np.ndarray:
    """Minimise ||A x - b|| through a reduced QR factorisation.

    ``b`` may be a vector or a matrix of right-hand sides.
    """
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    m, n = A.shape
    if m < n:
        raise DimensionError(f"need rows >= cols, got {A.shape}")
    q, r = np.linalg.qr(A, mode="reduced")
    d = np.abs(np.diag(r))
    scale = max(d.max(initial=0.0), np.finfo(float).tiny)
    rank = int(np.sum(d > rtol * scale))
    if rank < n:
        raise RankDeficiency(rank, n)
    return np.linalg.solve(r, q.T @ b)


def central_difference(f, x, direction, h: float = DEFAULT_FD_STEP) -> np.ndarray:
    if not h > 0:
        raise ValueError("h must be positive")
    x = np.asarray(x, dtype=float)
    d = np.asarray(direction, dtype=float)
    return (np.asarray(f(x + h * d)) - np.asarray(f(x - h * d))) / (2 * h)


def polar_orthonormalize(R) -> np.ndarray:
    """Nearest rotation matrix (polar factor), batched."""
    u, _, vt = np.linalg.svd(R)
    return u @ vt
