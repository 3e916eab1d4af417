"""Numerical certification of linear-observed behaviour.

Each ``check_*`` function returns a :class:`~linobs.report.CheckReport`; a
check passes when its worst residual is within tolerance. Negative controls
(systems that must fail) run through the same code.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .flows import FlowField, InputSignal, Trajectory, flow
from .kernel import GuardViolation, OdeConfig, RankDeficiency, least_squares
from .manifolds import (
    ConnectionManifold,
    Frame,
    GeodesicSegment,
    MatrixLieGroup,
    NotFlatError,
    Sphere2,
    _stencil,
    is_affine_transformation,
)
from .report import CheckReport

DEFAULT_TOLERANCES = {
    "exact-linearization": 1e-5,
    "state-independence": 1e-5,
    "self-similarity": 1e-4,
    "jacobi": 1e-4,
    "commutator": 1e-4,
    "preintegration": 1e-4,
    "curvature-condition": 1e-4,
    "group-affine": 1e-9,
    "group-automorphism": 1e-8,
    "induced-multiplication": 1e-7,
    "associativity": 1e-6,
}

S_STEP = 1e-3  # s-direction differencing step on patches


# ---------------------------------------------------------------------------
# exact linearization


@dataclass
class LinearizationRecord:
    manifold: ConnectionManifold
    times: np.ndarray
    F: np.ndarray  # (T, d, d) in frame coordinates
    base_point: np.ndarray
    frame_ref: Frame
    frames: np.ndarray  # (T, d, n_components): frame basis at each estimate
    states: np.ndarray  # (T, *point_shape): the estimate trajectory
    signal: InputSignal | None = None
    A: np.ndarray | None = None

    def ambient_F(self) -> np.ndarray:
        """F_t as (n_components x n_components) maps on tangent components."""
        left = np.swapaxes(self.frames, -1, -2)
        right = np.linalg.pinv(self.frame_ref.basis.T)
        return left @ self.F @ right

    def lifted_F(self) -> np.ndarray:
        Fa = self.ambient_F()
        m = self.manifold
        return np.stack([m.lift_linear_map(self.base_point, q, f) for q, f in zip(self.states, Fa)])


def frames_along(m: ConnectionManifold, reference: Frame, points) -> np.ndarray:
    """Basis at each of ``points`` by transport from ``reference`` along geodesics."""
    points = np.asarray(points, dtype=float)
    n = points.shape[0]
    base = np.broadcast_to(reference.base, points.shape)
    d = m.log(base, points)
    out = np.empty((n,) + reference.basis.shape)
    for k, e in enumerate(reference.basis):
        out[:, k] = np.broadcast_to(m.transport(base, d, np.broadcast_to(e, d.shape), 1.0), d.shape)
    return out


def _coords(frames, w):
    """Frame coordinates for stacked frames (..., d, n) and vectors (..., K, n)."""
    pinv = np.linalg.pinv(np.swapaxes(frames, -1, -2))  # (..., d, n)
    return w @ np.swapaxes(pinv, -1, -2)


def default_error_samples(m: ConnectionManifold, p, magnitudes=(0.05, 0.1, 0.25, 0.5, 1.0),
                          frame: Frame | None = None) -> np.ndarray:
    """Tangent vectors along +-basis and diagonal directions at each magnitude."""
    frame = frame or m.identity_frame(p)
    B = frame.basis / np.linalg.norm(frame.basis, axis=1, keepdims=True)
    dirs = [B[i] for i in range(len(B))] + [-B[i] for i in range(len(B))]
    dirs.append(B.sum(0) / np.linalg.norm(B.sum(0)))
    dirs.append((B[0] - B[-1]) / np.linalg.norm(B[0] - B[-1]))
    return np.array([a * d for a in magnitudes for d in dirs])


def fit_linearization(m: ConnectionManifold, f: FlowField, u: InputSignal, p_hat,
                      error_samples, horizon: float, cfg: OdeConfig = OdeConfig(),
                      reference: Frame | None = None,
                      tolerance: float = DEFAULT_TOLERANCES["exact-linearization"]):
    """Fit F_t with log(Phi^t(p_hat), Phi^t(exp(p_hat, v))) ~ F_t v.

    Returns ``(record, report)``; the report carries the worst exactness
    residual over every sample and time, plus the worst residual per sample
    magnitude in ``details``.
    """
    p_hat = np.asarray(p_hat, dtype=float)
    samples = np.atleast_2d(np.asarray(error_samples, dtype=float))
    reference = reference or m.identity_frame(p_hat)
    frame0 = m.normal_frame(reference, p_hat)
    V0 = frame0.coords(samples)
    if np.linalg.matrix_rank(V0, tol=1e-9) < m.dim:
        raise RankDeficiency(int(np.linalg.matrix_rank(V0, tol=1e-9)), m.dim)

    starts = m.exp(np.broadcast_to(p_hat, samples.shape[:1] + p_hat.shape), samples)
    traj = flow(m, f, u, np.concatenate([p_hat[None], starts]), horizon, cfg)
    est = traj.states[:, 0]
    true = traj.states[:, 1:]
    T, K = true.shape[:2]
    errs = m.log(np.broadcast_to(est[:, None], true.shape), true)  # (T, K, n)
    frames = frames_along(m, reference, est)
    C = _coords(frames, errs)  # (T, K, d)
    d = m.dim
    Ft = least_squares(V0, np.moveaxis(C, 0, 1).reshape(K, T * d))  # (d, T*d)
    F = np.moveaxis(Ft.reshape(d, T, d), 1, 0)
    F = np.swapaxes(F, -1, -2)  # F_t maps V0 rows: C ~ V0 F^T
    resid_c = C - V0[None] @ np.swapaxes(F, -1, -2)
    resid = np.linalg.norm(resid_c @ frames, axis=-1)  # (T, K), ambient norm

    mags = np.round(m.norm(p_hat, samples), 12)
    details = [{"magnitude": float(a), "residual": float(resid[:, mags == a].max())}
               for a in np.unique(mags)]
    report = CheckReport("exact-linearization", float(resid.max()), tolerance, T * K, details)
    rec = LinearizationRecord(m, traj.times, F, p_hat, frame0, frames, est, u)
    return rec, report


def exactness_profile(m, f, u, p_hat, magnitudes, horizon, cfg=OdeConfig(),
                      reference: Frame | None = None) -> dict[float, float]:
    """Exactness residual when F_t is fitted from errors of a single magnitude."""
    out = {}
    for a in magnitudes:
        samples = default_error_samples(m, p_hat, (a,), reference)
        _, rep = fit_linearization(m, f, u, p_hat, samples, horizon, cfg, reference)
        out[float(a)] = rep.max_residual
    return out


def _log_derivative(times, M):
    """dM/dt M^{-1} by central differences (second-order one-sided at the ends)."""
    n = len(times)
    if n < 3:
        raise ValueError("need at least three time samples")
    dM = np.empty_like(M)
    dM[1:-1] = (M[2:] - M[:-2]) / (times[2:] - times[:-2])[:, None, None]
    h0, h1 = times[1] - times[0], times[-1] - times[-2]
    dM[0] = (-3 * M[0] + 4 * M[1] - M[2]) / (2 * h0)
    dM[-1] = (3 * M[-1] - 4 * M[-2] + M[-3]) / (2 * h1)
    if np.any(np.abs(np.linalg.det(M)) < 1e-12):
        raise RankDeficiency(int(np.linalg.matrix_rank(M[0])), M.shape[-1])
    return dM @ np.linalg.inv(M)


def estimate_A(rec: LinearizationRecord) -> np.ndarray:
    """A_t = dF_t/dt F_t^{-1} in the record's frames."""
    rec.A = _log_derivative(rec.times, rec.F)
    return rec.A


def check_state_independence(records: list[LinearizationRecord],
                             tolerance: float = DEFAULT_TOLERANCES["state-independence"],
                             ) -> CheckReport:
    """Compare the generators of F_t across base points.

    Tangent spaces at different base points are identified through the
    manifold's lift of F_t to an invertible ambient map (the map itself on
    R^n and on groups in left-trivialised coordinates; on S^2 the unique
    linear extension sending the base point to its image).
    """
    if len(records) < 2:
        raise ValueError("need records at two or more base points")
    t0 = records[0].times
    for r in records[1:]:
        if r.times.shape != t0.shape or not np.allclose(r.times, t0, atol=1e-12):
            raise ValueError("records must share a time grid")
    gens = [_log_derivative(r.times, r.lifted_F()) for r in records]
    worst, details = 0.0, []
    for i in range(len(gens)):
        for j in range(i + 1, len(gens)):
            dev = float(np.max(np.linalg.norm(gens[i] - gens[j], axis=(-2, -1))))
            details.append({"pair": [i, j], "deviation": dev})
            worst = max(worst, dev)
    return CheckReport("state-independence", worst, tolerance, len(gens) * len(t0), details)


# ---------------------------------------------------------------------------
# patches


@dataclass
class PatchGrid:
    manifold: ConnectionManifold
    field: FlowField
    signal: InputSignal
    t: np.ndarray
    s: np.ndarray
    H: np.ndarray  # (nt, ns, *point_shape)
    E: np.ndarray  # (nt, ns, n)
    T: np.ndarray  # (nt, ns, n)
    boundary: Trajectory  # dense flow of (p1, p2)
    t_index: np.ndarray  # dense indices of the t-grid
    commutator_residual: float = 0.0
    details: dict = field(default_factory=dict)

    # evaluation off the stored grid -------------------------------------
    def H_at(self, idx, s) -> np.ndarray:
        m = self.manifold
        st = self.boundary.states
        idx = np.asarray(idx)
        s = np.asarray(s, dtype=float)
        a, b = st[idx, 0], st[idx, 1]
        d = m.log(a, b)
        shape = np.broadcast_shapes(idx.shape, s.shape)
        a = np.broadcast_to(a, shape + a.shape[idx.ndim:])
        d = np.broadcast_to(d, shape + d.shape[idx.ndim:])
        return m.exp(a, np.broadcast_to(s, shape)[..., None] * d)

    def E_at(self, idx, s) -> np.ndarray:
        m = self.manifold
        st = self.boundary.states
        idx = np.asarray(idx)
        s = np.asarray(s, dtype=float)
        a, b = st[idx, 0], st[idx, 1]
        d = m.log(a, b)
        shape = np.broadcast_shapes(idx.shape, s.shape)
        a = np.broadcast_to(a, shape + a.shape[idx.ndim:])
        d = np.broadcast_to(d, shape + d.shape[idx.ndim:])
        return m.transport(a, d, d, np.broadcast_to(s, shape))

    def T_at(self, idx, s) -> np.ndarray:
        return _time_derivative(self, lambda j: self.H_at(j, s), idx)

    def index_of(self, t: float) -> int:
        return int(np.argmin(np.abs(self.t - t)))


def _dense_stencil(patch: PatchGrid, idx):
    """Per dense index: (offsets, weights) of a second-order time derivative.

    Forward differences are used at t=0 and at input breakpoints (inputs are
    right-continuous), backward at the final time.
    """
    times = patch.boundary.times
    n = len(times)
    bps = np.asarray(patch.signal.breakpoints(times[0], times[-1]))
    idx = np.atleast_1d(idx)
    kinds = np.zeros(idx.shape, dtype=int)
    for k, i in enumerate(idx):
        at_bp = bps.size > 0 and np.min(np.abs(bps - times[i])) < 1e-12
        if i == 0 or at_bp:
            kinds[k] = 1
        elif i == n - 1:
            kinds[k] = -1
    return kinds


def _time_derivative(patch: PatchGrid, fn, idx, points: bool = True):
    """Time derivative over dense indices of ``fn``; tangent components when
    ``fn`` returns points, raw differences otherwise."""
    m = patch.manifold
    times = patch.boundary.times
    idx = np.atleast_1d(np.asarray(idx))
    kinds = _dense_stencil(patch, idx)
    h = times[1] - times[0]
    out = None
    for kind in np.unique(kinds):
        sel = kinds == kind
        j = idx[sel]
        if kind == 0:
            amb = (fn(j + 1) - fn(j - 1)) / (2 * h)
        elif kind == 1:
            amb = (-3 * fn(j) + 4 * fn(j + 1) - fn(j + 2)) / (2 * h)
        else:
            amb = (3 * fn(j) - 4 * fn(j - 1) + fn(j - 2)) / (2 * h)
        comp = m.from_ambient(fn(j), amb) if points else amb
        if out is None:
            out = np.empty((len(idx),) + comp.shape[1:])
        out[sel] = comp
    return out


def build_patch(m: ConnectionManifold, f: FlowField, u: InputSignal, p1, p2, horizon: float,
                n_t: int = 41, n_s: int = 21, cfg: OdeConfig = OdeConfig()) -> PatchGrid:
    """Homotopy between the flow lines of ``p1`` (s=0) and ``p2`` (s=1),
    foliated at each time by the geodesic joining them."""
    traj = flow(m, f, u, np.stack([np.asarray(p1, float), np.asarray(p2, float)]), horizon, cfg)
    t = np.linspace(0.0, horizon, n_t)
    t_index = np.array([traj.index(tk) for tk in t])
    s = np.linspace(0.0, 1.0, n_s)
    try:
        m.log(traj.states[:, 0], traj.states[:, 1])
    except GuardViolation:
        bad = []
        for k, st in enumerate(traj.states):
            try:
                m.log(st[0], st[1])
            except GuardViolation:
                bad.append(traj.times[k])
        raise GuardViolation(f"patch leaves the normal neighbourhood; valid before t={bad[0]:.6g}")

    patch = PatchGrid(m, f, u, t, s, None, None, None, traj, t_index)
    I, S = t_index[:, None], s[None, :]
    patch.H = patch.H_at(I, S)
    patch.E = patch.E_at(I, S)
    patch.T = np.stack([patch.T_at(t_index, sk) for sk in s], axis=1)
    patch.commutator_residual = _commutator_residual(patch)
    return patch


def _commutator_residual(patch: PatchGrid) -> float:
    """[E, T] from independent differencing: d/ds of T against d/dt of E."""
    m = patch.manifold
    k = S_STEP
    worst = 0.0
    idx = patch.t_index
    for s in patch.s:
        dT = _stencil(lambda e: patch.T_at(idx, s + e), k)
        dE = _time_derivative(patch, lambda j: patch.E_at(j, s), idx, points=False)
        E = patch.E_at(idx, s)
        T = patch.T_at(idx, s)
        c = dT - dE
        if isinstance(m, MatrixLieGroup):
            c = c + m.bracket(E, T)
        worst = max(worst, float(np.max(np.linalg.norm(c, axis=-1))))
    return worst


def check_self_similarity(patch: PatchGrid, f: FlowField | None = None, u: InputSignal | None = None,
                          tolerance: float = DEFAULT_TOLERANCES["self-similarity"]) -> CheckReport:
    """Every intermediate curve H(., s) must be a flow line."""
    f = f or patch.field
    u = u or patch.signal
    m = patch.manifold
    worst, details = 0.0, []
    for j in range(1, len(patch.s) - 1):
        r = 0.0
        for i, ti in enumerate(patch.t):
            w = f(patch.H[i, j], u(ti))
            r = max(r, float(m.norm(patch.H[i, j], patch.T[i, j] - w)))
        details.append({"s": float(patch.s[j]), "residual": r})
        worst = max(worst, r)
    return CheckReport("self-similarity", worst, tolerance, (len(patch.s) - 2) * len(patch.t), details)


# ---------------------------------------------------------------------------
# Jacobi fields


def solve_jacobi(m: ConnectionManifold, geodesic: GeodesicSegment, T0, T0_prime,
                 substeps: int = 2) -> np.ndarray:
    """Integrate nabla_E nabla_E T = R(E, T) E + tau(E, nabla_E T) along ``geodesic``.

    The torsion term vanishes for torsion-free connections and is exact for
    parallel torsion. Works in a parallel frame, where nabla_E is d/ds.
    Returns the field at every sample of the geodesic (tangent components).
    """
    x0, e = geodesic.base, geodesic.direction
    B0 = m.identity_frame(x0).basis
    pinv0 = np.linalg.pinv(B0.T)
    c = pinv0 @ np.asarray(T0, dtype=float)
    cp = pinv0 @ np.asarray(T0_prime, dtype=float)

    def frame(s):
        return np.stack([m.transport(x0, e, b, s) for b in B0])

    def rhs(s, y):
        cc = y[: len(c)]
        pt = m.exp(x0, s * e)
        Bs = frame(s)
        Es = m.transport(x0, e, e, s)
        J = cc @ Bs
        Jp = y[len(c):] @ Bs
        acc = m.curvature(pt, Es, J, Es) + m.torsion(pt, Es, Jp)
        return np.concatenate([y[len(c):], np.linalg.pinv(Bs.T) @ acc])

    y = np.concatenate([c, cp])
    out = [c @ B0]
    ss = geodesic.s
    for a, b in zip(ss[:-1], ss[1:]):
        h = (b - a) / substeps
        for k in range(substeps):
            sa = a + k * h
            k1 = rhs(sa, y)
            k2 = rhs(sa + h / 2, y + h / 2 * k1)
            k3 = rhs(sa + h / 2, y + h / 2 * k2)
            k4 = rhs(sa + h, y + h * k3)
            y = y + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        out.append(y[: len(c)] @ frame(b))
    return np.array(out)


def _pulled_back(m, patch: PatchGrid, idx, s, s_ref):
    """T(t, s) transported along the s-geodesic to s_ref."""
    H = patch.H_at(idx, s)
    E = patch.E_at(idx, s)
    T = patch.T_at(np.atleast_1d(idx), s)[0]
    return m.transport(H, E, T, s_ref - s)


def covariant_s_derivative(patch: PatchGrid, i: int, s_ref: float, vectors=None) -> np.ndarray:
    """nabla_E T at (t_i, s_ref) via differences of transported values."""
    m = patch.manifold
    idx = patch.t_index[i]
    return _stencil(lambda e: _pulled_back(m, patch, idx, s_ref + e, s_ref), S_STEP)


def field_s_derivative(patch: PatchGrid, i: int, s_ref: float = 0.0) -> np.ndarray:
    """nabla_E of the flow velocity W(H(t_i, .), u) at s_ref."""
    m = patch.manifold
    idx = patch.t_index[i]
    u = patch.signal(patch.t[i])

    def pulled(e):
        s = s_ref + e
        H, E = patch.H_at(idx, s), patch.E_at(idx, s)
        return m.transport(H, E, patch.field(H, u), -e)

    return _stencil(pulled, S_STEP)


def check_jacobi_agreement(patch: PatchGrid, tolerance: float = DEFAULT_TOLERANCES["jacobi"],
                           ) -> CheckReport:
    """Compare the patch tangents T(t, .) with the Jacobi field generated by
    the flow velocity.

    Along each patch geodesic, ``d/dt H`` is a Jacobi field whatever the
    flow, so the test seeds the Jacobi solve from the flow field itself:
    W(H(t, 0)) and its covariant s-derivative. The two agree on every
    geodesic exactly when the velocities of the intermediate curves are
    transported like a Jacobi field.
    """
    m = patch.manifold
    worst, details = 0.0, []
    for i in range(len(patch.t)):
        x0 = patch.H[i, 0]
        e = patch.E[i, 0]
        geo = GeodesicSegment(x0, e, patch.s, patch.H[i])
        W0 = patch.field(x0, patch.signal(patch.t[i]))
        J = solve_jacobi(m, geo, W0, field_s_derivative(patch, i))
        dev = float(np.max(m.norm(patch.H[i], J - patch.T[i])))
        details.append({"t": float(patch.t[i]), "deviation": dev})
        worst = max(worst, dev)
    return CheckReport("jacobi", worst, tolerance, patch.T.shape[0] * patch.T.shape[1], details)


# ---------------------------------------------------------------------------
# preintegration


@dataclass
class PreintegrationMap:
    """Jacobi transport along the patch geodesic at one time.

    ``transport`` maps (T, nabla_E T) at s=0 to (T, nabla_E T) at s=1, shape
    (2 dim, 2 dim). Coordinates at s=0 use the flow-carried adapted frame,
    at s=1 its parallel transport along the geodesic.
    """

    fit_time: float
    transport: np.ndarray
    separation: float
    consistency: float  # mismatch of the patch's own T against the map


def adapted_frame(m: ConnectionManifold, x, e) -> np.ndarray:
    if isinstance(m, Sphere2):
        n = np.linalg.norm(e)
        if n > 1e-12:
            a = e / n
            return np.stack([a, np.cross(x, a)])
        return m.tangent_basis(x)
    return m.identity_frame(x).basis


def flow_differential(m: ConnectionManifold, f: FlowField, u: InputSignal, p, basis, t: float,
                      eps: float = 1e-4, cfg: OdeConfig = OdeConfig()) -> np.ndarray:
    """d Phi^t at ``p`` applied to the rows of ``basis`` (central differences)."""
    basis = np.atleast_2d(np.asarray(basis, dtype=float))
    if t == 0:
        return basis.copy()
    p = np.asarray(p, dtype=float)
    starts = np.concatenate([p[None], m.exp(np.broadcast_to(p, basis.shape[:1] + p.shape), eps * basis),
                             m.exp(np.broadcast_to(p, basis.shape[:1] + p.shape), -eps * basis)])
    end = flow(m, f, u, starts, t, cfg).states[-1]
    k = len(basis)
    base = np.broadcast_to(end[0], end[1:k + 1].shape)
    return (m.log(base, end[1:k + 1]) - m.log(base, end[k + 1:])) / (2 * eps)


def estimate_preintegration_map(patch: PatchGrid, t_fit: float, eps: float = 1e-4,
                                cfg: OdeConfig = OdeConfig()) -> PreintegrationMap:
    """Fit the Jacobi transport at ``t_fit`` from geodesic variations.

    Each variation perturbs the base point and initial velocity of the patch
    geodesic (a perturbed patch sharing that geodesic); its variation field
    is a Jacobi field, measured by differencing perturbed geodesics. The
    input frame at s=0 is an adapted frame at t=0 carried along by the flow
    differential, and the output frame its parallel transport to s=1, so
    maps fitted at different times are directly comparable.
    """
    m = patch.manifold
    i = patch.index_of(t_fit)
    B_start = adapted_frame(m, patch.H[0, 0], patch.E[0, 0])
    B0 = flow_differential(m, patch.field, patch.signal, patch.H[0, 0], B_start, float(patch.t[i]),
                           cfg=cfg)
    x0, e = patch.H[i, 0], patch.E[i, 0]
    d = len(B0)
    B1 = np.stack([m.transport(x0, e, b, 1.0) for b in B0])
    P0, P1 = np.linalg.pinv(B0.T), np.linalg.pinv(B1.T)

    def geodesic_point(a, b, s):
        xa = m.exp(x0, a)
        va = m.transport(x0, a, e + b, 1.0)
        return m.exp(xa, s * va)

    def variation(a, b, s):
        p = m.exp(x0, s * e)
        amb = (geodesic_point(eps * a, eps * b, s) - geodesic_point(-eps * a, -eps * b, s)) / (2 * eps)
        return m.from_ambient(p, amb)

    def data(a, b, s_ref, P):
        def pulled(ds):
            s = s_ref + ds
            return m.transport(m.exp(x0, s * e), m.transport(x0, e, e, s), variation(a, b, s), -ds)
        J = P @ variation(a, b, s_ref)
        Jp = P @ _stencil(pulled, S_STEP)
        return np.concatenate([J, Jp])

    rng = np.random.default_rng(0)
    inputs = [np.eye(2 * d)[k] for k in range(2 * d)] + list(rng.standard_normal((2 * d, 2 * d)))
    X, Y = [], []
    for w in inputs:
        a, b = w[:d] @ B0, w[d:] @ B0
        X.append(data(a, b, 0.0, P0))
        Y.append(data(a, b, 1.0, P1))
    X, Y = np.array(X), np.array(Y)
    M = least_squares(X, Y).T

    T0, T1 = P0 @ patch.T[i, 0], P1 @ patch.T[i, -1]
    D0 = P0 @ covariant_s_derivative(patch, i, 0.0)
    D1 = P1 @ covariant_s_derivative(patch, i, 1.0)
    cons = float(np.linalg.norm(M @ np.concatenate([T0, D0]) - np.concatenate([T1, D1])))
    return PreintegrationMap(float(patch.t[i]), M, float(m.norm(x0, e)), cons)


def flow_map(m, f, u, t: float, cfg: OdeConfig = OdeConfig()):
    """The sampled map p -> Phi^t(p) on stacked points."""
    def apply(points):
        if t == 0:
            return np.asarray(points, dtype=float)
        return flow(m, f, u, points, t, cfg).states[-1]
    return apply


def check_preintegrability(patch: PatchGrid, t_fits=None,
                           tolerance: float = DEFAULT_TOLERANCES["preintegration"],
                           cfg: OdeConfig = OdeConfig(), seed: int = 0) -> CheckReport:
    """(i) Jacobi transport maps agree across fit times; (ii) the flow map is
    an affine transformation at the sampled times."""
    m = patch.manifold
    horizon = float(patch.t[-1])
    if t_fits is None:
        t_fits = [0.0, horizon / 4, horizon / 2, 3 * horizon / 4]
    maps = [estimate_preintegration_map(patch, t, cfg=cfg) for t in t_fits]
    ref = maps[0].transport
    spread = max(float(np.max(np.abs(mp.transport - ref))) for mp in maps)
    rng = np.random.default_rng(seed)
    affine = 0.0
    affine_details = []
    center = patch.H[0, 0]
    for t in t_fits:
        if t == 0:
            continue
        rep = is_affine_transformation(m, flow_map(m, patch.field, patch.signal, t, cfg), center, rng,
                                       tolerance=tolerance)
        affine = max(affine, rep.max_residual)
        affine_details.append({"t": float(t), "deviation": rep.max_residual})
    details = [
        {"clause": "t-independence", "residual": spread,
         "fit_times": [mp.fit_time for mp in maps],
         "consistency": [mp.consistency for mp in maps]},
        {"clause": "affine-flow", "residual": affine, "per_time": affine_details},
    ]
    return CheckReport("preintegration", max(spread, affine), tolerance, len(maps), details)


def check_equivalence(linearization: list[CheckReport], preintegration: list[CheckReport]) -> CheckReport:
    """Both characterisations must reach the same verdict."""
    lin = all(r.passed for r in linearization)
    pre = all(r.passed for r in preintegration)
    details = [{"exact-linearization": "pass" if lin else "fail",
                "preintegrable": "pass" if pre else "fail"}]
    return CheckReport("equivalence", 0.0 if lin == pre else 1.0, 0.0, 2, details)


# ---------------------------------------------------------------------------
# curvature condition


def check_curvature_condition(rec: LinearizationRecord, m_max: int = 1, n_triples: int = 10,
                              n_times: int = 5, seed: int = 0,
                              tolerance: float = DEFAULT_TOLERANCES["curvature-condition"],
                              ) -> CheckReport:
    """F_t must carry nabla^k R at the base point onto nabla^k R at the image,
    for k = 0 .. m_max."""
    if m_max not in (0, 1, 2):
        raise ValueError("m_max must be 0, 1 or 2")
    m = rec.manifold
    rng = np.random.default_rng(seed)
    Fa = rec.ambient_F()
    p = rec.base_point
    picks = np.linspace(0, len(rec.times) - 1, n_times).round().astype(int)
    worst, details = 0.0, []
    for order in range(m_max + 1):
        w_order = 0.0
        for i in picks:
            q, F = rec.states[i], Fa[i]
            for _ in range(n_triples):
                X, Y, Z, D = (m.random_tangent(rng, p) for _ in range(4))
                FX, FY, FZ, FD = (F @ v for v in (X, Y, Z, D))
                if order == 0:
                    lhs = F @ m.curvature(p, X, Y, Z)
                    rhs = m.curvature(q, FX, FY, FZ)
                else:
                    lhs = F @ m.covariant_derivative_curvature(p, D, X, Y, Z, order)
                    rhs = m.covariant_derivative_curvature(q, FD, FX, FY, FZ, order)
                w_order = max(w_order, float(np.linalg.norm(lhs - rhs)))
        details.append({"order": order, "residual": w_order})
        worst = max(worst, w_order)
    return CheckReport("curvature-condition", worst, tolerance,
                       (m_max + 1) * len(picks) * n_triples, details, truncation_order=m_max)


# ---------------------------------------------------------------------------
# groups


def check_group_affine(m: MatrixLieGroup, f: FlowField, u: InputSignal, horizon: float,
                       n_pairs: int = 100, seed: int = 0, cfg: OdeConfig = OdeConfig(),
                       n_times: int = 5,
                       tol_affine: float = DEFAULT_TOLERANCES["group-affine"],
                       tol_auto: float = DEFAULT_TOLERANCES["group-automorphism"]) -> CheckReport:
    """Phi^t(g h) = psi^t(g) Phi^t(h) with psi^t(g) = Phi^t(g) Phi^t(e)^{-1},
    and psi^t a group automorphism.

    ``max_residual`` is the worst residual relative to its clause tolerance,
    so the report tolerance is 1.
    """
    if not isinstance(m, MatrixLieGroup):
        raise TypeError("group-affine check needs a matrix Lie group")
    rng = np.random.default_rng(seed)
    g = np.stack([m.random_point(rng) for _ in range(n_pairs)])
    h = np.stack([m.random_point(rng) for _ in range(n_pairs)])
    e = m.identity()[None]
    pts = np.concatenate([e, g, h, g @ h])
    traj = flow(m, f, u, pts, horizon, cfg)
    picks = np.linspace(0, len(traj.times) - 1, n_times + 1).round().astype(int)[1:]
    r_aff = r_auto = 0.0
    n = n_pairs
    for i in picks:
        st = traj.states[i]
        Pe, Pg, Ph, Pgh = st[0], st[1:n + 1], st[n + 1:2 * n + 1], st[2 * n + 1:]
        Pe_inv = np.linalg.inv(Pe)
        psi_g = Pg @ Pe_inv
        psi_h = Ph @ Pe_inv
        psi_gh = Pgh @ Pe_inv
        r_aff = max(r_aff, float(np.max(np.linalg.norm(Pgh - psi_g @ Ph, axis=(-2, -1)))))
        r_auto = max(r_auto, float(np.max(np.linalg.norm(psi_gh - psi_g @ psi_h, axis=(-2, -1)))))
    details = [{"clause": "affine", "residual": r_aff, "tolerance": tol_affine},
               {"clause": "automorphism", "residual": r_auto, "tolerance": tol_auto}]
    return CheckReport("group-affine", max(r_aff / tol_affine, r_auto / tol_auto), 1.0,
                       n_pairs * len(picks), details)


def induced_multiplication(m: ConnectionManifold, e, g, h, flat_tol: float = 1e-8) -> np.ndarray:
    """exp_g(P_{e->g}(log_e h)), the product a flat connection induces."""
    e = np.asarray(e, dtype=float)
    B = m.identity_frame(e).basis
    curv = max(float(np.max(np.abs(m.curvature(e, x, y, z)))) for x in B for y in B for z in B)
    if curv > flat_tol:
        raise NotFlatError(f"curvature {curv:.3g} exceeds {flat_tol:g}")
    g, h = np.asarray(g, dtype=float), np.asarray(h, dtype=float)
    eb = np.broadcast_to(e, g.shape)
    d = m.log(eb, g)
    w = m.transport(eb, d, m.log(np.broadcast_to(e, h.shape), h), 1.0)
    return m.exp(g, w)


def check_induced_multiplication(m: MatrixLieGroup, n: int = 50, seed: int = 0, scale: float = 0.6,
                                 tolerance: float = DEFAULT_TOLERANCES["induced-multiplication"],
                                 tol_assoc: float = DEFAULT_TOLERANCES["associativity"],
                                 ) -> CheckReport:
    """Induced product against the matrix product, plus associativity.

    At mu=1 transport is left translation and the induced product is g h; at
    mu=0 transport is right translation and it is the opposite product h g.
    Samples stay small enough that every partial product is inside the
    normal neighbourhood of the identity.
    """
    rng = np.random.default_rng(seed)
    e = m.identity()
    a, b, c = (m.group_exp(scale * rng.standard_normal((n, 3)) / np.sqrt(3)) for _ in range(3))
    ab = induced_multiplication(m, e, a, b)
    expected = b @ a if m.mu == 0.0 else a @ b
    r_prod = float(np.max(np.linalg.norm(ab - expected, axis=(-2, -1))))
    left = induced_multiplication(m, e, ab, c)
    right = induced_multiplication(m, e, a, induced_multiplication(m, e, b, c))
    r_assoc = float(np.max(np.linalg.norm(left - right, axis=(-2, -1))))
    r_id = float(np.max(np.linalg.norm(induced_multiplication(m, e, np.broadcast_to(e, a.shape), a) - a,
                                       axis=(-2, -1))))
    details = [{"clause": "matrix-product" if m.mu != 0.0 else "opposite-product",
                "residual": r_prod, "tolerance": tolerance},
               {"clause": "associativity", "residual": r_assoc, "tolerance": tol_assoc},
               {"clause": "identity", "residual": r_id, "tolerance": tolerance}]
    return CheckReport("induced-multiplication",
                       max(r_prod / tolerance, r_assoc / tol_assoc, r_id / tolerance), 1.0, n, details)
