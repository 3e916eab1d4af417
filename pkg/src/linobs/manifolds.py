"""Manifolds carrying an affine connection.

Three concrete spaces are provided:

* :class:`Euclidean` -- R^n with the flat connection.
* :class:`Sphere2` -- the unit sphere in R^3; covariant derivatives are
  ambient derivatives projected with ``I - q q^T``.
* :class:`SO3` and :class:`Heisenberg` -- matrix Lie groups with the
  one-parameter family of invariant connections indexed by ``mu`` in [0, 1].

Points are ``numpy`` arrays (vectors for Euclidean/S^2, matrices for groups).
Tangent vectors are stored as components: ambient coordinates on Euclidean
space and S^2, left-trivialised Lie algebra coordinates on groups. Most
methods broadcast over leading batch axes.

Vector fields, where needed (finite-difference curvature and torsion), are
plain callables mapping a point to tangent components at that point.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .kernel import DimensionError, GuardViolation, rodrigues_exp, rotation_log, skew, vee
from .report import CheckReport

SPHERE_GUARD = 1e-3
FIELD_FD_STEP = 3e-4  # balances fourth-order truncation against nested rounding

VectorField = Callable[[np.ndarray], np.ndarray]


def _stencil(g, h):
    """Fourth-order central difference of ``g`` at 0."""
    return (8.0 * (g(h) - g(-h)) - (g(2 * h) - g(-2 * h))) / (12.0 * h)


class InsufficientSamples(ValueError):
    pass


class NotFlatError(ValueError):
    pass


@dataclass
class Frame:
    base: np.ndarray
    basis: np.ndarray  # (dim, n_components), one tangent vector per row

    def __post_init__(self):
        self.basis = np.atleast_2d(np.asarray(self.basis, dtype=float))
        gram = self.basis @ self.basis.T
        if np.linalg.det(gram) <= 1e-12:
            raise ValueError("frame vectors are linearly dependent")

    def coords(self, w) -> np.ndarray:
        """Frame coordinates of tangent components ``w`` (batched on axis 0)."""
        w = np.asarray(w, dtype=float)
        sol = np.linalg.lstsq(self.basis.T, np.atleast_2d(w).T, rcond=None)[0].T
        return sol[0] if w.ndim == 1 else sol

    def vector(self, c) -> np.ndarray:
        return np.asarray(c, dtype=float) @ self.basis


@dataclass
class GeodesicSegment:
    base: np.ndarray
    direction: np.ndarray
    s: np.ndarray
    points: np.ndarray


class ConnectionManifold:
    """Common machinery; subclasses supply the closed forms."""

    dim: int
    n_components: int

    # -- points and tangent vectors ------------------------------------
    def check_point(self, p, tol: float = 1e-9) -> None:
        r = self.membership_residual(p)
        if np.max(r) > tol:
            raise ValueError(f"point off the manifold (residual {np.max(r):.3g})")

    def membership_residual(self, p) -> np.ndarray:
        return np.zeros(np.shape(p)[: -self.point_ndim])

    point_ndim = 1

    def project(self, p) -> np.ndarray:
        return np.asarray(p, dtype=float)

    def to_ambient(self, p, v) -> np.ndarray:
        """Velocity of a curve through ``p`` in point coordinates."""
        return np.asarray(v, dtype=float)

    def from_ambient(self, p, V) -> np.ndarray:
        return np.asarray(V, dtype=float)

    def inner(self, p, v, w) -> np.ndarray:
        return np.sum(np.asarray(v) * np.asarray(w), axis=-1)

    def norm(self, p, v) -> np.ndarray:
        return np.sqrt(np.maximum(self.inner(p, v, v), 0.0))

    def distance(self, p, q) -> np.ndarray:
        return self.norm(p, self.log(p, q))

    def identity_frame(self, p) -> Frame:
        return Frame(np.asarray(p, dtype=float), np.eye(self.n_components))

    # -- geodesics -----------------------------------------------------
    def exp(self, p, v) -> np.ndarray:
        raise NotImplementedError

    def log(self, p, q) -> np.ndarray:
        raise NotImplementedError

    def geodesic(self, p, v, s_max: float = 1.0, n: int = 21) -> GeodesicSegment:
        s = np.linspace(0.0, s_max, n)
        pts = self.exp(np.broadcast_to(p, (n,) + np.shape(p)), s[:, None] * np.asarray(v)[None])
        return GeodesicSegment(np.asarray(p, dtype=float), np.asarray(v, dtype=float), s, pts)

    def transport(self, p, direction, w, s=1.0) -> np.ndarray:
        """Parallel transport of ``w`` from ``p`` to ``exp(p, s*direction)``."""
        raise NotImplementedError

    def transport_curve(self, path, w) -> np.ndarray:
        """Transport along a sampled curve by chaining geodesic transports."""
        w = np.asarray(w, dtype=float)
        for a, b in zip(path[:-1], path[1:]):
            w = self.transport(a, self.log(a, b), w, 1.0)
        return w

    def normal_frame(self, reference: Frame, p) -> Frame:
        d = self.log(reference.base, p)
        basis = np.stack([self.transport(reference.base, d, e, 1.0) for e in reference.basis])
        return Frame(np.asarray(p, dtype=float), basis)

    # -- tensors -------------------------------------------------------
    def curvature(self, p, X, Y, Z) -> np.ndarray:
        raise NotImplementedError

    def torsion(self, p, X, Y) -> np.ndarray:
        raise NotImplementedError

    def lift_linear_map(self, p, q, F) -> np.ndarray:
        """Extend a tangent map T_pM -> T_qM (ambient matrix) to an invertible one."""
        return np.asarray(F, dtype=float)

    # -- finite-difference connection ------------------------------------
    def covariant_derivative(self, p, X, Yf: VectorField, h: float = FIELD_FD_STEP):
        """(nabla_X Y)(p) for a vector field ``Yf`` by central differences."""
        raise NotImplementedError

    def field_bracket(self, p, Xf: VectorField, Yf: VectorField, h: float = FIELD_FD_STEP):
        raise NotImplementedError

    def curvature_fd(self, p, Xf, Yf, Zf, h: float = FIELD_FD_STEP) -> np.ndarray:
        """R(X,Y)Z = nabla_X nabla_Y Z - nabla_Y nabla_X Z - nabla_[X,Y] Z, numerically."""
        cd = self.covariant_derivative

        def nYZ(q):
            return cd(q, Yf(q), Zf, h)

        def nXZ(q):
            return cd(q, Xf(q), Zf, h)

        xy = self.field_bracket(p, Xf, Yf, h)
        return cd(p, Xf(p), nYZ, h) - cd(p, Yf(p), nXZ, h) - cd(p, xy, Zf, h)

    def torsion_fd(self, p, Xf, Yf, h: float = FIELD_FD_STEP) -> np.ndarray:
        cd = self.covariant_derivative
        return cd(p, Xf(p), Yf, h) - cd(p, Yf(p), Xf, h) - self.field_bracket(p, Xf, Yf, h)

    def extend_field(self, p, v, rng: np.random.Generator, scale: float = 0.5) -> VectorField:
        """A smooth, non-parallel vector field whose value at ``p`` is ``v``."""
        raise NotImplementedError

    def covariant_derivative_curvature(self, p, direction, X, Y, Z, order: int = 1,
                                       h: float = 1e-3) -> np.ndarray:
        """(nabla^order R)(X,Y)Z along ``direction`` with parallel-transported slots."""
        if order not in (1, 2):
            raise ValueError("order must be 1 or 2")

        def pulled(eps):
            if eps == 0.0:
                return self.curvature(p, X, Y, Z)
            c = self.exp(p, eps * np.asarray(direction))
            Xs, Ys, Zs = (self.transport(p, direction, a, eps) for a in (X, Y, Z))
            r = self.curvature(c, Xs, Ys, Zs)
            return self.transport(c, self.log(c, p), r, 1.0)

        if order == 1:
            return (pulled(h) - pulled(-h)) / (2 * h)
        return (pulled(h) - 2 * pulled(0.0) + pulled(-h)) / h**2


class Euclidean(ConnectionManifold):
    def __init__(self, n: int):
        self.dim = self.n_components = int(n)

    def __repr__(self):
        return f"Euclidean({self.dim})"

    def exp(self, p, v):
        return np.asarray(p, dtype=float) + np.asarray(v, dtype=float)

    def log(self, p, q):
        return np.asarray(q, dtype=float) - np.asarray(p, dtype=float)

    def transport(self, p, direction, w, s=1.0):
        return np.array(w, dtype=float)

    def curvature(self, p, X, Y, Z):
        return np.zeros(np.broadcast_shapes(np.shape(X), np.shape(Y), np.shape(Z)))

    def torsion(self, p, X, Y):
        return np.zeros(np.broadcast_shapes(np.shape(X), np.shape(Y)))

    def covariant_derivative(self, p, X, Yf, h=FIELD_FD_STEP):
        p, X = np.asarray(p, float), np.asarray(X, float)
        return _stencil(lambda e: Yf(p + e * X), h)

    def field_bracket(self, p, Xf, Yf, h=FIELD_FD_STEP):
        return self.covariant_derivative(p, Xf(p), Yf, h) - self.covariant_derivative(p, Yf(p), Xf, h)

    def extend_field(self, p, v, rng, scale=0.5):
        p, v = np.asarray(p, float), np.asarray(v, float)
        B = scale * rng.standard_normal((self.dim, self.dim))
        C = scale * rng.standard_normal((self.dim, self.dim))
        return lambda x: v + B @ (x - p) + np.sin(C @ (x - p))

    def random_point(self, rng, scale: float = 1.0):
        return scale * rng.standard_normal(self.dim)

    def random_tangent(self, rng, p, scale: float = 1.0):
        return scale * rng.standard_normal(self.dim)


class Sphere2(ConnectionManifold):
    """Unit sphere in R^3 with the connection induced by the embedding."""

    dim = 2
    n_components = 3

    def __repr__(self):
        return "Sphere2()"

    def membership_residual(self, p):
        return np.abs(np.linalg.norm(p, axis=-1) - 1.0)

    def project(self, p):
        p = np.asarray(p, dtype=float)
        return p / np.linalg.norm(p, axis=-1, keepdims=True)

    def tangent_projector(self, p) -> np.ndarray:
        p = np.asarray(p, dtype=float)
        return np.eye(3) - p[..., :, None] * p[..., None, :]

    def project_tangent(self, p, w):
        p, w = np.asarray(p, float), np.asarray(w, float)
        return w - np.sum(p * w, axis=-1, keepdims=True) * p

    def from_ambient(self, p, V):
        return self.project_tangent(p, V)

    def tangent_basis(self, p) -> np.ndarray:
        """Orthonormal (2, 3) basis of T_pS^2 (second vector is p x first)."""
        p = np.asarray(p, dtype=float)
        a = np.array([1.0, 0.0, 0.0]) if abs(p[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
        e1 = self.project_tangent(p, a)
        e1 /= np.linalg.norm(e1)
        return np.stack([e1, np.cross(p, e1)])

    def identity_frame(self, p):
        return Frame(np.asarray(p, dtype=float), self.tangent_basis(p))

    def exp(self, p, v):
        p, v = np.asarray(p, float), np.asarray(v, float)
        theta = np.linalg.norm(v, axis=-1, keepdims=True)
        if np.any(theta >= np.pi - SPHERE_GUARD):
            raise GuardViolation("tangent vector outside the normal neighbourhood")
        small = theta < 1e-8
        sinc = np.where(small, 1 - theta**2 / 6, np.sin(theta) / np.where(small, 1.0, theta))
        return np.cos(theta) * p + sinc * v

    def log(self, p, q):
        p, q = np.asarray(p, float), np.asarray(q, float)
        c = np.sum(p * q, axis=-1, keepdims=True)
        w = q - c * p
        s = np.linalg.norm(w, axis=-1, keepdims=True)
        theta = np.arctan2(s, c)
        if np.any(theta >= np.pi - SPHERE_GUARD):
            raise GuardViolation("points too close to antipodal")
        small = s < 1e-8
        factor = np.where(small, 1 + theta**2 / 6, theta / np.where(small, 1.0, s))
        return factor * w

    def transport(self, p, direction, w, s=1.0):
        p, d, w = (np.asarray(a, float) for a in (p, direction, w))
        s = np.asarray(s, dtype=float)[..., None] if np.ndim(s) else s
        nd = np.linalg.norm(d, axis=-1, keepdims=True)
        safe = np.where(nd > 0, nd, 1.0)
        u = d / safe
        theta = s * nd
        alpha = np.sum(w * u, axis=-1, keepdims=True)
        rest = w - alpha * u
        moved = alpha * (np.cos(theta) * u - np.sin(theta) * p) + rest
        return np.where(nd > 0, moved, w)

    def curvature(self, p, X, Y, Z):
        X, Y, Z = (np.asarray(a, float) for a in (X, Y, Z))
        return np.sum(Y * Z, -1, keepdims=True) * X - np.sum(X * Z, -1, keepdims=True) * Y

    def torsion(self, p, X, Y):
        return np.zeros(np.broadcast_shapes(np.shape(X), np.shape(Y)))

    def lift_linear_map(self, p, q, F):
        return np.asarray(F, float) + np.outer(q, p)

    def _ambient_derivative(self, p, X, Yf, h):
        return _stencil(lambda e: Yf(self.exp(p, e * X)), h)

    def covariant_derivative(self, p, X, Yf, h=FIELD_FD_STEP):
        p, X = np.asarray(p, float), np.asarray(X, float)
        return self.project_tangent(p, self._ambient_derivative(p, X, Yf, h))

    def field_bracket(self, p, Xf, Yf, h=FIELD_FD_STEP):
        p = np.asarray(p, float)
        d = self._ambient_derivative(p, Xf(p), Yf, h) - self._ambient_derivative(p, Yf(p), Xf, h)
        return self.project_tangent(p, d)

    def extend_field(self, p, v, rng, scale=0.5):
        p, v = np.asarray(p, float), np.asarray(v, float)
        B = scale * rng.standard_normal((3, 3))
        C = scale * rng.standard_normal((3, 3))
        return lambda q: self.project_tangent(q, v + B @ (q - p) + np.sin(C @ (q - p)))

    def random_point(self, rng, center=None, radius: float | None = None):
        if center is None:
            return self.project(rng.standard_normal(3))
        v = self.random_tangent(rng, center)
        v *= radius * rng.uniform() / np.linalg.norm(v)
        return self.exp(center, v)

    def random_tangent(self, rng, p, scale: float = 1.0):
        return scale * self.project_tangent(p, rng.standard_normal(3))


class MatrixLieGroup(ConnectionManifold):
    """Lie group with the invariant connection of parameter ``mu``.

    In left-trivialised coordinates the connection reads
    ``nabla_X Y = X(y) + (1 - mu) [x, y]`` with the matrix commutator, so that
    at ``mu = 1`` left-invariant fields are parallel and parallel transport is
    left translation. Geodesics through ``g`` are ``g Exp(s xi)`` for every
    ``mu``. Curvature is ``mu (mu - 1) [[x, y], z]`` and torsion is
    ``(1 - 2 mu) [x, y]`` (the ``(2 mu - 1)`` form when the bracket is taken on
    right-invariant generators).
    """

    point_ndim = 2
    matrix_size = 3
    dim = n_components = 3

    def __init__(self, mu: float = 1.0):
        if not 0.0 <= mu <= 1.0:
            raise ValueError("mu must lie in [0, 1]")
        self.mu = float(mu)

    def __repr__(self):
        return f"{type(self).__name__}(mu={self.mu})"

    # group structure, supplied by subclasses
    def hat(self, xi) -> np.ndarray:
        raise NotImplementedError

    def vee(self, X) -> np.ndarray:
        raise NotImplementedError

    def group_exp(self, xi) -> np.ndarray:
        raise NotImplementedError

    def group_log(self, g) -> np.ndarray:
        raise NotImplementedError

    def bracket(self, x, y) -> np.ndarray:
        X, Y = self.hat(x), self.hat(y)
        return self.vee(X @ Y - Y @ X)

    def ad_exp(self, c, d, w) -> np.ndarray:
        """exp(c * ad_d) w."""
        raise NotImplementedError

    def identity(self) -> np.ndarray:
        return np.eye(self.matrix_size)

    def inverse(self, g) -> np.ndarray:
        return np.linalg.inv(g)

    def to_ambient(self, g, v):
        return np.asarray(g, float) @ self.hat(v)

    def from_ambient(self, g, V):
        return self.vee(np.linalg.solve(g, V))

    def exp(self, g, v):
        return np.asarray(g, float) @ self.group_exp(v)

    def log(self, g, h):
        return self.group_log(np.linalg.solve(g, h))

    def transport(self, g, direction, w, s=1.0):
        if self.mu == 1.0:
            return np.array(w, dtype=float)
        s = np.asarray(s, dtype=float)[..., None] if np.ndim(s) else s
        return self.ad_exp(-(1.0 - self.mu) * s, direction, w)

    def curvature(self, g, X, Y, Z):
        return self.mu * (self.mu - 1.0) * self.bracket(self.bracket(X, Y), Z)

    def torsion(self, g, X, Y):
        return (1.0 - 2.0 * self.mu) * self.bracket(X, Y)

    def _along(self, g, x, Yf, h):
        g = np.asarray(g, float)
        return _stencil(lambda e: Yf(g @ self.group_exp(e * x)), h)

    def covariant_derivative(self, g, X, Yf, h=FIELD_FD_STEP):
        X = np.asarray(X, float)
        return self._along(g, X, Yf, h) + (1.0 - self.mu) * self.bracket(X, Yf(g))

    def field_bracket(self, g, Xf, Yf, h=FIELD_FD_STEP):
        x, y = Xf(g), Yf(g)
        return self._along(g, x, Yf, h) - self._along(g, y, Xf, h) + self.bracket(x, y)

    def extend_field(self, g, v, rng, scale=0.5):
        g, v = np.asarray(g, float), np.asarray(v, float)
        n = self.matrix_size**2
        B = scale * rng.standard_normal((3, n))
        C = scale * rng.standard_normal((3, n))
        return lambda h: v + B @ (h - g).ravel() + np.sin(C @ (h - g).ravel())

    def random_point(self, rng, scale: float = 1.0):
        return self.group_exp(self.random_tangent(rng, None, scale))

    def random_tangent(self, rng, g, scale: float = 1.0):
        return scale * rng.standard_normal(3)


class SO3(MatrixLieGroup):
    def membership_residual(self, R):
        R = np.asarray(R, float)
        return np.linalg.norm(np.swapaxes(R, -1, -2) @ R - np.eye(3), axis=(-2, -1))

    def project(self, R):
        u, _, vt = np.linalg.svd(R)
        return u @ vt

    def hat(self, xi):
        return skew(xi)

    def vee(self, X):
        return vee(X)

    def group_exp(self, xi):
        return rodrigues_exp(xi)

    def group_log(self, g):
        return rotation_log(g)

    def bracket(self, x, y):
        return np.cross(x, y)

    def inverse(self, g):
        return np.swapaxes(g, -1, -2)

    def ad_exp(self, c, d, w):
        c = np.asarray(c, float)
        return np.einsum("...ij,...j->...i", rodrigues_exp(c * np.asarray(d, float)), w)

    def random_point(self, rng, scale: float = 1.0):
        # uniform direction, angle bounded away from the cut locus
        xi = rng.standard_normal(3)
        xi *= rng.uniform(0, min(scale, 1.0) * 2.5) / np.linalg.norm(xi)
        return rodrigues_exp(xi)


class Heisenberg(MatrixLieGroup):
    """Unipotent upper-triangular 3x3 matrices, coordinates (a, b, c) ->
    ``[[0, a, c], [0, 0, b], [0, 0, 0]]`` in the algebra."""

    def membership_residual(self, g):
        g = np.asarray(g, float)
        lower = np.tril(g, -1)
        diag = np.diagonal(g, axis1=-2, axis2=-1) - 1.0
        return np.sqrt(np.sum(lower**2, axis=(-2, -1)) + np.sum(diag**2, axis=-1))

    def project(self, g):
        g = np.triu(np.asarray(g, float), 1)
        return g + np.eye(3)

    def hat(self, xi):
        xi = np.asarray(xi, float)
        out = np.zeros(xi.shape[:-1] + (3, 3))
        out[..., 0, 1] = xi[..., 0]
        out[..., 1, 2] = xi[..., 1]
        out[..., 0, 2] = xi[..., 2]
        return out

    def vee(self, X):
        X = np.asarray(X, float)
        return np.stack([X[..., 0, 1], X[..., 1, 2], X[..., 0, 2]], axis=-1)

    def group_exp(self, xi):
        X = self.hat(xi)
        return np.eye(3) + X + 0.5 * X @ X

    def group_log(self, g):
        N = np.asarray(g, float) - np.eye(3)
        return self.vee(N - 0.5 * N @ N)

    def bracket(self, x, y):
        x, y = np.asarray(x, float), np.asarray(y, float)
        z = np.zeros(np.broadcast_shapes(x.shape, y.shape))
        z[..., 2] = x[..., 0] * y[..., 1] - x[..., 1] * y[..., 0]
        return z

    def ad_exp(self, c, d, w):
        # ad_d is nilpotent of order 2
        return np.asarray(w, float) + np.asarray(c, float) * self.bracket(d, w)


def is_affine_transformation(m: ConnectionManifold, f, center, rng: np.random.Generator,
                             tolerance: float = 1e-4, n_geodesics: int = 6,
                             n_points: int = 21, radius: float = 0.3,
                             length: float = 0.6) -> CheckReport:
    """Test whether ``f`` maps geodesics near ``center`` to geodesics.

    ``f`` acts on a stacked array of points. Each sampled geodesic is pushed
    through ``f`` and compared, point by point, with the geodesic joining the
    images of its endpoints.
    """
    if n_points < 20:
        raise InsufficientSamples("need at least 20 points per geodesic")
    segs = []
    for _ in range(n_geodesics):
        if isinstance(m, Sphere2):
            base = m.random_point(rng, center, radius)
        else:
            base = m.exp(center, m.random_tangent(rng, center, radius / np.sqrt(m.dim)))
        v = m.random_tangent(rng, base)
        v *= length / m.norm(base, v)
        segs.append(m.geodesic(base, v, 1.0, n_points))
    pts = np.concatenate([s.points for s in segs])
    images = np.asarray(f(pts)).reshape((n_geodesics, n_points) + np.shape(center))
    s = segs[0].s
    worst = 0.0
    details = []
    for k, img in enumerate(images):
        d = m.log(img[0], img[-1])
        ref = m.exp(np.broadcast_to(img[0], img.shape), s[:, None] * d[None])
        dev = float(np.max(m.distance(ref, img)))
        details.append({"geodesic": k, "deviation": dev})
        worst = max(worst, dev)
    return CheckReport("affine-transformation", worst, tolerance, n_geodesics * n_points, details)


def make_manifold(kind: str, n: int = 3, group: str = "so3", mu: float = 1.0) -> ConnectionManifold:
    if kind == "euclidean":
        return Euclidean(n)
    if kind == "sphere2":
        return Sphere2()
    if kind == "lie_group":
        if group == "so3":
            return SO3(mu)
        if group == "heisenberg":
            return Heisenberg(mu)
        raise DimensionError(f"unknown group {group!r}")
    raise ValueError(f"unknown manifold kind {kind!r}")
