"""Geometry kernel for Euclidean space, spheres and SPD matrices.

Each manifold is represented by a :class:`Manifold` object that works on raw
numpy arrays, batched over a leading axis where it matters (the solvers call
``log_coords`` on the whole sample at once).  Tangent vectors are always
expressed by their coordinates in a canonical orthonormal frame at the base
point, so the rest of the package can do its linear algebra in ``R^d``.

The thin dataclass API (:class:`ManifoldPoint`, :class:`TangentVector`,
:func:`exp_map`, :func:`log_map`, ...) validates arguments and delegates to
the array kernel.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Literal

import numpy as np

from .errors import ContractViolationError, CutLocusError, DomainError

Kind = Literal["euclidean", "sphere", "spd"]

# <p, q> below this value is treated as antipodal on the sphere.
ANTIPODAL_THRESHOLD = -1.0 + 1e-12
POINT_TOL = 1e-10


@dataclass(frozen=True)
class ManifoldTag:
    """Which manifold a point lives on.

    ``order`` is the ``k`` of ``euclidean(k)``, ``sphere(k)`` or ``spd(k)``.
    """

    kind: Kind
    order: int

    def __post_init__(self):
        if self.kind not in ("euclidean", "sphere", "spd"):
            raise DomainError(f"unknown manifold kind {self.kind!r}")
        if int(self.order) != self.order or self.order < 1:
            raise DomainError(f"manifold order must be a positive integer, got {self.order}")
        if self.kind == "spd" and self.order < 2:
            raise DomainError("spd(k) requires k >= 2")

    @property
    def dimension(self) -> int:
        k = self.order
        return k * (k + 1) // 2 if self.kind == "spd" else k

    @property
    def ambient_shape(self) -> tuple[int, ...]:
        k = self.order
        if self.kind == "sphere":
            return (k + 1,)
        if self.kind == "spd":
            return (k, k)
        return (k,)

    @property
    def geometry(self) -> "Manifold":
        return get_manifold(self)

    @classmethod
    def parse(cls, text: str) -> "ManifoldTag":
        """Parse ``"sphere(2)"``, ``"spd:2"`` or ``"euclidean 3"``."""
        cleaned = text.strip().lower().replace("(", " ").replace(")", " ").replace(":", " ")
        parts = cleaned.split()
        if len(parts) != 2:
            raise DomainError(f"cannot parse manifold tag {text!r}")
        try:
            order = int(parts[1])
        except ValueError as exc:
            raise DomainError(f"cannot parse manifold tag {text!r}") from exc
        return cls(parts[0], order)  # type: ignore[arg-type]

    def __str__(self) -> str:
        return f"{self.kind}({self.order})"


@dataclass(frozen=True)
class CurvatureInfo:
    upper_bound_delta: float
    injectivity_radius: float
    convexity_radius: float


def _convexity_radius(delta: float, r_inj: float) -> float:
    half_period = math.pi / math.sqrt(delta) if delta > 0 else math.inf
    return 0.5 * min(half_period, r_inj)


# ---------------------------------------------------------------------------
# symmetric-matrix helpers (batched over leading axes)


def sym(a: np.ndarray) -> np.ndarray:
    return 0.5 * (a + np.swapaxes(a, -1, -2))


def sym_fn(a: np.ndarray, fn) -> np.ndarray:
    """Apply a scalar function to a symmetric matrix through its eigenvalues."""
    w, v = np.linalg.eigh(sym(a))
    return sym((v * fn(w)[..., None, :]) @ np.swapaxes(v, -1, -2))


def _sqrt_pair(p: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    w, v = np.linalg.eigh(sym(p))
    s = np.sqrt(w)
    vt = v.T
    return sym((v * s) @ vt), sym((v / s) @ vt)


@lru_cache(maxsize=None)
def _offdiag_index(k: int) -> tuple[np.ndarray, np.ndarray]:
    return np.triu_indices(k, 1)


def sym_to_coords(s: np.ndarray) -> np.ndarray:
    """Coordinates of symmetric matrices in the basis {E_ii} + {(E_ij+E_ji)/sqrt 2}."""
    k = s.shape[-1]
    iu, ju = _offdiag_index(k)
    diag = np.diagonal(s, axis1=-2, axis2=-1)
    return np.concatenate([diag, math.sqrt(2.0) * s[..., iu, ju]], axis=-1)


def coords_to_sym(y: np.ndarray, k: int) -> np.ndarray:
    y = np.asarray(y, dtype=float)
    iu, ju = _offdiag_index(k)
    out = np.zeros(y.shape[:-1] + (k, k))
    idx = np.arange(k)
    out[..., idx, idx] = y[..., :k]
    off = y[..., k:] / math.sqrt(2.0)
    out[..., iu, ju] = off
    out[..., ju, iu] = off
    return out


# ---------------------------------------------------------------------------
# array kernels


class Manifold:
    """Array-level geometry of one manifold.

    Points are ambient arrays of shape ``tag.ambient_shape``; anything taking
    ``x`` also accepts a batch of shape ``(n, *ambient_shape)``.  Tangent
    coordinates refer to the canonical frame returned by ``frame_vectors``.
    """

    tag: ManifoldTag
    curvature: CurvatureInfo

    @property
    def dim(self) -> int:
        return self.tag.dimension

    def check_point(self, x) -> np.ndarray:
        raise NotImplementedError

    def check_points(self, xs) -> np.ndarray:
        raise NotImplementedError

    def log_coords(self, p: np.ndarray, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def exp_coords(self, p: np.ndarray, y: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def dist(self, p: np.ndarray, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def pairwise_dist(self, xs: np.ndarray) -> np.ndarray:
        return np.stack([self.dist(x, xs) for x in xs])

    def transport_matrix(self, p: np.ndarray, q: np.ndarray) -> np.ndarray:
        """Orthogonal ``U`` with ``coords_q(transport(v)) = U @ coords_p(v)``."""
        raise NotImplementedError

    def frame_vectors(self, p: np.ndarray) -> np.ndarray:
        """Canonical orthonormal frame at ``p`` as ambient arrays, shape ``(d, *ambient)``."""
        raise NotImplementedError

    def to_ambient(self, p: np.ndarray, y: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def from_ambient(self, p: np.ndarray, v: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def inner(self, p: np.ndarray, u: np.ndarray, v: np.ndarray) -> float:
        """Riemannian inner product of two ambient tangent vectors at ``p``."""
        raise NotImplementedError

    def half_sq_dist_hessian(self, y: np.ndarray, v: np.ndarray) -> np.ndarray:
        """Hessian of ``d(., x)^2 / 2`` at the base, evaluated on unit directions.

        ``y`` holds normal coordinates of the targets ``x`` (shape ``(n, d)``),
        ``v`` unit directions (shape ``(m, d)``); returns an ``(n, m)`` array.
        The default is exact for constant curvature ``upper_bound_delta``.
        """
        y = np.atleast_2d(y)
        v = np.atleast_2d(v)
        r = np.linalg.norm(y, axis=1)
        cos2 = (y @ v.T) ** 2 / (r[:, None] ** 2)
        delta = self.curvature.upper_bound_delta
        if delta > 0:
            s = math.sqrt(delta) * r
            r_ratio = s / np.tan(s)
        else:
            r_ratio = np.ones_like(r)
        return cos2 + r_ratio[:, None] * (1.0 - cos2)


class Euclidean(Manifold):
    def __init__(self, k: int):
        self.tag = ManifoldTag("euclidean", k)
        self.curvature = CurvatureInfo(0.0, math.inf, math.inf)

    def check_point(self, x) -> np.ndarray:
        a = np.asarray(x, dtype=float)
        if a.shape != self.tag.ambient_shape:
            raise DomainError(f"expected shape {self.tag.ambient_shape}, got {a.shape}")
        if not np.all(np.isfinite(a)):
            raise DomainError("point has non-finite coordinates")
        return a

    def check_points(self, xs) -> np.ndarray:
        a = np.asarray(xs, dtype=float)
        if a.ndim != 2 or a.shape[1:] != self.tag.ambient_shape:
            raise DomainError(f"expected shape (n, {self.tag.order}), got {a.shape}")
        if not np.all(np.isfinite(a)):
            raise DomainError("sample has non-finite coordinates")
        return a

    def log_coords(self, p, x):
        return np.asarray(x, dtype=float) - p

    def exp_coords(self, p, y):
        return p + np.asarray(y, dtype=float)

    def dist(self, p, x):
        return np.linalg.norm(np.asarray(x) - p, axis=-1)

    def pairwise_dist(self, xs):
        diff = xs[:, None, :] - xs[None, :, :]
        return np.linalg.norm(diff, axis=-1)

    def transport_matrix(self, p, q):
        return np.eye(self.dim)

    def frame_vectors(self, p):
        return np.eye(self.dim)

    def to_ambient(self, p, y):
        return np.asarray(y, dtype=float)

    def from_ambient(self, p, v):
        return np.asarray(v, dtype=float)

    def inner(self, p, u, v):
        return float(np.dot(u, v))


class Sphere(Manifold):
    """Unit sphere S^k embedded in R^{k+1}."""

    def __init__(self, k: int):
        self.tag = ManifoldTag("sphere", k)
        self.curvature = CurvatureInfo(1.0, math.pi, _convexity_radius(1.0, math.pi))

    def check_point(self, x) -> np.ndarray:
        a = np.asarray(x, dtype=float)
        if a.shape != self.tag.ambient_shape:
            raise DomainError(f"expected shape {self.tag.ambient_shape}, got {a.shape}")
        if not np.all(np.isfinite(a)) or abs(np.linalg.norm(a) - 1.0) > POINT_TOL:
            raise DomainError("sphere point must be a finite unit vector")
        return a

    def check_points(self, xs) -> np.ndarray:
        a = np.asarray(xs, dtype=float)
        if a.ndim != 2 or a.shape[1:] != self.tag.ambient_shape:
            raise DomainError(f"expected shape (n, {self.tag.order + 1}), got {a.shape}")
        if not np.all(np.isfinite(a)) or np.any(np.abs(np.linalg.norm(a, axis=1) - 1.0) > POINT_TOL):
            raise DomainError("sphere points must be finite unit vectors")
        return a

    def frame_vectors(self, p):
        # Householder reflection sending the dominant axis to -+p; its other
        # columns span the tangent space.  Pivoting on the largest component
        # keeps the construction well conditioned and deterministic.
        p = np.asarray(p, dtype=float)
        j = int(np.argmax(np.abs(p)))
        s = 1.0 if p[j] >= 0 else -1.0
        w = p.copy()
        w[j] += s
        h = np.eye(p.size) - 2.0 * np.outer(w, w) / np.dot(w, w)
        return np.delete(h, j, axis=1).T

    def _log_ambient(self, p, x):
        x = np.asarray(x, dtype=float)
        dot = x @ p
        if np.any(dot < ANTIPODAL_THRESHOLD):
            raise CutLocusError("point is antipodal to the base point")
        w = x - dot[..., None] * p
        sn = np.linalg.norm(w, axis=-1)
        theta = np.arctan2(sn, dot)
        with np.errstate(invalid="ignore", divide="ignore"):
            scale = np.where(sn > 0, theta / np.where(sn > 0, sn, 1.0), 1.0)
        return w * scale[..., None]

    def log_coords(self, p, x):
        return self._log_ambient(p, x) @ self.frame_vectors(p).T

    def _exp_ambient(self, p, v):
        v = np.asarray(v, dtype=float)
        theta = np.linalg.norm(v, axis=-1)
        out = np.cos(theta)[..., None] * p + np.sinc(theta / math.pi)[..., None] * v
        return out / np.linalg.norm(out, axis=-1, keepdims=True)

    def exp_coords(self, p, y):
        return self._exp_ambient(p, np.asarray(y, dtype=float) @ self.frame_vectors(p))

    def dist(self, p, x):
        x = np.asarray(x, dtype=float)
        dot = x @ p
        sn = np.linalg.norm(x - dot[..., None] * p, axis=-1)
        return np.arctan2(sn, dot)

    def pairwise_dist(self, xs):
        return np.arccos(np.clip(xs @ xs.T, -1.0, 1.0))

    def _transport_ambient(self, p, q, v):
        pq = float(np.dot(p, q))
        if pq < ANTIPODAL_THRESHOLD:
            raise CutLocusError("cannot transport between antipodal points")
        coef = (v @ q) / (1.0 + pq)
        return v - coef[..., None] * (p + q)

    def transport_matrix(self, p, q):
        moved = self._transport_ambient(p, q, self.frame_vectors(p))
        return self.frame_vectors(q) @ moved.T

    def to_ambient(self, p, y):
        return np.asarray(y, dtype=float) @ self.frame_vectors(p)

    def from_ambient(self, p, v):
        return np.asarray(v, dtype=float) @ self.frame_vectors(p).T

    def inner(self, p, u, v):
        return float(np.dot(u, v))


class SPD(Manifold):
    """Symmetric positive-definite k x k matrices, affine-invariant metric.

    Tangent coordinates at ``P`` are the coordinates of the whitened matrix
    ``P^{-1/2} V P^{-1/2}`` in the basis {E_ii} + {(E_ij+E_ji)/sqrt 2},
    i.e. the canonical frame is that basis carried to ``P`` by
    ``E -> P^{1/2} E P^{1/2}``.
    """

    def __init__(self, k: int):
        self.tag = ManifoldTag("spd", k)
        # Sectional curvature is nonpositive; 0 is the bound the comparison
        # formulas use.
        self.curvature = CurvatureInfo(0.0, math.inf, math.inf)

    def _check(self, a: np.ndarray) -> np.ndarray:
        if not np.all(np.isfinite(a)):
            raise DomainError("matrix has non-finite entries")
        scale = np.maximum(1.0, np.max(np.abs(a), axis=(-2, -1)))
        asym = np.max(np.abs(a - np.swapaxes(a, -1, -2)), axis=(-2, -1))
        if np.any(asym > POINT_TOL * scale):
            raise DomainError("matrix is not symmetric")
        a = sym(a)
        if np.any(np.linalg.eigvalsh(a)[..., 0] <= 0):
            raise DomainError("matrix is not positive definite")
        return a

    def check_point(self, x) -> np.ndarray:
        a = np.asarray(x, dtype=float)
        if a.shape != self.tag.ambient_shape:
            raise DomainError(f"expected shape {self.tag.ambient_shape}, got {a.shape}")
        return self._check(a)

    def check_points(self, xs) -> np.ndarray:
        a = np.asarray(xs, dtype=float)
        if a.ndim != 3 or a.shape[1:] != self.tag.ambient_shape:
            raise DomainError(f"expected shape (n, {self.tag.order}, {self.tag.order}), got {a.shape}")
        return self._check(a)

    def log_coords(self, p, x):
        _, p_isqrt = _sqrt_pair(p)
        whitened = p_isqrt @ np.asarray(x, dtype=float) @ p_isqrt
        return sym_to_coords(sym_fn(whitened, np.log))

    def exp_coords(self, p, y):
        p_sqrt, _ = _sqrt_pair(p)
        e = sym_fn(coords_to_sym(y, self.tag.order), np.exp)
        return sym(p_sqrt @ e @ p_sqrt)

    def dist(self, p, x):
        _, p_isqrt = _sqrt_pair(p)
        lam = np.linalg.eigvalsh(sym(p_isqrt @ np.asarray(x, dtype=float) @ p_isqrt))
        return np.sqrt(np.sum(np.log(lam) ** 2, axis=-1))

    def transport_matrix(self, p, q):
        k = self.tag.order
        p_sqrt, p_isqrt = _sqrt_pair(p)
        _, q_isqrt = _sqrt_pair(q)
        a_half = sym_fn(p_isqrt @ q @ p_isqrt, np.sqrt)
        u = q_isqrt @ p_sqrt @ a_half
        basis = coords_to_sym(np.eye(self.dim), k)
        return sym_to_coords(u @ basis @ u.T).T

    def frame_vectors(self, p):
        p_sqrt, _ = _sqrt_pair(p)
        return p_sqrt @ coords_to_sym(np.eye(self.dim), self.tag.order) @ p_sqrt

    def to_ambient(self, p, y):
        p_sqrt, _ = _sqrt_pair(p)
        return p_sqrt @ coords_to_sym(y, self.tag.order) @ p_sqrt

    def from_ambient(self, p, v):
        _, p_isqrt = _sqrt_pair(p)
        return sym_to_coords(p_isqrt @ np.asarray(v, dtype=float) @ p_isqrt)

    def inner(self, p, u, v):
        p_inv = np.linalg.inv(p)
        return float(np.trace(p_inv @ u @ p_inv @ v))

    def half_sq_dist_hessian(self, y, v):
        # Exact for the symmetric space: in the eigenbasis of the whitened log
        # the Jacobi operator is diagonal with rates |l_i - l_j| / 2.
        k = self.tag.order
        y = np.atleast_2d(y)
        v = np.atleast_2d(v)
        lam, q = np.linalg.eigh(coords_to_sym(y, k))
        s = 0.5 * np.abs(lam[:, :, None] - lam[:, None, :])
        with np.errstate(invalid="ignore", divide="ignore"):
            f = np.where(s > 1e-8, s / np.tanh(np.where(s > 1e-8, s, 1.0)), 1.0 + s**2 / 3.0)
        vm = coords_to_sym(v, k)
        w = np.swapaxes(q, -1, -2)[:, None] @ vm[None] @ q[:, None]
        return np.sum(w**2 * f[:, None], axis=(-2, -1))


@lru_cache(maxsize=None)
def get_manifold(tag: ManifoldTag) -> Manifold:
    if tag.kind == "euclidean":
        return Euclidean(tag.order)
    if tag.kind == "sphere":
        return Sphere(tag.order)
    return SPD(tag.order)


def euclidean(k: int) -> ManifoldTag:
    return ManifoldTag("euclidean", k)


def sphere(k: int) -> ManifoldTag:
    return ManifoldTag("sphere", k)


def spd(k: int) -> ManifoldTag:
    return ManifoldTag("spd", k)


# ---------------------------------------------------------------------------
# validated object API


@dataclass(frozen=True, eq=False)
class ManifoldPoint:
    tag: ManifoldTag
    coords: np.ndarray

    def __post_init__(self):
        a = self.tag.geometry.check_point(self.coords).copy()
        a.setflags(write=False)
        object.__setattr__(self, "coords", a)

    @property
    def manifold(self) -> Manifold:
        return self.tag.geometry

    def same_as(self, other: "ManifoldPoint") -> bool:
        return self.tag == other.tag and np.array_equal(self.coords, other.coords)

    def __repr__(self) -> str:
        return f"ManifoldPoint({self.tag}, {np.array2string(self.coords, precision=6)})"


@dataclass(frozen=True, eq=False)
class TangentVector:
    """Tangent vector given by coordinates in the canonical frame at ``base``."""

    base: ManifoldPoint
    coeffs: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.coeffs, dtype=float).copy()
        if c.shape != (self.base.tag.dimension,):
            raise ContractViolationError(
                f"expected {self.base.tag.dimension} coefficients, got shape {c.shape}"
            )
        c.setflags(write=False)
        object.__setattr__(self, "coeffs", c)

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.coeffs))

    @property
    def ambient(self) -> np.ndarray:
        return self.base.manifold.to_ambient(self.base.coords, self.coeffs)

    @classmethod
    def from_ambient(cls, base: ManifoldPoint, v) -> "TangentVector":
        return cls(base, base.manifold.from_ambient(base.coords, np.asarray(v, dtype=float)))


@dataclass(frozen=True, eq=False)
class OrthonormalFrame:
    """Orthonormal basis of the tangent space at ``base``.

    The basis vectors are ``rotation @ canonical``: row ``a`` of ``rotation``
    holds the canonical coordinates of vector ``a``.  Any orthonormal frame
    can be written this way.
    """

    base: ManifoldPoint
    rotation: np.ndarray

    def __post_init__(self):
        d = self.base.tag.dimension
        r = np.asarray(self.rotation, dtype=float)
        if r.shape != (d, d) or not np.allclose(r @ r.T, np.eye(d), atol=1e-10):
            raise ContractViolationError("frame rotation must be an orthogonal d x d matrix")

    @classmethod
    def canonical(cls, base: ManifoldPoint) -> "OrthonormalFrame":
        return cls(base, np.eye(base.tag.dimension))

    @classmethod
    def random(cls, base: ManifoldPoint, rng: np.random.Generator) -> "OrthonormalFrame":
        d = base.tag.dimension
        q, r = np.linalg.qr(rng.standard_normal((d, d)))
        return cls(base, q * np.sign(np.diag(r)))

    @property
    def vectors(self) -> np.ndarray:
        canon = self.base.manifold.frame_vectors(self.base.coords)
        return np.tensordot(self.rotation, canon, axes=(1, 0))

    def gram(self) -> np.ndarray:
        m = self.base.manifold
        vecs = self.vectors
        p = self.base.coords
        return np.array([[m.inner(p, a, b) for b in vecs] for a in vecs])

    def from_canonical(self, y: np.ndarray) -> np.ndarray:
        """Canonical coordinates (rows of ``y``) to coordinates in this frame."""
        return np.asarray(y) @ self.rotation.T

    def to_canonical(self, y: np.ndarray) -> np.ndarray:
        return np.asarray(y) @ self.rotation

    def transported(self, q: ManifoldPoint) -> "OrthonormalFrame":
        """This frame parallel-transported along the minimal geodesic to ``q``."""
        _check_same_tag(self.base, q)
        u = self.base.manifold.transport_matrix(self.base.coords, q.coords)
        return OrthonormalFrame(q, self.rotation @ u.T)


def _check_same_tag(p: ManifoldPoint, q: ManifoldPoint) -> None:
    if p.tag != q.tag:
        raise ContractViolationError(f"manifold mismatch: {p.tag} vs {q.tag}")


def _check_base(p: ManifoldPoint, v: TangentVector) -> None:
    _check_same_tag(p, v.base)
    if not np.array_equal(p.coords, v.base.coords):
        raise ContractViolationError("tangent vector is not based at the given point")


def curvature_info(tag: ManifoldTag) -> CurvatureInfo:
    return tag.geometry.curvature


def tangent_frame(p: ManifoldPoint) -> OrthonormalFrame:
    return OrthonormalFrame.canonical(p)


def exp_map(p: ManifoldPoint, v: TangentVector) -> ManifoldPoint:
    _check_base(p, v)
    return ManifoldPoint(p.tag, p.manifold.exp_coords(p.coords, v.coeffs))


def log_map(p: ManifoldPoint, x: ManifoldPoint) -> TangentVector:
    _check_same_tag(p, x)
    return TangentVector(p, p.manifold.log_coords(p.coords, x.coords))


def dist(p: ManifoldPoint, q: ManifoldPoint) -> float:
    _check_same_tag(p, q)
    return float(p.manifold.dist(p.coords, q.coords))


def parallel_transport(p: ManifoldPoint, q: ManifoldPoint, v: TangentVector) -> TangentVector:
    _check_base(p, v)
    _check_same_tag(p, q)
    u = p.manifold.transport_matrix(p.coords, q.coords)
    return TangentVector(q, u @ v.coeffs)


def geodesic_symmetry(mu: ManifoldPoint, x: ManifoldPoint) -> ManifoldPoint:
    """Reflect ``x`` through ``mu`` along the geodesic joining them."""
    return exp_map(mu, TangentVector(mu, -log_map(mu, x).coeffs))
