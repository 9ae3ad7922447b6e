"""Sandwich covariance of the sample Huber mean, a location test and confidence regions."""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Literal

import numpy as np
from scipy import optimize, special

from .errors import DomainError, InsufficientDataError, NotConvergedError, SingularHessianError
from .estimators import SolverConfig, huber_mean
from .losses import LossSpec, Sample, parse_cutoff
from .manifolds import ManifoldPoint, OrthonormalFrame

EXCLUSION_TOL = 1e-12
MAX_CONDITION = 1e12

CurvatureMode = Literal["bound", "exact"]


def chi2_upper_quantile(k: int, alpha: float) -> float:
    """``q`` with ``P(chi2_k >= q) = alpha``."""
    if int(k) != k or k < 1:
        raise DomainError("degrees of freedom must be a positive integer")
    if not 0 < alpha < 1:
        raise DomainError("alpha must lie in (0, 1)")
    a = 0.5 * k

    def tail(q):
        return special.gammaincc(a, 0.5 * q) - alpha

    hi = max(1.0, float(k))
    while tail(hi) > 0:
        hi *= 2.0
    return float(optimize.brentq(tail, 0.0, hi, xtol=1e-14, rtol=4 * np.finfo(float).eps))


def chi2_upper_tail(k: int, q: float) -> float:
    return float(special.gammaincc(0.5 * k, 0.5 * max(q, 0.0)))


def sn_ratio(delta: float, s: float) -> float:
    """``sn_delta'(s) / sn_delta(s)`` for the comparison function of curvature ``delta``."""
    if not s > 0:
        raise DomainError("sn_ratio needs s > 0")
    if delta > 0:
        root = math.sqrt(delta)
        if s * root >= math.pi:
            raise DomainError("s is at or beyond the first zero of sn")
        return root / math.tan(s * root)
    if delta == 0:
        return 1.0 / s
    root = math.sqrt(-delta)
    return root / math.tanh(s * root)


def _sn_ratio_array(delta: float, s: np.ndarray) -> np.ndarray:
    if delta > 0:
        root = math.sqrt(delta)
        return root / np.tan(s * root)
    if delta == 0:
        return 1.0 / s
    root = math.sqrt(-delta)
    return root / np.tanh(s * root)


class ExcludedObservation(DomainError):
    """The residual sits exactly at 0 or at the cutoff, where rho is not twice differentiable."""


def directional_second_derivative(y, v, c, delta: float) -> float:
    """Second derivative of ``rho_c(d(x, .))`` at the base in unit direction ``v``.

    ``y`` are the normal coordinates of ``x``; the curvature enters through
    the comparison ratio for the bound ``delta``.
    """
    c = parse_cutoff(c)
    y = np.asarray(y, dtype=float)
    v = np.asarray(v, dtype=float)
    r = float(np.linalg.norm(y))
    if r < EXCLUSION_TOL or abs(r - c) < EXCLUSION_TOL:
        raise ExcludedObservation("residual norm is 0 or equal to the cutoff")
    cos2 = float(np.dot(y, v)) ** 2 / r**2
    inside = r <= c
    return 2.0 * cos2 * inside + 2.0 * min(r, c) * sn_ratio(delta, r) * (1.0 - cos2)


def basis_set_V(k: int) -> np.ndarray:
    """Unit directions whose outer products span the symmetric k x k matrices.

    Rows are ``e_1..e_k`` followed by ``(e_i + e_j)/sqrt 2`` for ``i < j`` in
    row-major order.
    """
    if k < 1:
        raise DomainError("k must be positive")
    eye = np.eye(k)
    iu, ju = np.triu_indices(k, 1)
    pairs = (eye[iu] + eye[ju]) / math.sqrt(2.0)
    return np.vstack([eye, pairs])


def vecd(h: np.ndarray) -> np.ndarray:
    """Diagonal entries, then the upper off-diagonal entries row by row."""
    h = np.asarray(h, dtype=float)
    if h.ndim != 2 or h.shape[0] != h.shape[1]:
        raise DomainError("vecd needs a square matrix")
    if np.max(np.abs(h - h.T), initial=0.0) > 1e-10 * max(1.0, float(np.max(np.abs(h), initial=0.0))):
        raise DomainError("vecd needs a symmetric matrix")
    iu, ju = np.triu_indices(h.shape[0], 1)
    return np.concatenate([np.diag(h), h[iu, ju]])


def vecd_inv(a: np.ndarray) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    k = int(round((math.sqrt(8 * a.size + 1) - 1) / 2))
    if k * (k + 1) // 2 != a.size:
        raise DomainError("length is not triangular")
    h = np.diag(a[:k])
    iu, ju = np.triu_indices(k, 1)
    h[iu, ju] = a[k:]
    h[ju, iu] = a[k:]
    return h


@lru_cache(maxsize=None)
def v_matrix(k: int) -> np.ndarray:
    """``V`` with ``V @ vecd(H) = (v^T H v for v in basis_set_V(k))``."""
    # v^T H v = sum_i v_i^2 h_ii + sum_{i<j} 2 v_i v_j h_ij
    rows = []
    for v in basis_set_V(k):
        outer = np.outer(v, v)
        rows.append(vecd(2.0 * outer - np.diag(np.diag(outer))))
    m = np.array(rows)
    m.setflags(write=False)
    return m


def reconstruct_symmetric(a_v: np.ndarray) -> np.ndarray:
    """Recover ``H`` from the quadratic forms ``v^T H v`` over :func:`basis_set_V`.

    ``V`` is unit lower triangular up to scaling, so the solve is done in
    closed form: ``h_ii = a_i`` and ``h_ij = a_ij - (h_ii + h_jj) / 2``.
    This avoids the rounding of a generic inverse (constant inputs give an
    exactly diagonal result).
    """
    a_v = np.asarray(a_v, dtype=float)
    k = int(round((math.sqrt(8 * a_v.size + 1) - 1) / 2))
    if k * (k + 1) // 2 != a_v.size:
        raise DomainError("length is not triangular")
    diag = a_v[:k]
    iu, ju = np.triu_indices(k, 1)
    off = a_v[k:] - 0.5 * (diag[iu] + diag[ju])
    return vecd_inv(np.concatenate([diag, off]))


def _frame_coords(sample: Sample, base: ManifoldPoint, frame: OrthonormalFrame | None) -> np.ndarray:
    y = sample.log_coords(base)
    if frame is None:
        return y
    if not np.array_equal(frame.base.coords, base.coords):
        raise DomainError("frame is not based at the estimation point")
    return frame.from_canonical(y)


def sigma_hat(sample: Sample, base: ManifoldPoint, c, frame: OrthonormalFrame | None = None) -> np.ndarray:
    """``(4/n) sum ((|y_i| ^ c)/|y_i|)^2 y_i y_i^T`` in the given frame."""
    c = parse_cutoff(c)
    if c == 0:
        raise DomainError("the covariance estimator needs c > 0")
    y = _frame_coords(sample, base, frame)
    r = np.linalg.norm(y, axis=1)
    safe = np.where(r > 0, r, 1.0)
    shrink = np.where(r > c, c / safe, 1.0) if math.isfinite(c) else np.ones_like(r)
    z = y * shrink[:, None]
    return 4.0 * (z.T @ z) / sample.n


def h_hat(
    sample: Sample,
    base: ManifoldPoint,
    c,
    frame: OrthonormalFrame | None = None,
    curvature: CurvatureMode = "bound",
) -> tuple[np.ndarray, int]:
    """Hessian estimate from directional second derivatives plus the excluded count.

    With ``curvature="bound"`` the second derivatives use the comparison
    ratio for the manifold's curvature bound, which is exact on Euclidean
    space and spheres.  ``"exact"`` asks the manifold for the exact Hessian
    of the squared distance, which differs only on SPD(k).
    """
    c = parse_cutoff(c)
    if c == 0:
        raise DomainError("the Hessian estimator needs c > 0")
    geom = sample.tag.geometry
    y = _frame_coords(sample, base, frame)
    r = np.linalg.norm(y, axis=1)
    keep = r >= EXCLUSION_TOL
    if math.isfinite(c):
        keep &= np.abs(r - c) >= EXCLUSION_TOL
    excluded = int(np.sum(~keep))
    if not keep.any():
        raise InsufficientDataError("every observation was excluded")
    y, r = y[keep], r[keep]
    k = y.shape[1]
    dirs = basis_set_V(k)
    cos2 = (y @ dirs.T) ** 2 / (r[:, None] ** 2)
    if curvature == "exact":
        y_canon = frame.to_canonical(y) if frame is not None else y
        dirs_canon = frame.to_canonical(dirs) if frame is not None else dirs
        hq = geom.half_sq_dist_hessian(y_canon, dirs_canon)
    elif curvature == "bound":
        delta = geom.curvature.upper_bound_delta
        # r * sn'/sn is exactly 1 on flat space; skip the rounding of r * (1/r)
        r_ratio = np.ones_like(r) if delta == 0 else r * _sn_ratio_array(delta, r)
        hq = cos2 + r_ratio[:, None] * (1.0 - cos2)
    else:
        raise DomainError(f"unknown curvature mode {curvature!r}")
    if math.isfinite(c):
        inside = (r <= c)[:, None]
        second = np.where(inside, 2.0 * hq, 2.0 * c * (hq - cos2) / r[:, None])
    else:
        second = 2.0 * hq
    return reconstruct_symmetric(second.mean(axis=0)), excluded


@dataclass(frozen=True, eq=False)
class AsymptoticCovariance:
    base: ManifoldPoint
    frame: OrthonormalFrame
    sigma_hat: np.ndarray
    h_hat: np.ndarray
    a_hat: np.ndarray
    excluded_count: int

    def transported(self, q: ManifoldPoint) -> "AsymptoticCovariance":
        """Same matrices, re-expressed in the frame transported to ``q``."""
        return AsymptoticCovariance(q, self.frame.transported(q), self.sigma_hat, self.h_hat,
                                    self.a_hat, self.excluded_count)

    def in_canonical_frame(self) -> np.ndarray:
        r = self.frame.rotation
        return r.T @ self.a_hat @ r


def limiting_covariance(
    sample: Sample,
    base: ManifoldPoint,
    c,
    frame: OrthonormalFrame | None = None,
    curvature: CurvatureMode = "bound",
) -> AsymptoticCovariance:
    frame = frame or OrthonormalFrame.canonical(base)
    sig = sigma_hat(sample, base, c, frame)
    hess, excluded = h_hat(sample, base, c, frame, curvature)
    if not np.all(np.isfinite(hess)) or np.linalg.cond(hess) >= MAX_CONDITION:
        raise SingularHessianError("Hessian estimate is numerically singular")
    h_inv = np.linalg.inv(hess)
    a = h_inv @ sig @ h_inv
    return AsymptoticCovariance(base, frame, sig, hess, 0.5 * (a + a.T), excluded)


@dataclass(frozen=True)
class TestResult:
    statistic_Tn: float
    df: int
    critical_value: float
    p_value: float
    reject: bool
    alpha: float

    __test__ = False  # not a pytest class


def _check_alpha(alpha: float) -> None:
    if not 0 < alpha < 1:
        raise DomainError("alpha must lie in (0, 1)")


def quadratic_form_inverse(a: np.ndarray, z: np.ndarray) -> float:
    if np.linalg.cond(a) >= MAX_CONDITION:
        raise SingularHessianError("covariance matrix is numerically singular")
    return float(z @ np.linalg.solve(a, z))


def location_test(
    n: int,
    estimate: ManifoldPoint,
    cov: AsymptoticCovariance,
    m0_tilde: ManifoldPoint,
    alpha: float = 0.05,
) -> TestResult:
    """Hotelling-type test of ``estimate`` against ``m0_tilde`` given its covariance.

    ``cov`` must be based at ``estimate``; its frame is parallel-transported
    to ``m0_tilde`` and ``Log_{m0_tilde}(estimate)`` is expressed there.
    """
    _check_alpha(alpha)
    if not np.array_equal(cov.base.coords, estimate.coords):
        raise DomainError("covariance must be estimated at the tested estimate")
    moved = cov.frame.transported(m0_tilde)
    geom = estimate.tag.geometry
    z = moved.from_canonical(geom.log_coords(m0_tilde.coords, estimate.coords))
    t_n = n * quadratic_form_inverse(cov.a_hat, z) if np.any(z) else 0.0
    k = estimate.tag.dimension
    crit = chi2_upper_quantile(k, alpha)
    return TestResult(
        statistic_Tn=float(t_n),
        df=k,
        critical_value=crit,
        p_value=chi2_upper_tail(k, t_n),
        reject=bool(t_n >= crit),
        alpha=alpha,
    )


def one_sample_test(
    sample: Sample,
    m0_tilde: ManifoldPoint,
    c,
    alpha: float = 0.05,
    cfg: SolverConfig | None = None,
) -> TestResult:
    """Test ``H0: the population Huber mean equals m0_tilde``.

    The sandwich covariance is estimated at the sample Huber mean and its
    frame is parallel-transported to ``m0_tilde``, where the residual
    ``Log_{m0_tilde}(m_n)`` is expressed.
    """
    _check_alpha(alpha)
    if m0_tilde.tag != sample.tag:
        raise DomainError("null point lies on a different manifold")
    c = parse_cutoff(c)
    report = huber_mean(sample, LossSpec.huber(c), cfg)
    if not report.converged:
        raise NotConvergedError("the sample Huber mean did not converge")
    cov = limiting_covariance(sample, report.mean, c)
    return location_test(sample.n, report.mean, cov, m0_tilde, alpha)


@dataclass(frozen=True, eq=False)
class EllipsoidSpec:
    """``{x : x^T shape^{-1} x <= threshold}`` in tangent coordinates at ``center``."""

    center: ManifoldPoint
    shape: np.ndarray
    threshold: float
    frame: OrthonormalFrame | None = None

    def contains(self, x) -> bool:
        x = np.asarray(x, dtype=float)
        if not np.any(x):
            return True
        return quadratic_form_inverse(self.shape, x) <= self.threshold

    def semi_axes(self) -> np.ndarray:
        return np.sqrt(self.threshold * np.clip(np.linalg.eigvalsh(self.shape), 0.0, None))


def confidence_region(cov: AsymptoticCovariance, n: int, alpha: float = 0.05) -> EllipsoidSpec:
    _check_alpha(alpha)
    if n < 1:
        raise DomainError("n must be positive")
    shape = cov.a_hat / n
    if np.linalg.cond(shape) >= MAX_CONDITION:
        raise SingularHessianError("covariance matrix is numerically singular")
    return EllipsoidSpec(cov.base, shape, chi2_upper_quantile(cov.a_hat.shape[0], alpha), cov.frame)
