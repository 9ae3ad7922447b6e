"""Huber means, Fréchet means and geometric medians by Riemannian descent."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Literal, Union

import numpy as np

from .errors import CutLocusError, DegenerateScaleError, DomainError, InsufficientDataError, SolverError
from .losses import LossSpec, Sample, gradient_weights, rho_values
from .manifolds import ManifoldPoint

InitRule = Union[Literal["medoid", "first_point"], ManifoldPoint]

DEFAULT_DESCENT_STEP = 0.25
DEFAULT_WEISZFELD_STEP = 1.0
COLLISION_TOL = 1e-12
MAX_STEP_HALVINGS = 30
MAD_CONSISTENCY = 0.6745
HUBER_95_KAPPA = 1.345
MEDOID_CANDIDATES = 2000


@dataclass(frozen=True)
class SolverConfig:
    """Settings for the iterative solvers.

    ``step_alpha=None`` picks the solver's default: 0.25 for gradient descent
    on the Huber, pseudo-Huber and squared losses and 1.0 for the Weiszfeld
    iteration.  ``step_rule="reweighted"`` replaces the fixed step by the
    iteratively reweighted one, ``m <- Exp_m(sum w_i y_i / sum w_i)`` with
    ``w_i = rho'(d_i) / d_i``.  It reaches the same fixed point and is much
    faster when ``c`` is small compared with the spread of the data.
    """

    step_alpha: float | None = None
    grad_tol: float = 1e-9
    max_iter: int = 10_000
    init: InitRule = "medoid"
    step_rule: Literal["fixed", "reweighted"] = "fixed"

    def __post_init__(self):
        if self.step_alpha is not None and not 0 < self.step_alpha <= 1:
            raise DomainError("step_alpha must lie in (0, 1]")
        if not self.grad_tol > 0:
            raise DomainError("grad_tol must be positive")
        if int(self.max_iter) != self.max_iter or self.max_iter < 1:
            raise DomainError("max_iter must be a positive integer")
        if self.step_rule not in ("fixed", "reweighted"):
            raise DomainError(f"unknown step rule {self.step_rule!r}")
        if not isinstance(self.init, ManifoldPoint) and self.init not in ("medoid", "first_point"):
            raise DomainError(f"unknown init rule {self.init!r}")


@dataclass(frozen=True, eq=False)
class EstimateReport:
    mean: ManifoldPoint
    iterations: int
    final_grad_norm: float
    objective_value: float
    converged: bool
    objective_trace: tuple[float, ...] = field(repr=False)
    loss: LossSpec
    # True when the result lies outside the ball about the initial point that
    # contains every observation.
    left_data_ball: bool = False


@dataclass(frozen=True, eq=False)
class SupportDiagnostic:
    radius_r0: float
    ball_center: ManifoldPoint
    max_distance: float
    within: bool


def medoid(sample: Sample, spec: LossSpec) -> ManifoldPoint:
    """The observation with the smallest objective value.

    Samples larger than ``MEDOID_CANDIDATES`` only consider that many evenly
    spaced observations as candidates (each scored against the full sample),
    which keeps the cost linear in ``n``.
    """
    if sample.n == 1:
        return sample[0]
    geom = sample.tag.geometry
    if sample.n > MEDOID_CANDIDATES:
        candidates = np.linspace(0, sample.n - 1, MEDOID_CANDIDATES).round().astype(int)
    else:
        candidates = np.arange(sample.n)
    costs = np.empty(candidates.size)
    chunk = max(1, 4_000_000 // sample.n)
    for start in range(0, candidates.size, chunk):
        block = sample.data[candidates[start:start + chunk]]
        if sample.tag.kind == "spd":
            d = np.stack([geom.dist(x, sample.data) for x in block])
        elif sample.tag.kind == "sphere":
            d = np.arccos(np.clip(block @ sample.data.T, -1.0, 1.0))
        else:
            d = np.linalg.norm(block[:, None, :] - sample.data[None], axis=-1)
        costs[start:start + chunk] = rho_values(spec, d).mean(axis=1)
    return sample[int(candidates[np.argmin(costs)])]


def _initial_point(sample: Sample, spec: LossSpec, cfg: SolverConfig) -> ManifoldPoint:
    if isinstance(cfg.init, ManifoldPoint):
        if cfg.init.tag != sample.tag:
            raise DomainError("initial point lies on a different manifold")
        return cfg.init
    if cfg.init == "first_point":
        return sample[0]
    return medoid(sample, spec)


def _left_ball(sample: Sample, center: ManifoldPoint, m: np.ndarray) -> bool:
    geom = sample.tag.geometry
    radius = float(np.max(geom.dist(center.coords, sample.data)))
    return bool(geom.dist(center.coords, m) > radius + 1e-12)


def _descend(sample: Sample, spec: LossSpec, cfg: SolverConfig, weiszfeld: bool) -> EstimateReport:
    geom = sample.tag.geometry
    data = sample.data
    n = sample.n
    start = _initial_point(sample, spec, cfg)
    default = DEFAULT_WEISZFELD_STEP if weiszfeld else DEFAULT_DESCENT_STEP
    alpha = cfg.step_alpha if cfg.step_alpha is not None else default

    def evaluate(m):
        y = geom.log_coords(m, data)
        r = np.linalg.norm(y, axis=1)
        obj = float(np.mean(rho_values(spec, r)))
        if weiszfeld:
            hit = r < COLLISION_TOL
            w = np.where(hit, 0.0, 1.0 / np.where(hit, 1.0, r))
            g = (w[:, None] * y).sum(axis=0)
            # minimum-norm subgradient of sum_i d_i, scaled back to a mean
            gnorm = max(0.0, float(np.linalg.norm(g)) - int(hit.sum())) / n
            step = g / w.sum() if w.sum() > 0 else np.zeros_like(g)
        else:
            w = gradient_weights(spec, r)
            g = (w[:, None] * y).mean(axis=0)
            gnorm = float(np.linalg.norm(g))
            step = g / w.mean() if cfg.step_rule == "reweighted" else g
        return obj, gnorm, step

    m = start.coords
    obj, gnorm, step = evaluate(m)
    best_obj, best_m, best_g = obj, m, gnorm
    trace = [obj]
    converged = gnorm <= cfg.grad_tol
    iterations = 0
    while not converged and iterations < cfg.max_iter:
        scale = alpha if (weiszfeld or cfg.step_rule == "fixed") else 1.0
        for _ in range(MAX_STEP_HALVINGS + 1):
            try:
                m_new = geom.exp_coords(m, scale * step)
                new = evaluate(m_new)
                break
            except CutLocusError:
                scale *= 0.5
        else:
            raise SolverError("step halving could not avoid the cut locus")
        m = m_new
        obj, gnorm, step = new
        iterations += 1
        trace.append(obj)
        if obj < best_obj:
            best_obj, best_m, best_g = obj, m, gnorm
        converged = gnorm <= cfg.grad_tol
    if not converged:
        m, obj, gnorm = best_m, best_obj, best_g
    mean = ManifoldPoint(sample.tag, m)
    return EstimateReport(
        mean=mean,
        iterations=iterations,
        final_grad_norm=gnorm,
        objective_value=obj,
        converged=converged,
        objective_trace=tuple(trace),
        loss=spec,
        left_data_ball=_left_ball(sample, start, m),
    )


def huber_mean(sample: Sample, spec: LossSpec, cfg: SolverConfig | None = None) -> EstimateReport:
    """Minimize the mean (pseudo-)Huber loss of the distances to the sample.

    ``c = 0`` and ``c = inf`` are handed to :func:`geometric_median` and
    :func:`frechet_mean`.  A run that hits ``max_iter`` is reported with
    ``converged=False`` and the best iterate seen.
    """
    cfg = cfg or SolverConfig()
    if spec.regime == "l1":
        return geometric_median(sample, cfg)
    if spec.regime == "l2":
        return frechet_mean(sample, cfg)
    return _descend(sample, spec, cfg, weiszfeld=False)


def frechet_mean(sample: Sample, cfg: SolverConfig | None = None) -> EstimateReport:
    cfg = cfg or SolverConfig()
    spec = LossSpec.huber(math.inf)
    if sample.tag.kind != "euclidean":
        return _descend(sample, spec, cfg, weiszfeld=False)
    mean = sample.data.mean(axis=0)
    resid = sample.data - mean
    gnorm = float(np.linalg.norm(2.0 * resid.mean(axis=0)))
    obj = float(np.mean(np.sum(resid**2, axis=1)))
    return EstimateReport(
        mean=ManifoldPoint(sample.tag, mean),
        iterations=0,
        final_grad_norm=gnorm,
        objective_value=obj,
        converged=gnorm <= cfg.grad_tol or gnorm <= 1e-12 * (1.0 + float(np.abs(mean).max())),
        objective_trace=(obj,),
        loss=spec,
    )


def geometric_median(sample: Sample, cfg: SolverConfig | None = None) -> EstimateReport:
    """Weiszfeld iteration for the minimizer of the mean distance."""
    cfg = cfg or SolverConfig()
    return _descend(sample, LossSpec.huber(0.0), cfg, weiszfeld=True)


def mad_scale(sample: Sample, center: ManifoldPoint) -> float:
    """Median distance to ``center`` divided by 0.6745."""
    if sample.n < 2:
        raise InsufficientDataError("mad_scale needs at least two points")
    med = float(np.median(sample.distances(center)))
    if med <= 0:
        raise DegenerateScaleError("median absolute deviation is zero")
    return med / MAD_CONSISTENCY


def default_cutoff(sample: Sample, cfg: SolverConfig | None = None) -> float:
    """1.345 times the MAD scale about the geometric median."""
    if sample.n < 2:
        raise InsufficientDataError("default_cutoff needs at least two points")
    center = geometric_median(sample, cfg).mean
    return HUBER_95_KAPPA * mad_scale(sample, center)


def support_radius(spec: LossSpec, delta: float, r_inj: float) -> float:
    """Radius of a ball that guarantees a unique (pseudo-)Huber mean."""
    if delta <= 0:
        half_period = math.inf
    else:
        half_period = math.pi / math.sqrt(delta)
    if spec.kind == "huber" and spec.regime != "l2" and spec.cutoff < half_period:
        return 0.5 * min(0.5 * half_period, r_inj)
    return 0.5 * min(half_period, r_inj)


def uniqueness_support_check(sample: Sample, spec: LossSpec) -> SupportDiagnostic:
    """Advisory check that the data fit in a uniqueness ball about the medoid."""
    curv = sample.tag.geometry.curvature
    r0 = support_radius(spec, curv.upper_bound_delta, curv.injectivity_radius)
    center = medoid(sample, spec)
    far = float(np.max(sample.distances(center)))
    return SupportDiagnostic(radius_r0=r0, ball_center=center, max_distance=far, within=far < r0)
