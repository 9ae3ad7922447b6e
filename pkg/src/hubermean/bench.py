"""Simulation studies: breakdown, accuracy tables, covariance error, test size and power."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np
from scipy import special

from .distributions import (
    Contaminated,
    DistributionSpec,
    LogLaplaceSPD,
    LogNormalSPD,
    SeededRng,
    VonMisesFisher,
    as_generator,
    sample,
)
from .errors import DomainError, NotConvergedError
from .estimators import SolverConfig, frechet_mean, geometric_median, huber_mean
from .inference import EllipsoidSpec, chi2_upper_quantile, limiting_covariance, location_test
from .losses import LossSpec, Sample, parse_cutoff
from .manifolds import ManifoldPoint, ManifoldTag, sphere, spd
from .montecarlo import as_seeded, run_replicates

# Variance of the lognormal law's frame coordinates.  Chosen so that the
# variance of the Fréchet mean at n = 100 is 3 * 0.1 / 100 = 0.003.
TABLE1_LOGNORMAL_SCALE = math.sqrt(0.1)
TABLE1_OUTLIER_JITTER = 0.1
TABLE1_OUTLIER_FRACTION = 0.1
DEFAULT_REPS = 250


@dataclass
class TableReport:
    """Rows of a study table plus the configuration and raw replicate data."""

    columns: list[str]
    rows: list[dict[str, Any]]
    meta: dict[str, Any] = field(default_factory=dict)
    raw: dict[str, np.ndarray] = field(default_factory=dict, repr=False)

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.DictWriter(buf, fieldnames=self.columns, lineterminator="\n")
        writer.writeheader()
        for row in self.rows:
            writer.writerow({k: _fmt(row[k]) for k in self.columns})
        return buf.getvalue()

    def column(self, name: str) -> list[Any]:
        return [row[name] for row in self.rows]


def _fmt(value):
    if isinstance(value, float):
        return repr(value)
    return value


# ---------------------------------------------------------------------------
# breakdown


@dataclass
class BreakdownReport:
    n: int
    k_corrupted: int
    cutoff: float
    radius_R: float
    outlier_distance_schedule: list[float]
    displacement: list[float]
    bound_values: list[float]

    @property
    def bounded(self) -> bool:
        return all(d <= b + 1e-6 for d, b in zip(self.displacement, self.bound_values))


def breakdown_bound(n: int, k: int, c: float, radius: float) -> float:
    """Largest displacement ``k`` replaced points can cause when ``2k < n``."""
    if math.isinf(c) or 2 * k >= n:
        return math.inf
    return 2.0 * radius + 2.0 * k * (c + 2.0 * radius) / (n - 2 * k)


def breakdown_probe(
    data: Sample,
    k: int,
    c,
    distances: Sequence[float],
    rng,
    cfg: SolverConfig | None = None,
) -> BreakdownReport:
    """Move ``k`` observations ever further out along one direction.

    The first ``k`` points are replaced by a single outlier location at each
    scheduled distance from the clean estimate, along a random unit tangent
    direction drawn once from ``rng``.
    """
    if data.tag.kind == "sphere":
        raise DomainError("breakdown probes need an unbounded manifold")
    if not 0 <= k <= data.n:
        raise DomainError("k must lie between 0 and n")
    c = parse_cutoff(c)
    spec = LossSpec.huber(c)
    geom = data.tag.geometry
    clean = huber_mean(data, spec, cfg).mean
    radius = float(np.max(data.distances(clean)))
    direction = as_generator(rng).standard_normal(data.tag.dimension)
    direction /= np.linalg.norm(direction)
    displacement, bounds = [], []
    for t in distances:
        corrupted = np.array(data.data)
        if k:
            corrupted[:k] = geom.exp_coords(clean.coords, float(t) * direction)
        moved = huber_mean(Sample(data.tag, corrupted), spec, cfg).mean
        displacement.append(float(geom.dist(clean.coords, moved.coords)))
        bounds.append(breakdown_bound(data.n, k, c, radius))
    return BreakdownReport(data.n, k, c, radius, [float(t) for t in distances], displacement, bounds)


# ---------------------------------------------------------------------------
# bias / variance / MSE


def table1_estimators() -> list[tuple[str, LossSpec]]:
    return [
        ("frechet", LossSpec.huber(math.inf)),
        ("huber_c1", LossSpec.huber(1.0)),
        ("pseudo_huber_c1", LossSpec.pseudo(1.0)),
    ]


def contaminated_lognormal(
    scale: float = TABLE1_LOGNORMAL_SCALE,
    fraction: float = TABLE1_OUTLIER_FRACTION,
    jitter: float = TABLE1_OUTLIER_JITTER,
) -> Contaminated:
    """Lognormal law about I_2 with a fixed fraction of gross outliers.

    Outliers scatter with tangent standard deviation ``jitter`` around
    ``Exp_I([[10, 5 sqrt 2], [5 sqrt 2, 10]])``.
    """
    tag = spd(2)
    eye = ManifoldPoint(tag, np.eye(2))
    far = 5.0 * math.sqrt(2.0)
    center = tag.geometry.exp_coords(np.eye(2), tag.geometry.from_ambient(np.eye(2), np.array([[10.0, far], [far, 10.0]])))
    outlier = LogNormalSPD(ManifoldPoint(tag, center), jitter)
    return Contaminated(LogNormalSPD(eye, scale), outlier, fraction)


def log_laplace_spd2(scale: float = 1.0) -> LogLaplaceSPD:
    return LogLaplaceSPD(ManifoldPoint(spd(2), np.eye(2)), scale)


def mse_bias_variance(
    spec: DistributionSpec,
    true_mean: ManifoldPoint,
    estimators: Sequence[tuple[str, LossSpec]],
    n: int,
    reps: int,
    rng,
    cfg: SolverConfig | None = None,
    threads: int = 1,
) -> TableReport:
    """Bias, variance and MSE of each estimator over ``reps`` replicate samples.

    The expectation of an estimator is the Fréchet mean of its replicates.
    """
    if reps < 100:
        raise DomainError("mse_bias_variance needs at least 100 replicates")
    geom = spec.tag.geometry

    def one(_, stream):
        s = sample(spec, n, stream)
        return np.stack([huber_mean(s, loss, cfg).mean.coords for _, loss in estimators])

    out = np.stack(run_replicates(one, reps, rng, threads))
    rows, raw = [], {}
    for j, (name, _) in enumerate(estimators):
        means = out[:, j]
        raw[name] = means
        center = frechet_mean(Sample(spec.tag, means), cfg).mean.coords
        rows.append({
            "estimator": name,
            "bias": float(geom.dist(true_mean.coords, center)),
            "variance": float(np.mean(geom.dist(center, means) ** 2)),
            "mse": float(np.mean(geom.dist(true_mean.coords, means) ** 2)),
        })
    return TableReport(["estimator", "bias", "variance", "mse"], rows,
                       {"n": n, "reps": reps}, raw)


# ---------------------------------------------------------------------------
# covariance estimator error


def north_pole(k: int) -> ManifoldPoint:
    e = np.zeros(k + 1)
    e[-1] = 1.0
    return ManifoldPoint(sphere(k), e)


def covariance_error_study(
    tag: ManifoldTag,
    kappa_vmf: float,
    c_list: Sequence[float],
    n_list: Sequence[int],
    reps: int,
    rng,
    mc_reps: int = 1000,
    mc_n: int = 1000,
    cfg: SolverConfig | None = None,
    threads: int = 1,
) -> TableReport:
    """Relative Frobenius error of the plug-in sandwich covariance on a sphere.

    The reference covariance is ``(mc_n / mc_reps) sum y_r y_r^T`` where
    ``y_r`` are the coordinates at the true mean of ``mc_reps`` Huber means of
    samples of size ``mc_n``.  Each plug-in estimate is transported from the
    sample Huber mean to the true mean before comparing.
    """
    if tag.kind != "sphere":
        raise DomainError("the covariance study runs on spheres")
    if reps < 100:
        raise DomainError("covariance_error_study needs at least 100 replicates")
    mu = north_pole(tag.order)
    law = VonMisesFisher(mu, kappa_vmf)
    geom = tag.geometry
    base = as_seeded(rng)
    rows, raw = [], {}
    for ci, c in enumerate(c_list):
        loss = LossSpec.huber(c)

        def reference(_, stream):
            m = huber_mean(sample(law, mc_n, stream), loss, cfg).mean
            return geom.log_coords(mu.coords, m.coords)

        y = np.stack(run_replicates(reference, mc_reps, base.child(ci).child(0), threads))
        a_ref = mc_n * (y.T @ y) / mc_reps
        raw[f"reference_c{c}"] = a_ref
        for ni, n in enumerate(n_list):

            def plug_in(_, stream):
                s = sample(law, n, stream)
                m = huber_mean(s, loss, cfg).mean
                a = limiting_covariance(s, m, c).a_hat
                u = geom.transport_matrix(m.coords, mu.coords)
                return np.linalg.norm(u @ a @ u.T - a_ref) / np.linalg.norm(a_ref)

            errs = np.array(run_replicates(plug_in, reps, base.child(ci).child(1 + ni), threads))
            raw[f"rel_error_c{c}_n{n}"] = errs
            rows.append({"c": float(c), "n": int(n), "mean_rel_error": float(errs.mean()),
                         "sd_rel_error": float(errs.std(ddof=1))})
    meta = {"manifold": str(tag), "kappa": kappa_vmf, "reps": reps, "mc_reps": mc_reps, "mc_n": mc_n}
    return TableReport(["c", "n", "mean_rel_error", "sd_rel_error"], rows, meta, raw)


# ---------------------------------------------------------------------------
# size and power of the location test


def offset_point(m0: ManifoldPoint, degrees: float) -> ManifoldPoint:
    """Point at geodesic distance ``degrees`` from ``m0`` along the first frame axis."""
    y = np.zeros(m0.tag.dimension)
    y[0] = math.radians(degrees)
    return ManifoldPoint(m0.tag, m0.manifold.exp_coords(m0.coords, y))


def test_power_study(
    m0: ManifoldPoint,
    offsets_deg: Sequence[float],
    kappa: float,
    c,
    n_list: Sequence[int],
    reps: int,
    alpha: float,
    rng,
    cfg: SolverConfig | None = None,
    threads: int = 1,
) -> TableReport:
    """Rejection rates of the location test for vMF(m0, kappa) data.

    Each replicate sample is tested against every null point, so the rows for
    different offsets share their samples.
    """
    if reps < 200:
        raise DomainError("test_power_study needs at least 200 replicates")
    c = parse_cutoff(c)
    loss = LossSpec.huber(c)
    law = VonMisesFisher(m0, kappa)
    nulls = [offset_point(m0, off) for off in offsets_deg]
    base = as_seeded(rng)
    rejections = {}
    for ni, n in enumerate(n_list):

        def one(_, stream):
            s = sample(law, n, stream)
            report = huber_mean(s, loss, cfg)
            if not report.converged:
                raise NotConvergedError("Huber mean did not converge")
            cov = limiting_covariance(s, report.mean, c)
            return [location_test(n, report.mean, cov, q, alpha).reject for q in nulls]

        rejections[n] = np.array(run_replicates(one, reps, base.child(ni), threads))
    rows = []
    for oi, off in enumerate(offsets_deg):
        for n in n_list:
            rows.append({"offset_deg": float(off), "n": int(n),
                         "rejection_rate": float(rejections[n][:, oi].mean())})
    meta = {"kappa": kappa, "c": c, "alpha": alpha, "reps": reps}
    raw = {f"reject_n{n}": r for n, r in rejections.items()}
    return TableReport(["offset_deg", "n", "rejection_rate"], rows, meta, raw)


test_power_study.__test__ = False  # keep pytest from collecting it


# ---------------------------------------------------------------------------
# bootstrap


@dataclass
class BootstrapResult:
    center: ManifoldPoint
    replicate_coords: np.ndarray
    covariance: np.ndarray
    region: EllipsoidSpec
    qq: list[tuple[np.ndarray, np.ndarray]]


def bootstrap_means(
    data: Sample,
    c,
    B: int,
    rng,
    cfg: SolverConfig | None = None,
    alpha: float = 0.05,
    resample_indices: np.ndarray | None = None,
) -> BootstrapResult:
    """Nonparametric bootstrap of the Huber mean.

    Replicates are summarized by their Log coordinates at the full-sample
    Huber mean; ``qq`` holds, per coordinate, normal quantiles against the
    sorted standardized replicate coordinates.
    """
    c = parse_cutoff(c)
    loss = LossSpec.huber(c)
    if resample_indices is None:
        if B < 50:
            raise DomainError("bootstrap needs B >= 50")
        resample_indices = as_generator(rng).integers(0, data.n, size=(B, data.n))
    resample_indices = np.asarray(resample_indices)
    if resample_indices.shape != (B, data.n):
        raise DomainError("resample_indices must have shape (B, n)")
    full = huber_mean(data, loss, cfg).mean
    base_cfg = cfg or SolverConfig()
    warm = SolverConfig(base_cfg.step_alpha, base_cfg.grad_tol, base_cfg.max_iter, full, base_cfg.step_rule)
    coords = np.stack([
        data.tag.geometry.log_coords(full.coords, huber_mean(data.subset(idx), loss, warm).mean.coords)
        for idx in resample_indices
    ])
    d = data.tag.dimension
    cov = np.atleast_2d(np.cov(coords, rowvar=False)) if B > 1 else np.zeros((d, d))
    region = EllipsoidSpec(full, cov, chi2_upper_quantile(d, alpha))
    qq = []
    probs = (np.arange(1, B + 1) - 0.5) / B
    theoretical = special.ndtri(probs)
    for j in range(d):
        col = coords[:, j]
        sd = col.std(ddof=1) if B > 1 else 0.0
        standardized = np.sort((col - col.mean()) / sd) if sd > 0 else np.zeros(B)
        qq.append((theoretical, standardized))
    return BootstrapResult(full, coords, cov, region, qq)


def synthetic_shape_dataset(rng, n: int = 36, scale: float = 0.25) -> Sample:
    """SPD(2) stand-in for a small morphometric data set with one gross outlier."""
    gen = as_generator(rng)
    tag = spd(2)
    geom = tag.geometry
    center = np.array([[2.0, 0.4], [0.4, 1.0]])
    y = scale * gen.standard_normal((n, 3))
    y[0] = np.array([3.0, -2.5, 2.0])
    return Sample(tag, geom.exp_coords(center, y))


# ---------------------------------------------------------------------------
# limits c -> 0 and c -> inf


def limit_bridge_check(data: Sample, c_grid: Sequence[float], cfg: SolverConfig | None = None) -> TableReport:
    """Distances of the Huber mean to the geometric median and the Fréchet mean.

    The reweighted step is used by default because fixed-step descent
    crawls when ``c`` is tiny.  The gradient of the objective shrinks like
    ``c`` for small ``c``, so the gradient tolerance is scaled by
    ``min(1, c)`` to keep the location error comparable across the grid.
    """
    cfg = cfg or SolverConfig(step_rule="reweighted")
    geom = data.tag.geometry
    median = geometric_median(data, cfg).mean.coords
    center = frechet_mean(data, cfg).mean.coords
    rows = []
    for c in c_grid:
        tol = cfg.grad_tol * min(1.0, float(c)) if c > 0 else cfg.grad_tol
        scaled = SolverConfig(cfg.step_alpha, tol, cfg.max_iter, cfg.init, cfg.step_rule)
        m = huber_mean(data, LossSpec.huber(c), scaled).mean.coords
        rows.append({"c": float(c), "dist_to_median": float(geom.dist(median, m)),
                     "dist_to_frechet": float(geom.dist(center, m))})
    return TableReport(["c", "dist_to_median", "dist_to_frechet"], rows, {"n": data.n})
