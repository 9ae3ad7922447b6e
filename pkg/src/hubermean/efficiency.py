"""Asymptotic relative efficiency of Huber means against the Fréchet mean."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Iterable, Literal

import numpy as np
from scipy import integrate, optimize, special

from .distributions import DistributionSpec, sample
from .errors import DomainError, NoCrossingError
from .estimators import SolverConfig, frechet_mean, huber_mean
from .losses import LossSpec, Sample, parse_cutoff
from .montecarlo import run_replicates

QUAD_ABS_TOL = 1e-10
KAPPA_TOL = 1e-4
DEFAULT_BRACKET = (1e-3, 50.0)

CircleFamily = Literal["gaussian_type", "laplace_type"]


@dataclass(frozen=True)
class ArePoint:
    kappa: float
    sigma: float
    are: float


def _positive(name, x):
    x = float(x)
    if not x > 0:
        raise DomainError(f"{name} must be positive")
    return x


def are_gaussian_real(kappa: float) -> float:
    """ARE of the Huber mean with ``c = kappa * sigma`` under a normal law on R."""
    kappa = _positive("kappa", kappa)
    inside = math.erf(kappa / math.sqrt(2.0))
    density = math.exp(-0.5 * kappa**2) / math.sqrt(2.0 * math.pi)
    clipped_second = inside - 2.0 * kappa * density
    outside = math.erfc(kappa / math.sqrt(2.0))
    return inside**2 / (clipped_second + kappa**2 * outside)


def _truncated_moments(kappa: float, bound: float, family: CircleFamily) -> tuple[float, float, float]:
    """``P(|Z| < kappa)``, ``E[Z^2; |Z| <= kappa]`` and ``Var Z`` for Z truncated to (-bound, bound)."""
    if family == "gaussian_type":
        def dens(z):
            return math.exp(-0.5 * z * z)
    elif family == "laplace_type":
        def dens(z):
            return math.exp(-z)
    else:
        raise DomainError(f"unknown circle family {family!r}")

    def quad(f, a, b):
        if b <= a:
            return 0.0
        return integrate.quad(f, a, b, epsabs=QUAD_ABS_TOL, epsrel=1e-12, limit=200)[0]

    cut = min(kappa, bound)
    mass_in = quad(dens, 0.0, cut)
    mass = mass_in + quad(dens, cut, bound)
    second_in = quad(lambda z: z * z * dens(z), 0.0, cut)
    second = second_in + quad(lambda z: z * z * dens(z), cut, bound)
    return mass_in / mass, second_in / mass, second / mass


def are_circle(kappa: float, sigma: float, family: CircleFamily = "gaussian_type") -> float:
    """ARE on the circle for the truncated normal or Laplace law with scale ``sigma``."""
    kappa = _positive("kappa", kappa)
    sigma = _positive("sigma", sigma)
    bound = math.pi / sigma
    if kappa >= bound:
        return 1.0
    p_in, second_in, var = _truncated_moments(kappa, bound, family)
    return p_in**2 * var / (second_in + kappa**2 * (1.0 - p_in))


def are_laplace_real(c: float, sigma: float = 1.0) -> float:
    """Closed-form ARE of the Huber mean under the Laplace law on R."""
    t = _positive("c", c) / _positive("sigma", sigma)
    num = special.expm1(-t) ** 2
    # gammainc(2, t) = 1 - (1 + t) exp(-t), without cancellation at small t
    den = special.gammainc(2.0, t)
    return float(num / den)


def are_laplace_real_log_excess(c: float, sigma: float = 1.0) -> float:
    """``log(ARE - 1)`` for the Laplace law, finite even when ARE rounds to 1.

    ``ARE - 1 = e^{-t} (t - 1 + e^{-t}) / (1 - (1 + t) e^{-t})`` with
    ``t = c / sigma``; for large ``t`` the excess is far below machine
    epsilon, so it is evaluated in log space.
    """
    t = _positive("c", c) / _positive("sigma", sigma)
    inner = t - 1.0 + math.exp(-t)
    if t < 1e-3:
        # t - 1 + e^{-t} = t^2/2 - t^3/6 + ...
        inner = t * t * (0.5 - t / 6.0 + t * t / 24.0)
    return -t + math.log(inner) - math.log(float(special.gammainc(2.0, t)))


def find_kappa_for_target(
    are_fn: Callable[[float], float],
    target: float,
    bracket: tuple[float, float] = DEFAULT_BRACKET,
    grid_size: int = 400,
) -> float:
    """Smallest ``kappa`` in ``bracket`` with ``are_fn(kappa) >= target``."""
    lo, hi = float(bracket[0]), float(bracket[1])
    if not 0 < lo < hi:
        raise DomainError("bracket must satisfy 0 < lo < hi")
    grid = np.geomspace(lo, hi, grid_size)
    values = np.array([are_fn(k) for k in grid])
    above = np.nonzero(values >= target)[0]
    if above.size == 0:
        raise NoCrossingError(f"target {target} is not reached on [{lo}, {hi}]")
    i = int(above[0])
    if i == 0:
        return lo
    a, b = grid[i - 1], grid[i]
    while b - a > 0.01 * KAPPA_TOL:
        mid = 0.5 * (a + b)
        if are_fn(mid) >= target:
            b = mid
        else:
            a = mid
    return float(b)


def are_table(are_fn: Callable[[float], float], kappas: Iterable[float], sigma: float = 1.0) -> list[ArePoint]:
    return [ArePoint(float(k), float(sigma), float(are_fn(k))) for k in kappas]


def family_function(family: str, sigma: float = 1.0) -> Callable[[float], float]:
    """ARE as a function of ``kappa`` for a named family (CLI spelling)."""
    sigma = _positive("sigma", sigma)
    if family == "gaussian-real":
        return are_gaussian_real
    if family == "circle-gaussian":
        return lambda k: are_circle(k, sigma, "gaussian_type")
    if family == "circle-laplace":
        return lambda k: are_circle(k, sigma, "laplace_type")
    if family == "laplace-real":
        return lambda k: are_laplace_real(k * sigma, sigma)
    raise DomainError(f"unknown ARE family {family!r}")


def _spread(means: np.ndarray, tag, cfg) -> float:
    reps = Sample(tag, means)
    center = frechet_mean(reps, cfg).mean
    y = reps.log_coords(center)
    return float(np.trace(np.atleast_2d(np.cov(y, rowvar=False))))


def are_empirical(
    spec: DistributionSpec,
    c1,
    c2,
    n: int,
    reps: int,
    rng,
    cfg: SolverConfig | None = None,
    threads: int = 1,
) -> float:
    """Monte-Carlo relative efficiency of the ``c1`` Huber mean against ``c2``.

    Both estimators are computed on the same replicate samples; each set of
    replicate means is summarized by the trace of the covariance of its Log
    coordinates at its own Fréchet mean.
    """
    if reps < 30:
        raise DomainError("are_empirical needs at least 30 replicates")
    spec1, spec2 = LossSpec.huber(parse_cutoff(c1)), LossSpec.huber(parse_cutoff(c2))

    def one(_, stream):
        s = sample(spec, n, stream)
        return huber_mean(s, spec1, cfg).mean.coords, huber_mean(s, spec2, cfg).mean.coords

    out = run_replicates(one, reps, rng, threads)
    first = np.stack([a for a, _ in out])
    second = np.stack([b for _, b in out])
    return _spread(second, spec.tag, cfg) / _spread(first, spec.tag, cfg)
