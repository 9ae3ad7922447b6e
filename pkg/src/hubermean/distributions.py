"""Random samples for the simulation studies and the location-scale density.

Random numbers come from numpy's PCG64 bit generator.  A :class:`SeededRng`
names a stream by ``(seed, stream_id, path)``; the triple is fed to
``SeedSequence`` as entropy plus spawn key, so distinct replicates get
independent, reproducible streams whatever order they run in.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Union

import numpy as np
from scipy import integrate, special

from .errors import ContractViolationError, DomainError
from .losses import LossSpec, Sample, parse_cutoff, rho_values
from .manifolds import ManifoldPoint, ManifoldTag, dist

RNG_ALGORITHM = "PCG64"


@dataclass(frozen=True)
class SeededRng:
    seed: int
    stream_id: int = 0
    path: tuple[int, ...] = ()

    def __post_init__(self):
        if int(self.seed) != self.seed or not 0 <= self.seed < 2**64:
            raise DomainError("seed must be an integer in [0, 2**64)")
        if int(self.stream_id) != self.stream_id or self.stream_id < 0:
            raise DomainError("stream_id must be a nonnegative integer")

    def generator(self) -> np.random.Generator:
        seq = np.random.SeedSequence(int(self.seed), spawn_key=(int(self.stream_id), *self.path))
        return np.random.Generator(np.random.PCG64(seq))

    def child(self, index: int) -> "SeededRng":
        return SeededRng(self.seed, self.stream_id, self.path + (int(index),))


RngLike = Union[SeededRng, np.random.Generator, int]


def as_generator(rng: RngLike) -> np.random.Generator:
    if isinstance(rng, np.random.Generator):
        return rng
    if isinstance(rng, SeededRng):
        return rng.generator()
    return SeededRng(int(rng)).generator()


def _uniform_directions(gen: np.random.Generator, n: int, k: int) -> np.ndarray:
    xi = gen.standard_normal((n, k))
    return xi / np.linalg.norm(xi, axis=1, keepdims=True)


def _positive(name: str, value: float) -> float:
    value = float(value)
    if not value > 0 or not math.isfinite(value):
        raise DomainError(f"{name} must be a positive finite number")
    return value


class DistributionSpec:
    """Base class; subclasses draw ``n`` ambient points with ``_draw``."""

    @property
    def tag(self) -> ManifoldTag:
        raise NotImplementedError

    def _draw(self, n: int, gen: np.random.Generator) -> np.ndarray:
        raise NotImplementedError


@dataclass(frozen=True, eq=False)
class PointMass(DistributionSpec):
    mu: ManifoldPoint

    @property
    def tag(self):
        return self.mu.tag

    def _draw(self, n, gen):
        return np.repeat(self.mu.coords[None], n, axis=0)


@dataclass(frozen=True, eq=False)
class VonMisesFisher(DistributionSpec):
    mu: ManifoldPoint
    kappa: float

    def __post_init__(self):
        if self.mu.tag.kind != "sphere":
            raise DomainError("von Mises-Fisher needs a sphere")
        _positive("kappa", self.kappa)

    @property
    def tag(self):
        return self.mu.tag

    def _cosines(self, n, gen):
        # Wood's rejection sampler for w = <X, mu>.
        p = self.tag.order + 1
        kappa = float(self.kappa)
        b = (p - 1) / (2.0 * kappa + math.sqrt(4.0 * kappa**2 + (p - 1) ** 2))
        x0 = (1.0 - b) / (1.0 + b)
        c = kappa * x0 + (p - 1) * math.log(1.0 - x0**2)
        accepted: list[np.ndarray] = []
        remaining = n
        while remaining > 0:
            m = int(remaining * 1.2) + 8
            z = gen.beta(0.5 * (p - 1), 0.5 * (p - 1), size=m)
            w = (1.0 - (1.0 + b) * z) / (1.0 - (1.0 - b) * z)
            u = gen.random(m)
            ok = kappa * w + (p - 1) * np.log(1.0 - x0 * w) - c >= np.log(u)
            got = w[ok][:remaining]
            accepted.append(got)
            remaining -= got.size
        return np.concatenate(accepted)

    def _draw(self, n, gen):
        geom = self.tag.geometry
        mu = self.mu.coords
        w = np.clip(self._cosines(n, gen), -1.0, 1.0)
        xi = _uniform_directions(gen, n, self.tag.order)
        out = w[:, None] * mu + np.sqrt(1.0 - w**2)[:, None] * (xi @ geom.frame_vectors(mu))
        return out / np.linalg.norm(out, axis=1, keepdims=True)


def _truncated_normal(gen, n, sigma, bound):
    lo, hi = special.ndtr(-bound / sigma), special.ndtr(bound / sigma)
    return sigma * special.ndtri(lo + gen.random(n) * (hi - lo))


def _truncated_laplace(gen, n, sigma, bound):
    mass = -math.expm1(-bound / sigma)
    r = -sigma * np.log1p(-gen.random(n) * mass)
    return np.where(gen.random(n) < 0.5, -r, r)


@dataclass(frozen=True, eq=False)
class _RadialFamily(DistributionSpec):
    """Isotropic density ``exp(-g(d(x, mu)))`` on a sphere or Euclidean space."""

    mu: ManifoldPoint
    sigma: float

    def __post_init__(self):
        if self.mu.tag.kind == "spd":
            raise DomainError(f"{type(self).__name__} is defined on spheres and Euclidean spaces")
        _positive("sigma", self.sigma)

    @property
    def tag(self):
        return self.mu.tag

    def _radii(self, gen, n, k):
        raise NotImplementedError

    def _angles(self, gen, n):
        raise NotImplementedError

    def _draw(self, n, gen):
        geom = self.tag.geometry
        k = self.tag.order
        mu = self.mu.coords
        if self.tag.kind == "euclidean":
            return mu + self._radii(gen, n, k)[:, None] * _uniform_directions(gen, n, k)
        if k == 1:
            return geom.exp_coords(mu, self._angles(gen, n)[:, None])
        # Rejection from the tangent-space law; the volume element of S^k in
        # polar normal coordinates is sin(r)^(k-1) against r^(k-1) in the plane.
        chunks: list[np.ndarray] = []
        remaining = n
        while remaining > 0:
            m = int(remaining * 1.5) + 8
            r = self._radii(gen, m, k)
            u = gen.random(m)
            with np.errstate(invalid="ignore", divide="ignore"):
                ratio = np.where(r > 0, np.sin(r) / np.where(r > 0, r, 1.0), 1.0) ** (k - 1)
            ok = (r < math.pi) & (u < ratio)
            got = r[ok][:remaining]
            chunks.append(got)
            remaining -= got.size
        r = np.concatenate(chunks)
        y = r[:, None] * _uniform_directions(gen, n, k)
        return geom.exp_coords(mu, y)


@dataclass(frozen=True, eq=False)
class GaussianType(_RadialFamily):
    """Density proportional to ``exp(-d(x, mu)^2 / (2 sigma^2))``."""

    def _radii(self, gen, n, k):
        return self.sigma * np.sqrt(gen.chisquare(k, size=n))

    def _angles(self, gen, n):
        return _truncated_normal(gen, n, self.sigma, math.pi)


@dataclass(frozen=True, eq=False)
class LaplaceType(_RadialFamily):
    """Density proportional to ``exp(-d(x, mu) / sigma)``."""

    def _radii(self, gen, n, k):
        return gen.gamma(k, self.sigma, size=n)

    def _angles(self, gen, n):
        return _truncated_laplace(gen, n, self.sigma, math.pi)


@dataclass(frozen=True, eq=False)
class _TangentSPD(DistributionSpec):
    mu: ManifoldPoint
    scale: float = 1.0

    def __post_init__(self):
        if self.mu.tag.kind != "spd":
            raise DomainError(f"{type(self).__name__} needs an SPD manifold")
        _positive("scale", self.scale)

    @property
    def tag(self):
        return self.mu.tag

    def _coefficients(self, gen, shape):
        raise NotImplementedError

    def _draw(self, n, gen):
        y = self.scale * self._coefficients(gen, (n, self.tag.dimension))
        return self.tag.geometry.exp_coords(self.mu.coords, y)


@dataclass(frozen=True, eq=False)
class LogNormalSPD(_TangentSPD):
    """Exp of iid ``N(0, scale^2)`` frame coordinates at ``mu``."""

    def _coefficients(self, gen, shape):
        return gen.standard_normal(shape)


@dataclass(frozen=True, eq=False)
class LogLaplaceSPD(_TangentSPD):
    """Exp of iid standard Laplace frame coordinates times ``scale``."""

    def _coefficients(self, gen, shape):
        return gen.laplace(0.0, 1.0, size=shape)


@dataclass(frozen=True, eq=False)
class Mixture(DistributionSpec):
    """Each draw comes from ``first`` with probability ``weight``."""

    weight: float
    first: DistributionSpec
    second: DistributionSpec

    def __post_init__(self):
        if not 0 < self.weight < 1:
            raise DomainError("mixture weight must lie in (0, 1)")
        if self.first.tag != self.second.tag:
            raise ContractViolationError("mixture components live on different manifolds")

    @property
    def tag(self):
        return self.first.tag

    def _draw(self, n, gen):
        pick = gen.random(n) < self.weight
        out = self.second._draw(n, gen)
        n_first = int(pick.sum())
        if n_first:
            out[pick] = self.first._draw(n_first, gen)
        return out

    def component_labels(self, n: int, rng: RngLike) -> np.ndarray:
        """The component indicator a draw of size ``n`` from ``rng`` would use."""
        return as_generator(rng).random(n) < self.weight


@dataclass(frozen=True, eq=False)
class Contaminated(DistributionSpec):
    """``round(fraction * n)`` draws from ``outlier``, the rest from ``base``.

    Unlike :class:`Mixture` the number of outliers is fixed, so every
    replicate carries the same contamination level.
    """

    base: DistributionSpec
    outlier: DistributionSpec
    fraction: float

    def __post_init__(self):
        if not 0 <= self.fraction < 1:
            raise DomainError("contamination fraction must lie in [0, 1)")
        if self.base.tag != self.outlier.tag:
            raise ContractViolationError("base and outlier laws live on different manifolds")

    @property
    def tag(self):
        return self.base.tag

    def _draw(self, n, gen):
        n_out = int(round(self.fraction * n))
        out = self.base._draw(n, gen)
        if n_out:
            where = gen.permutation(n)[:n_out]
            out[where] = self.outlier._draw(n_out, gen)
        return out


def sample(spec: DistributionSpec, n: int, rng: RngLike) -> Sample:
    if int(n) != n or n < 1:
        raise DomainError("n must be a positive integer")
    return Sample(spec.tag, spec._draw(int(n), as_generator(rng)))


def density_location_scale(m: ManifoldPoint, mu: ManifoldPoint, sigma: float, c) -> float:
    """Unnormalized ``exp(-rho_c(d(m, mu) / sigma))`` with the Huber loss.

    For ``c = inf`` this is ``exp(-d^2 / sigma^2)``, the Gaussian-type kernel
    with scale ``sigma / sqrt 2`` in the ``exp(-d^2 / (2 s^2))`` convention
    used by :class:`GaussianType`.
    """
    sigma = _positive("sigma", sigma)
    spec = LossSpec.huber(parse_cutoff(c))
    return float(np.exp(-rho_values(spec, np.asarray(dist(m, mu) / sigma))))


def normalize_on_circle(mu: ManifoldPoint, sigma: float, c) -> float:
    """Constant making :func:`density_location_scale` integrate to one on S^1."""
    if mu.tag != ManifoldTag("sphere", 1):
        raise DomainError("normalize_on_circle needs a point on the circle")
    sigma = _positive("sigma", sigma)
    spec = LossSpec.huber(parse_cutoff(c))

    def kernel(theta):
        return math.exp(-float(rho_values(spec, np.asarray(abs(theta) / sigma))))

    kink = spec.cutoff * sigma
    points = [kink] if spec.regime == "finite" and kink < math.pi else None
    half, _ = integrate.quad(kernel, 0.0, math.pi, epsabs=1e-13, epsrel=1e-12, limit=200, points=points)
    return 1.0 / (2.0 * half)
