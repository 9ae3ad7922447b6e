"""Huber and pseudo-Huber losses and the empirical objective on a manifold."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Literal, Sequence

import numpy as np

from .errors import ContractViolationError, DomainError, InsufficientDataError
from .manifolds import ManifoldPoint, ManifoldTag, TangentVector

LossKind = Literal["huber", "pseudo_huber"]
Regime = Literal["l1", "finite", "l2"]


def parse_cutoff(value) -> float:
    """Turn ``0``, a positive number, ``"inf"`` or ``math.inf`` into a cutoff."""
    if isinstance(value, str):
        text = value.strip().lower()
        if text in ("inf", "infinity", "+inf"):
            return math.inf
        value = float(text)
    c = float(value)
    if math.isnan(c) or c < 0:
        raise DomainError(f"cutoff must lie in [0, inf], got {value!r}")
    return c


@dataclass(frozen=True)
class LossSpec:
    """Cutoff ``c`` in [0, inf] and loss kind.

    ``regime`` is the tag the loss code branches on: ``c = 0`` is the L1
    loss ``x``, ``c = inf`` the L2 loss ``x**2``, for both kinds.  The
    numeric cutoff is only used in the ``"finite"`` regime.
    """

    cutoff: float
    kind: LossKind = "huber"
    regime: Regime = field(init=False, repr=False)

    def __post_init__(self):
        c = parse_cutoff(self.cutoff)
        if self.kind not in ("huber", "pseudo_huber"):
            raise DomainError(f"unknown loss kind {self.kind!r}")
        object.__setattr__(self, "cutoff", c)
        regime: Regime = "l1" if c == 0 else "l2" if math.isinf(c) else "finite"
        object.__setattr__(self, "regime", regime)

    @classmethod
    def huber(cls, c) -> "LossSpec":
        return cls(c, "huber")

    @classmethod
    def pseudo(cls, c) -> "LossSpec":
        return cls(c, "pseudo_huber")


def _nonneg(x) -> np.ndarray:
    a = np.asarray(x, dtype=float)
    if np.any(a < 0) or np.any(np.isnan(a)):
        raise DomainError("loss argument must be nonnegative")
    return a


def rho_values(spec: LossSpec, x: np.ndarray) -> np.ndarray:
    """Vectorized loss without the domain check."""
    if spec.regime == "l1":
        return np.asarray(x, dtype=float)
    if spec.regime == "l2":
        return np.square(x)
    c = spec.cutoff
    if spec.kind == "huber":
        return np.where(x <= c, np.square(x), 2.0 * c * (x - 0.5 * c))
    t = x / c
    # 2c^2 (sqrt(1+t^2) - 1) rewritten to avoid cancellation near 0.
    return 2.0 * np.square(x) / (np.sqrt(1.0 + t * t) + 1.0)


def rho_prime_values(spec: LossSpec, x: np.ndarray) -> np.ndarray:
    if spec.regime == "l1":
        return np.ones_like(np.asarray(x, dtype=float))
    if spec.regime == "l2":
        return 2.0 * np.asarray(x, dtype=float)
    c = spec.cutoff
    if spec.kind == "huber":
        return np.where(x <= c, 2.0 * x, 2.0 * c)
    return 2.0 * x / np.sqrt(1.0 + (x / c) ** 2)


def gradient_weights(spec: LossSpec, r: np.ndarray) -> np.ndarray:
    """``rho'(r) / r``, the weight of ``Log_m(x_i)`` in the negative gradient.

    A residual of length zero gets weight zero under L1, which is the
    convention for the nondifferentiable point.
    """
    r = np.asarray(r, dtype=float)
    if spec.regime == "l2":
        return np.full_like(r, 2.0)
    if spec.regime == "l1":
        safe = np.where(r > 0, r, 1.0)
        return np.where(r > 0, 1.0 / safe, 0.0)
    c = spec.cutoff
    if spec.kind == "huber":
        safe = np.where(r > 0, r, 1.0)
        return np.where(r <= c, 2.0, 2.0 * c / safe)
    return 2.0 / np.sqrt(1.0 + (r / c) ** 2)


def rho(spec: LossSpec, x):
    """Loss value; scalar in, scalar out, arrays are mapped elementwise."""
    out = rho_values(spec, _nonneg(x))
    return float(out) if np.ndim(out) == 0 else out


def rho_prime(spec: LossSpec, x):
    out = rho_prime_values(spec, _nonneg(x))
    return float(out) if np.ndim(out) == 0 else out


@dataclass(frozen=True, eq=False)
class Sample:
    """``n`` points on one manifold, stored as a stacked ambient array."""

    tag: ManifoldTag
    data: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.data, dtype=float)
        if a.ndim == len(self.tag.ambient_shape):
            a = a[None]
        if a.shape[0] < 1:
            raise InsufficientDataError("a sample needs at least one point")
        a = self.tag.geometry.check_points(a).copy()
        a.setflags(write=False)
        object.__setattr__(self, "data", a)

    @classmethod
    def from_points(cls, points: Iterable[ManifoldPoint]) -> "Sample":
        pts = list(points)
        if not pts:
            raise InsufficientDataError("a sample needs at least one point")
        tag = pts[0].tag
        if any(p.tag != tag for p in pts):
            raise ContractViolationError("all points of a sample must share a manifold")
        return cls(tag, np.stack([p.coords for p in pts]))

    @property
    def n(self) -> int:
        return self.data.shape[0]

    def __len__(self) -> int:
        return self.n

    def __getitem__(self, i: int) -> ManifoldPoint:
        return ManifoldPoint(self.tag, self.data[i])

    @property
    def points(self) -> list[ManifoldPoint]:
        return [self[i] for i in range(self.n)]

    def subset(self, indices: Sequence[int] | np.ndarray) -> "Sample":
        return Sample(self.tag, self.data[np.asarray(indices)])

    def log_coords(self, m: ManifoldPoint) -> np.ndarray:
        """Normal coordinates ``Log_m(x_i)`` in the canonical frame at ``m``."""
        if m.tag != self.tag:
            raise ContractViolationError(f"manifold mismatch: {m.tag} vs {self.tag}")
        return self.tag.geometry.log_coords(m.coords, self.data)

    def distances(self, m: ManifoldPoint) -> np.ndarray:
        if m.tag != self.tag:
            raise ContractViolationError(f"manifold mismatch: {m.tag} vs {self.tag}")
        return self.tag.geometry.dist(m.coords, self.data)


def objective(sample: Sample, m: ManifoldPoint, spec: LossSpec) -> float:
    """Mean loss of the distances from ``m`` to the sample points."""
    return float(np.mean(rho_values(spec, sample.distances(m))))


def negative_gradient(sample: Sample, m: ManifoldPoint, spec: LossSpec) -> TangentVector:
    y = sample.log_coords(m)
    w = gradient_weights(spec, np.linalg.norm(y, axis=1))
    return TangentVector(m, (w[:, None] * y).mean(axis=0))
