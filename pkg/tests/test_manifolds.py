import math

import numpy as np
import pytest
import scipy.linalg
from hypothesis import given, settings
from hypothesis import strategies as st

from hubermean.errors import ContractViolationError, CutLocusError, DomainError
from hubermean.manifolds import (
    ManifoldPoint,
    ManifoldTag,
    OrthonormalFrame,
    TangentVector,
    coords_to_sym,
    curvature_info,
    dist,
    euclidean,
    exp_map,
    geodesic_symmetry,
    log_map,
    parallel_transport,
    spd,
    sphere,
    sym_to_coords,
    tangent_frame,
)

from conftest import ALL_TAGS, point_near, random_point

seeds = st.integers(0, 2**32 - 1)


def test_tag_dimensions_and_parse():
    assert spd(2).dimension == 3 and spd(3).dimension == 6
    assert sphere(2).dimension == 2 and sphere(2).ambient_shape == (3,)
    assert ManifoldTag.parse("sphere(2)") == sphere(2)
    assert ManifoldTag.parse("spd:3") == spd(3)
    assert str(euclidean(4)) == "euclidean(4)"
    with pytest.raises(DomainError):
        ManifoldTag("spd", 1)
    with pytest.raises(DomainError):
        ManifoldTag.parse("torus(2)")


def test_curvature_info():
    s = curvature_info(sphere(2))
    assert (s.upper_bound_delta, s.injectivity_radius, s.convexity_radius) == (1.0, math.pi, math.pi / 2)
    for tag in (euclidean(2), spd(2)):
        info = curvature_info(tag)
        assert info.upper_bound_delta == 0 and math.isinf(info.injectivity_radius)
        assert info.convexity_radius <= info.injectivity_radius


def test_invalid_points_rejected():
    with pytest.raises(DomainError):
        ManifoldPoint(sphere(2), [1.0, 1.0, 0.0])
    with pytest.raises(DomainError):
        ManifoldPoint(spd(2), [[1.0, 0.0], [0.0, -1.0]])
    with pytest.raises(DomainError):
        ManifoldPoint(spd(2), [[1.0, 0.5], [0.0, 1.0]])


def test_quarter_great_circle():
    p = ManifoldPoint(sphere(2), [1.0, 0.0, 0.0])
    v = TangentVector.from_ambient(p, [0.0, math.pi / 2, 0.0])
    assert np.allclose(exp_map(p, v).coords, [0.0, 1.0, 0.0], atol=1e-15)
    x = ManifoldPoint(sphere(2), [0.0, 1.0, 0.0])
    lv = log_map(p, x)
    assert lv.norm == pytest.approx(math.pi / 2, abs=1e-15)
    assert np.allclose(lv.ambient, [0.0, math.pi / 2, 0.0], atol=1e-15)
    assert dist(ManifoldPoint(sphere(2), [0.0, 0.0, 1.0]), p) == pytest.approx(math.pi / 2, abs=1e-15)


@pytest.mark.parametrize("tag", ALL_TAGS, ids=str)
def test_zero_vector_identities(tag, rng):
    p = random_point(tag, rng)
    assert np.allclose(exp_map(p, TangentVector(p, np.zeros(tag.dimension))).coords, p.coords, rtol=0, atol=1e-14)
    assert np.allclose(log_map(p, p).coeffs, 0.0, atol=1e-14)
    v = TangentVector(p, rng.standard_normal(tag.dimension))
    assert np.allclose(parallel_transport(p, p, v).coeffs, v.coeffs, atol=1e-12)


def test_spd_diagonal_cases():
    eye = ManifoldPoint(spd(2), np.eye(2))
    e = ManifoldPoint(spd(2), np.diag([math.e, math.e]))
    v = TangentVector.from_ambient(eye, np.eye(2))
    assert np.allclose(exp_map(eye, v).coords, e.coords, atol=1e-14)
    assert np.allclose(log_map(eye, e).coeffs, [1.0, 1.0, 0.0], atol=1e-14)
    assert log_map(eye, e).norm == pytest.approx(math.sqrt(2.0), abs=1e-14)
    assert dist(eye, e) == pytest.approx(math.sqrt(2.0), abs=1e-14)


def test_euclidean_distance_and_frame():
    a, b = ManifoldPoint(euclidean(2), [0.0, 0.0]), ManifoldPoint(euclidean(2), [3.0, 4.0])
    assert dist(a, b) == 5.0
    assert np.array_equal(tangent_frame(a).vectors, np.eye(2))


def test_spd_frame_coordinates_convention():
    # diag(a, b) + offdiag(c) at the identity has coordinates (a, b, c sqrt 2)
    eye = ManifoldPoint(spd(2), np.eye(2))
    a, b, c = 0.3, -0.2, 0.1
    v = TangentVector.from_ambient(eye, np.array([[a, c], [c, b]]))
    assert np.allclose(v.coeffs, [a, b, c * math.sqrt(2.0)], atol=1e-15)


@pytest.mark.parametrize("tag", ALL_TAGS, ids=str)
def test_frame_gram_is_identity(tag, rng):
    for _ in range(5):
        p = random_point(tag, rng)
        assert np.max(np.abs(tangent_frame(p).gram() - np.eye(tag.dimension))) <= 1e-12
        frame = OrthonormalFrame.random(p, rng)
        assert np.max(np.abs(frame.gram() - np.eye(tag.dimension))) <= 1e-12


def test_antipodal_log_raises():
    p = ManifoldPoint(sphere(2), [0.0, 0.0, 1.0])
    q = ManifoldPoint(sphere(2), [0.0, 0.0, -1.0])
    with pytest.raises(CutLocusError):
        log_map(p, q)
    with pytest.raises(CutLocusError):
        parallel_transport(p, q, TangentVector(p, [1.0, 0.0]))


def test_tag_mismatch_is_contract_violation():
    with pytest.raises(ContractViolationError):
        dist(ManifoldPoint(euclidean(3), np.zeros(3)), ManifoldPoint(sphere(2), [0.0, 0.0, 1.0]))
    p = ManifoldPoint(sphere(2), [0.0, 0.0, 1.0])
    q = ManifoldPoint(sphere(2), [0.0, 1.0, 0.0])
    with pytest.raises(ContractViolationError):
        exp_map(p, TangentVector(q, [0.1, 0.0]))


def test_spd_against_scipy_expm_logm(rng):
    # independent matrix-function oracle
    tag = spd(3)
    for _ in range(10):
        p = random_point(tag, rng, 0.8).coords
        x = random_point(tag, rng, 0.8).coords
        p_half = scipy.linalg.sqrtm(p).real
        p_ihalf = np.linalg.inv(p_half)
        log_w = scipy.linalg.logm(p_ihalf @ x @ p_ihalf).real
        expected = sym_to_coords(0.5 * (log_w + log_w.T))
        assert np.allclose(tag.geometry.log_coords(p, x), expected, atol=1e-9)
        y = rng.standard_normal(6)
        back = p_half @ scipy.linalg.expm(coords_to_sym(y, 3)) @ p_half
        assert np.allclose(tag.geometry.exp_coords(p, y), back, atol=1e-9 * np.abs(back).max())
        assert float(tag.geometry.dist(p, x)) == pytest.approx(np.linalg.norm(log_w), abs=1e-9)


def _schild_transport(p, q, v, rungs):
    """Schild's ladder on S^2 with ambient vectors; ``v`` is rescaled to a short rung."""
    def log(a, b):
        d = float(np.dot(a, b))
        w = b - d * a
        n = np.linalg.norm(w)
        return np.zeros(3) if n == 0 else math.atan2(n, d) * w / n

    def exp(a, u):
        t = np.linalg.norm(u)
        return a if t == 0 else math.cos(t) * a + math.sin(t) * u / t

    scale = 1e-5 / np.linalg.norm(v)
    u = v * scale
    direction = log(p, q)
    nodes = [exp(p, (i / rungs) * direction) for i in range(rungs + 1)]
    for x, x_next in zip(nodes[:-1], nodes[1:]):
        a = exp(x, u)
        mid = exp(a, 0.5 * log(a, x_next))
        b = exp(x, 2.0 * log(x, mid))
        u = log(x_next, b)
    return u / scale


def test_transport_matches_schild_ladder(rng):
    tag = sphere(2)
    for _ in range(3):
        p = random_point(tag, rng)
        q = point_near(p, rng, 2.0)
        v = TangentVector(p, rng.standard_normal(2))
        ours = parallel_transport(p, q, v).ambient
        ladder = _schild_transport(p.coords, q.coords, v.ambient, 10_000)
        assert np.linalg.norm(ours - ladder) <= 1e-4 * max(1.0, v.norm)


@pytest.mark.parametrize("tag", ALL_TAGS, ids=str)
@settings(max_examples=40, deadline=None)
@given(seed=seeds)
def test_round_trip_and_norm(tag, seed):
    gen = np.random.default_rng(seed)
    p = random_point(tag, gen)
    r_inj = curvature_info(tag).injectivity_radius
    x = point_near(p, gen, 0.9 * r_inj if math.isfinite(r_inj) else 3.0)
    v = log_map(p, x)
    assert dist(exp_map(p, v), x) <= 1e-8
    assert abs(v.norm - dist(p, x)) <= 1e-10


@pytest.mark.parametrize("tag", ALL_TAGS, ids=str)
def test_triangle_inequality(tag):
    gen = np.random.default_rng(7)
    geom = tag.geometry
    pts = np.stack([random_point(tag, gen).coords for _ in range(3000)]).reshape((1000, 3) + tag.ambient_shape)
    worst = math.inf
    for a, b, c in pts:
        ab, bc, ac = geom.dist(a, b), geom.dist(b, c), geom.dist(a, c)
        worst = min(worst, float(ab + bc - ac))
    assert worst >= -1e-9


@pytest.mark.parametrize("tag", ALL_TAGS, ids=str)
@settings(max_examples=40, deadline=None)
@given(seed=seeds)
def test_transport_isometry(tag, seed):
    gen = np.random.default_rng(seed)
    p = random_point(tag, gen)
    q = point_near(p, gen, 2.5)
    v = TangentVector(p, gen.standard_normal(tag.dimension))
    moved = parallel_transport(p, q, v)
    assert abs(moved.norm - v.norm) <= 1e-10 * max(1.0, v.norm)
    # the Riemannian norm of the ambient representative agrees
    amb = moved.ambient
    assert math.sqrt(q.manifold.inner(q.coords, amb, amb)) == pytest.approx(v.norm, rel=1e-9)


@pytest.mark.parametrize("tag", [sphere(2), spd(2)], ids=str)
def test_transport_moves_velocity_to_velocity(tag, rng):
    # the geodesic's own velocity is parallel: Log_p q maps to -Log_q p
    p = random_point(tag, rng)
    q = point_near(p, rng, 1.5)
    moved = parallel_transport(p, q, log_map(p, q))
    assert np.allclose(moved.coeffs, -log_map(q, p).coeffs, atol=1e-10)


@pytest.mark.parametrize("tag", [sphere(2), spd(2), euclidean(2)], ids=str)
def test_geodesic_symmetry(tag, rng):
    mu = random_point(tag, rng)
    x = point_near(mu, rng, 1.0)
    s = geodesic_symmetry(mu, x)
    assert dist(mu, s) == pytest.approx(dist(mu, x), abs=1e-12)
    assert np.allclose(log_map(mu, s).coeffs, -log_map(mu, x).coeffs, atol=1e-12)
    assert dist(geodesic_symmetry(mu, s), x) <= 1e-10
