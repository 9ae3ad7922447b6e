import numpy as np
import pytest

from hubermean.manifolds import ManifoldPoint, euclidean, spd, sphere

# Lines recorded by the acceptance suite, echoed at the end of the run.
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for line in ACCEPTANCE_LINES:
        terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_point(tag, gen, spread=1.0):
    """A random point; SPD points are Exp_I of a Gaussian tangent vector of scale ``spread``."""
    geom = tag.geometry
    if tag.kind == "euclidean":
        return ManifoldPoint(tag, spread * gen.standard_normal(tag.order))
    if tag.kind == "sphere":
        x = gen.standard_normal(tag.order + 1)
        return ManifoldPoint(tag, x / np.linalg.norm(x))
    y = spread * gen.standard_normal(tag.dimension)
    return ManifoldPoint(tag, geom.exp_coords(np.eye(tag.order), y))


def point_near(p, gen, radius):
    """A point at distance ``radius * U(0, 1)`` from ``p`` in a random direction."""
    geom = p.manifold
    u = gen.standard_normal(p.tag.dimension)
    u /= np.linalg.norm(u)
    return ManifoldPoint(p.tag, geom.exp_coords(p.coords, radius * gen.random() * u))


ALL_TAGS = [euclidean(1), euclidean(3), sphere(1), sphere(2), sphere(3), spd(2), spd(3)]
