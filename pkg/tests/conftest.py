import numpy as np
import pytest

from patternlab.isometry import Isometry
from patternlab.pattern import Pattern, QuasiRotation, Wallpaper, Window, generate
from patternlab.transversal import align_at, interior_indices

THETA = 2 * np.pi / np.sqrt(11)


def central_alignment(p: Pattern, margin: float) -> Pattern:
    """p aligned at the interior resonator closest to the window centre."""
    idx = interior_indices(p, margin)
    i = min(idx, key=lambda k: np.linalg.norm(p.positions()[k]))
    return align_at(p, int(i)).pattern


def chain(n: int, spacing: float = 1.0) -> Pattern:
    pts = [Isometry.translation([-(i - (n - 1) // 2) * spacing, 0.0]) for i in range(n)]
    return Pattern.from_points(pts, Window(spacing * (n / 2 + 1)))


@pytest.fixture(scope="session")
def p2_spec():
    return Wallpaper("p2", ((1.0, 0.0), (0.3, 1.1)), Isometry.planar([0.2, 0.1], 0.3))


@pytest.fixture(scope="session")
def p4_spec():
    return Wallpaper("p4", ((2.0, 0.0), (0.0, 2.0)), Isometry.planar([0.5, 0.5], 0.3))


@pytest.fixture(scope="session")
def quasi_spec():
    return QuasiRotation(Isometry.planar([1.0, 0.0], THETA))


@pytest.fixture(scope="session")
def families(p2_spec, p4_spec, quasi_spec):
    """Three aligned patterns (contain the identity) with room around it."""
    return {
        "p2": central_alignment(generate(p2_spec, Window(4.0)), 2.2),
        "p4": central_alignment(generate(p4_spec, Window(6.0)), 3.2),
        "quasi": central_alignment(generate(quasi_spec, Window(8.5)), 4.0),
    }


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
