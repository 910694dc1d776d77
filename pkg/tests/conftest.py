import numpy as np
import pytest

from UWBInit.initializer import PoseBuffer
from UWBInit.types import make_samples

# anchor on the x=0 wall of a 4 x 6.5 x 7 m flight volume
WALL_ANCHOR = np.array([0.0, 3.0, 2.0])


def box_positions(rng, n, lo=(0.5, 0.3, 0.3), hi=(3.7, 6.2, 6.7)):
    return rng.uniform(lo, hi, size=(n, 3))


def ranges_to(positions, anchor, bias=0.0, sigma=0.0, rng=None):
    d = np.linalg.norm(positions - np.asarray(anchor)[None, :], axis=1) + bias
    if sigma > 0.0:
        d = d + rng.normal(0.0, sigma, size=d.size)
    return d


def samples_from(positions, ranges, t0=0.0, dt=0.1):
    t = t0 + dt * np.arange(len(ranges))
    return make_samples(t, positions, ranges)


def line_poses(start, end, n=301, dt=0.1):
    s = np.linspace(0.0, 1.0, n)[:, None]
    positions = np.asarray(start)[None, :] + s * (np.asarray(end) - np.asarray(start))[None, :]
    return PoseBuffer(dt * np.arange(n), positions)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def box_samples(rng):
    """200 noiseless samples seen from WALL_ANCHOR with a 0.25 m range bias."""
    positions = box_positions(rng, 200)
    return samples_from(positions, ranges_to(positions, WALL_ANCHOR, bias=0.25))


@pytest.fixture
def square_example():
    """Anchor at the origin, closest point (1,0,0); true PDOP 2, closest-point PDOP sqrt(8)."""
    positions = np.array([[1.0, 0.0, 0.0], [2.0, 2.0, 0.0], [2.0, -2.0, 0.0], [2.0, 0.0, 2.0]])
    ranges = np.array([1.0, np.sqrt(8.0), np.sqrt(8.0), np.sqrt(8.0)])
    return samples_from(positions, ranges)
