import math

import numpy as np
import pytest

from conftest import WALL_ANCHOR, box_positions, ranges_to, samples_from
from UWBInit.geometry import pdop_closest_point, pdop_true
from UWBInit.pdop_ops import PDOP_METHODS, estimate_pdop


def test_methods_dispatch(box_samples):
    assert estimate_pdop(box_samples) == pdop_closest_point(box_samples)
    assert estimate_pdop(box_samples, "true", anchor=WALL_ANCHOR) == pdop_true(box_samples, WALL_ANCHOR)
    for method in ("ls", "nls"):
        assert estimate_pdop(box_samples, method) == pytest.approx(pdop_true(box_samples, WALL_ANCHOR), rel=1e-6)
    assert set(PDOP_METHODS) == {"closest_point", "ls", "nls", "true"}


def test_methods_forward_the_bias_column(box_samples):
    assert estimate_pdop(box_samples, with_bias=True) == pdop_closest_point(box_samples, with_bias=True)
    biased = pdop_true(box_samples, WALL_ANCHOR, with_bias=True)
    assert estimate_pdop(box_samples, "true", anchor=WALL_ANCHOR, with_bias=True) == biased
    assert biased > pdop_true(box_samples, WALL_ANCHOR)
    for method in ("ls", "nls"):
        assert estimate_pdop(box_samples, method, with_bias=True) == pytest.approx(biased, rel=1e-6)


def test_true_method_needs_anchor(box_samples):
    with pytest.raises(ValueError):
        estimate_pdop(box_samples, "true")


def test_unknown_method(box_samples):
    with pytest.raises(NotImplementedError):
        estimate_pdop(box_samples, "gdop")


def test_rank_deficient_linear_solve_is_infinite(rng):
    positions = box_positions(rng, 40)
    positions[:, 2] = 1.0
    samples = samples_from(positions, ranges_to(positions, WALL_ANCHOR))
    assert estimate_pdop(samples, "ls") == math.inf
    assert estimate_pdop(samples, "nls") == math.inf


def test_nls_hypothesis_tracks_truth_under_noise(rng):
    positions = box_positions(rng, 300)
    samples = samples_from(positions, ranges_to(positions, WALL_ANCHOR, sigma=0.05, rng=rng))
    true = estimate_pdop(samples, "true", anchor=WALL_ANCHOR)
    assert estimate_pdop(samples, "nls") == pytest.approx(true, rel=0.05)
    assert np.isfinite(estimate_pdop(samples, "ls"))
