import math

import numpy as np
import pytest
from scipy.stats import norm

from UWBInit import filter as range_filter
from UWBInit.errors import OutOfOrderError
from UWBInit.filter import DEFAULT_TAU, FilterConfig, FilterState
from UWBInit.types import SyncedSample


def _run(samples, cfg):
    state, flags = FilterState(), []
    for sample in samples:
        state, accepted = range_filter.ingest(state, sample, cfg)
        flags.append(accepted)
    return state, flags


def test_check_examples():
    cfg = FilterConfig(tau=0.1)
    prev = SyncedSample(0.0, [0.0, 0.0, 0.0], 5.0)
    assert range_filter.check(prev, SyncedSample(0.1, [1.0, 0.0, 0.0], 5.5), cfg)
    assert not range_filter.check(prev, SyncedSample(0.1, [1.0, 0.0, 0.0], 6.5), cfg)


def test_check_boundary_is_inclusive():
    cfg = FilterConfig(tau=0.25)
    prev = SyncedSample(0.0, [1.0, 2.0, 3.0], 5.0)
    assert range_filter.check(prev, SyncedSample(0.1, [1.0, 2.0, 3.0], 5.25), cfg)
    assert not range_filter.check(prev, SyncedSample(0.2, [1.0, 2.0, 3.0], 5.5), cfg)


def test_first_sample_is_accepted():
    state, accepted = range_filter.ingest(FilterState(), SyncedSample(0.0, [0.0, 0.0, 0.0], 3.0), FilterConfig())
    assert accepted
    assert (state.accepted, state.rejected) == (1, 0)


def test_outlier_does_not_poison_successor():
    pos = [1.0, 1.0, 1.0]
    samples = [SyncedSample(0.0, pos, 5.0), SyncedSample(0.1, pos, 9.0), SyncedSample(0.2, pos, 5.05)]
    state, flags = _run(samples, FilterConfig(tau=0.1))
    assert flags == [True, False, True]
    assert (state.accepted, state.rejected, state.total) == (2, 1, 3)
    assert state.last_accepted is samples[2]
    assert state.max_gap == pytest.approx(0.2)


def test_out_of_order_is_an_error():
    cfg = FilterConfig()
    first = SyncedSample(1.0, [0.0, 0.0, 0.0], 3.0)
    state, _ = range_filter.ingest(FilterState(), first, cfg)
    with pytest.raises(OutOfOrderError):
        range_filter.ingest(state, SyncedSample(1.0, [0.0, 0.0, 0.0], 3.0), cfg)
    with pytest.raises(OutOfOrderError):
        range_filter.check(first, SyncedSample(0.5, [0.0, 0.0, 0.0], 3.0), cfg)


def test_config_from_sigma():
    assert FilterConfig.from_sigma(0.2).tau == pytest.approx(0.4)
    assert FilterConfig.from_sigma(0.2, tau=0.05).tau == 0.05
    assert FilterConfig.from_sigma(None).tau == DEFAULT_TAU
    assert FilterConfig.from_sigma(0.0).tau == DEFAULT_TAU
    with pytest.raises(ValueError):
        FilterConfig(tau=-0.1)


@pytest.mark.parametrize("tau", [0.0, 0.1])
def test_consistent_stream_is_never_rejected(tau):
    rng = np.random.default_rng(5)
    anchor = np.array([2.0, -1.0, 1.5])
    positions = np.cumsum(rng.normal(0.0, 0.2, size=(500, 3)), axis=0)
    ranges = np.linalg.norm(positions - anchor, axis=1)
    samples = [SyncedSample(0.1 * k, p, d) for k, (p, d) in enumerate(zip(positions, ranges))]
    state, flags = _run(samples, FilterConfig(tau=tau))
    assert all(flags)
    assert state.rejected == 0


def test_offsets_beyond_motion_plus_tau_are_rejected():
    # tag circling the anchor: the true range never changes
    tau = 0.1
    rng = np.random.default_rng(9)
    theta = np.linspace(0.0, 2.0 * np.pi, 400)
    positions = np.column_stack([5.0 * np.cos(theta), 5.0 * np.sin(theta), np.full(theta.size, 1.0)])
    ranges = np.linalg.norm(positions, axis=1)
    step = float(np.linalg.norm(positions[1] - positions[0]))
    injected = np.arange(5, 400, 10)
    ranges[injected] += rng.choice([-1.0, 1.0], size=injected.size) * (step + tau + rng.uniform(0.01, 2.0, size=injected.size))
    samples = [SyncedSample(0.1 * k, p, d) for k, (p, d) in enumerate(zip(positions, ranges))]
    _, flags = _run(samples, FilterConfig(tau=tau))
    flags = np.asarray(flags)
    assert not flags[injected].any()
    assert flags[np.setdiff1d(np.arange(400), injected)].all()


def test_mixed_stream_rejects_large_offsets():
    sigma, tau = 0.05, 0.1
    rng = np.random.default_rng(21)
    n = 1000
    anchor = np.array([20.0, 0.0, 2.5])
    # 0.1 m/s at 10 Hz
    positions = np.column_stack([0.01 * np.arange(n), np.full(n, 2.0), np.full(n, 1.0)])
    ranges = np.linalg.norm(positions - anchor, axis=1) + rng.normal(0.0, sigma, size=n)
    injected = np.arange(7, n, 10)
    ranges[injected] += rng.choice([-1.0, 1.0], size=injected.size) * rng.uniform(0.5, 3.0, size=injected.size)
    samples = [SyncedSample(0.1 * k, p, d) for k, (p, d) in enumerate(zip(positions, ranges))]
    _, flags = _run(samples, FilterConfig(tau=tau))
    assert not np.asarray(flags)[injected].any()


def _stationary_rejection_rate(sigma, tau, cells=1601, span=8.0):
    """Markov chain over the accepted reference's noise value, static tag."""
    edges = np.linspace(-span * sigma, span * sigma, cells + 1)
    x = 0.5 * (edges[:-1] + edges[1:])
    mass = np.diff(norm.cdf(edges / sigma))
    mass /= mass.sum()
    reachable = np.abs(x[:, None] - x[None, :]) <= tau
    transition = reachable * mass[None, :]
    accept = norm.cdf((x + tau) / sigma) - norm.cdf((x - tau) / sigma)
    transition[np.diag_indices(cells)] += 1.0 - transition.sum(axis=1)
    pi = mass.copy()
    for _ in range(300):
        pi = pi @ transition
        pi /= pi.sum()
    return float(pi @ (1.0 - accept))


def test_gaussian_rejection_rate_matches_markov_oracle():
    sigma, tau, n = 0.05, 0.1, 10_000
    rng = np.random.default_rng(77)
    ranges = 3.0 + rng.normal(0.0, sigma, size=n)
    samples = [SyncedSample(0.1 * k, [1.0, 0.0, 0.0], d) for k, d in enumerate(ranges)]
    state, _ = _run(samples, FilterConfig(tau=tau))
    expected = _stationary_rejection_rate(sigma, tau)
    # the acceptance kernel is symmetric, so references end up distributed like fresh draws
    assert expected == pytest.approx(2.0 * norm.sf(tau / (sigma * math.sqrt(2.0))), abs=1e-3)
    assert state.rejected / state.total == pytest.approx(expected, abs=0.02)
