"""Replay buffer: FIFO retention and uniform sampling."""
import numpy as np
import pytest
from scipy import stats

from bifurcrl.errors import ConfigError
from bifurcrl.replay import ReplayBuffer, Transition


def make_tr(tag: float) -> Transition:
    return Transition(np.full(2, tag), np.array([tag]), tag,
                      np.full(2, tag + 0.5), False)


def test_push_grows_size():
    buf = ReplayBuffer(4, 2, 1)
    assert len(buf) == 0
    buf.push(make_tr(1.0))
    assert len(buf) == 1


def test_fifo_eviction_order():
    buf = ReplayBuffer(3, 2, 1)
    for i in range(1, 6):
        buf.push(make_tr(float(i)))
    kept = [tr.reward for tr in buf.retained()]
    assert kept == [3.0, 4.0, 5.0]
    assert len(buf) == 3


def test_size_capped_at_capacity():
    buf = ReplayBuffer(100, 2, 1)
    for i in range(250):
        buf.push(make_tr(float(i)))
    assert len(buf) == 100


def test_empty_returns_none():
    buf = ReplayBuffer(10, 2, 1)
    assert buf.sample_batch(2, np.random.default_rng(0)) is None


def test_single_item_batch_replicates():
    buf = ReplayBuffer(10, 2, 1)
    buf.push(make_tr(7.0))
    batch = buf.sample_batch(4, np.random.default_rng(0))
    assert np.all(batch.rewards == 7.0)
    assert batch.states.shape == (4, 2)


def test_fixed_seed_identical_batches():
    buf = ReplayBuffer(50, 2, 1)
    for i in range(20):
        buf.push(make_tr(float(i)))
    a = buf.sample_batch(8, np.random.default_rng(5))
    b = buf.sample_batch(8, np.random.default_rng(5))
    np.testing.assert_array_equal(a.states, b.states)
    np.testing.assert_array_equal(a.rewards, b.rewards)


def test_sampling_uniformity():
    buf = ReplayBuffer(10, 2, 1)
    for i in range(10):
        buf.push(make_tr(float(i)))
    rng = np.random.default_rng(0)
    draws = buf.sample_batch(100_000, rng).rewards.astype(int)
    counts = np.bincount(draws, minlength=10)
    freq = counts / counts.sum()
    assert np.all(np.abs(freq - 0.1) < 0.01)
    # chi-square goodness of fit against uniform
    assert stats.chisquare(counts).pvalue > 1e-4


def test_dimension_validation():
    buf = ReplayBuffer(4, 2, 1)
    with pytest.raises(ConfigError):
        buf.push(Transition(np.zeros(3), np.zeros(1), 0.0, np.zeros(2), False))
    with pytest.raises(ConfigError):
        buf.push(Transition(np.zeros(2), np.zeros(2), 0.0, np.zeros(2), False))


def test_nonfinite_reward_rejected():
    buf = ReplayBuffer(4, 2, 1)
    with pytest.raises(ConfigError):
        buf.push(Transition(np.zeros(2), np.zeros(1), np.nan, np.zeros(2), False))


def test_invalid_capacity():
    with pytest.raises(ConfigError):
        ReplayBuffer(0, 2, 1)
