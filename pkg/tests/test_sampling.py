import math

import numpy as np
import pytest

from ncergodic.concentration import chernoff_bound
from ncergodic.sampling import (
    RandomPath,
    bernoulli_bits,
    geometric_grid,
    hitting_times,
    sample_path,
    slln_trajectory,
    weights,
)

# generated once with sample_path(0.5, 64, 42) and frozen
GOLDEN_42 = "1101101100011000000000000001011000000000000010100000000000000100"


def test_first_bit_is_one():
    for seed in range(50):
        assert sample_path(0.3, 5, seed).X[0] == 1


def test_golden_prefix():
    bits = "".join(str(int(b)) for b in sample_path(0.5, 64, 42).X)
    assert bits == GOLDEN_42


def test_random_access_matches_prefix():
    full = sample_path(0.5, 5000, 9).X
    assert np.array_equal(bernoulli_bits(0.5, 9, 1, 5000), full)
    assert np.array_equal(bernoulli_bits(0.5, 9, 1237, 4001), full[1236:4001])
    assert np.array_equal(sample_path(0.5, 300, 9).X, full[:300])


def test_reproducible_and_seed_sensitive():
    assert np.array_equal(sample_path(0.5, 1000, 3).X, sample_path(0.5, 1000, 3).X)
    base = sample_path(0.5, 64, 0).X
    differ = [not np.array_equal(sample_path(0.5, 64, s).X, base) for s in range(1, 101)]
    assert np.mean(differ) >= 0.9


def test_invalid_arguments():
    with pytest.raises(ValueError):
        sample_path(1.0, 10, 0)
    with pytest.raises(ValueError):
        sample_path(0.5, 0, 0)
    with pytest.raises(ValueError):
        sample_path(0.5, 10, -1)
    with pytest.raises(ValueError):
        RandomPath.from_bits([0, 2, 1])


def test_slln_mean_ratio():
    N = 100_000
    ratios = [sample_path(0.5, N, s).count(N) / weights(0.5, N) for s in range(200)]
    assert 0.98 <= np.mean(ratios) <= 1.02


# -- weights ---------------------------------------------------------------


def test_weights_small_cases():
    assert weights(0.5, 1) == 1.0
    assert weights(0.5, 4) == pytest.approx(1 + 2 ** -0.5 + 3 ** -0.5 + 0.5, abs=1e-14)
    assert weights(0.5, 4) == pytest.approx(2.78445, abs=1e-5)


def test_weights_asymptotics():
    N = 10 ** 6
    assert 0.999 <= weights(0.5, N) / (2 * math.sqrt(N)) <= 1.001


def test_weights_compensated_agree():
    assert weights(0.3, 200_000, compensated=True) == pytest.approx(weights(0.3, 200_000), rel=1e-12)


# -- hitting times -----------------------------------------------------------


def test_hitting_times_small():
    assert hitting_times(RandomPath.from_bits([1, 0, 1, 0, 0, 1])).tolist() == [1, 3, 6]
    assert hitting_times(RandomPath.from_bits(np.ones(7))).tolist() == list(range(1, 8))


def test_partial_sums_at_hits():
    path = sample_path(0.5, 20_000, 4)
    n = hitting_times(path)
    assert np.array_equal(path.S[n - 1], np.arange(1, n.size + 1))


def test_hitting_time_asymptotics():
    alpha, N = 0.5, 10 ** 6
    ratios = []
    for s in range(100):
        path = sample_path(alpha, N, s)
        k = path.hits.size
        ratios.append(path.hits[-1] / ((1 - alpha) * k) ** (1 / (1 - alpha)))
    assert 0.9 <= np.median(ratios) <= 1.1


# -- S_N / W_N trajectories ---------------------------------------------------


def test_slln_all_ones_closed_form():
    path = RandomPath.from_bits(np.ones(100), alpha=0.4)
    traj = slln_trajectory(path, 2.0)
    for N, r in traj:
        assert r == pytest.approx(N / weights(0.4, int(N)), rel=1e-14)


def test_slln_final_ratio_concentrates():
    N = 50_000
    final = np.array([slln_trajectory(sample_path(0.3, N, s), 10.0)[-1, 1] for s in range(100)])
    assert abs(np.median(final) - 1) < 0.02


def test_slln_positive_for_heavy_thinning():
    r = slln_trajectory(sample_path(0.7, 100_000, 1))[-1, 1]
    assert np.isfinite(r) and r > 0


def test_geometric_grid():
    assert geometric_grid(100, 10).tolist() == [1, 10, 100]
    assert geometric_grid(50, 2)[-1] == 50
    with pytest.raises(ValueError):
        geometric_grid(10, 1.0)


# -- multiplicative Chernoff over many seeds ----------------------------------


@pytest.mark.parametrize("N", [100, 1000])
def test_chernoff_upper_tail(N):
    trials = 10_000
    counts = np.array([int(bernoulli_bits(0.5, s, 1, N).sum()) for s in range(trials)])
    W = weights(0.5, N)
    for delta in (0.2, 0.5, 1.0):
        freq = np.mean(counts >= (1 + delta) * W)
        b = min(1.0, chernoff_bound(0.5, N, delta))
        assert freq <= b + 3 * math.sqrt(b * (1 - b) / trials)
