import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from neural_measures.metrics import (
    EmpiricalEnsemble,
    empirical_wasserstein_1d,
    ensemble_moments,
    error_heatmap,
    histogram,
    match_sizes,
    read_csv,
    relative_l2_error,
    wasserstein_over_time,
    write_csv,
)


def brute_force_wasserstein(a, b, p):
    n = len(a)
    best = min(sum(abs(a[i] - b[j]) ** p for i, j in enumerate(perm)) for perm in itertools.permutations(range(n)))
    return (best / n) ** (1 / p)


def test_identical_samples_zero():
    a = np.random.default_rng(0).normal(size=30)
    assert empirical_wasserstein_1d(a, a[::-1]) == 0.0


def test_single_atoms():
    assert empirical_wasserstein_1d([0.0], [3.0]) == 3.0


def test_two_point_example():
    assert empirical_wasserstein_1d([0.0, 1.0], [1.0, 2.0]) == 1.0
    assert brute_force_wasserstein([0.0, 1.0], [1.0, 2.0], 1) == 1.0


@pytest.mark.parametrize("n", [2, 3, 4])
@pytest.mark.parametrize("p", [1, 2])
def test_matches_brute_force(n, p):
    rng = np.random.default_rng(n * 10 + p)
    for _ in range(50):
        # integer samples keep every coupling cost exact in floating point
        a = rng.integers(-5, 6, n).astype(float)
        b = rng.integers(-5, 6, n).astype(float)
        assert empirical_wasserstein_1d(a, b, p) == brute_force_wasserstein(a, b, p)


def test_metric_axioms():
    rng = np.random.default_rng(1)
    for _ in range(1000):
        n = int(rng.integers(1, 8))
        a, b, c = rng.normal(size=(3, n))
        ab = empirical_wasserstein_1d(a, b)
        assert ab == empirical_wasserstein_1d(b, a)
        assert ab <= empirical_wasserstein_1d(a, c) + empirical_wasserstein_1d(c, b) + 1e-12
        assert ab > 0 or np.array_equal(np.sort(a), np.sort(b))


@settings(max_examples=100)
@given(st.lists(st.floats(-1e3, 1e3), min_size=1, max_size=20).flatmap(
    lambda a: st.tuples(st.just(a), st.lists(st.floats(-1e3, 1e3), min_size=len(a), max_size=len(a)))),
    st.floats(-100, 100))
def test_shift_equivariance(pair, c):
    a, b = np.array(pair[0]), np.array(pair[1])
    base = empirical_wasserstein_1d(a, b)
    assert abs(empirical_wasserstein_1d(a + c, b + c) - base) <= 1e-12 * max(1.0, base, abs(c), np.abs(a).max(), np.abs(b).max())


def test_input_validation():
    with pytest.raises(ValueError):
        empirical_wasserstein_1d([], [])
    with pytest.raises(ValueError):
        empirical_wasserstein_1d([1.0, 2.0], [1.0])
    with pytest.raises(ValueError):
        empirical_wasserstein_1d([1.0], [1.0], p=3)


def test_match_sizes_truncates_to_smaller():
    a, b = match_sizes(np.arange(10.0), np.arange(4.0), seed=0)
    assert a.size == b.size == 4
    assert set(b) == {0.0, 1.0, 2.0, 3.0}
    assert set(a) <= set(np.arange(10.0))


def _ensemble(values, t):
    values = np.asarray(values, dtype=float)
    return EmpiricalEnsemble(values, np.zeros(values.shape[1]), t)


def test_wasserstein_over_time_self_zero():
    e = _ensemble(np.random.default_rng(2).normal(size=(50, 3)), [0.0, 1.0, 2.0])
    times, d = wasserstein_over_time(e, e)
    np.testing.assert_array_equal(times, [0.0, 1.0, 2.0])
    assert np.all(d == 0)


def test_wasserstein_over_time_grid_mismatch():
    a = _ensemble(np.zeros((3, 2)), [0.0, 1.0])
    b = _ensemble(np.zeros((3, 2)), [0.0, 2.0])
    with pytest.raises(ValueError):
        wasserstein_over_time(a, b)


def test_uniform_self_distance_rate():
    # two independent U(0, 4) sample sets of size n: W1 is O(1/sqrt(n))
    n = 10_000
    rng = np.random.default_rng(3)
    a, b = rng.uniform(0, 4, n), rng.uniform(0, 4, n)
    d = empirical_wasserstein_1d(a, b)
    assert d <= 0.05
    assert d <= 4 * 4 / math.sqrt(n)


def test_moments():
    e = _ensemble([[0.0, 5.0], [2.0, 5.0]], [0.0, 1.0])
    mean, std = ensemble_moments(e)
    np.testing.assert_allclose(mean, [1.0, 5.0])
    np.testing.assert_allclose(std, [math.sqrt(2), 0.0])
    with pytest.raises(ValueError):
        ensemble_moments(_ensemble([[1.0]], [0.0]))


def test_histogram_constant_samples():
    edges, counts = histogram(np.full(17, 2.5))
    assert counts.tolist() == [17]
    assert edges.size == 2


def test_histogram_uniform_counts():
    n, k = 100_000, 50
    samples = np.random.default_rng(4).uniform(0, 1, n)
    edges, counts = histogram(samples, k, (0.0, 1.0))
    assert counts.sum() == n and edges.size == k + 1
    assert np.all(np.abs(counts - n / k) <= 3 * math.sqrt(n / k))


def test_error_heatmap():
    a = np.random.default_rng(5).normal(size=(4, 3))
    assert np.all(error_heatmap(a, a) == 0)
    assert np.all(error_heatmap(a, -a) >= 0)


def test_relative_l2():
    assert relative_l2_error([1.0, 1.0], [1.0, 1.0]) == 0.0
    assert relative_l2_error([3.0, 4.0], [0.0, 5.0]) == pytest.approx(math.sqrt(10) / 5)


def test_ensemble_csv_roundtrip(tmp_path):
    rng = np.random.default_rng(6)
    e = EmpiricalEnsemble(rng.normal(size=(4, 6)), np.tile([0.0, 0.5, 1.0], 2), np.repeat([0.0, 0.25], 3))
    path = e.to_csv(tmp_path / "ens.csv")
    assert path.read_text().splitlines()[0] == "xi_index,x,t,u"
    back = EmpiricalEnsemble.from_csv(path)
    np.testing.assert_array_equal(back.values, e.values)
    assert back.same_grid(e)


def test_ensemble_rejects_nonfinite():
    with pytest.raises(ValueError):
        _ensemble([[np.nan]], [0.0])


def test_metric_csv_roundtrip(tmp_path):
    path = write_csv(tmp_path / "w.csv", ["t", "wasserstein_p1"], [[0.0, 1.0], [0.1, 1 / 3]])
    data = read_csv(path)
    assert list(data) == ["t", "wasserstein_p1"]
    assert data["wasserstein_p1"][1] == 1 / 3
