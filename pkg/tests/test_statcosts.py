import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from momrpd.statcosts import (
    RIDGE_FLOOR,
    CostSampleSet,
    fit,
    gaussian_kl,
    hypothesis_error,
    kl_divergence,
    normalize_costs,
    symmetric_hypothesis_error,
)
from momrpd.weights import WeightVector

# closed forms evaluated once and frozen
KL_SHIFT = 0.5  # (mu_b - mu_a)^2 / 2 for unit variances one apart
KL_SCALE = 0.3181471805599453  # 0.5 * (1/4 + ln 4 - 1)
H_SHIFT = 0.6065306597126334  # exp(-0.5)


def gaussian_set(mu, cov, w=None):
    mu = np.atleast_1d(np.asarray(mu, dtype=float))
    cov = np.atleast_2d(np.asarray(cov, dtype=float))
    return CostSampleSet(w, np.vstack([mu, mu]), mu, cov)


def test_fit_identical_rows_gives_ridge_floor():
    mu, cov = fit(np.tile([3.0, 4.0], (5, 1)))
    assert np.array_equal(mu, [3.0, 4.0])
    assert np.allclose(cov, RIDGE_FLOOR * np.eye(2))


def test_fit_two_points():
    mu, cov = fit(np.array([[0.0], [2.0]]))
    assert mu[0] == 1.0
    assert cov[0, 0] == pytest.approx(2.0 * (1 + 1e-6))


def test_fit_rejects_single_sample():
    with pytest.raises(ValueError):
        fit(np.array([[1.0, 2.0]]))


def test_fit_recovers_known_gaussian():
    rng = np.random.default_rng(5)
    true_cov = np.array([[2.0, 0.6], [0.6, 1.0]])
    x = rng.multivariate_normal([10.0, -3.0], true_cov, size=1000)
    mu, cov = fit(x)
    assert np.allclose(mu, [10.0, -3.0], rtol=0.05, atol=0.15)
    assert np.allclose(cov, true_cov, rtol=0.05, atol=0.05)


def test_kl_closed_forms():
    assert gaussian_kl([0.0], [[1.0]], [1.0], [[1.0]]) == pytest.approx(KL_SHIFT, abs=1e-12)
    assert gaussian_kl([0.0], [[1.0]], [0.0], [[4.0]]) == pytest.approx(KL_SCALE, abs=1e-12)
    a = gaussian_set([0.0], [[1.0]])
    assert kl_divergence(a, a) == 0.0


def test_hypothesis_error_values():
    a = gaussian_set([0.0], [[1.0]])
    b = gaussian_set([1.0], [[1.0]])
    assert hypothesis_error(a, b) == pytest.approx(H_SHIFT, abs=1e-9)
    assert hypothesis_error(a, a) == 1.0
    c = gaussian_set([math.sqrt(2 * math.log(2))], [[1.0]])
    assert hypothesis_error(a, c) == pytest.approx(0.5, abs=1e-12)


def test_dimension_mismatch():
    with pytest.raises(ValueError):
        kl_divergence(gaussian_set([0.0], [[1.0]]), gaussian_set([0.0, 0.0], np.eye(2)))


def test_kl_is_directed():
    a = gaussian_set([0.0], [[1.0]])
    b = gaussian_set([0.0], [[4.0]])
    assert kl_divergence(a, b) != pytest.approx(kl_divergence(b, a))
    assert symmetric_hypothesis_error(a, b) == max(hypothesis_error(a, b), hypothesis_error(b, a))


def test_normalize_three_means():
    sets = [CostSampleSet.from_samples(None, [[v], [v]]) for v in (2.0, 4.0, 10.0)]
    means = [float(s.mean[0]) for s in normalize_costs(sets)]
    assert means == pytest.approx([0.0, 0.25, 1.0])


def test_normalize_degenerate_dimension_maps_to_zero():
    sets = [CostSampleSet.from_samples(None, [[1.0, 5.0], [3.0, 5.0]]),
            CostSampleSet.from_samples(None, [[7.0, 5.0], [9.0, 5.0]])]
    out = normalize_costs(sets)
    assert out[0].mean.tolist() == [0.0, 0.0]
    assert out[1].mean.tolist() == [1.0, 0.0]


def test_normalize_needs_two_sets():
    with pytest.raises(ValueError):
        normalize_costs([CostSampleSet.from_samples(None, [[1.0], [2.0]])])


def test_csv_round_trip():
    s = CostSampleSet.from_samples(WeightVector.from_values([0.25, 0.75]), [[1.5, 2.0], [0.1, 7.25], [3.0, 3.0]])
    assert CostSampleSet.from_csv(s.to_csv()) == s


finite = st.floats(-50, 50, allow_nan=False)
var = st.floats(0.05, 20)


@given(finite, var, finite, var)
def test_kl_nonnegative(ma, va, mb, vb):
    assert gaussian_kl([ma], [[va]], [mb], [[vb]]) >= 0.0


@given(var, st.lists(st.floats(0, 10), min_size=2, max_size=8))
def test_h_decreases_with_separation(v, gaps):
    seps = sorted(gaps)
    hs = [math.exp(-gaussian_kl([0.0], [[v]], [s], [[v]])) for s in seps]
    assert all(x >= y for x, y in zip(hs, hs[1:]))


@settings(max_examples=50)
@given(st.lists(st.lists(st.floats(-100, 100), min_size=3, max_size=3), min_size=2, max_size=6))
def test_normalization_preserves_extremes(means):
    sets = [CostSampleSet.from_samples(None, [m, m]) for m in means]
    raw = np.vstack([s.mean for s in sets])
    norm = np.vstack([s.mean for s in normalize_costs(sets)])
    for d in range(3):
        if raw[:, d].max() > raw[:, d].min():
            assert norm[np.argmin(raw[:, d]), d] == pytest.approx(0.0, abs=1e-12)
            assert norm[np.argmax(raw[:, d]), d] == pytest.approx(1.0, abs=1e-12)
        order = np.argsort(raw[:, d], kind="stable")
        assert np.all(np.diff(norm[order, d]) >= -1e-12)
