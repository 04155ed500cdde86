import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from slowbond.stats import (
    ReplicaEnsemble,
    covariance_lag,
    invariance_test,
    moment_estimates,
    summary_json,
)


def gaussian_samples(mu=0.0, sd=1.0, m=5000, seed=0):
    return np.random.default_rng(seed).normal(mu, sd, m)


def test_moment_estimates_gaussian():
    x = gaussian_samples(2.0, 3.0, 20000, seed=7)
    out = moment_estimates(x)
    assert not out["degenerate"]
    assert out["mean"]["ci_lo"] < 2.0 < out["mean"]["ci_hi"]
    assert out["var"]["ci_lo"] < 9.0 < out["var"]["ci_hi"]
    assert out["skewness"]["ci_lo"] < 0.0 < out["skewness"]["ci_hi"]
    assert out["excess_kurtosis"]["ci_lo"] < 0.0 < out["excess_kurtosis"]["ci_hi"]


def test_moment_estimates_degenerate():
    out = moment_estimates(np.full(200, 1.3))
    assert out["degenerate"]
    assert out["var"] == 0.0


def test_moment_estimates_needs_replicas():
    with pytest.raises(ValueError):
        moment_estimates(np.zeros(99))


def test_ci_coverage_on_synthetic_gaussians():
    # nominal 95% normal-approximation CI for the mean: empirical coverage
    # over 1000 repetitions within 2 percentage points
    rng = np.random.default_rng(123)
    hits = 0
    for _ in range(1000):
        x = rng.normal(0.0, 1.0, 400)
        m = moment_estimates(x)["mean"]
        hits += m["ci_lo"] <= 0.0 <= m["ci_hi"]
    assert abs(hits / 1000.0 - 0.95) < 0.02


def test_ensemble_validation():
    times = np.array([0.0, 0.1])
    Y = np.zeros((3, 2))
    with pytest.raises(ValueError):
        ReplicaEnsemble(times, Y, [1, 1, 2])  # duplicate seeds
    with pytest.raises(ValueError):
        ReplicaEnsemble(times, Y, [1, 2])  # wrong count
    ens = ReplicaEnsemble(times, Y, [1, 2, 3])
    assert ens.M == 3
    with pytest.raises(ValueError):
        ens.at(0.05)


def test_covariance_lag_t0_equals_variance():
    rng = np.random.default_rng(5)
    y = rng.normal(0, 1, (500, 1))
    ens = ReplicaEnsemble(np.array([0.0]), np.hstack([y, ]), list(range(500)))
    out = covariance_lag(ens, 0.0)
    assert out["estimate"] == pytest.approx(float(np.var(y, ddof=1)), rel=1e-12)


def test_covariance_lag_recovers_correlation():
    rng = np.random.default_rng(9)
    m = 20000
    y0 = rng.normal(0, 1, m)
    yt = 0.6 * y0 + rng.normal(0, 0.8, m)
    ens = ReplicaEnsemble(np.array([0.0, 0.1]), np.stack([y0, yt], 1), list(range(m)))
    out = covariance_lag(ens, 0.1)
    assert abs(out["estimate"] - 0.6) < 3.0 * out["se"]
    assert out["ci_lo"] < out["estimate"] < out["ci_hi"]


def test_invariance_test_null_passes():
    rng = np.random.default_rng(11)
    snaps = (rng.random((5000, 64)) < 0.5).astype(np.uint8)
    out = invariance_test(snaps, 0.5)
    assert out["verdict"] == "pass"
    assert out["failures"] == 0


def test_invariance_test_detects_bias():
    # fixture violating invariance: one site's occupancy inflated
    rng = np.random.default_rng(13)
    snaps = (rng.random((5000, 64)) < 0.5).astype(np.uint8)
    snaps[:, 17] = (rng.random(5000) < 0.62).astype(np.uint8)
    out = invariance_test(snaps, 0.5)
    assert out["verdict"] == "fail"
    assert out["worst_site_index"] == 17


@given(st.floats(min_value=0.1, max_value=0.9))
@settings(max_examples=20, deadline=None)
def test_invariance_test_nominal_level(b):
    rng = np.random.default_rng(int(b * 1e6))
    snaps = (rng.random((2000, 32)) < b).astype(np.uint8)
    # level 0.001 Bonferroni: false alarms essentially never happen
    assert invariance_test(snaps, b)["verdict"] == "pass"


def test_summary_json_contract():
    doc = json.loads(summary_json("demo", 1.0, 0.9, 1.1, 1.05))
    assert doc["verdict"] == "pass"
    assert set(doc) == {"statistic", "estimate", "ci_lo", "ci_hi", "target", "verdict"}
    doc = json.loads(summary_json("demo", 1.0, 0.9, 1.1, 1.2))
    assert doc["verdict"] == "fail"
    doc = json.loads(summary_json("demo", 1.0, 0.9, 1.1, 1.2, verdict=True))
    assert doc["verdict"] == "pass"
