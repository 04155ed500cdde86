"""Estimators and hypothesis tests for replica ensembles.

Everything returns plain dicts shaped like the JSON summaries the runner
writes: {statistic, estimate, ci_lo, ci_hi, target, verdict}.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import chi2

__all__ = [
    "ReplicaEnsemble",
    "moment_estimates",
    "covariance_lag",
    "invariance_test",
    "summary_json",
]

_MIN_REPLICAS = 100


@dataclass
class ReplicaEnsemble:
    """Per-replica field values at the recorded times, plus the seed ledger."""

    times: np.ndarray
    Y: np.ndarray  # (M, T)
    seeds: list[int]

    def __post_init__(self) -> None:
        self.Y = np.atleast_2d(np.asarray(self.Y, dtype=float))
        if len(self.seeds) != self.Y.shape[0]:
            raise ValueError("one seed per replica required")
        if len(set(self.seeds)) != len(self.seeds):
            raise ValueError("replica seeds must be pairwise distinct")

    @property
    def M(self) -> int:
        return self.Y.shape[0]

    def at(self, t: float) -> np.ndarray:
        idx = int(np.argmin(np.abs(self.times - t)))
        if abs(self.times[idx] - t) > 1e-9:
            raise ValueError(f"time {t} was not recorded")
        return self.Y[:, idx]


def _ci(est: float, se: float, z: float = 1.96) -> tuple[float, float]:
    return est - z * se, est + z * se


def moment_estimates(samples: np.ndarray) -> dict:
    """Mean/variance/skewness/excess-kurtosis with normal-approximation CIs."""
    x = np.asarray(samples, dtype=float)
    M = len(x)
    if M < _MIN_REPLICAS:
        raise ValueError(f"need at least {_MIN_REPLICAS} samples, got {M}")
    mean = float(x.mean())
    var = float(x.var(ddof=1))
    out = {}
    if np.ptp(x) == 0.0:
        return {"degenerate": True, "mean": mean, "var": 0.0}
    z = (x - mean) / math.sqrt(var)
    m3 = float(np.mean(z ** 3))
    m4 = float(np.mean(z ** 4))
    se_mean = math.sqrt(var / M)
    # SE of the sample variance without normality: sqrt((m4_c - var^2)/M)
    c4 = float(np.mean((x - mean) ** 4))
    se_var = math.sqrt(max(c4 - var * var, 0.0) / M)
    se_skew = math.sqrt(6.0 / M)
    se_kurt = math.sqrt(24.0 / M)
    out["degenerate"] = False
    for name, est, se in (("mean", mean, se_mean), ("var", var, se_var),
                          ("skewness", m3, se_skew),
                          ("excess_kurtosis", m4 - 3.0, se_kurt)):
        lo, hi = _ci(est, se)
        out[name] = {"estimate": est, "se": se, "ci_lo": lo, "ci_hi": hi}
    return out


def covariance_lag(ensemble: ReplicaEnsemble, t: float) -> dict:
    """Sample covariance of (Y at first record time, Y at t) with CI."""
    y0 = ensemble.Y[:, 0]
    yt = ensemble.at(t)
    M = ensemble.M
    if M < _MIN_REPLICAS:
        raise ValueError(f"need at least {_MIN_REPLICAS} replicas, got {M}")
    d0 = y0 - y0.mean()
    dt = yt - yt.mean()
    prods = d0 * dt
    est = float(np.sum(prods)) / (M - 1)
    se = float(prods.std(ddof=1)) / math.sqrt(M)
    lo, hi = _ci(est, se)
    return {"estimate": est, "se": se, "ci_lo": lo, "ci_hi": hi}


def invariance_test(snapshots: np.ndarray, b: float, level: float = 0.001) -> dict:
    """Per-site chi-square of occupancy counts vs Bernoulli(b), Bonferroni.

    snapshots: (M, n_sites) array of 0/1 states, one per replica at a common
    time.  Each site contributes a 1-df chi-square; the test passes when no
    site exceeds the level/n_sites quantile.
    """
    snaps = np.asarray(snapshots)
    M, n_sites = snaps.shape
    counts = snaps.sum(axis=0).astype(float)
    expected = M * b
    stat = (counts - expected) ** 2 / (M * b * (1.0 - b))
    thresh = float(chi2.ppf(1.0 - level / n_sites, df=1))
    worst = int(np.argmax(stat))
    n_fail = int(np.sum(stat > thresh))
    return {
        "statistic": "per-site chi-square (Bonferroni)",
        "n_sites": n_sites,
        "replicas": M,
        "level": level,
        "threshold": thresh,
        "max_stat": float(stat[worst]),
        "worst_site_index": worst,
        "failures": n_fail,
        "verdict": "pass" if n_fail == 0 else "fail",
    }


def summary_json(statistic: str, estimate: float, ci_lo: float, ci_hi: float,
                 target: float, verdict: bool | str | None = None) -> str:
    """The one-experiment JSON summary in the standard shape."""
    if verdict is None:
        verdict = "pass" if ci_lo <= target <= ci_hi else "fail"
    elif isinstance(verdict, bool):
        verdict = "pass" if verdict else "fail"
    return json.dumps({
        "statistic": statistic,
        "estimate": estimate,
        "ci_lo": ci_lo,
        "ci_hi": ci_hi,
        "target": target,
        "verdict": verdict,
    }, indent=2)
