"""Two-sample machinery for the verification harness.

The weighted two-sample comparison reduces each weighted sample to an
unweighted one by systematic resampling at its effective sample size
(identity when all weights are equal), then applies the classical KS
statistic with a Monte Carlo label-permutation p-value.  After reduction
the two groups are plain samples, so label permutation is exchangeable
under the null; the residual within-sample dependence from resampling
duplicates is why callers enforce a minimum effective sample size.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np


@dataclass
class TwoSampleResult:
    ks_stat: float
    p_value: float
    n1: int
    n2: int
    weights1: Optional[np.ndarray] = None
    weights2: Optional[np.ndarray] = None

    def to_dict(self) -> dict:
        return {"ks_stat": self.ks_stat, "p_value": self.p_value,
                "n1": self.n1, "n2": self.n2}


def effective_sample_size(weights: np.ndarray) -> float:
    w = np.asarray(weights, dtype=float)
    s = w.sum()
    if s <= 0:
        return 0.0
    return float(s * s / np.sum(w * w))


def systematic_resample(values: np.ndarray, weights: np.ndarray, m: int,
                        rng: np.random.Generator) -> np.ndarray:
    """m draws by systematic (stratified) resampling; with equal weights
    and m = n every point is drawn exactly once."""
    w = np.asarray(weights, dtype=float)
    if np.any(w < 0):
        raise ValueError("negative weights")
    total = w.sum()
    if total <= 0:
        raise ValueError("zero total weight")
    cdf = np.cumsum(w) / total
    u = (rng.uniform() + np.arange(m)) / m
    idx = np.searchsorted(cdf, u, side="left")
    return np.asarray(values)[np.minimum(idx, w.size - 1)]


def reduce_weighted(values: np.ndarray, weights: Optional[np.ndarray],
                    rng: np.random.Generator) -> np.ndarray:
    values = np.asarray(values, dtype=float)
    if weights is None:
        return values
    w = np.asarray(weights, dtype=float)
    if w.shape != values.shape:
        raise ValueError("weights shape mismatch")
    keep = w > 0
    values, w = values[keep], w[keep]
    if values.size == 0:
        raise ValueError("no positive-weight samples")
    if np.allclose(w, w[0]):
        return values
    m = max(1, int(round(effective_sample_size(w))))
    return systematic_resample(values, w, m, rng)


def _ks_from_labels(labels: np.ndarray, n1: int, n2: int,
                    eval_mask: np.ndarray) -> float:
    """KS distance from a group-1 indicator over sorted pooled positions,
    evaluated right-continuously (only at the last position of each tie
    run, per eval_mask)."""
    c1 = np.cumsum(labels)
    ranks = np.arange(1, labels.size + 1)
    diffs = np.abs(c1 / n1 - (ranks - c1) / n2)
    return float(np.max(diffs[eval_mask]))


def _sorted_pool(x1: np.ndarray, x2: np.ndarray):
    n1, n2 = x1.size, x2.size
    pooled = np.concatenate([x1, x2])
    order = np.argsort(pooled, kind="stable")
    pooled = pooled[order]
    labels = (order < n1)
    eval_mask = np.empty(pooled.size, dtype=bool)
    eval_mask[:-1] = pooled[:-1] != pooled[1:]
    eval_mask[-1] = True
    return labels, eval_mask


def ks_statistic(x1: np.ndarray, x2: np.ndarray) -> float:
    """Classical (tie-aware) two-sample KS statistic sup |F1 - F2|."""
    x1 = np.asarray(x1, dtype=float)
    x2 = np.asarray(x2, dtype=float)
    labels, eval_mask = _sorted_pool(x1, x2)
    return _ks_from_labels(labels, x1.size, x2.size, eval_mask)


def _perm_pvalue(x1: np.ndarray, x2: np.ndarray, d_obs: float, n_perm: int,
                 rng: np.random.Generator) -> float:
    """Monte Carlo label-permutation p-value.  Random relabeling over the
    sorted pooled positions is exchangeable with the observed labeling,
    and each permuted distance uses the same tie convention as d_obs."""
    n1, n2 = x1.size, x2.size
    n = n1 + n2
    _, eval_mask = _sorted_pool(np.asarray(x1, float), np.asarray(x2, float))
    hits = 0
    for _ in range(n_perm):
        labels = np.zeros(n, dtype=bool)
        labels[rng.permutation(n)[:n1]] = True
        if _ks_from_labels(labels, n1, n2, eval_mask) >= d_obs - 1e-12:
            hits += 1
    return (1 + hits) / (n_perm + 1)


def weighted_ks_test(x1, w1, x2, w2, rng: np.random.Generator,
                     n_perm: int = 500) -> TwoSampleResult:
    """Two-sample KS test between (possibly) weighted samples.

    With all weights equal (or None) the statistic is exactly the
    classical two-sample KS statistic on the raw data.
    """
    r1 = reduce_weighted(x1, w1, rng)
    r2 = reduce_weighted(x2, w2, rng)
    d = ks_statistic(r1, r2)
    p = _perm_pvalue(r1, r2, d, n_perm, rng)
    return TwoSampleResult(ks_stat=d, p_value=p, n1=r1.size, n2=r2.size,
                           weights1=None if w1 is None else np.asarray(w1),
                           weights2=None if w2 is None else np.asarray(w2))


# -- simple interval helpers ---------------------------------------------------


def mean_se(x: np.ndarray) -> tuple[float, float]:
    x = np.asarray(x, dtype=float)
    return float(x.mean()), float(x.std(ddof=1) / math.sqrt(x.size))


def binom_se(p_hat: float, n: int) -> float:
    return math.sqrt(max(p_hat * (1.0 - p_hat), 0.0) / n)


def ratio_se_paired(a: np.ndarray, b: np.ndarray) -> tuple[float, float]:
    """Delta-method stderr of mean(a)/mean(b) for paired samples."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    n = a.size
    ma, mb = a.mean(), b.mean()
    r = ma / mb
    va = a.var(ddof=1) / n
    vb = b.var(ddof=1) / n
    cov = np.cov(a, b, ddof=1)[0, 1] / n
    var_r = r * r * (va / ma ** 2 + vb / mb ** 2 - 2.0 * cov / (ma * mb))
    return float(r), float(math.sqrt(max(var_r, 0.0)))


def ratio_se_independent(a: float, se_a: float, b: float, se_b: float
                         ) -> tuple[float, float]:
    r = a / b
    return r, abs(r) * math.hypot(se_a / a, se_b / b)
