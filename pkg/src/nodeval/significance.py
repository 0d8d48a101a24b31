"""DeLong variance/tests and stratified bootstrap confidence intervals.

DeLong structural components use the Mann-Whitney kernel with ties scored
1/2, computed from midranks (Sun & Xu's fast formulation) rather than the
O(mn) pairwise loop.
"""

import math
from dataclasses import dataclass

import numpy as np
from scipy.stats import rankdata

from nodeval import DegenerateError, rng
from nodeval.rocstats import Estimator, ScoreSample, batch_auc

_SQRT2 = math.sqrt(2.0)

RNG_NAME = "splitmix64-counter"
MAX_DEGENERATE_FRACTION = 0.10
MAX_REDRAWS = 64


@dataclass(frozen=True)
class DeLongResult:
    auc_a: float
    auc_b: float
    var_a: float
    var_b: float
    cov_ab: float
    z: float
    p: float
    paired: bool


@dataclass(frozen=True)
class BootstrapCi:
    low: float
    high: float
    level: float
    replicates: int
    seed: int
    estimator: Estimator
    redrawn: int = 0


def placement_counts(sample: ScoreSample):
    """Half-integer placement counts behind the DeLong components.

    Returns ``(c10, c01)``: for each positive, the number of negatives it
    outscores (ties 1/2); for each negative, the number of positives that
    outscore it. Both sum exactly to the Mann-Whitney U statistic.
    """
    pos = sample.labels == 1
    x = sample.positives
    y = sample.negatives
    r_all = rankdata(sample.scores)
    c10 = r_all[pos] - rankdata(x)
    c01 = len(x) - (r_all[~pos] - rankdata(y))
    return c10, c01


def delong_components(sample: ScoreSample):
    """Return ``(auc, v10, v01)`` structural components."""
    sample.require(2)
    c10, c01 = placement_counts(sample)
    m = len(c10)
    n = len(c01)
    auc = float(c10.sum() / (m * n))
    return auc, c10 / n, c01 / m


def delong_variance(sample: ScoreSample) -> float:
    _, v10, v01 = delong_components(sample)
    return float(np.var(v10, ddof=1) / len(v10) + np.var(v01, ddof=1) / len(v01))


def _two_sided_p(z: float) -> float:
    # equals 2 * (1 - Phi(|z|)) without cancellation in the tail
    return math.erfc(abs(z) / _SQRT2)


def delong_paired_test(a: ScoreSample, b: ScoreSample) -> DeLongResult:
    """Compare two scoring systems read on the same cases in the same order."""
    if len(a) != len(b) or not np.array_equal(a.labels, b.labels):
        raise ValueError("paired DeLong test needs identical labels in identical case order")
    auc_a, v10a, v01a = delong_components(a)
    auc_b, v10b, v01b = delong_components(b)
    m = len(v10a)
    n = len(v01a)
    s10 = np.cov(np.vstack([v10a, v10b]), ddof=1)
    s01 = np.cov(np.vstack([v01a, v01b]), ddof=1)
    cov = s10 / m + s01 / n
    var_a, var_b, cov_ab = float(cov[0, 0]), float(cov[1, 1]), float(cov[0, 1])
    var_diff = var_a + var_b - 2.0 * cov_ab
    if auc_a == auc_b:
        z = 0.0
    elif var_diff <= 0.0:
        raise DegenerateError(
            f"AUCs differ ({auc_a:.6f} vs {auc_b:.6f}) but the variance of their difference is zero")
    else:
        z = (auc_a - auc_b) / math.sqrt(var_diff)
    return DeLongResult(auc_a, auc_b, var_a, var_b, cov_ab, z, _two_sided_p(z), paired=True)


def delong_unpaired_test(a: ScoreSample, b: ScoreSample) -> DeLongResult:
    """Compare AUCs from two disjoint case sets (covariance fixed at zero)."""
    auc_a, _, _ = delong_components(a)
    auc_b, _, _ = delong_components(b)
    var_a = delong_variance(a)
    var_b = delong_variance(b)
    total = var_a + var_b
    if auc_a == auc_b:
        z = 0.0
    elif total <= 0.0:
        raise DegenerateError(
            f"AUCs differ ({auc_a:.6f} vs {auc_b:.6f}) but both DeLong variances are zero")
    else:
        z = (auc_a - auc_b) / math.sqrt(total)
    return DeLongResult(auc_a, auc_b, var_a, var_b, 0.0, z, _two_sided_p(z), paired=False)


def _resample(values: np.ndarray, seed: int, reps: np.ndarray, attempt: int, stratum: int):
    k = len(values)
    keys = rng.stream_key(seed, reps, attempt, stratum)[:, None]
    idx = rng.integers(keys, np.arange(k)[None, :], k)
    return values[idx]


def bootstrap_replicates(sample: ScoreSample, estimator=Estimator.BINORMAL,
                         replicates: int = 2000, seed: int = 0):
    """AUCs of stratified bootstrap resamples.

    Replicate ``r`` draws positives and negatives (with replacement, class
    counts preserved) from streams keyed by ``(seed, r, attempt, stratum)``,
    so any replicate can be recomputed alone. Replicates on which the
    estimator is degenerate are redrawn with the next attempt index.

    Returns ``(aucs, redrawn)``.
    """
    estimator = Estimator(estimator)
    sample.require(2 if estimator is Estimator.BINORMAL else 1)
    if replicates < 1:
        raise ValueError("replicates must be positive")
    pos = sample.positives
    neg = sample.negatives
    reps = np.arange(replicates, dtype=np.uint64)
    aucs = batch_auc(_resample(pos, seed, reps, 0, 1), _resample(neg, seed, reps, 0, 0), estimator)
    bad = np.flatnonzero(np.isnan(aucs))
    redrawn = len(bad)
    if redrawn > MAX_DEGENERATE_FRACTION * replicates:
        raise DegenerateError(
            f"{redrawn} of {replicates} bootstrap replicates were degenerate for the "
            f"{estimator.value} estimator (limit {MAX_DEGENERATE_FRACTION:.0%})")
    attempt = 1
    while len(bad):
        if attempt > MAX_REDRAWS:
            raise DegenerateError(f"replicates {bad[:5].tolist()} stayed degenerate after {MAX_REDRAWS} redraws")
        r = bad.astype(np.uint64)
        aucs[bad] = batch_auc(_resample(pos, seed, r, attempt, 1), _resample(neg, seed, r, attempt, 0), estimator)
        bad = bad[np.isnan(aucs[bad])]
        attempt += 1
    return aucs, redrawn


def stratified_bootstrap_ci(sample: ScoreSample, estimator=Estimator.BINORMAL, replicates: int = 2000,
                            level: float = 0.95, seed: int = 0) -> BootstrapCi:
    """Percentile interval from stratified bootstrap replicates."""
    if not 0.0 < level < 1.0:
        raise ValueError("level must be in (0, 1)")
    aucs, redrawn = bootstrap_replicates(sample, estimator, replicates, seed)
    alpha = (1.0 - level) / 2.0
    low, high = np.quantile(aucs, [alpha, 1.0 - alpha], method="linear")
    return BootstrapCi(low=float(low), high=float(high), level=level, replicates=replicates,
                       seed=seed, estimator=Estimator(estimator), redrawn=redrawn)
