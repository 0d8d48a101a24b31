"""ROC curves and AUC estimators (empirical Mann-Whitney and binormal)."""

import math
from dataclasses import dataclass
from enum import Enum
from typing import Optional, Sequence

import numpy as np
from scipy.special import erfc
from scipy.stats import rankdata

from nodeval import DegenerateError

_SQRT2 = math.sqrt(2.0)


class Estimator(str, Enum):
    EMPIRICAL = "empirical"
    BINORMAL = "binormal"


@dataclass(frozen=True)
class ScoreSample:
    """Paired binary labels (1 = malignant) and real-valued scores."""

    labels: np.ndarray
    scores: np.ndarray

    def __init__(self, labels: Sequence, scores: Sequence):
        labels = np.asarray(labels)
        scores = np.asarray(scores, dtype=np.float64)
        if labels.shape != scores.shape or labels.ndim != 1:
            raise ValueError(
                f"labels and scores must be 1-d of equal length, got {labels.shape} and {scores.shape}")
        if not np.isin(labels, (0, 1)).all():
            raise ValueError("labels must be 0 or 1")
        if not np.isfinite(scores).all():
            raise ValueError("scores must be finite")
        labels = labels.astype(np.int8)
        labels.flags.writeable = False
        scores.flags.writeable = False
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "scores", scores)

    def __len__(self):
        return len(self.labels)

    @property
    def positives(self) -> np.ndarray:
        return self.scores[self.labels == 1]

    @property
    def negatives(self) -> np.ndarray:
        return self.scores[self.labels == 0]

    def require(self, min_per_class: int = 1) -> None:
        m = int(self.labels.sum())
        n = len(self) - m
        if m < min_per_class or n < min_per_class:
            raise DegenerateError(
                f"need at least {min_per_class} positive and {min_per_class} negative cases, "
                f"got {m} positive / {n} negative")


@dataclass(frozen=True)
class ConfidenceInterval:
    low: float
    high: float
    level: float
    method: str


@dataclass(frozen=True)
class AucEstimate:
    value: float
    method: Estimator
    ci: Optional[ConfidenceInterval] = None


@dataclass(frozen=True)
class RocCurve:
    fpr: np.ndarray
    tpr: np.ndarray
    thresholds: np.ndarray

    def area(self) -> float:
        """Trapezoidal area under the curve."""
        return float(np.sum(np.diff(self.fpr) * (self.tpr[1:] + self.tpr[:-1]) / 2.0))

    def to_csv(self) -> str:
        lines = ["fpr,tpr,threshold"]
        for f, t, th in zip(self.fpr, self.tpr, self.thresholds):
            lines.append(f"{float(f)!r},{float(t)!r},{float(th)!r}")
        return "\n".join(lines) + "\n"


def normal_cdf(x: float) -> float:
    """Standard normal CDF via the complementary error function."""
    return 0.5 * math.erfc(-x / _SQRT2)


def empirical_auc(sample: ScoreSample) -> float:
    """Mann-Whitney AUC; ties between a positive and a negative count one half."""
    sample.require(1)
    ranks = rankdata(sample.scores)
    pos = sample.labels == 1
    m = int(pos.sum())
    n = len(sample) - m
    # midranks are multiples of 1/2, so the rank sum is exact in float64
    u = ranks[pos].sum() - m * (m + 1) / 2.0
    return float(u / (m * n))


def roc_points(sample: ScoreSample) -> RocCurve:
    """Empirical ROC curve from (0, 0) to (1, 1), one vertex per distinct threshold."""
    sample.require(1)
    order = np.argsort(-sample.scores, kind="stable")
    scores = sample.scores[order]
    labels = sample.labels[order]
    # last index of each run of equal scores
    ends = np.r_[np.nonzero(np.diff(scores))[0], len(scores) - 1]
    tp = np.cumsum(labels)[ends]
    fp = (ends + 1) - tp
    m = tp[-1]
    n = fp[-1]
    fpr = np.r_[0, fp] / n
    tpr = np.r_[0, tp] / m
    thresholds = np.r_[np.inf, scores[ends]]
    return RocCurve(fpr=fpr.astype(np.float64), tpr=tpr.astype(np.float64), thresholds=thresholds)


def binormal_params(sample: ScoreSample) -> tuple:
    """Method-of-moments binormal fit, returning (a, b).

    a = (mean_pos - mean_neg) / sd_pos and b = sd_neg / sd_pos, with sample
    standard deviations.
    """
    sample.require(2)
    neg = sample.negatives
    pos = sample.positives
    # fsum keeps the means independent of case order
    m0 = math.fsum(neg) / len(neg)
    m1 = math.fsum(pos) / len(pos)
    s0 = math.sqrt(math.fsum((neg - m0) ** 2) / (len(neg) - 1))
    s1 = math.sqrt(math.fsum((pos - m1) ** 2) / (len(pos) - 1))
    if s1 == 0.0:
        raise DegenerateError("positive scores have zero spread; binormal AUC is unestimable")
    return (m1 - m0) / s1, s0 / s1


def binormal_auc(sample: ScoreSample) -> AucEstimate:
    a, b = binormal_params(sample)
    return AucEstimate(value=normal_cdf(a / math.sqrt(1.0 + b * b)), method=Estimator.BINORMAL)


def estimate_auc(sample: ScoreSample, estimator: Estimator = Estimator.BINORMAL) -> float:
    estimator = Estimator(estimator)
    if estimator is Estimator.EMPIRICAL:
        return empirical_auc(sample)
    return binormal_auc(sample).value


def batch_auc(pos: np.ndarray, neg: np.ndarray, estimator: Estimator) -> np.ndarray:
    """Row-wise AUC for matrices of resampled positive/negative scores.

    Rows that are degenerate for the binormal estimator come back as NaN.
    """
    estimator = Estimator(estimator)
    m = pos.shape[1]
    n = neg.shape[1]
    if estimator is Estimator.EMPIRICAL:
        ranks = rankdata(np.concatenate([pos, neg], axis=1), axis=1)
        u = ranks[:, :m].sum(axis=1) - m * (m + 1) / 2.0
        return u / (m * n)
    m1 = pos.mean(axis=1)
    m0 = neg.mean(axis=1)
    s1 = pos.std(axis=1, ddof=1)
    s0 = neg.std(axis=1, ddof=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        # a / sqrt(1 + b^2) == (m1 - m0) / sqrt(s0^2 + s1^2)
        z = (m1 - m0) / np.sqrt(s0 * s0 + s1 * s1)
    out = 0.5 * erfc(-z / _SQRT2)
    out[np.ptp(pos, axis=1) == 0.0] = np.nan
    return out

