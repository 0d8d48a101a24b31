"""Reader-vs-model evaluation toolkit for thyroid nodule malignancy scoring.

Covers ROC/AUC estimation (empirical and binormal), DeLong tests, stratified
bootstrap intervals, Cohen's kappa, caliper-driven image cropping and a small
numpy CNN used to produce per-nodule malignancy probabilities.
"""

__version__ = "0.1.0"


class DegenerateError(ValueError):
    """A statistic is not estimable on the given data (e.g. single class)."""
