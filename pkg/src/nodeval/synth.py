"""Synthetic cohorts and caliper images with known ground truth.

Cohort model: for every nodule a shared latent ``u ~ N(0, 1)`` and, per
scoring source, independent noise ``e ~ N(0, 1)``. The continuous score is

    x = d * y + sqrt(rho) * u + sqrt(1 - rho) * e

so each class is N(0, 1) or N(d, 1) for every source and ``rho`` is the
between-source correlation. Readers' scores are cut into 1..5 at the
20/40/60/80% population quantiles of x; ``d`` is solved so that the
population AUC of the *discretized* score equals the requested AUC. The
model probability is ``sigmoid(x)`` with ``d = sqrt(2) * Phi^-1(auc)``.
"""

import json
import math
from dataclasses import asdict, dataclass, field
from functools import lru_cache
from typing import Dict, List, Tuple

import numpy as np
from scipy.optimize import brentq
from scipy.stats import norm

from nodeval.cohort import CaseRecord, Label, Scanner, Sex
from nodeval.preprocess import CaliperSet

# device counts out of 378 nodules
REFERENCE_SCANNER_COUNTS = {
    "LOGIQ_E9": 79, "LOGIQ_9": 1, "HDI3000": 4, "HDI5000": 64, "iU22": 218,
    "Sequoia": 1, "S2000": 5, "Z_ONE": 1, "MPTronic": 5,
}
REFERENCE_SCANNER_MIX = {k: v / 378 for k, v in REFERENCE_SCANNER_COUNTS.items()}
REFERENCE_AUCS = {"reader1": 0.63, "reader2": 0.66, "reader3": 0.65, "reader4": 0.63, "model": 0.69}
SOURCES = ("reader1", "reader2", "reader3", "reader4", "model")
CUT_QUANTILES = (0.2, 0.4, 0.6, 0.8)

# per class: P(female), age mean/sd, size mean/sd
_DEMOGRAPHICS = {
    0: (193 / 231, 54.38, 14.49, 2.3, 1.1),
    1: (111 / 147, 50.10, 14.65, 2.1, 1.2),
}


@dataclass(frozen=True)
class CohortSpec:
    n_benign: int = 231
    n_malignant: int = 147
    scanner_mix: Dict[str, float] = field(default_factory=lambda: dict(REFERENCE_SCANNER_MIX))
    aucs: Dict[str, float] = field(default_factory=lambda: dict(REFERENCE_AUCS))
    correlation: float = 0.95
    seed: int = 0

    def __post_init__(self):
        if self.n_benign < 0 or self.n_malignant < 0 or self.n_benign + self.n_malignant == 0:
            raise ValueError("class counts must be non-negative and not both zero")
        if abs(sum(self.scanner_mix.values()) - 1.0) > 1e-9:
            raise ValueError(f"scanner proportions sum to {sum(self.scanner_mix.values())}, not 1")
        for k in self.scanner_mix:
            Scanner(k)
        missing = [s for s in SOURCES if s not in self.aucs]
        if missing:
            raise ValueError(f"missing AUC for {missing}")
        for k, a in self.aucs.items():
            if not 0.0 < a < 1.0:
                raise ValueError(f"AUC for {k} must be in (0, 1), got {a}")
        if not 0.0 <= self.correlation < 1.0:
            raise ValueError("correlation must be in [0, 1)")

    @classmethod
    def from_json(cls, text: str) -> "CohortSpec":
        raw = json.loads(text)
        aucs = dict(REFERENCE_AUCS)
        aucs.update(raw.pop("aucs", {}))
        return cls(aucs=aucs, **raw)

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2)


def allocate(n: int, proportions: Dict[str, float]) -> Dict[str, int]:
    """Largest-remainder rounding of ``n * proportions``; ties broken by key order."""
    raw = {k: n * p for k, p in proportions.items()}
    counts = {k: int(math.floor(v)) for k, v in raw.items()}
    short = n - sum(counts.values())
    order = sorted(raw, key=lambda k: -(raw[k] - counts[k]))
    for k in order[:short]:
        counts[k] += 1
    return counts


def _mixture_quantiles(d: float, prevalence: float) -> np.ndarray:
    def cdf(c):
        return prevalence * norm.cdf(c - d) + (1 - prevalence) * norm.cdf(c)
    lo, hi = min(0.0, d) - 10.0, max(0.0, d) + 10.0
    return np.array([brentq(lambda c: cdf(c) - q, lo, hi, xtol=1e-13) for q in CUT_QUANTILES])


def discrete_auc(d: float, prevalence: float) -> float:
    """Population AUC (ties 1/2) of the 5-level score at separation ``d``."""
    edges = np.r_[-np.inf, _mixture_quantiles(d, prevalence), np.inf]
    p = np.diff(norm.cdf(edges))
    q = np.diff(norm.cdf(edges - d))
    below = np.cumsum(p) - p
    return float(np.sum(q * below) + 0.5 * np.sum(q * p))


@lru_cache(maxsize=256)
def reader_separation(auc: float, prevalence: float) -> float:
    lo, hi = discrete_auc(-8.0, prevalence), discrete_auc(8.0, prevalence)
    if not lo < auc < hi:
        raise ValueError(f"AUC {auc} not reachable with a 5-level score (range {lo:.4f}..{hi:.4f})")
    return brentq(lambda d: discrete_auc(d, prevalence) - auc, -8.0, 8.0, xtol=1e-12)


def model_separation(auc: float) -> float:
    return math.sqrt(2.0) * norm.ppf(auc)


def generate_cohort(spec: CohortSpec = CohortSpec()) -> List[CaseRecord]:
    rng = np.random.default_rng(spec.seed)
    n = spec.n_benign + spec.n_malignant
    prevalence = spec.n_malignant / n
    y = rng.permutation(np.r_[np.zeros(spec.n_benign, int), np.ones(spec.n_malignant, int)])
    scanners = []
    for k, c in allocate(n, spec.scanner_mix).items():
        scanners += [Scanner(k)] * c
    scanners = [scanners[i] for i in rng.permutation(n)]

    u = rng.normal(size=n)
    noise = {s: rng.normal(size=n) for s in SOURCES}
    shared = math.sqrt(spec.correlation)
    own = math.sqrt(1.0 - spec.correlation)

    scores = []
    for s in SOURCES[:4]:
        d = reader_separation(spec.aucs[s], prevalence)
        x = d * y + shared * u + own * noise[s]
        cuts = _mixture_quantiles(d, prevalence)
        scores.append(1 + np.searchsorted(cuts, x))
    d_model = model_separation(spec.aucs["model"])
    x_model = d_model * y + shared * u + own * noise["model"]
    prob = 1.0 / (1.0 + np.exp(-x_model))

    sex_u = rng.random(n)
    age_z = rng.normal(size=n)
    size_z = rng.normal(size=n)
    bethesda_u = rng.random(n)

    cases = []
    for i in range(n):
        cls = int(y[i])
        p_female, age_m, age_s, size_m, size_s = _DEMOGRAPHICS[cls]
        reader = tuple(int(r[i]) for r in scores)
        cases.append(CaseRecord(
            nodule_id=f"N{i + 1:04d}",
            label=Label.MALIGNANT if cls else Label.BENIGN,
            bethesda=(5 if bethesda_u[i] < 0.5 else 6) if cls else 2,
            scanner=scanners[i],
            patient_sex=Sex.F if sex_u[i] < p_female else Sex.M,
            patient_age=round(min(max(age_m + age_s * age_z[i], 18.0), 95.0), 1),
            max_nodule_size=round(max(size_m + size_s * size_z[i], 0.2), 1),
            reader_scores=reader,
            fna_recommendations=tuple(r >= 3 for r in reader),
            dl_probability=float(prob[i]),
        ))
    return cases


def cross_template(arm: int = 7) -> np.ndarray:
    size = 2 * arm + 1
    t = np.zeros((size, size), dtype=np.uint8)
    t[arm, :] = 255
    t[:, arm] = 255
    return t


def render_cross(image: np.ndarray, x: int, y: int, arm: int = 7) -> None:
    """Draw a 1-px '+' in place, clipped at the frame."""
    h, w = image.shape
    if 0 <= y < h:
        image[y, max(0, x - arm):min(w, x + arm + 1)] = 255
    if 0 <= x < w:
        image[max(0, y - arm):min(h, y + arm + 1), x] = 255


def speckle(width: int, height: int, rng: np.random.Generator) -> np.ndarray:
    return np.clip(rng.rayleigh(30.0, size=(height, width)), 0, 200).astype(np.uint8)


def generate_caliper_image(width: int = 400, height: int = 300, n_calipers: int = 4,
                           seed: int = 0, arm: int = 7, border: int = 8) -> Tuple[np.ndarray, CaliperSet]:
    """Speckle background with ``n_calipers`` cross markers at least ``border`` px from the edges."""
    if n_calipers not in (2, 4):
        raise ValueError("n_calipers must be 2 or 4")
    if border < arm or width - 2 * border < 1 or height - 2 * border < 1:
        raise ValueError("markers do not fit inside the frame")
    rng = np.random.default_rng(seed)
    image = speckle(width, height, rng)
    min_gap = 3 * (2 * arm + 1)
    points: List[Tuple[int, int]] = []
    for _ in range(10000):
        if len(points) == n_calipers:
            break
        x = int(rng.integers(border, width - border))
        y = int(rng.integers(border, height - border))
        if all(max(abs(x - px), abs(y - py)) >= min_gap for px, py in points):
            points.append((x, y))
    else:
        raise ValueError("could not place markers; frame too small")
    for x, y in points:
        render_cross(image, x, y, arm)
    return image, CaliperSet(tuple(points))
