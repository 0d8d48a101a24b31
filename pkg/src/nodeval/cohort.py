"""Nodule-level cohort records, CSV ingestion and summary statistics."""

import csv
import math
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

COLUMNS = ("nodule_id", "label", "bethesda", "scanner", "sex", "age", "size_cm",
           "r1", "r2", "r3", "r4", "r1_fna", "r2_fna", "r3_fna", "r4_fna", "dl_prob")


class CohortError(ValueError):
    """Invalid cohort data; message names the offending row/column."""


class Label(str, Enum):
    BENIGN = "benign"
    MALIGNANT = "malignant"


class Scanner(str, Enum):
    HDI5000 = "HDI5000"
    LOGIQ_E9 = "LOGIQ_E9"
    LOGIQ_9 = "LOGIQ_9"
    IU22 = "iU22"
    HDI3000 = "HDI3000"
    SEQUOIA = "Sequoia"
    S2000 = "S2000"
    Z_ONE = "Z_ONE"
    MPTRONIC = "MPTronic"
    OTHER = "Other"

    @classmethod
    def parse(cls, text: str) -> "Scanner":
        try:
            return cls(text)
        except ValueError:
            return cls.OTHER


class Sex(str, Enum):
    F = "F"
    M = "M"


@dataclass(frozen=True)
class CaseRecord:
    nodule_id: str
    label: Label
    bethesda: int
    scanner: Scanner
    patient_sex: Sex
    patient_age: float
    max_nodule_size: float
    reader_scores: Tuple[int, int, int, int]
    fna_recommendations: Tuple[bool, bool, bool, bool]
    dl_probability: Optional[float] = None

    def __post_init__(self):
        if self.label is Label.BENIGN and self.bethesda != 2:
            raise ValueError(f"benign nodule must be Bethesda 2, got {self.bethesda}")
        if self.label is Label.MALIGNANT and self.bethesda not in (5, 6):
            raise ValueError(f"malignant nodule must be Bethesda 5 or 6, got {self.bethesda}")
        if len(self.reader_scores) != 4 or any(s not in (1, 2, 3, 4, 5) for s in self.reader_scores):
            raise ValueError(f"reader scores must be four integers in 1..5, got {self.reader_scores}")
        if len(self.fna_recommendations) != 4:
            raise ValueError("need four FNA recommendations")
        if self.max_nodule_size < 0:
            raise ValueError("nodule size must be non-negative")
        p = self.dl_probability
        if p is not None and not 0.0 <= p <= 1.0:
            raise ValueError(f"dl_probability {p} outside [0, 1]")

    @property
    def y(self) -> int:
        return int(self.label is Label.MALIGNANT)


@dataclass(frozen=True)
class GroupSummary:
    n: int
    n_female: int
    n_male: int
    age_mean: float
    age_sd: float
    size_mean: float
    size_sd: float


@dataclass(frozen=True)
class CohortSummary:
    all: GroupSummary
    benign: GroupSummary
    malignant: GroupSummary


def _parse_row(row: Dict[str, str], lineno: int) -> CaseRecord:
    def field(name, conv):
        raw = row[name]
        try:
            return conv(raw.strip())
        except (ValueError, KeyError) as exc:
            raise CohortError(f"row {lineno}, column {name!r}: cannot parse {raw!r} ({exc})") from None

    def score(name):
        v = field(name, int)
        if v not in (1, 2, 3, 4, 5):
            raise CohortError(f"row {lineno}, column {name!r}: reader score {v} outside 1..5")
        return v

    def flag(name):
        v = field(name, int)
        if v not in (0, 1):
            raise CohortError(f"row {lineno}, column {name!r}: FNA flag must be 0 or 1, got {v}")
        return bool(v)

    def prob(raw):
        return None if raw == "" else float(raw)

    nodule_id = row["nodule_id"].strip()
    if not nodule_id:
        raise CohortError(f"row {lineno}, column 'nodule_id': empty id")
    try:
        return CaseRecord(
            nodule_id=nodule_id,
            label=field("label", lambda s: Label(s.lower())),
            bethesda=field("bethesda", int),
            scanner=Scanner.parse(row["scanner"].strip()),
            patient_sex=field("sex", lambda s: Sex(s.upper())),
            patient_age=field("age", float),
            max_nodule_size=field("size_cm", float),
            reader_scores=tuple(score(f"r{k}") for k in range(1, 5)),
            fna_recommendations=tuple(flag(f"r{k}_fna") for k in range(1, 5)),
            dl_probability=field("dl_prob", prob),
        )
    except CohortError:
        raise
    except ValueError as exc:
        raise CohortError(f"row {lineno}: {exc}") from None


def load_cohort(path) -> List[CaseRecord]:
    """Read a cohort CSV; rows are numbered from 2 (the header is row 1)."""
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        header = tuple(reader.fieldnames or ())
        missing = [c for c in COLUMNS if c not in header]
        if missing:
            raise CohortError(f"{path}: missing column(s) {', '.join(missing)}")
        extra = [c for c in header if c not in COLUMNS]
        if extra:
            raise CohortError(f"{path}: unexpected column(s) {', '.join(extra)}")
        records = []
        seen = {}
        for lineno, row in enumerate(reader, start=2):
            if None in row or any(v is None for v in row.values()):
                raise CohortError(f"row {lineno}: wrong number of fields")
            rec = _parse_row(row, lineno)
            if rec.nodule_id in seen:
                raise CohortError(
                    f"row {lineno}, column 'nodule_id': duplicate id {rec.nodule_id!r} (first at row {seen[rec.nodule_id]})")
            seen[rec.nodule_id] = lineno
            records.append(rec)
    return records


def _fmt_float(x: float) -> str:
    return repr(float(x))


def save_cohort(cohort: Iterable[CaseRecord], path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(COLUMNS)
        for c in cohort:
            w.writerow([
                c.nodule_id, c.label.value, c.bethesda, c.scanner.value, c.patient_sex.value,
                _fmt_float(c.patient_age), _fmt_float(c.max_nodule_size),
                *c.reader_scores, *(int(f) for f in c.fna_recommendations),
                "" if c.dl_probability is None else _fmt_float(c.dl_probability),
            ])


def _mean_sd(values: Sequence[float]) -> Tuple[float, float]:
    n = len(values)
    mean = math.fsum(values) / n
    if n == 1:
        return mean, 0.0
    return mean, math.sqrt(math.fsum((v - mean) ** 2 for v in values) / (n - 1))


def _group(cases: Sequence[CaseRecord]) -> GroupSummary:
    if not cases:
        return GroupSummary(0, 0, 0, math.nan, math.nan, math.nan, math.nan)
    age_mean, age_sd = _mean_sd([c.patient_age for c in cases])
    size_mean, size_sd = _mean_sd([c.max_nodule_size for c in cases])
    n_female = sum(c.patient_sex is Sex.F for c in cases)
    return GroupSummary(len(cases), n_female, len(cases) - n_female, age_mean, age_sd, size_mean, size_sd)


def summarize(cohort: Sequence[CaseRecord]) -> CohortSummary:
    """All/benign/malignant summary: counts by sex, mean and sample sd (n-1) of age and size."""
    if not cohort:
        raise CohortError("cannot summarize an empty cohort")
    return CohortSummary(
        all=_group(cohort),
        benign=_group([c for c in cohort if c.label is Label.BENIGN]),
        malignant=_group([c for c in cohort if c.label is Label.MALIGNANT]),
    )


def stratify(cohort: Sequence[CaseRecord], key: str = "scanner") -> Dict[Enum, List[CaseRecord]]:
    """Partition by ``scanner`` or ``label``; groups appear in first-seen order."""
    if key not in ("scanner", "label"):
        raise ValueError(f"cannot stratify by {key!r}")
    groups: Dict[Enum, List[CaseRecord]] = {}
    for c in cohort:
        groups.setdefault(getattr(c, key), []).append(c)
    return groups
