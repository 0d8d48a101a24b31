"""Reader-vs-model evaluation and table rendering (JSON, CSV bundle, text)."""

import csv
import io
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from decimal import ROUND_HALF_UP, Decimal
from itertools import combinations
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from nodeval import DegenerateError, __version__
from nodeval.agreement import LIKERT, RatingVector, collapse_categories, kappa_matrix, merge_mapping
from nodeval.cohort import CaseRecord, CohortError, CohortSummary, Scanner, summarize
from nodeval.rocstats import Estimator, ScoreSample, estimate_auc, roc_points
from nodeval.significance import (RNG_NAME, delong_paired_test, delong_unpaired_test,
                                  stratified_bootstrap_ci)

SOURCES = ("Radiologist 1", "Radiologist 2", "Radiologist 3", "Radiologist 4",
           "Radiologist Average", "Deep Learning")
READER_AVERAGE = "Radiologist Average"
MODEL = "Deep Learning"
ALL = "All"
INSUFFICIENT = "insufficient n"


@dataclass(frozen=True)
class EvalConfig:
    replicates: int = 2000
    level: float = 0.95
    estimator: Estimator = Estimator.BINORMAL
    seed: int = 42
    group_by: str = "scanner"
    min_group: int = 10
    merge: Tuple[Tuple[int, int], ...] = ((3, 2),)
    workers: int = 1

    def __post_init__(self):
        object.__setattr__(self, "estimator", Estimator(self.estimator))
        if self.group_by not in ("scanner", "none"):
            raise ValueError(f"group_by must be 'scanner' or 'none', got {self.group_by!r}")
        if self.replicates < 1 or not 0 < self.level < 1 or self.min_group < 1:
            raise ValueError("replicates and min_group must be positive, level in (0, 1)")


def reader_average(scores: Sequence[int]) -> float:
    return math.fsum(scores) / len(scores)


def _half_up(x: float, places: int) -> str:
    q = Decimal(1).scaleb(-places)
    return str(Decimal(repr(float(x))).quantize(q, rounding=ROUND_HALF_UP))


def format_auc_cell(point: float, low: float, high: float) -> str:
    """``P.PP (L.LL-H.HH)`` with half-up rounding of the shortest decimal repr."""
    return f"{_half_up(point, 2)} ({_half_up(low, 2)}-{_half_up(high, 2)})"


def format_p(p: float) -> str:
    if p < 0.0001:
        return "<0.0001"
    return _half_up(p, 4)


def source_scores(cohort: Sequence[CaseRecord]) -> Dict[str, np.ndarray]:
    out = {f"Radiologist {k + 1}": np.array([c.reader_scores[k] for c in cohort], dtype=float)
           for k in range(4)}
    out[READER_AVERAGE] = np.array([reader_average(c.reader_scores) for c in cohort])
    out[MODEL] = np.array([c.dl_probability for c in cohort], dtype=float)
    return out


@dataclass
class EvaluationReport:
    provenance: dict
    summary: dict
    columns: List[dict]
    auc: Dict[str, Dict[str, dict]]
    paired_p: Dict[str, dict]
    scanner_p: Dict[str, Dict[str, dict]]
    kappa: dict
    roc: Dict[str, dict] = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, allow_nan=False) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "EvaluationReport":
        return cls(**json.loads(text))

    def eligible_columns(self) -> List[str]:
        return [c["key"] for c in self.columns if c["status"] == "ok"]


def _clean(x: float) -> Optional[float]:
    return None if x is None or (isinstance(x, float) and math.isnan(x)) else float(x)


def summary_dict(s: CohortSummary) -> dict:
    out = {}
    for name, g in asdict(s).items():
        out[name] = {k: (_clean(v) if isinstance(v, float) else v) for k, v in g.items()}
        if g["n"]:
            out[name]["age_text"] = f"{_half_up(g['age_mean'], 2)} ± {_half_up(g['age_sd'], 2)}"
            out[name]["size_text"] = f"{_half_up(g['size_mean'], 1)} ± {_half_up(g['size_sd'], 1)}"
    return out


def evaluate_kappa(cohort: Sequence[CaseRecord], merge=((3, 2),)) -> dict:
    """Pairwise reader kappas after collapsing the 1..5 scale with ``merge`` rules."""
    mapping = merge_mapping(LIKERT, merge)
    readers = [collapse_categories(RatingVector(tuple(c.reader_scores[k] for c in cohort)), mapping)
               for k in range(4)]
    out = {"merge": [list(m) for m in merge], "mapping": {str(k): v for k, v in mapping.items()},
           "pairs": {}}
    for (i, j), r in kappa_matrix(readers).items():
        out["pairs"][f"R{i + 1} vs R{j + 1}"] = {
            "kappa": r.kappa, "observed": r.observed, "expected": r.expected,
            "text": _half_up(r.kappa, 4), "degenerate": r.degenerate}
    return out


def _auc_cell(sample: ScoreSample, cfg: EvalConfig) -> dict:
    try:
        point = estimate_auc(sample, cfg.estimator)
        ci = stratified_bootstrap_ci(sample, cfg.estimator, cfg.replicates, cfg.level, cfg.seed)
    except DegenerateError as exc:
        return {"auc": None, "low": None, "high": None, "text": "n/a", "flag": f"unestimable: {exc}"}
    flag = None if ci.low <= point <= ci.high else "ci_excludes_point"
    return {"auc": point, "low": ci.low, "high": ci.high,
            "text": format_auc_cell(point, ci.low, ci.high), "flag": flag,
            "redrawn": ci.redrawn}


def _test_cell(test, a: ScoreSample, b: ScoreSample, name: str) -> dict:
    try:
        r = test(a, b)
    except DegenerateError as exc:
        return {"p": None, "z": None, "text": "n/a", "test": name, "flag": f"degenerate: {exc}"}
    return {"p": r.p, "z": r.z, "auc_a": r.auc_a, "auc_b": r.auc_b, "text": format_p(r.p),
            "test": name, "flag": None}


def _columns(cohort: Sequence[CaseRecord], cfg: EvalConfig):
    cols = [(ALL, list(range(len(cohort))))]
    if cfg.group_by == "scanner":
        for s in Scanner:
            idx = [i for i, c in enumerate(cohort) if c.scanner is s]
            if idx:
                cols.append((s.value, idx))
    return cols


def evaluate(cohort: Sequence[CaseRecord], cfg: EvalConfig = EvalConfig()) -> EvaluationReport:
    """Full reader-vs-model comparison on a cohort with model probabilities."""
    if not cohort:
        raise CohortError("empty cohort")
    missing = [c.nodule_id for c in cohort if c.dl_probability is None]
    if missing:
        raise CohortError(f"{len(missing)} case(s) lack a model probability, e.g. {missing[:3]}")
    labels = np.array([c.y for c in cohort])
    ScoreSample(labels, labels).require(2)
    scores = source_scores(cohort)

    columns = []
    eligible = {}
    for key, idx in _columns(cohort, cfg):
        y = labels[idx]
        status = "ok" if key == ALL or len(idx) >= cfg.min_group else INSUFFICIENT
        columns.append({"key": key, "n": len(idx), "n_benign": int((y == 0).sum()),
                        "n_malignant": int((y == 1).sum()), "status": status})
        if status == "ok":
            eligible[key] = np.asarray(idx)

    def sample(src, key):
        idx = eligible[key]
        return ScoreSample(labels[idx], scores[src][idx])

    tasks = [(src, key) for src in SOURCES for key in eligible]
    with ThreadPoolExecutor(max_workers=max(1, cfg.workers)) as pool:
        cells = list(pool.map(lambda t: _auc_cell(sample(*t), cfg), tasks))
    auc = {src: {} for src in SOURCES}
    for (src, key), cell in zip(tasks, cells):
        auc[src][key] = cell

    paired = {key: _test_cell(delong_paired_test, sample(READER_AVERAGE, key), sample(MODEL, key),
                              "paired DeLong")
              for key in eligible}

    groups = [k for k in eligible if k != ALL]
    scanner_p = {src: {f"{a} vs {b}": _test_cell(delong_unpaired_test, sample(src, a), sample(src, b),
                                                 "unpaired DeLong")
                       for a, b in combinations(groups, 2)}
                 for src in SOURCES}

    kappa = evaluate_kappa(cohort, cfg.merge)

    roc = {}
    for src in SOURCES:
        curve = roc_points(ScoreSample(labels, scores[src]))
        roc[src] = {"fpr": curve.fpr.tolist(), "tpr": curve.tpr.tolist(),
                    "threshold": [None if math.isinf(t) else float(t) for t in curve.thresholds]}

    provenance = {
        "software": f"nodeval {__version__}",
        "seed": cfg.seed, "replicates": cfg.replicates, "level": cfg.level,
        "estimator": cfg.estimator.value, "ci_method": "percentile, stratified bootstrap",
        "rng": RNG_NAME, "group_by": cfg.group_by, "min_group": cfg.min_group,
        "paired_test": "DeLong paired (Radiologist Average vs Deep Learning)",
        "scanner_test": "DeLong unpaired (disjoint case sets)",
        "n_cases": len(cohort),
    }
    return EvaluationReport(provenance=provenance, summary=summary_dict(summarize(cohort)),
                            columns=columns, auc=auc, paired_p=paired, scanner_p=scanner_p,
                            kappa=kappa, roc=roc)


# ---------------------------------------------------------------- rendering

def _table1(r: EvaluationReport) -> List[List[str]]:
    s = r.summary
    cols = ("all", "benign", "malignant")
    rows = [["Characteristic", "All Nodules", "Benign Nodules", "Malignant Nodules"],
            ["Number of Nodules"] + [str(s[c]["n"]) for c in cols],
            ["Number of Nodules in Female Patients"] + [str(s[c]["n_female"]) for c in cols],
            ["Number of Nodules in Male Patients"] + [str(s[c]["n_male"]) for c in cols],
            ["Mean Age of Patients"] + [s[c].get("age_text", "n/a") for c in cols],
            ["Maximum Nodule Size (cm) (± std. dev.)"] + [s[c].get("size_text", "n/a") for c in cols]]
    return rows


def _column_title(col: dict) -> str:
    title = "All Images Combined" if col["key"] == ALL else col["key"]
    return f"{title} ({col['n']} cases)"


def _table2(r: EvaluationReport) -> List[List[str]]:
    cols = [c for c in r.columns if c["status"] == "ok"]
    rows = [["Source"] + [_column_title(c) for c in cols]]
    for src in SOURCES:
        rows.append([src] + [r.auc[src][c["key"]]["text"] for c in cols])
    rows.append(["p-value Between Radiologist Average and Deep Learning"]
                + [r.paired_p[c["key"]]["text"] for c in cols])
    return rows


def _table3(r: EvaluationReport) -> List[List[str]]:
    pairs = list(next(iter(r.scanner_p.values())).keys()) if r.scanner_p else []
    rows = [["p value Between Different Scanners (unpaired DeLong)"] + pairs]
    for src in SOURCES:
        rows.append([src] + [r.scanner_p[src][p]["text"] for p in pairs])
    return rows


def _table4(r: EvaluationReport) -> List[List[str]]:
    pairs = list(r.kappa["pairs"])
    return [pairs, [r.kappa["pairs"][p]["text"] for p in pairs]]


TABLES = (("table1_summary", "Table 1: Cohort statistics", _table1),
          ("table2_auc", "Table 2: AUC (95% CI) by image group", _table2),
          ("table3_scanner_p", "Table 3: p-values between scanners", _table3),
          ("table4_kappa", "Table 4: Cohen's kappa between readers", _table4))


def slug(name: str) -> str:
    return name.lower().replace(" ", "_")


def csv_text(rows) -> str:
    buf = io.StringIO()
    csv.writer(buf, lineterminator="\n").writerows(rows)
    return buf.getvalue()


def roc_csv(r: EvaluationReport, src: str) -> str:
    c = r.roc[src]
    rows = [["fpr", "tpr", "threshold"]]
    for f, t, th in zip(c["fpr"], c["tpr"], c["threshold"]):
        rows.append([repr(f), repr(t), "inf" if th is None else repr(th)])
    return csv_text(rows)


def _aligned(rows: List[List[str]]) -> str:
    widths = [max(len(row[i]) for row in rows) for i in range(len(rows[0]))]
    return "\n".join("  ".join(cell.ljust(w) for cell, w in zip(row, widths)).rstrip() for row in rows)


def render_text(r: EvaluationReport) -> str:
    parts = []
    for _, title, fn in TABLES:
        parts.append(f"{title}\n{_aligned(fn(r))}")
    skipped = [c for c in r.columns if c["status"] != "ok"]
    if skipped:
        parts.append("Groups not analyzed (" + INSUFFICIENT + "): "
                     + ", ".join(f"{c['key']} (n={c['n']})" for c in skipped))
    flagged = [f"{src} / {key}: {cell['flag']}" for src in SOURCES
               for key, cell in r.auc[src].items() if cell.get("flag")]
    if flagged:
        parts.append("Flagged cells:\n" + "\n".join(flagged))
    mapping = ", ".join(f"{k}->{v}" for k, v in r.kappa["mapping"].items())
    parts.append(f"Kappa categories collapsed as {mapping}")
    prov = "\n".join(f"  {k}: {v}" for k, v in r.provenance.items())
    parts.append(f"Provenance\n{prov}")
    return "\n\n".join(parts) + "\n"


def emit(report: EvaluationReport, out, fmt: str = "json") -> List[Path]:
    """Write the report; ``csv`` treats ``out`` as a directory. Returns written paths."""
    out = Path(out)
    if fmt == "json":
        out.write_text(report.to_json(), encoding="utf-8")
        return [out]
    if fmt == "text":
        out.write_text(render_text(report), encoding="utf-8")
        return [out]
    if fmt == "csv":
        out.mkdir(parents=True, exist_ok=True)
        written = []
        for name, _, fn in TABLES:
            p = out / f"{name}.csv"
            p.write_text(csv_text(fn(report)), encoding="utf-8")
            written.append(p)
        for src in SOURCES:
            p = out / f"roc_{slug(src)}.csv"
            p.write_text(roc_csv(report, src), encoding="utf-8")
            written.append(p)
        return written
    raise ValueError(f"unknown format {fmt!r}")
