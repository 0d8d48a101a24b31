import json
import math
from dataclasses import replace

import numpy as np
import pytest

from nodeval.cohort import CohortError, Scanner
from nodeval.report import (ALL, INSUFFICIENT, MODEL, READER_AVERAGE, SOURCES, EvalConfig, EvaluationReport,
                            emit, evaluate, format_auc_cell, format_p, reader_average, render_text,
                            source_scores)
from nodeval.synth import CohortSpec, generate_cohort

FAST = EvalConfig(replicates=200)


@pytest.fixture(scope="module")
def cohort():
    return generate_cohort(CohortSpec(seed=0))


@pytest.fixture(scope="module")
def report(cohort):
    return evaluate(cohort, FAST)


def test_auc_cell_anchor():
    assert format_auc_cell(0.694, 0.641, 0.748) == "0.69 (0.64-0.75)"


@pytest.mark.parametrize("x, text", [(0.125, "0.13"), (0.635, "0.64"), (0.5, "0.50"), (1.0, "1.00")])
def test_auc_cell_half_up(x, text):
    assert format_auc_cell(x, x, x) == f"{text} ({text}-{text})"


def test_p_formatting():
    assert format_p(1.0) == "1.0000"
    assert format_p(0.0001) == "0.0001"
    assert format_p(0.00009999) == "<0.0001"


def test_reader_average():
    assert reader_average((1, 2, 2, 4)) == 2.25


def test_grid_shape(report):
    keys = report.eligible_columns()
    assert keys[0] == ALL
    assert keys[1:] == [Scanner.HDI5000.value, Scanner.LOGIQ_E9.value, Scanner.IU22.value]
    assert list(report.auc) == list(SOURCES)
    for src in SOURCES:
        assert list(report.auc[src]) == keys
    assert list(report.paired_p) == keys
    assert len(report.kappa["pairs"]) == 6


def test_small_groups_skipped(report):
    skipped = {c["key"] for c in report.columns if c["status"] == INSUFFICIENT}
    assert skipped == {"LOGIQ_9", "HDI3000", "Sequoia", "S2000", "Z_ONE", "MPTronic"}


def test_scanner_pairs(report):
    pairs = list(report.scanner_p[MODEL])
    assert pairs == ["HDI5000 vs LOGIQ_E9", "HDI5000 vs iU22", "LOGIQ_E9 vs iU22"]
    for src in SOURCES:
        for cell in report.scanner_p[src].values():
            assert cell["test"] == "unpaired DeLong" and 0 <= cell["p"] <= 1


def test_cells_consistent(report):
    for src in SOURCES:
        for cell in report.auc[src].values():
            assert cell["flag"] is None
            assert cell["low"] <= cell["auc"] <= cell["high"]
            assert cell["text"] == format_auc_cell(cell["auc"], cell["low"], cell["high"])


def test_paired_p_is_one_when_model_equals_reader_average(cohort):
    twin = [replace(c, dl_probability=reader_average(c.reader_scores) / 5) for c in cohort]
    r = evaluate(twin, replace(FAST, group_by="none"))
    assert r.paired_p[ALL]["p"] == 1.0 and r.paired_p[ALL]["text"] == "1.0000"


def test_reader_average_uses_averaged_scores(cohort):
    scores = source_scores(cohort)
    expected = np.mean([scores[f"Radiologist {k}"] for k in range(1, 5)], axis=0)
    np.testing.assert_array_equal(scores[READER_AVERAGE], expected)


def test_group_by_none(cohort):
    r = evaluate(cohort, replace(FAST, group_by="none"))
    assert r.eligible_columns() == [ALL]
    assert all(cells == {} for cells in r.scanner_p.values())


def test_missing_probability_rejected(cohort):
    with pytest.raises(CohortError):
        evaluate([replace(cohort[0], dl_probability=None)] + list(cohort[1:]), FAST)


def test_workers_do_not_change_results(cohort, report):
    assert evaluate(cohort, replace(FAST, workers=4)).to_json() == report.to_json()


def test_json_round_trip(report):
    text = report.to_json()
    again = EvaluationReport.from_json(text)
    assert again.to_json() == text
    assert json.loads(text)["provenance"]["rng"] == "splitmix64-counter"


def test_roc_curves_present(report):
    for src in SOURCES:
        roc = report.roc[src]
        assert roc["fpr"][0] == 0 and roc["tpr"][-1] == 1 and roc["threshold"][0] is None


def test_text_output(report, tmp_path):
    text = render_text(report)
    for heading in ("Table 1", "Table 2", "Table 3", "Table 4", "Provenance", INSUFFICIENT):
        assert heading in text
    assert report.auc[MODEL][ALL]["text"] in text
    assert report.paired_p[ALL]["text"] in text
    emit(report, tmp_path / "r.txt", "text")
    assert (tmp_path / "r.txt").read_text() == text


def test_csv_bundle(report, tmp_path):
    written = emit(report, tmp_path / "bundle", "csv")
    assert len(written) == 10
    table2 = (tmp_path / "bundle" / "table2_auc.csv").read_text().splitlines()
    assert len(table2) == 1 + 6 + 1
    assert report.auc[MODEL][ALL]["text"] in table2[6]
    kappa = (tmp_path / "bundle" / "table4_kappa.csv").read_text().splitlines()
    assert kappa[1].split(",") == [v["text"] for v in report.kappa["pairs"].values()]
    roc = (tmp_path / "bundle" / "roc_deep_learning.csv").read_text().splitlines()
    assert roc[0] == "fpr,tpr,threshold" and roc[1].endswith(",inf")


def test_unknown_format(report, tmp_path):
    with pytest.raises(ValueError):
        emit(report, tmp_path / "x", "xml")


def test_config_validation():
    with pytest.raises(ValueError):
        EvalConfig(group_by="sex")
    with pytest.raises(ValueError):
        EvalConfig(level=1.0)


def test_kappa_texts(report):
    for pair in report.kappa["pairs"].values():
        assert math.isclose(float(pair["text"]), pair["kappa"], abs_tol=5e-5)
    assert report.kappa["mapping"] == {"1": 1, "2": 2, "3": 2, "4": 3, "5": 4}
