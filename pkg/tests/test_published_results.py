"""
Acceptance tests: published multi-seed summaries for the English CoNLL-2003
corpus with bert-large-cased (five seeds per cell) fed through the statistics
and report builders must reproduce the published derived numbers.
"""

import os
import sys

import pytest

sys.path.append(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from fine_tuning.managers.report_manager import CellSummary, main_table, max_table, ratio_table, stability_table
from fine_tuning.stats import (
    EffortInputs, Summary, average_relative_uncertainty, convergence_threshold, effort_ratio,
    global_average_relative_uncertainty, parse_parenthesis,
)

CORPUS = "conll03-bert-large"
X_GRID = (0.005, 0.01, 0.015, 0.02, 0.05, 0.1, 0.2, 0.4, 0.6, 0.8, 1.0)

# x -> (original, stable, adaptive); None marks cells where not all runs converged
PUBLISHED_F1 = {
    0.005: (None, "0.3267(249)", "0.6112(97)"),
    0.01: (None, "0.6080(87)", "0.7566(44)"),
    0.015: ("0.0762(256)", "0.7483(95)", "0.8145(12)"),
    0.02: ("0.3377(295)", "0.8270(28)", "0.8389(28)"),
    0.05: ("0.7846(116)", "0.8804(17)", "0.8838(14)"),
    0.1: ("0.8801(22)", "0.8937(12)", "0.8942(1)"),
    0.2: ("0.9000(8)", "0.9066(2)", "0.9063(4)"),
    0.4: ("0.9096(7)", "0.9118(11)", "0.9111(6)"),
    0.6: ("0.9136(9)", "0.9157(7)", "0.9155(9)"),
    0.8: ("0.9169(5)", "0.9202(4)", "0.9201(4)"),
    1.0: ("0.9175(5)", "0.9195(7)", "0.9214(8)"),
}
ORIGINAL_CV = {0.005: 0, 0.01: 2}
ADAPTIVE_EPOCHS = {
    0.005: "49.4(1.9)", 0.01: "35.2(3.0)", 0.015: "25.2(1.1)", 0.02: "22.6(7)", 0.05: "17.6(1.2)",
    0.1: "15.4(7)", 0.2: "13.4(9)", 0.4: "11.2(2)", 0.6: "11.6(5)", 0.8: "11.4(4)", 1.0: "11.2(2)",
}
FIXED_EPOCHS = {"original": 5.0, "stable": 20.0}

# x -> (f1 adaptive/stable, N adaptive/stable, f1 adaptive/original, N adaptive/original)
PUBLISHED_RATIOS = {
    0.005: (1.871, 2.47, None, None),
    0.01: (1.244, 1.76, None, None),
    0.015: (1.088, 1.26, 10.689, 5.04),
    0.02: (1.014, 1.13, 2.484, 4.52),
    0.05: (1.004, 0.88, 1.126, 3.52),
    0.1: (1.001, 0.77, 1.016, 3.08),
    0.2: (1.000, 0.67, 1.007, 2.68),
    0.4: (0.999, 0.56, 1.002, 2.24),
    0.6: (1.000, 0.58, 1.002, 2.32),
    0.8: (1.000, 0.57, 1.003, 2.28),
    1.0: (1.002, 0.56, 1.004, 2.24),
}

PUBLISHED_STABILITY = {"original": 0.0494, "stable": 0.0025, "adaptive": 0.0012}
STABILITY_COLUMNS = {
    "original": ([0.0494, 0.0436, 0.0060, 0.0361, 0.0756], 0.0421),
    "stable": ([0.0025, 0.0014, 0.0024, 0.0034, 0.0045], 0.0028),
    "adaptive": ([0.0012, 0.0014, 0.0023, 0.0035, 0.0048], 0.0026),
}
DISPLAY_TOLERANCE = 2e-4


def _summary(text):
    mean, delta, _ = parse_parenthesis(text)
    return Summary.from_delta(mean, delta)


@pytest.fixture(scope="module")
def published_cells():
    cells = {}
    for x, row in PUBLISHED_F1.items():
        for label, text in zip(("original", "stable", "adaptive"), row):
            cv = ORIGINAL_CV.get(x, 5) if label == "original" else 5
            f1 = _summary(text) if text else None
            if label == "adaptive":
                epochs = _summary(ADAPTIVE_EPOCHS[x])
            else:
                epochs = Summary.from_delta(FIXED_EPOCHS[label], 0.0) if cv else None
            cells[(CORPUS, label, x)] = CellSummary.published(CORPUS, label, x, f1, epochs, cv)
    return cells


class TestStability:

    def test_convergence_threshold(self, published_cells):
        cv_table = {(label, x): cell.cv for (_, label, x), cell in published_cells.items()}
        assert convergence_threshold(cv_table, 5) == 0.015

    @pytest.mark.parametrize("label", ["original", "stable", "adaptive"])
    def test_average_relative_uncertainty(self, published_cells, label):
        summaries = {x: published_cells[(CORPUS, label, x)].f1 for x in X_GRID}
        u = average_relative_uncertainty(summaries, 0.015)
        assert u == pytest.approx(PUBLISHED_STABILITY[label], abs=DISPLAY_TOLERANCE)

    def test_stability_table_row(self, published_cells):
        table = stability_table(published_cells)
        row = [cell.text for cell in table.rows[0]]
        assert row[:2] == [CORPUS, "0.015"]
        for text, label in zip(row[2:], ("original", "stable", "adaptive")):
            assert float(text) == pytest.approx(PUBLISHED_STABILITY[label], abs=DISPLAY_TOLERANCE)
        assert table.rows[-1][0].text == "glob."

    @pytest.mark.parametrize("label", ["original", "stable", "adaptive"])
    def test_global_average(self, label):
        column, expected = STABILITY_COLUMNS[label]
        assert global_average_relative_uncertainty(column) == pytest.approx(expected, abs=DISPLAY_TOLERANCE)


class TestRatios:

    def test_central_values(self, published_cells):
        table = ratio_table(published_cells)
        assert table.headers == ["corpus", "x", "f1 adaptive/stable", "N adaptive/stable",
                                 "f1 adaptive/original", "N adaptive/original"]
        for row in table.rows:
            x = float(row[1].text)
            for cell, expected, decimals in zip(row[2:], PUBLISHED_RATIOS[x], (3, 2, 3, 2)):
                if expected is None:
                    assert cell.text == "---"
                else:
                    mean, _, shown = parse_parenthesis(cell.text)
                    assert shown == decimals
                    assert mean == pytest.approx(expected, abs=1e-9), (x, cell.text)

    def test_uncertainty_at_full_scale(self, published_cells):
        table = ratio_table(published_cells)
        full = next(row for row in table.rows if row[1].text == "1")
        assert full[2].text == "1.002(1)"

    def test_effort_column(self, published_cells):
        alpha = effort_ratio(EffortInputs(14041, 3250, 1.0, (1.0,))).alpha
        table = ratio_table(published_cells, alphas={CORPUS: alpha})
        full = next(row for row in table.rows if row[1].text == "1")
        mean, _, _ = parse_parenthesis(full[4].text)
        assert mean == pytest.approx(0.62, abs=0.01)


class TestMainTable:

    def test_significance_bolding(self, published_cells):
        table = main_table(published_cells)
        f1_index = table.headers.index("adaptive f1")
        bold_x = {float(row[1].text) for row in table.rows if row[f1_index].bold}
        assert bold_x == {0.005, 0.01, 0.015, 0.02, 0.05, 1.0}
        for label in ("original", "stable"):
            index = table.headers.index(f"{label} f1")
            assert not any(row[index].bold for row in table.rows)

    def test_notation_round_trip(self, published_cells):
        table = main_table(published_cells)
        assert table.column("adaptive f1")[0] == "0.6112(97)"
        assert table.column("adaptive N_epochs")[0] == "49.4(1.9)"
        assert table.column("original f1")[:2] == ["---", "---"]
        assert table.column("original cv")[:3] == ["0", "2", "5"]


class TestEffortFactors:

    @pytest.mark.parametrize("n_train,n_val,expected", [
        (14041, 3250, 1.12),
        (1000, 420, 1.21),
        (1000, 120, 1.06),
        (1000, 240, 1.12),
    ])
    def test_alpha(self, n_train, n_val, expected):
        assert round(effort_ratio(EffortInputs(n_train, n_val, 1.0, (1.0,))).alpha, 2) == expected


# x -> best-validation test f1 (original, stable, adaptive), then (adaptive/original, adaptive/stable)
PUBLISHED_MAX = {
    0.005: ((None, 0.3591, 0.6522), ("---", "1.816")),
    0.01: ((None, 0.6292, 0.7594), ("---", "1.207")),
    0.015: ((0.1764, 0.7759, 0.8197), ("4.647", "1.056")),
    0.02: ((0.4463, 0.8179, 0.8428), ("1.888", "1.030")),
    0.05: ((0.8189, 0.8858, 0.8870), ("1.083", "1.001")),
    0.1: ((0.8808, 0.8964, 0.8916), ("1.012", "0.995")),
    0.2: ((0.9022, 0.9063, 0.9072), ("1.006", "1.001")),
    0.4: ((0.9079, 0.9129, 0.9091), ("1.001", "0.996")),
    0.6: ((0.9126, 0.9154, 0.9161), ("1.004", "1.001")),
    0.8: ((0.9177, 0.9199, 0.9197), ("1.002", "1.000")),
    1.0: ((0.9165, 0.9210, 0.9210), ("1.005", "1.000")),
}
PUBLISHED_MAX_BOLD = {
    0.005: "adaptive", 0.01: "adaptive", 0.015: "adaptive", 0.02: "adaptive", 0.05: "adaptive",
    0.1: "stable", 0.2: "adaptive", 0.4: "stable", 0.6: "adaptive", 0.8: "stable", 1.0: None,
}


@pytest.fixture(scope="module")
def best_run_cells():
    cells = {}
    for x, (values, _) in PUBLISHED_MAX.items():
        for label, value in zip(("original", "stable", "adaptive"), values):
            cells[(CORPUS, label, x)] = CellSummary(CORPUS, label, x, n_runs=5, cv=5 if value else 0,
                                                    f1=None, n_epochs=None, max_f1=value)
    return cells


class TestMaxTable:

    def test_values_and_ratios(self, best_run_cells):
        table = max_table(best_run_cells)
        assert table.headers[-2:] == ["f1_max adaptive/original", "f1_max adaptive/stable"]
        for row in table.rows:
            x = float(row[1].text)
            values, ratios = PUBLISHED_MAX[x]
            shown = tuple(None if cell.text == "---" else float(cell.text) for cell in row[2:5])
            assert shown == values
            assert tuple(cell.text for cell in row[5:]) == ratios

    def test_unique_row_maximum_is_bold(self, best_run_cells):
        table = max_table(best_run_cells)
        labels = ("original", "stable", "adaptive")
        for row in table.rows:
            bold = [label for label, cell in zip(labels, row[2:5]) if cell.bold]
            expected = PUBLISHED_MAX_BOLD[float(row[1].text)]
            assert bold == ([expected] if expected else [])
            assert not any(cell.bold for cell in row[5:])
