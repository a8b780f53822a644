"""
Aggregation of run records into (corpus, approach, x) cells and the report
tables built from them. Table builders take cells, so published summaries can
be fed through them as well as fresh results.
"""

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Callable, Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

from ..stats import (
    EffortInputs, FitError, FitPoint, Summary, average_relative_uncertainty, convergence_count,
    convergence_threshold, effort_ratio, fit_quadratic, format_parenthesis, format_rounded,
    global_average_relative_uncertainty, is_significant, mean_epochs_over_converged,
    ratio_with_uncertainty, summarize,
)
from ..experiment import RunResult
from .base_manager import BaseManager

CANONICAL_ORDER = ("original", "stable", "adaptive")
MISSING = "n/a"
NOT_CONVERGED = "---"
F1_DECIMALS = 4
EPOCH_DECIMALS = 1
F1_RATIO_DECIMALS = 3
EPOCH_RATIO_DECIMALS = 2

CellKey = Tuple[str, str, float]


@dataclass
class CellSummary:
    corpus_id: str
    label: str
    x: float
    n_runs: int
    cv: int
    f1: Optional[Summary]
    n_epochs: Optional[Summary]
    max_f1: Optional[float] = None
    curves: Dict[int, List[Optional[float]]] = field(default_factory=dict)

    @property
    def fully_converged(self) -> bool:
        return self.cv == self.n_runs and self.f1 is not None

    @classmethod
    def published(cls, corpus_id: str, label: str, x: float, f1: Optional[Summary],
                  n_epochs: Optional[Summary], cv: int, n_runs: int = 5) -> "CellSummary":
        return cls(corpus_id, label, x, n_runs, cv, f1, n_epochs)


@dataclass
class ReportCell:
    text: str
    bold: bool = False


@dataclass
class ReportTable:
    title: str
    headers: List[str]
    rows: List[List[ReportCell]] = field(default_factory=list)
    notes: List[str] = field(default_factory=list)

    def is_empty(self) -> bool:
        return not self.rows

    def column(self, header: str) -> List[str]:
        index = self.headers.index(header)
        return [row[index].text for row in self.rows]

    def to_csv(self) -> str:
        """Bold (significantly best) cells carry a trailing '*'."""
        buffer = io.StringIO()
        writer = csv.writer(buffer, lineterminator="\n")
        writer.writerow(self.headers)
        for row in self.rows:
            writer.writerow([cell.text + ("*" if cell.bold else "") for cell in row])
        return buffer.getvalue()

    def to_markdown(self) -> str:
        rendered = [[f"**{c.text}**" if c.bold else c.text for c in row] for row in self.rows]
        widths = [len(h) for h in self.headers]
        for row in rendered:
            widths = [max(w, len(text)) for w, text in zip(widths, row)]

        def line(values: Sequence[str]) -> str:
            return "| " + " | ".join(v.ljust(w) for v, w in zip(values, widths)) + " |"

        lines = [f"### {self.title}", "", line(self.headers), "|" + "|".join("-" * (w + 2) for w in widths) + "|"]
        lines.extend(line(row) for row in rendered)
        if self.notes:
            lines.append("")
            lines.extend(f"- {note}" for note in self.notes)
        return "\n".join(lines) + "\n"


# --- Aggregation ---

def aggregate(results: Iterable[RunResult]) -> Dict[CellKey, CellSummary]:
    grouped: Dict[CellKey, List[RunResult]] = {}
    for result in results:
        grouped.setdefault((result.corpus_id, result.label, result.x_train), []).append(result)

    cells: Dict[CellKey, CellSummary] = {}
    for key, runs in grouped.items():
        runs.sort(key=lambda r: r.seed)
        f1_values = [r.test_f1 for r in runs]
        validated = [r for r in runs if r.val_f1 is not None]
        best = max(validated, key=lambda r: (r.val_f1, -r.seed)) if validated else None
        cells[key] = CellSummary(
            corpus_id=key[0],
            label=key[1],
            x=key[2],
            n_runs=len(runs),
            cv=convergence_count(f1_values),
            f1=summarize(f1_values),
            n_epochs=mean_epochs_over_converged([r.epochs_run for r in runs], f1_values),
            max_f1=best.test_f1 if best else None,
            curves={r.seed: list(r.per_epoch_val_loss) for r in runs if r.per_epoch_val_loss},
        )
    return cells


def _ordered_labels(labels: Iterable[str]) -> List[str]:
    unique = set(labels)
    head = [label for label in CANONICAL_ORDER if label in unique]
    return head + sorted(unique - set(head))


def _layout(cells: Mapping[CellKey, CellSummary]):
    corpora = sorted({key[0] for key in cells})
    labels = {c: _ordered_labels(key[1] for key in cells if key[0] == c) for c in corpora}
    grid = {c: sorted({key[2] for key in cells if key[0] == c}) for c in corpora}
    return corpora, labels, grid


def _f1_text(cell: CellSummary) -> str:
    return cell.f1.format(F1_DECIMALS) if cell.fully_converged else NOT_CONVERGED


# --- Tables ---

def main_table(cells: Mapping[CellKey, CellSummary]) -> ReportTable:
    corpora, labels, grid = _layout(cells)
    all_labels = _ordered_labels(label for c in corpora for label in labels[c])
    headers = ["corpus", "x"]
    for label in all_labels:
        headers += [f"{label} cv", f"{label} f1", f"{label} N_epochs"]
    table = ReportTable("Fine-tuning results", headers)

    for corpus_id in corpora:
        for x in grid[corpus_id]:
            row = [ReportCell(corpus_id), ReportCell(f"{x:g}")]
            present = {label: cells.get((corpus_id, label, x)) for label in all_labels}
            shown = {label: cell for label, cell in present.items() if cell and cell.fully_converged}
            for label in all_labels:
                cell = present[label]
                if cell is None:
                    row += [ReportCell(MISSING)] * 3
                    if label in labels[corpus_id]:
                        table.notes.append(f"no runs for {label} on {corpus_id} at x={x:g}")
                    continue
                others = [other for name, other in shown.items() if name != label]
                competitors = [name for name in all_labels if name != label and present[name] is not None]
                # bold: significantly better than every other displayed f1 in the row
                bold = (label in shown and bool(competitors)
                        and all(cell.f1.mean > o.f1.mean and is_significant(cell.f1, o.f1) for o in others))
                epochs = cell.n_epochs.format(EPOCH_DECIMALS) if cell.n_epochs else NOT_CONVERGED
                row += [ReportCell(str(cell.cv)), ReportCell(_f1_text(cell), bold), ReportCell(epochs)]
            table.rows.append(row)
    return table


def ratio_table(cells: Mapping[CellKey, CellSummary], reference: str = "adaptive",
                baselines: Sequence[str] = ("stable", "original"),
                alphas: Optional[Mapping[str, float]] = None) -> ReportTable:
    alphas = alphas or {}
    corpora, _, grid = _layout(cells)
    headers = ["corpus", "x"]
    for baseline in baselines:
        headers += [f"f1 {reference}/{baseline}", f"N {reference}/{baseline}"]
        if alphas:
            headers.append(f"R {reference}/{baseline}")
    table = ReportTable("Relative performance and efficiency", headers)

    for corpus_id in corpora:
        for x in grid[corpus_id]:
            ref = cells.get((corpus_id, reference, x))
            row = [ReportCell(corpus_id), ReportCell(f"{x:g}")]
            for baseline in baselines:
                base = cells.get((corpus_id, baseline, x))
                width = 3 if alphas else 2
                if not (ref and base and ref.fully_converged and base.fully_converged
                        and ref.n_epochs and base.n_epochs):
                    row += [ReportCell(NOT_CONVERGED)] * width
                    continue
                f1_ratio = ratio_with_uncertainty(ref.f1, base.f1)
                epoch_ratio = ratio_with_uncertainty(ref.n_epochs, base.n_epochs)
                row += [ReportCell(f1_ratio.format(F1_RATIO_DECIMALS)),
                        ReportCell(epoch_ratio.format(EPOCH_RATIO_DECIMALS))]
                if alphas:
                    alpha = alphas.get(corpus_id)
                    text = NOT_CONVERGED if alpha is None else format_parenthesis(
                        epoch_ratio.mean * alpha, epoch_ratio.delta * alpha, EPOCH_RATIO_DECIMALS)
                    row.append(ReportCell(text))
            table.rows.append(row)
    return table


def stability_table(cells: Mapping[CellKey, CellSummary]) -> ReportTable:
    corpora, labels, grid = _layout(cells)
    all_labels = _ordered_labels(label for c in corpora for label in labels[c])
    table = ReportTable("Stability (average relative uncertainty)", ["corpus", "x_tilde"] + [f"u {l}" for l in all_labels])
    per_label: Dict[str, List[float]] = {label: [] for label in all_labels}

    for corpus_id in corpora:
        corpus_cells = {(k[1], k[2]): c for k, c in cells.items() if k[0] == corpus_id}
        cv_table = {key: cell.cv for key, cell in corpus_cells.items()}
        n_runs = max(cell.n_runs for cell in corpus_cells.values())
        try:
            threshold = convergence_threshold(cv_table, n_runs)
        except ValueError as exc:
            table.notes.append(f"{corpus_id}: {exc}")
            threshold = None
        row = [ReportCell(corpus_id), ReportCell("never" if threshold is None else f"{threshold:g}")]
        for label in all_labels:
            summaries = {x: corpus_cells[(label, x)].f1 for x in grid[corpus_id] if (label, x) in corpus_cells}
            if threshold is None or not summaries:
                row.append(ReportCell(NOT_CONVERGED))
                continue
            u = average_relative_uncertainty(summaries, threshold)
            per_label[label].append(u)
            row.append(ReportCell(f"{u:.4f}"))
        table.rows.append(row)

    if table.rows:
        glob = [ReportCell("glob."), ReportCell("")]
        for label in all_labels:
            values = per_label[label]
            glob.append(ReportCell(f"{global_average_relative_uncertainty(values):.4f}" if values else NOT_CONVERGED))
        table.rows.append(glob)
    return table


def fit_points(cells: Iterable[CellSummary]) -> List[FitPoint]:
    return [FitPoint(1.0 / (c.n_epochs.mean * c.x), c.f1.mean, c.f1.delta)
            for c in cells if c.fully_converged and c.n_epochs]


def fit_table(cells: Mapping[CellKey, CellSummary]) -> ReportTable:
    corpora, labels, _ = _layout(cells)
    table = ReportTable("f1 = a0 - a1/(N x) - a2/(N x)^2",
                        ["corpus", "approach", "points", "a0", "a1", "a2", "adj_R2"])
    for corpus_id in corpora:
        corpus_cells = [c for k, c in cells.items() if k[0] == corpus_id]
        for label in labels[corpus_id] + ["all"]:
            chosen = corpus_cells if label == "all" else [c for c in corpus_cells if c.label == label]
            points = fit_points(chosen)
            row = [ReportCell(corpus_id), ReportCell(label), ReportCell(str(len(points)))]
            try:
                fit = fit_quadratic(points)
            except FitError as exc:
                table.notes.append(f"{corpus_id}/{label}: {exc}")
                row += [ReportCell(NOT_CONVERGED)] * 4
            else:
                adjusted = "nan" if math.isnan(fit.adjusted_r2) else f"{fit.adjusted_r2:.4f}"
                row += [ReportCell(f"{fit.a0:.4f}"), ReportCell(f"{fit.a1:.4g}"),
                        ReportCell(f"{fit.a2:.4g}"), ReportCell(adjusted)]
            table.rows.append(row)
    return table


def max_table(cells: Mapping[CellKey, CellSummary], reference: str = "adaptive",
              baselines: Sequence[str] = ("original", "stable")) -> ReportTable:
    """Test f1 of the seed with the best validation f1; a unique row maximum is bold."""
    corpora, labels, grid = _layout(cells)
    all_labels = _ordered_labels(label for c in corpora for label in labels[c])
    ratio_bases = [b for b in baselines if reference in all_labels and b in all_labels]
    headers = (["corpus", "x"] + [f"{l} f1_max" for l in all_labels]
               + [f"f1_max {reference}/{b}" for b in ratio_bases])
    table = ReportTable("f1 of the best-validation run", headers)
    for corpus_id in corpora:
        for x in grid[corpus_id]:
            present = {label: cells.get((corpus_id, label, x)) for label in all_labels}
            # a failed best-validation run has f1_max 0 and is shown as not converged
            values = {label: cell.max_f1 for label, cell in present.items() if cell and cell.max_f1}
            ranked = sorted(values.values(), reverse=True)
            # ties and single-entry rows are not highlighted
            best = ranked[0] if len(ranked) > 1 and ranked[0] > ranked[1] else None
            row = [ReportCell(corpus_id), ReportCell(f"{x:g}")]
            for label in all_labels:
                if present[label] is None:
                    row.append(ReportCell(MISSING))
                elif label not in values:
                    row.append(ReportCell(NOT_CONVERGED))
                else:
                    row.append(ReportCell(format_rounded(values[label], F1_DECIMALS), values[label] == best))
            for base in ratio_bases:
                if present[reference] is None or present[base] is None:
                    row.append(ReportCell(MISSING))
                elif reference in values and base in values:
                    ratio = ratio_with_uncertainty(Summary(values[reference], 0.0), Summary(values[base], 0.0))
                    row.append(ReportCell(format_rounded(ratio.mean, F1_RATIO_DECIMALS)))
                else:
                    row.append(ReportCell(NOT_CONVERGED))
            table.rows.append(row)
    return table


def merge_table(cells: Mapping[CellKey, CellSummary]) -> ReportTable:
    """f1 after retraining on train+val relative to f1 without the validation data."""
    corpora, labels, grid = _layout(cells)
    bases = _ordered_labels(l for c in corpora for l in labels[c]
                            if not l.endswith("+val") and l + "+val" in labels[c])
    table = ReportTable("Retraining on train+val", ["corpus", "x"] + [f"f1+/f1 {b}" for b in bases])
    for corpus_id in corpora:
        for x in grid[corpus_id]:
            row = [ReportCell(corpus_id), ReportCell(f"{x:g}")]
            for base in bases:
                plain = cells.get((corpus_id, base, x))
                merged = cells.get((corpus_id, base + "+val", x))
                if plain and merged and plain.fully_converged and merged.fully_converged:
                    row.append(ReportCell(ratio_with_uncertainty(merged.f1, plain.f1).format(F1_RATIO_DECIMALS)))
                else:
                    row.append(ReportCell(NOT_CONVERGED if plain and merged else MISSING))
            table.rows.append(row)
    return table


def curves_table(cells: Mapping[CellKey, CellSummary], corpus_id: Optional[str] = None,
                 x: Optional[float] = None) -> ReportTable:
    """Per-epoch validation loss of every seed (learning curves)."""
    chosen = [c for c in cells.values()
              if (corpus_id is None or c.corpus_id == corpus_id) and (x is None or c.x == x) and c.curves]
    chosen.sort(key=lambda c: (c.corpus_id, c.x, c.label))
    columns = [(c, seed) for c in chosen for seed in sorted(c.curves)]
    headers = ["epoch"] + [f"{c.corpus_id}/{c.label}/x={c.x:g}/s{seed}" for c, seed in columns]
    table = ReportTable("Validation loss per epoch", headers)
    longest = max((len(c.curves[s]) for c, s in columns), default=0)
    for epoch in range(longest):
        row = [ReportCell(str(epoch + 1))]
        for cell, seed in columns:
            curve = cell.curves[seed]
            value = curve[epoch] if epoch < len(curve) else None
            row.append(ReportCell("" if value is None else f"{value:.4f}"))
        table.rows.append(row)
    return table


REPORT_KINDS: Dict[str, Callable[..., ReportTable]] = {
    "main_table": main_table,
    "ratio_table": ratio_table,
    "stability_table": stability_table,
    "fit_table": fit_table,
    "max_table": max_table,
    "merge_table": merge_table,
    "curves_table": curves_table,
}


class ReportManager(BaseManager):

    def get_manager_name(self) -> str:
        return "ReportManager"

    def alphas(self, corpus_ids: Iterable[str]) -> Dict[str, float]:
        """Validation overhead factor per corpus from the full split sizes, where the corpus is known."""
        corpora = self.controller.corpus_manager
        known = set(corpora.corpus_ids())
        alphas = {}
        for corpus_id in corpus_ids:
            if corpus_id not in known:
                continue
            sizes = corpora.get(corpus_id).split_sizes()
            if sizes["train"]:
                alphas[corpus_id] = effort_ratio(EffortInputs(sizes["train"], sizes["val"], 1.0, (1.0,))).alpha
        return alphas

    def build_report(self, results: Sequence[RunResult], kind: str, **options) -> ReportTable:
        if kind not in REPORT_KINDS:
            raise ValueError(f"Unknown report kind {kind!r}; choose from {', '.join(REPORT_KINDS)}")
        cells = aggregate(results)
        if kind == "ratio_table" and "alphas" not in options:
            options["alphas"] = self.alphas({key[0] for key in cells})
        table = REPORT_KINDS[kind](cells, **options)
        for note in table.notes:
            self.log_event(note, "warning")
        return table
