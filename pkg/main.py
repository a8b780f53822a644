#!/usr/bin/env python3
"""
Command line for the adaptive fine-tuning experiments.

Usage:
    python main.py run --approach adaptive --corpus toy --x 0.2
    python main.py sweep --config experiments/desk_scale.cfg --parallelism 4
    python main.py report --kind main_table --format markdown
    python main.py fit --corpus toy --order auto
    python main.py simulate-schedule --losses losses.txt --variant adaptive
    python main.py gen-corpus --output-dir data/toy --num-sentences 2000
"""

import argparse
import csv
import sys
from dataclasses import replace
from typing import List, Optional

from colorama import Fore, Style, init

import utils
from fine_tuning.config import ConfigError, ExperimentConfig, load_config
from fine_tuning.corpus import BioFormatError, SyntheticCorpusSpec, generate_synthetic, write_corpus_dir
from fine_tuning.experiment import ExperimentSpec
from fine_tuning.experiment_controller import ExperimentController
from fine_tuning.managers import (
    APPROACHES, REPORT_KINDS, UnknownApproachError, UnknownCorpusError, expand_grid, get_approach,
)
from fine_tuning.managers.report_manager import aggregate, fit_points
from fine_tuning.schedule import ScheduleConfig, schedule_trace
from fine_tuning.stats import FitError, FitPoint, fit_polynomial, select_polynomial_order
from results_store import ResultsFileError

DOMAIN_ERRORS = (ConfigError, BioFormatError, UnknownApproachError, UnknownCorpusError,
                 ResultsFileError, FitError, FileNotFoundError, ValueError)


def _status(message: str, color: str = Fore.GREEN) -> None:
    print(f"{color}{message}{Style.RESET_ALL}", file=sys.stderr)


def _floats(text: str) -> List[float]:
    return [float(item) for item in text.split(",") if item.strip()]


def _ints(text: str) -> List[int]:
    return [int(item) for item in text.split(",") if item.strip()]


def _strings(text: str) -> List[str]:
    return [item.strip() for item in text.split(",") if item.strip()]


def _controller(args, config: ExperimentConfig) -> ExperimentController:
    return ExperimentController(config, results_path=getattr(args, "results", None))


def cmd_run(args, config: ExperimentConfig) -> int:
    spec = ExperimentSpec(
        approach=args.approach,
        corpus_id=args.corpus,
        x_train=args.x,
        x_val=args.x_val,
        seeds=tuple(args.seeds or config.seeds),
        merge_train_val=args.merge,
        pinned_epochs=args.pinned_epochs,
    )
    controller = _controller(args, config)
    results = controller.run_experiment(spec, record_traces=not args.no_traces, persist=not args.no_save)
    for result in results:
        color = Fore.GREEN if result.converged else Fore.YELLOW
        _status(f"seed {result.seed}: epochs={result.epochs_run:g} test_f1={result.test_f1:.4f}", color)
    if not args.no_save:
        _status(f"results appended to {controller.results_store.path}", Fore.CYAN)
    return 0


def cmd_sweep(args, config: ExperimentConfig) -> int:
    controller = _controller(args, config)
    specs = expand_grid(
        args.approaches or config.approaches,
        args.corpora or config.corpora or controller.corpus_manager.corpus_ids(),
        args.x_values or config.x_values,
        args.seeds or config.seeds,
        args.x_val if args.x_val is not None else config.x_val,
    )
    summary = controller.sweep(specs, parallelism=args.parallelism, record_traces=not args.no_traces)
    _status(f"sweep done: {summary.written} written, {summary.skipped} skipped of {summary.planned}")
    if summary.diverged or summary.capped:
        _status(f"{summary.diverged} diverged, {summary.capped} hit the epoch cap", Fore.YELLOW)
    return 0


def cmd_report(args, config: ExperimentConfig) -> int:
    controller = _controller(args, config)
    options = {}
    if args.kind == "curves_table":
        options = {"corpus_id": args.corpus, "x": args.x}
    table = controller.build_report(args.kind, **options)
    text = table.to_markdown() if args.format == "markdown" else table.to_csv()
    if args.output:
        with open(args.output, "w", encoding="utf-8") as handle:
            handle.write(text)
        _status(f"{args.kind} written to {args.output}")
    else:
        sys.stdout.write(text)
    if table.is_empty():
        _status("no results matched; the table is empty", Fore.YELLOW)
    return 0


def _read_points(path: str) -> List[FitPoint]:
    with open(path, "r", encoding="utf-8", newline="") as handle:
        rows = [row for row in csv.reader(handle) if row and not row[0].startswith("#")]
    if rows and rows[0][0].strip() == "inv_nx":
        rows = rows[1:]
    return [FitPoint(float(a), float(b), float(c)) for a, b, c in rows]


def cmd_fit(args, config: ExperimentConfig) -> int:
    if args.points:
        points = _read_points(args.points)
    else:
        cells = aggregate(_controller(args, config).load_results())
        chosen = [c for c in cells.values()
                  if (args.corpus is None or c.corpus_id == args.corpus)
                  and (args.approach is None or c.label == args.approach)]
        points = fit_points(chosen)
    if args.order == "auto":
        order, fits = select_polynomial_order(points, args.delta_floor)
        for candidate, candidate_fit in sorted(fits.items()):
            print(f"order {candidate}: adjusted R2 = {candidate_fit.adjusted_r2:.6f}")
        fit = fits[order]
    else:
        order = int(args.order)
        fit = fit_polynomial(points, order, args.delta_floor)
    print(f"points: {len(points)}  order: {order}")
    for k, value in enumerate(fit.coefficients):
        print(f"a{k} = {value:.6g} +- {fit.covariance[k, k] ** 0.5:.2g}")
    print(f"weighted residual = {fit.residual:.6g}  adjusted R2 = {fit.adjusted_r2:.6f}")
    if fit.dropped_terms:
        _status(f"terms {list(fit.dropped_terms)} dropped to keep coefficients non-negative", Fore.YELLOW)
    return 0


def cmd_simulate_schedule(args, config: ExperimentConfig) -> int:
    with open(args.losses, "r", encoding="utf-8") as handle:
        losses = [float(line) for line in handle if line.strip() and not line.startswith("#")]
    if args.patience is not None:
        config = replace(config, patience=args.patience)
    definition = get_approach(args.variant)
    schedule = ScheduleConfig(
        mode=definition.build(config, args.pinned_epochs),
        warmup_epochs=config.warmup_epochs if args.warmup_epochs is None else args.warmup_epochs,
        max_lr=config.max_lr if args.max_lr is None else args.max_lr,
        steps_per_epoch=args.steps_per_epoch,
    )
    trace = schedule_trace(schedule, losses, args.max_epochs)

    stop_epoch = "" if trace.stop_epoch is None else trace.stop_epoch
    reached_cap = str(trace.reached_cap).lower()
    _status(f"stop_epoch={stop_epoch} reached_cap={reached_cap}", Fore.CYAN)
    writer = csv.writer(sys.stdout, lineterminator="\n")
    writer.writerow(["epoch", "step", "step_fraction", "lr", "val_loss", "decision", "stop_epoch", "reached_cap"])
    steps = schedule.steps_per_epoch
    for index, lr in enumerate(trace.lr_curve):
        epoch, step = divmod(index, steps)
        last_step = step == steps - 1
        loss = losses[epoch] if epoch < len(losses) else None
        decision = trace.decisions[epoch].value if last_step and epoch < len(trace.decisions) else ""
        writer.writerow([epoch + 1, step + 1, f"{epoch + (step + 1) / steps:g}", repr(lr),
                         "" if loss is None or not last_step else repr(loss), decision, stop_epoch, reached_cap])
    if trace.reached_cap:
        _status("no stop before the end of the loss trace", Fore.YELLOW)
    return 0


def cmd_gen_corpus(args, config: ExperimentConfig) -> int:
    spec = SyntheticCorpusSpec(
        num_sentences=args.num_sentences,
        entity_types=tuple(args.entity_types),
        noise_rate=args.noise_rate,
        seed=args.seed,
        source_id=args.source_id,
    )
    corpus = generate_synthetic(spec)
    write_corpus_dir(corpus, args.output_dir)
    _status(f"wrote {corpus.split_sizes()} sentences to {args.output_dir}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(description="Adaptive fine-tuning experiments")
    parser.add_argument("--config", help="Experiment config file (key = value)")
    parser.add_argument("--log-level", default=None, help="Overrides LOG_LEVEL")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="Run one experiment (all seeds)")
    run.add_argument("--approach", required=True, choices=sorted(APPROACHES))
    run.add_argument("--corpus", required=True)
    run.add_argument("--x", type=float, required=True, help="Training (and default validation) scaling factor")
    run.add_argument("--x-val", type=float, default=None)
    run.add_argument("--seeds", type=_ints, default=None)
    run.add_argument("--merge", action="store_true", help="Retrain on train+val without validation")
    run.add_argument("--pinned-epochs", type=float, default=None)
    run.add_argument("--results", default=None, help="Results file (JSON lines)")
    run.add_argument("--no-traces", action="store_true")
    run.add_argument("--no-save", action="store_true")

    sweep = sub.add_parser("sweep", help="Run a grid of experiments, skipping finished runs")
    sweep.add_argument("--approaches", type=_strings, default=None)
    sweep.add_argument("--corpora", type=_strings, default=None)
    sweep.add_argument("--x-values", type=_floats, default=None)
    sweep.add_argument("--x-val", type=float, default=None)
    sweep.add_argument("--seeds", type=_ints, default=None)
    sweep.add_argument("--parallelism", type=int, default=None)
    sweep.add_argument("--results", default=None)
    sweep.add_argument("--no-traces", action="store_true")

    report = sub.add_parser("report", help="Build a table from the results file")
    report.add_argument("--kind", default="main_table", choices=sorted(REPORT_KINDS))
    report.add_argument("--format", default="csv", choices=("csv", "markdown"))
    report.add_argument("--results", default=None)
    report.add_argument("--output", default=None)
    report.add_argument("--corpus", default=None, help="curves_table: restrict to one corpus")
    report.add_argument("--x", type=float, default=None, help="curves_table: restrict to one x")

    fit = sub.add_parser("fit", help="Fit f1 against 1/(N_epochs x)")
    fit.add_argument("--results", default=None)
    fit.add_argument("--points", default=None, help="CSV with inv_nx,f1,delta instead of results")
    fit.add_argument("--corpus", default=None)
    fit.add_argument("--approach", default=None, help="Report label; all approaches when omitted")
    fit.add_argument("--order", default="2", choices=("1", "2", "3", "auto"))
    fit.add_argument("--delta-floor", type=float, default=1e-4)

    simulate = sub.add_parser("simulate-schedule", help="Replay a validation-loss trace")
    simulate.add_argument("--losses", required=True, help="One loss per line")
    simulate.add_argument("--variant", default="adaptive", choices=sorted(APPROACHES))
    simulate.add_argument("--patience", type=int, default=None)
    simulate.add_argument("--warmup-epochs", type=int, default=None)
    simulate.add_argument("--max-lr", type=float, default=None)
    simulate.add_argument("--steps-per-epoch", type=int, default=1)
    simulate.add_argument("--pinned-epochs", type=float, default=None)
    simulate.add_argument("--max-epochs", type=int, default=None)

    gen = sub.add_parser("gen-corpus", help="Write a synthetic BIO corpus")
    gen.add_argument("--output-dir", required=True)
    gen.add_argument("--num-sentences", type=int, default=2000)
    gen.add_argument("--entity-types", type=_strings, default=["PER", "LOC", "ORG"])
    gen.add_argument("--noise-rate", type=float, default=0.1)
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--source-id", default="synthetic")
    return parser


COMMANDS = {
    "run": cmd_run,
    "sweep": cmd_sweep,
    "report": cmd_report,
    "fit": cmd_fit,
    "simulate-schedule": cmd_simulate_schedule,
    "gen-corpus": cmd_gen_corpus,
}


def main(argv: Optional[List[str]] = None) -> int:
    init()
    args = build_parser().parse_args(argv)
    try:
        config = utils.apply_env_overrides(load_config(args.config))
        utils.setup_logging(args.log_level, config.results_dir if args.command in ("run", "sweep") else None)
        return COMMANDS[args.command](args, config)
    except DOMAIN_ERRORS as exc:
        _status(f"error: {exc}", Fore.RED)
        return 1


if __name__ == "__main__":
    sys.exit(main())
