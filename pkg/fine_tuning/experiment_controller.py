import datetime
import logging
from typing import List, Optional, Sequence

import utils
from results_store import ResultsStore

from .config import ExperimentConfig
from .experiment import ExperimentSpec, RunResult
from .managers import CorpusManager, ReportManager, ReportTable, RunManager, SweepManager, SweepSummary

logger = logging.getLogger(__name__)

EVENT_LEVELS = {
    "error": logging.ERROR,
    "warning": logging.WARNING,
    "cap": logging.WARNING,
    "debug": logging.DEBUG,
    "trace": logging.DEBUG,
}


class ExperimentController:
    """
    Entry point for experiments. Work is delegated to the managers:
    corpora (CorpusManager), single runs (RunManager), grids (SweepManager)
    and tables (ReportManager).
    """

    def __init__(self, config: Optional[ExperimentConfig] = None, results_path: Optional[str] = None):
        self.config = utils.apply_env_overrides(config or ExperimentConfig())
        self.event_log: List[str] = []
        self.results_store = ResultsStore(results_path or utils.results_path(self.config))

        self.corpus_manager = CorpusManager(self)
        self.run_manager = RunManager(self)
        self.sweep_manager = SweepManager(self)
        self.report_manager = ReportManager(self)
        self.managers = [self.corpus_manager, self.run_manager, self.sweep_manager, self.report_manager]
        for manager in self.managers:
            manager.initialize()

    def log_event(self, message: str, event_type: str = "info") -> None:
        timestamp = datetime.datetime.now().strftime("%H:%M:%S")
        self.event_log.append(f"[{timestamp}] {message}")
        logger.log(EVENT_LEVELS.get(event_type, logging.INFO), message)

    def run_experiment(self, spec: ExperimentSpec, record_traces: Optional[bool] = None,
                       persist: bool = False) -> List[RunResult]:
        results = self.run_manager.run_experiment(spec, record_traces)
        if persist:
            done = self.results_store.completed_keys()
            for result in results:
                if result.key not in done:
                    self.results_store.append(result)
        return results

    def sweep(self, specs: Optional[Sequence[ExperimentSpec]] = None, parallelism: Optional[int] = None,
              record_traces: Optional[bool] = None) -> SweepSummary:
        return self.sweep_manager.sweep(specs, parallelism, record_traces)

    def load_results(self) -> List[RunResult]:
        return self.results_store.load()

    def build_report(self, kind: str, results: Optional[Sequence[RunResult]] = None, **options) -> ReportTable:
        if results is None:
            results = self.load_results()
        return self.report_manager.build_report(results, kind, **options)
