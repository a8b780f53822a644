from concurrent.futures import Future, ThreadPoolExecutor
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

from ..experiment import ExperimentSpec, RunResult
from .base_manager import BaseManager


@dataclass
class SweepSummary:
    planned: int
    skipped: int
    written: int
    diverged: int = 0
    capped: int = 0


def expand_grid(approaches: Sequence[str], corpora: Sequence[str], x_values: Sequence[float],
                seeds: Sequence[int], x_val: Optional[float] = None) -> List[ExperimentSpec]:
    """Cartesian product corpus x approach x scaling factor, in that order."""
    return [
        ExperimentSpec(approach=approach, corpus_id=corpus_id, x_train=x, x_val=x_val, seeds=tuple(seeds))
        for corpus_id in corpora
        for approach in approaches
        for x in x_values
    ]


class SweepManager(BaseManager):
    """
    Runs every (spec, seed) work item of a grid that is not yet in the results
    file. Work items may run concurrently; results are written by this thread
    alone, in grid order, so the file contents do not depend on scheduling.
    """

    def get_manager_name(self) -> str:
        return "SweepManager"

    def grid_from_config(self) -> List[ExperimentSpec]:
        config = self.config
        return expand_grid(config.approaches, config.corpora, config.x_values, config.seeds, config.x_val)

    def sweep(self, specs: Optional[Sequence[ExperimentSpec]] = None, parallelism: Optional[int] = None,
              record_traces: Optional[bool] = None) -> SweepSummary:
        specs = list(self.grid_from_config() if specs is None else specs)
        if not specs:
            raise ValueError("sweep grid is empty")
        for spec in specs:
            self.controller.run_manager.validate(spec)

        store = self.controller.results_store
        done = store.completed_keys()
        work: List[Tuple[ExperimentSpec, int]] = []
        for spec in specs:
            for seed in spec.seeds:
                if (spec.spec_id, seed) not in done:
                    work.append((spec, seed))
        planned = sum(spec.n_runs for spec in specs)
        summary = SweepSummary(planned=planned, skipped=planned - len(work), written=0)
        self.log_event(f"sweep: {planned} runs planned, {summary.skipped} already in {store.path}")
        if not work:
            return summary

        workers = max(1, parallelism or self.config.parallelism)
        run_manager = self.controller.run_manager
        with ThreadPoolExecutor(max_workers=workers) as pool:
            futures: List[Future] = [
                pool.submit(run_manager.run_single, spec, seed, record_traces) for spec, seed in work
            ]
            for index, future in enumerate(futures, start=1):
                result: RunResult = future.result()
                store.append(result)
                summary.written += 1
                summary.diverged += int(result.diverged)
                summary.capped += int(result.reached_cap)
                if index % 10 == 0 or index == len(futures):
                    self.log_event(f"sweep progress: {index}/{len(futures)} runs written")
        return summary
