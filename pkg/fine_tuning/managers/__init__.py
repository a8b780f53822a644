"""
Managers used by ExperimentController, one concern each.
"""

from .base_manager import BaseManager
from .corpus_manager import CorpusManager, UnknownCorpusError
from .run_manager import APPROACHES, RunManager, UnknownApproachError, get_approach
from .sweep_manager import SweepManager, SweepSummary, expand_grid
from .report_manager import ReportManager, ReportTable, CellSummary, aggregate, REPORT_KINDS

__all__ = [
    'BaseManager',
    'CorpusManager',
    'UnknownCorpusError',
    'RunManager',
    'UnknownApproachError',
    'APPROACHES',
    'get_approach',
    'SweepManager',
    'SweepSummary',
    'expand_grid',
    'ReportManager',
    'ReportTable',
    'CellSummary',
    'aggregate',
    'REPORT_KINDS',
]
