import logging
import os
from dataclasses import replace
from typing import Optional

from dotenv import load_dotenv

from fine_tuning.config import ExperimentConfig

# Load environment variables
load_dotenv()

# Environment overrides
RESULTS_DIR = os.getenv("RESULTS_DIR")
SWEEP_PARALLELISM = os.getenv("SWEEP_PARALLELISM")
LOG_LEVEL = os.getenv("LOG_LEVEL", "INFO")
RUN_CONTEXT = os.getenv("RUN_CONTEXT", "")

LOG_FORMAT = '%(asctime)s - %(levelname)s - %(message)s'
LOG_FILE_NAME = "fine_tuning.log"

logger = logging.getLogger(__name__)


def is_test_context() -> bool:
    return os.getenv("RUN_CONTEXT", RUN_CONTEXT) == "test"


def setup_logging(level: Optional[str] = None, log_dir: Optional[str] = None) -> None:
    """
    Configure root logging: stderr always, plus a log file in `log_dir`
    unless running under tests.
    """
    handlers = [logging.StreamHandler()]
    if log_dir and not is_test_context():
        os.makedirs(log_dir, exist_ok=True)
        handlers.append(logging.FileHandler(os.path.join(log_dir, LOG_FILE_NAME)))
    logging.basicConfig(
        level=getattr(logging, (level or LOG_LEVEL).upper(), logging.INFO),
        format=LOG_FORMAT,
        handlers=handlers,
        force=True,
    )


def apply_env_overrides(config: ExperimentConfig) -> ExperimentConfig:
    """Environment variables take precedence over the config file for results dir and parallelism."""
    results_dir = os.getenv("RESULTS_DIR", RESULTS_DIR or "")
    parallelism = os.getenv("SWEEP_PARALLELISM", SWEEP_PARALLELISM or "")
    updated = config
    if results_dir:
        updated = replace(updated, results_dir=results_dir)
    if parallelism:
        try:
            updated = replace(updated, parallelism=max(1, int(parallelism)))
        except ValueError:
            logger.warning(f"Ignoring invalid SWEEP_PARALLELISM={parallelism!r}")
    return updated


def results_path(config: ExperimentConfig) -> str:
    return os.path.join(config.results_dir, config.results_file)
