# results_store.py
import json
import logging
import os
import threading
from typing import Iterator, List, Set, Tuple

from fine_tuning.experiment import SCHEMA_VERSION, RunResult

logger = logging.getLogger(__name__)


class ResultsFileError(ValueError):
    """A line of the results file could not be read back."""

    def __init__(self, path: str, line_number: int, message: str):
        super().__init__(f"{path}:{line_number}: {message}")
        self.path = path
        self.line_number = line_number


class ResultsStore:
    """
    Append-only JSON-lines file of RunResult records, one per line.
    Appends are serialized through a lock so a single writer owns the file.
    """

    def __init__(self, path: str):
        self.path = path
        self._lock = threading.Lock()

    def exists(self) -> bool:
        return os.path.exists(self.path)

    def iter_results(self) -> Iterator[RunResult]:
        if not self.exists():
            return
        with open(self.path, "r", encoding="utf-8") as handle:
            for line_number, line in enumerate(handle, start=1):
                if not line.strip():
                    continue
                try:
                    data = json.loads(line)
                except json.JSONDecodeError as exc:
                    raise ResultsFileError(self.path, line_number, f"invalid JSON ({exc.msg})") from exc
                if not isinstance(data, dict):
                    raise ResultsFileError(self.path, line_number, "record is not an object")
                version = data.get("schema_version")
                if version != SCHEMA_VERSION:
                    raise ResultsFileError(self.path, line_number, f"unsupported schema_version {version!r}")
                try:
                    yield RunResult.from_dict(data)
                except (TypeError, ValueError) as exc:
                    raise ResultsFileError(self.path, line_number, str(exc)) from exc

    def load(self) -> List[RunResult]:
        return list(self.iter_results())

    def completed_keys(self) -> Set[Tuple[str, int]]:
        return {result.key for result in self.iter_results()}

    def append(self, result: RunResult) -> None:
        line = json.dumps(result.to_dict(), sort_keys=True)
        with self._lock:
            directory = os.path.dirname(self.path)
            if directory:
                os.makedirs(directory, exist_ok=True)
            with open(self.path, "a", encoding="utf-8") as handle:
                handle.write(line + "\n")
        logger.debug(f"[Results] appended {result.spec_id} seed={result.seed}")
