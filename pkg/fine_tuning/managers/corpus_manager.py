import threading
from typing import Dict, List, Optional

from ..corpus import (
    ScalingSpec, SyntheticCorpusSpec, TaggedCorpus, generate_synthetic, load_corpus_dir,
    merge_train_val, scale,
)
from .base_manager import BaseManager


class UnknownCorpusError(ValueError):
    """No corpus registered under the requested id."""


class CorpusManager(BaseManager):
    """
    Registry of corpora by id. Directory and synthetic corpora are loaded
    lazily on first use and shared read-only afterwards.
    """

    def __init__(self, controller):
        super().__init__(controller)
        self._corpora: Dict[str, TaggedCorpus] = {}
        self._directories: Dict[str, str] = {}
        self._synthetic: Dict[str, SyntheticCorpusSpec] = {}
        self._lock = threading.Lock()

    def get_manager_name(self) -> str:
        return "CorpusManager"

    def initialize(self) -> None:
        for corpus_id, path in self.config.corpus_paths.items():
            self.register_directory(corpus_id, path)
        for corpus_id, spec in self.config.synthetic_corpora.items():
            self.register_synthetic(corpus_id, spec)

    def register(self, corpus: TaggedCorpus, corpus_id: Optional[str] = None) -> None:
        with self._lock:
            self._corpora[corpus_id or corpus.source_id] = corpus

    def register_directory(self, corpus_id: str, path: str) -> None:
        self._directories[corpus_id] = path

    def register_synthetic(self, corpus_id: str, spec: SyntheticCorpusSpec) -> None:
        self._synthetic[corpus_id] = spec

    def corpus_ids(self) -> List[str]:
        return sorted(set(self._corpora) | set(self._directories) | set(self._synthetic))

    def get(self, corpus_id: str) -> TaggedCorpus:
        with self._lock:
            if corpus_id in self._corpora:
                return self._corpora[corpus_id]
            if corpus_id in self._directories:
                corpus = load_corpus_dir(self._directories[corpus_id], corpus_id)
            elif corpus_id in self._synthetic:
                corpus = generate_synthetic(self._synthetic[corpus_id])
            else:
                raise UnknownCorpusError(
                    f"Unknown corpus {corpus_id!r}; registered: {self.corpus_ids() or 'none'}"
                )
            self._corpora[corpus_id] = corpus
        self.log_event(f"corpus {corpus_id} ready: {corpus.split_sizes()}")
        return corpus

    def prepare(self, corpus_id: str, x_train: float, x_val: float, seed: int,
                merge: bool = False) -> TaggedCorpus:
        """Scaled (and optionally train+val merged) view of a registered corpus for one run."""
        scaled = scale(self.get(corpus_id), ScalingSpec(x_train=x_train, x_val=x_val), seed)
        return merge_train_val(scaled) if merge else scaled
