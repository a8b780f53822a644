"""
BIO-tagged corpora: CoNLL-style reading and writing, deterministic nested
down-scaling, train+val merging and a synthetic corpus generator.
"""

import hashlib
import io
import logging
import math
import os
import re
from dataclasses import dataclass, field, replace
from typing import Iterable, List, Optional, Sequence, TextIO, Tuple, Union

import numpy as np

logger = logging.getLogger(__name__)

TAG_PATTERN = re.compile(r"^(O|[BI]-\S+)$")
DOCSTART = "-DOCSTART-"
SPLITS = ("train", "val", "test")
VAL_FILE_ALIASES = ("val", "dev", "valid")


class BioFormatError(ValueError):
    """Malformed line in a BIO file."""

    def __init__(self, message: str, line_number: int):
        super().__init__(f"line {line_number}: {message}")
        self.line_number = line_number


@dataclass(frozen=True)
class Sentence:
    tokens: Tuple[str, ...]
    tags: Tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "tokens", tuple(self.tokens))
        object.__setattr__(self, "tags", tuple(self.tags))
        if len(self.tokens) == 0:
            raise ValueError("a sentence needs at least one token")
        if len(self.tokens) != len(self.tags):
            raise ValueError(f"{len(self.tokens)} tokens but {len(self.tags)} tags")
        for tag in self.tags:
            if not TAG_PATTERN.match(tag):
                raise ValueError(f"invalid BIO tag {tag!r}")

    def __len__(self) -> int:
        return len(self.tokens)

    @property
    def entity_types(self) -> List[str]:
        return [tag[2:] for tag in self.tags if tag != "O"]


def _types_in(sentences: Iterable[Sentence]) -> set:
    found = set()
    for sentence in sentences:
        found.update(sentence.entity_types)
    return found


@dataclass(frozen=True)
class TaggedCorpus:
    train: Tuple[Sentence, ...]
    val: Tuple[Sentence, ...]
    test: Tuple[Sentence, ...]
    tag_vocabulary: Tuple[str, ...]
    source_id: str

    def __post_init__(self):
        for split in SPLITS:
            object.__setattr__(self, split, tuple(getattr(self, split)))
        object.__setattr__(self, "tag_vocabulary", tuple(self.tag_vocabulary))
        missing = _types_in(self.train + self.val + self.test) - set(self.tag_vocabulary)
        if missing:
            raise ValueError(f"tag_vocabulary lacks entity types {sorted(missing)}")

    @classmethod
    def from_splits(cls, train: Sequence[Sentence], val: Sequence[Sentence],
                    test: Sequence[Sentence], source_id: str) -> "TaggedCorpus":
        vocabulary = sorted(_types_in(list(train) + list(val) + list(test)))
        return cls(tuple(train), tuple(val), tuple(test), tuple(vocabulary), source_id)

    def split_sizes(self) -> dict:
        return {split: len(getattr(self, split)) for split in SPLITS}


@dataclass(frozen=True)
class ScalingSpec:
    x_train: float
    x_val: float
    x_test: float = 1.0

    def __post_init__(self):
        for name in ("x_train", "x_val"):
            value = getattr(self, name)
            if not 0.0 < value <= 1.0:
                raise ValueError(f"{name} must lie in (0, 1], got {value}")
        if self.x_test != 1.0:
            raise ValueError("the test split is never scaled (x_test must be 1.0)")


# --- Reading and writing ---

def parse_bio(stream: Union[TextIO, Iterable[str], str]) -> List[Sentence]:
    """
    Parse CoNLL-style BIO text: one token per line, tag in the last column,
    blank lines between sentences. Middle columns are ignored and -DOCSTART-
    lines act as separators.
    """
    if isinstance(stream, str):
        stream = io.StringIO(stream)

    sentences: List[Sentence] = []
    tokens: List[str] = []
    tags: List[str] = []

    def flush():
        if tokens:
            sentences.append(Sentence(tuple(tokens), tuple(tags)))
            tokens.clear()
            tags.clear()

    for line_number, raw_line in enumerate(stream, start=1):
        line = raw_line.strip()
        if not line:
            flush()
            continue
        columns = line.split()
        if columns[0] == DOCSTART:
            flush()
            continue
        if len(columns) < 2:
            raise BioFormatError(f"expected 'token tag', got {line!r}", line_number)
        tag = columns[-1]
        if not TAG_PATTERN.match(tag):
            raise BioFormatError(f"malformed tag {tag!r}", line_number)
        tokens.append(columns[0])
        tags.append(tag)
    flush()
    return sentences


def serialize_bio(sentences: Iterable[Sentence]) -> str:
    blocks = []
    for sentence in sentences:
        lines = [f"{token}\t{tag}" for token, tag in zip(sentence.tokens, sentence.tags)]
        blocks.append("\n".join(lines) + "\n")
    return "\n".join(blocks)


def load_bio_file(path: str) -> List[Sentence]:
    with open(path, "r", encoding="utf-8") as handle:
        return parse_bio(handle)


def save_bio_file(path: str, sentences: Iterable[Sentence]) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        handle.write(serialize_bio(sentences))


def load_corpus_dir(directory: str, source_id: Optional[str] = None) -> TaggedCorpus:
    """Load train.txt, val.txt (or dev.txt / valid.txt) and test.txt from a directory."""
    def find(names: Sequence[str]) -> str:
        for name in names:
            candidate = os.path.join(directory, f"{name}.txt")
            if os.path.exists(candidate):
                return candidate
        raise FileNotFoundError(f"none of {[n + '.txt' for n in names]} found in {directory}")

    train = load_bio_file(find(("train",)))
    val = load_bio_file(find(VAL_FILE_ALIASES))
    test = load_bio_file(find(("test",)))
    corpus = TaggedCorpus.from_splits(train, val, test, source_id or os.path.basename(os.path.normpath(directory)))
    logger.info(f"Loaded corpus {corpus.source_id} from {directory}: {corpus.split_sizes()}")
    return corpus


def write_corpus_dir(corpus: TaggedCorpus, directory: str) -> None:
    os.makedirs(directory, exist_ok=True)
    for split in SPLITS:
        save_bio_file(os.path.join(directory, f"{split}.txt"), getattr(corpus, split))


# --- Scaling and merging ---

def _split_rng(seed: int, source_id: str, split: str) -> np.random.Generator:
    digest = hashlib.sha256(f"{seed}:{source_id}:{split}".encode("utf-8")).digest()
    return np.random.default_rng(int.from_bytes(digest[:8], "little"))


def sample_size(x: float, n: int) -> int:
    # rounding first keeps e.g. 0.07 * 100 from becoming 8
    return math.ceil(round(x * n, 9))


def _scale_split(sentences: Tuple[Sentence, ...], x: float, seed: int,
                 source_id: str, split: str) -> Tuple[Sentence, ...]:
    if x == 1.0 or not sentences:
        return sentences
    keep = sample_size(x, len(sentences))
    # one permutation per (seed, source, split): smaller x takes a prefix of the same order
    order = _split_rng(seed, source_id, split).permutation(len(sentences))
    chosen = np.sort(order[:keep])
    return tuple(sentences[i] for i in chosen)


def scale(corpus: TaggedCorpus, spec: ScalingSpec, seed: int) -> TaggedCorpus:
    """Down-sample train and val by their scaling factors; test stays complete."""
    return replace(
        corpus,
        train=_scale_split(corpus.train, spec.x_train, seed, corpus.source_id, "train"),
        val=_scale_split(corpus.val, spec.x_val, seed, corpus.source_id, "val"),
    )


def merge_train_val(corpus: TaggedCorpus) -> TaggedCorpus:
    return replace(corpus, train=corpus.train + corpus.val, val=())


# --- Synthetic corpora ---

@dataclass(frozen=True)
class SyntheticCorpusSpec:
    num_sentences: int
    entity_types: Tuple[str, ...] = ("PER", "LOC", "ORG")
    noise_rate: float = 0.1
    seed: int = 0
    split_ratio: Tuple[float, float, float] = (0.7, 0.15, 0.15)
    min_length: int = 6
    max_length: int = 14
    cues_per_type: int = 3
    names_per_type: int = 25
    filler_vocabulary: int = 200
    max_mentions: int = 2
    source_id: str = "synthetic"

    def __post_init__(self):
        object.__setattr__(self, "entity_types", tuple(self.entity_types))
        if self.num_sentences < 3:
            raise ValueError("num_sentences must be at least 3 (one per split)")
        if not 0.0 <= self.noise_rate < 1.0:
            raise ValueError(f"noise_rate must lie in [0, 1), got {self.noise_rate}")
        if not self.entity_types:
            raise ValueError("at least one entity type is required")
        if abs(sum(self.split_ratio) - 1.0) > 1e-9 or min(self.split_ratio) <= 0:
            raise ValueError(f"split_ratio must be positive and sum to 1, got {self.split_ratio}")
        if not 1 <= self.min_length <= self.max_length:
            raise ValueError("need 1 <= min_length <= max_length")


def _mention_tags(entity_type: str, length: int) -> List[str]:
    return [f"B-{entity_type}"] + [f"I-{entity_type}"] * (length - 1)


def _synthetic_sentence(spec: SyntheticCorpusSpec, rng: np.random.Generator) -> Sentence:
    length = int(rng.integers(spec.min_length, spec.max_length + 1))
    tokens: List[str] = []
    tags: List[str] = []
    mentions = int(rng.integers(0, spec.max_mentions + 1))
    mention_slots = set(rng.choice(length, size=min(mentions, length), replace=False).tolist())

    for position in range(length):
        if position in mention_slots:
            entity_type = spec.entity_types[int(rng.integers(len(spec.entity_types)))]
            prefix = entity_type.lower()
            name_length = int(rng.integers(1, 4))
            tokens.append(f"{prefix}_cue{int(rng.integers(spec.cues_per_type))}")
            tags.append("O")
            names = [f"{prefix}_name{int(rng.integers(spec.names_per_type))}" for _ in range(name_length)]
            labels = _mention_tags(entity_type, name_length)
            if rng.random() < spec.noise_rate:
                # annotation noise: either a missed mention or a wrong type
                others = [t for t in spec.entity_types if t != entity_type]
                if others and rng.random() < 0.5:
                    labels = _mention_tags(others[int(rng.integers(len(others)))], name_length)
                else:
                    labels = ["O"] * name_length
            tokens.extend(names)
            tags.extend(labels)
        else:
            tokens.append(f"w{int(rng.integers(spec.filler_vocabulary))}")
            tags.append("O")
    return Sentence(tuple(tokens), tuple(tags))


def generate_synthetic(spec: SyntheticCorpusSpec) -> TaggedCorpus:
    """
    Generate a corpus in which each mention is announced by a type-specific cue
    token. Without noise the tag of every token is determined by the token and
    its left neighbour, so a context-window tagger can learn it exactly.
    """
    rng = np.random.default_rng(spec.seed)
    sentences = [_synthetic_sentence(spec, rng) for _ in range(spec.num_sentences)]

    n_train = max(1, int(spec.num_sentences * spec.split_ratio[0]))
    n_val = max(1, int(spec.num_sentences * spec.split_ratio[1]))
    n_train = min(n_train, spec.num_sentences - 2)
    n_val = min(n_val, spec.num_sentences - n_train - 1)

    return TaggedCorpus(
        train=tuple(sentences[:n_train]),
        val=tuple(sentences[n_train:n_train + n_val]),
        test=tuple(sentences[n_train + n_val:]),
        tag_vocabulary=tuple(sorted(spec.entity_types)),
        source_id=spec.source_id,
    )
