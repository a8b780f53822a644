"""
Experiment configuration.

A config file uses the dotenv grammar: `key = value` lines, `#` comments
and optional quoting. Lists are comma separated. Corpora are declared with
prefixed keys:

    corpus.conll = data/conll2003
    synthetic.toy.num_sentences = 2000
    synthetic.toy.entity_types = PER, LOC, ORG
    synthetic.toy.noise_rate = 0.1

Defaults are the common transformer fine-tuning settings: peak learning rate
2e-5, batch size 16, AdamW with weight decay 0.01 and bias correction.
"""

import io
import logging
import typing
from dataclasses import dataclass, field, fields
from typing import Dict, List, Optional, Tuple

from dotenv.parser import parse_stream

from .corpus import SyntheticCorpusSpec
from .schedule import DEFAULT_MAX_LR, DEFAULT_PATIENCE, DEFAULT_WARMUP_EPOCHS
from .toytrainer import OptimizerConfig

logger = logging.getLogger(__name__)

DEFAULT_SEEDS = (43, 44, 45, 46, 47)
DEFAULT_X_VALUES = (0.005, 0.01, 0.015, 0.02, 0.05, 0.1, 0.2, 0.4, 0.6, 0.8, 1.0)
DEFAULT_MAX_EPOCHS = 500
SYNTHETIC_FIELDS = ("num_sentences", "entity_types", "noise_rate", "seed")


class ConfigError(ValueError):
    """Bad key or value in a config file."""


@dataclass
class ExperimentConfig:
    # schedule
    max_lr: float = DEFAULT_MAX_LR
    warmup_epochs: int = DEFAULT_WARMUP_EPOCHS
    patience: int = DEFAULT_PATIENCE
    max_epochs: int = DEFAULT_MAX_EPOCHS
    # optimizer
    batch_size: int = 16
    beta1: float = 0.9
    beta2: float = 0.999
    weight_decay: float = 0.01
    epsilon: float = 1e-8
    bias_correction: bool = True
    # tagger
    embed_dim: int = 16
    max_sequence_length: int = 128
    # grid
    seeds: Tuple[int, ...] = DEFAULT_SEEDS
    approaches: Tuple[str, ...] = ("original", "stable", "adaptive")
    x_values: Tuple[float, ...] = DEFAULT_X_VALUES
    x_val: Optional[float] = None
    corpora: Tuple[str, ...] = ()
    # output
    results_dir: str = "results"
    results_file: str = "results.jsonl"
    parallelism: int = 1
    record_traces: bool = True
    record_wall_time: bool = False
    # corpus declarations (prefixed keys)
    corpus_paths: Dict[str, str] = field(default_factory=dict)
    synthetic_corpora: Dict[str, SyntheticCorpusSpec] = field(default_factory=dict)

    def optimizer_config(self) -> OptimizerConfig:
        return OptimizerConfig(
            beta1=self.beta1,
            beta2=self.beta2,
            weight_decay=self.weight_decay,
            bias_correction=self.bias_correction,
            batch_size=self.batch_size,
            epsilon=self.epsilon,
        )

    def validate(self) -> None:
        errors = []
        if self.max_epochs < 1:
            errors.append("max_epochs must be positive")
        if self.parallelism < 1:
            errors.append("parallelism must be positive")
        if not self.seeds:
            errors.append("at least one seed is required")
        for x in self.x_values + ((self.x_val,) if self.x_val is not None else ()):
            if not 0.0 < x <= 1.0:
                errors.append(f"scaling factor {x} outside (0, 1]")
        if errors:
            raise ConfigError("; ".join(errors))


_SIMPLE_FIELDS = {f.name: f for f in fields(ExperimentConfig)
                  if f.name not in ("corpus_paths", "synthetic_corpora")}


def _parse_bool(text: str) -> bool:
    lowered = text.strip().lower()
    if lowered in ("1", "true", "yes", "on"):
        return True
    if lowered in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _convert(annotation, text: str):
    origin = typing.get_origin(annotation)
    args = typing.get_args(annotation)
    if origin is typing.Union and type(None) in args:
        if text.strip().lower() in ("", "none"):
            return None
        return _convert(next(a for a in args if a is not type(None)), text)
    if origin is tuple:
        return tuple(_convert(args[0], item) for item in text.split(",") if item.strip())
    if annotation is bool:
        return _parse_bool(text)
    if annotation in (int, float, str):
        return annotation(text.strip())
    raise ValueError(f"unsupported field type {annotation!r}")


def _read_bindings(text: str) -> List[Tuple[int, str, str]]:
    """(line, key, value) for every assignment, using the dotenv file grammar."""
    bindings = []
    for binding in parse_stream(io.StringIO(text)):
        line_number = binding.original.line
        if binding.error:
            raise ConfigError(f"line {line_number}: expected 'key = value'")
        if binding.key is None:
            continue
        if binding.value is None:
            raise ConfigError(f"line {line_number}: {binding.key} has no value")
        bindings.append((line_number, binding.key, binding.value))
    return bindings


def parse_config(text: str) -> ExperimentConfig:
    hints = typing.get_type_hints(ExperimentConfig)
    values: Dict[str, object] = {}
    corpus_paths: Dict[str, str] = {}
    synthetic: Dict[str, Dict[str, str]] = {}

    for line_number, key, value in _read_bindings(text):
        if key.startswith("corpus."):
            corpus_paths[key[len("corpus."):]] = value
            continue
        if key.startswith("synthetic."):
            parts = key.split(".")
            if len(parts) != 3 or parts[2] not in SYNTHETIC_FIELDS:
                raise ConfigError(f"line {line_number}: unknown synthetic key {key!r}")
            synthetic.setdefault(parts[1], {})[parts[2]] = value
            continue
        if key not in _SIMPLE_FIELDS:
            raise ConfigError(f"line {line_number}: unknown key {key!r}")
        try:
            values[key] = _convert(hints[key], value)
        except ValueError as exc:
            raise ConfigError(f"line {line_number}: {key}: {exc}") from exc

    config = ExperimentConfig(**values)
    config.corpus_paths = corpus_paths
    for corpus_id, raw_fields in synthetic.items():
        try:
            config.synthetic_corpora[corpus_id] = SyntheticCorpusSpec(
                num_sentences=int(raw_fields.get("num_sentences", 2000)),
                entity_types=tuple(t.strip() for t in raw_fields.get("entity_types", "PER,LOC,ORG").split(",")
                                   if t.strip()),
                noise_rate=float(raw_fields.get("noise_rate", 0.1)),
                seed=int(raw_fields.get("seed", 0)),
                source_id=corpus_id,
            )
        except ValueError as exc:
            raise ConfigError(f"synthetic corpus {corpus_id}: {exc}") from exc
    if not config.corpora:
        config.corpora = tuple(list(corpus_paths) + list(config.synthetic_corpora))
    config.validate()
    return config


def load_config(path: Optional[str] = None) -> ExperimentConfig:
    if path is None:
        return ExperimentConfig()
    with open(path, "r", encoding="utf-8") as handle:
        config = parse_config(handle.read())
    logger.info(f"Loaded experiment config from {path}")
    return config
