"""
Desk-scale sequence tagger trained with Adam.

The model embeds each token, concatenates the embeddings of the token and its
left and right neighbours (zeros beyond the sentence edges) and feeds them to a
linear softmax classifier. Everything is float64 numpy.
"""

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .corpus import Sentence, TaggedCorpus
from .schedule import (
    EpochDecision, LearningRateScheduler, NumericalDivergenceError, ScheduleConfig,
)

logger = logging.getLogger(__name__)

UNKNOWN_TOKEN = "<unk>"
INIT_SCALE = 0.1
CONTEXT_WINDOW = 3  # token - 1, token, token + 1
PARAMETER_NAMES = ("embeddings", "context_weights", "bias")

Example = Tuple[Sequence[int], Sequence[int]]


@dataclass
class TaggerModel:
    vocab_size: int
    embed_dim: int
    num_tags: int
    parameters: Dict[str, np.ndarray]
    max_sequence_length: int = 128

    def __post_init__(self):
        expected = {
            "embeddings": (self.vocab_size, self.embed_dim),
            "context_weights": (CONTEXT_WINDOW * self.embed_dim, self.num_tags),
            "bias": (self.num_tags,),
        }
        for name, shape in expected.items():
            if name not in self.parameters:
                raise ValueError(f"missing parameter {name!r}")
            if self.parameters[name].shape != shape:
                raise ValueError(f"{name} has shape {self.parameters[name].shape}, expected {shape}")
        if self.max_sequence_length < 1:
            raise ValueError("max_sequence_length must be positive")

    def num_parameters(self) -> int:
        return sum(array.size for array in self.parameters.values())

    def copy(self) -> "TaggerModel":
        return replace(self, parameters={k: v.copy() for k, v in self.parameters.items()})


@dataclass(frozen=True)
class OptimizerConfig:
    beta1: float = 0.9
    beta2: float = 0.999
    weight_decay: float = 0.01
    bias_correction: bool = True
    batch_size: int = 16
    epsilon: float = 1e-8

    def __post_init__(self):
        if not 0.0 < self.beta1 < 1.0:
            raise ValueError(f"beta1 must lie in (0, 1), got {self.beta1}")
        if not 0.0 < self.beta2 < 1.0:
            raise ValueError(f"beta2 must lie in (0, 1), got {self.beta2}")
        if self.weight_decay < 0:
            raise ValueError(f"weight_decay must be non-negative, got {self.weight_decay}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be positive, got {self.batch_size}")
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")


@dataclass
class AdamState:
    step: int = 0
    first_moment: Dict[str, np.ndarray] = field(default_factory=dict)
    second_moment: Dict[str, np.ndarray] = field(default_factory=dict)


@dataclass
class TrainOutcome:
    epochs_run: int
    per_epoch_val_loss: List[Optional[float]]
    per_epoch_lr: List[float]
    final_parameters: Dict[str, np.ndarray]
    diverged: bool = False
    reached_cap: bool = False
    decisions: List[EpochDecision] = field(default_factory=list)


# --- Vocabulary ---

class Vocabulary:
    """Token and tag id maps. Token id 0 is reserved for unknown tokens."""

    def __init__(self, tokens: Sequence[str], tag_vocabulary: Sequence[str]):
        self.token_to_id: Dict[str, int] = {UNKNOWN_TOKEN: 0}
        for token in tokens:
            if token not in self.token_to_id:
                self.token_to_id[token] = len(self.token_to_id)
        self.tags: List[str] = ["O"]
        for entity_type in tag_vocabulary:
            self.tags.extend([f"B-{entity_type}", f"I-{entity_type}"])
        self.tag_to_id = {tag: index for index, tag in enumerate(self.tags)}

    @classmethod
    def from_corpus(cls, corpus: TaggedCorpus) -> "Vocabulary":
        tokens = [token for sentence in corpus.train for token in sentence.tokens]
        return cls(tokens, corpus.tag_vocabulary)

    @property
    def vocab_size(self) -> int:
        return len(self.token_to_id)

    @property
    def num_tags(self) -> int:
        return len(self.tags)

    def encode_tokens(self, tokens: Sequence[str]) -> List[int]:
        return [self.token_to_id.get(token, 0) for token in tokens]

    def encode(self, sentence: Sentence) -> Example:
        return self.encode_tokens(sentence.tokens), [self.tag_to_id[tag] for tag in sentence.tags]

    def decode_tags(self, tag_ids: Sequence[int]) -> List[str]:
        return [self.tags[i] for i in tag_ids]


def encode_corpus(corpus: TaggedCorpus, vocabulary: Optional[Vocabulary] = None
                  ) -> Tuple[Vocabulary, Dict[str, List[Example]]]:
    vocabulary = vocabulary or Vocabulary.from_corpus(corpus)
    splits = {split: [vocabulary.encode(s) for s in getattr(corpus, split)]
              for split in ("train", "val", "test")}
    return vocabulary, splits


# --- Model ---

def init_tagger(vocab_size: int, embed_dim: int, num_tags: int, seed: int,
                max_sequence_length: int = 128) -> TaggerModel:
    rng = np.random.default_rng(seed)
    parameters = {
        "embeddings": rng.uniform(-INIT_SCALE, INIT_SCALE, size=(vocab_size, embed_dim)),
        "context_weights": rng.uniform(-INIT_SCALE, INIT_SCALE, size=(CONTEXT_WINDOW * embed_dim, num_tags)),
        "bias": rng.uniform(-INIT_SCALE, INIT_SCALE, size=(num_tags,)),
    }
    return TaggerModel(vocab_size, embed_dim, num_tags, parameters, max_sequence_length)


def zero_tagger(vocab_size: int, embed_dim: int, num_tags: int,
                max_sequence_length: int = 128) -> TaggerModel:
    parameters = {
        "embeddings": np.zeros((vocab_size, embed_dim)),
        "context_weights": np.zeros((CONTEXT_WINDOW * embed_dim, num_tags)),
        "bias": np.zeros(num_tags),
    }
    return TaggerModel(vocab_size, embed_dim, num_tags, parameters, max_sequence_length)


def _context_features(model: TaggerModel, token_ids: np.ndarray) -> np.ndarray:
    embedded = model.parameters["embeddings"][token_ids]
    padded = np.zeros((len(token_ids) + 2, model.embed_dim))
    padded[1:-1] = embedded
    return np.concatenate([padded[:-2], padded[1:-1], padded[2:]], axis=1)


def _softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    exp = np.exp(shifted)
    return exp / exp.sum(axis=1, keepdims=True)


def _token_ids(model: TaggerModel, sentence: Sequence[int]) -> np.ndarray:
    token_ids = np.asarray(sentence[:model.max_sequence_length], dtype=np.int64)
    if token_ids.size and (token_ids.min() < 0 or token_ids.max() >= model.vocab_size):
        raise ValueError(f"token id out of range for vocab_size {model.vocab_size}")
    return token_ids


def forward(model: TaggerModel, sentence: Sequence[int]) -> np.ndarray:
    """Per-token tag distributions, shape (min(len, max_sequence_length), num_tags)."""
    token_ids = _token_ids(model, sentence)
    if token_ids.size == 0:
        return np.zeros((0, model.num_tags))
    features = _context_features(model, token_ids)
    logits = features @ model.parameters["context_weights"] + model.parameters["bias"]
    return _softmax(logits)


def predict(model: TaggerModel, sentence: Sequence[int]) -> List[int]:
    probabilities = forward(model, sentence)
    return probabilities.argmax(axis=1).tolist()


def _gold_ids(model: TaggerModel, tags: Sequence[int], length: int) -> np.ndarray:
    gold = np.asarray(tags[:length], dtype=np.int64)
    if gold.size and (gold.min() < 0 or gold.max() >= model.num_tags):
        raise ValueError(f"tag id out of range for num_tags {model.num_tags}")
    return gold


def cross_entropy(model: TaggerModel, examples: Sequence[Example]) -> float:
    """Token-mean negative log-likelihood without gradients."""
    total, count = 0.0, 0
    for token_ids, tags in examples:
        probabilities = forward(model, token_ids)
        gold = _gold_ids(model, tags, len(probabilities))
        with np.errstate(divide="ignore"):
            total -= float(np.log(probabilities[np.arange(len(gold)), gold]).sum())
        count += len(gold)
    return total / count if count else 0.0


def loss_and_gradients(model: TaggerModel, batch: Sequence[Example]) -> Tuple[float, Dict[str, np.ndarray]]:
    """
    Token-mean cross-entropy over the batch and its gradients.

    Returns:
        (loss, gradients keyed like model.parameters)
    """
    if not batch:
        raise ValueError("batch must not be empty")

    weights = model.parameters["context_weights"]
    grads = {name: np.zeros_like(value) for name, value in model.parameters.items()}
    encoded = []
    num_tokens = 0
    for token_ids, tags in batch:
        ids = _token_ids(model, token_ids)
        gold = _gold_ids(model, tags, len(ids))
        if len(gold) != len(ids):
            raise ValueError("every token needs a gold tag")
        encoded.append((ids, gold))
        num_tokens += len(ids)
    if num_tokens == 0:
        return 0.0, grads

    total = 0.0
    dim = model.embed_dim
    for ids, gold in encoded:
        if ids.size == 0:
            continue
        features = _context_features(model, ids)
        probabilities = _softmax(features @ weights + model.parameters["bias"])
        rows = np.arange(len(ids))
        with np.errstate(divide="ignore"):
            total -= float(np.log(probabilities[rows, gold]).sum())

        d_logits = probabilities
        d_logits[rows, gold] -= 1.0
        d_logits /= num_tokens
        grads["bias"] += d_logits.sum(axis=0)
        grads["context_weights"] += features.T @ d_logits
        d_features = d_logits @ weights.T
        # left slot of token i holds token i-1, right slot holds token i+1
        np.add.at(grads["embeddings"], ids[:-1], d_features[1:, :dim])
        np.add.at(grads["embeddings"], ids, d_features[:, dim:2 * dim])
        np.add.at(grads["embeddings"], ids[1:], d_features[:-1, 2 * dim:])

    return total / num_tokens, grads


# --- Optimizer ---

def adam_step(state: AdamState, parameters: Dict[str, np.ndarray], gradients: Dict[str, np.ndarray],
              lr: float, config: Optional[OptimizerConfig] = None
              ) -> Tuple[AdamState, Dict[str, np.ndarray]]:
    """
    One Adam update with decoupled weight decay.

    Decay is applied first (p -= lr * weight_decay * p), then the moment update.
    Inputs are not modified.
    """
    config = config or OptimizerConfig()
    if lr < 0:
        raise ValueError(f"lr must be non-negative, got {lr}")
    if state.step < 0:
        raise ValueError("optimizer step counter must be non-negative")
    if set(gradients) != set(parameters):
        raise ValueError("gradients and parameters have different keys")

    step = state.step + 1
    first, second, updated = {}, {}, {}
    for name, value in parameters.items():
        grad = gradients[name]
        if grad.shape != value.shape:
            raise ValueError(f"gradient for {name} has shape {grad.shape}, expected {value.shape}")
        m_prev = state.first_moment.get(name, np.zeros_like(value))
        v_prev = state.second_moment.get(name, np.zeros_like(value))
        if m_prev.shape != value.shape or v_prev.shape != value.shape:
            raise ValueError(f"optimizer state for {name} does not match the parameter shape")

        m = config.beta1 * m_prev + (1.0 - config.beta1) * grad
        v = config.beta2 * v_prev + (1.0 - config.beta2) * grad * grad
        if config.bias_correction:
            m_hat = m / (1.0 - config.beta1 ** step)
            v_hat = v / (1.0 - config.beta2 ** step)
        else:
            m_hat, v_hat = m, v

        decayed = value - lr * config.weight_decay * value
        updated[name] = decayed - lr * m_hat / (np.sqrt(v_hat) + config.epsilon)
        first[name], second[name] = m, v

    return AdamState(step=step, first_moment=first, second_moment=second), updated


# --- Training loop ---

def _batches(order: np.ndarray, batch_size: int) -> List[np.ndarray]:
    return [order[i:i + batch_size] for i in range(0, len(order), batch_size)]


def train(model: TaggerModel, splits: Dict[str, List[Example]], schedule_config: ScheduleConfig,
          optimizer_config: OptimizerConfig, seed: int, max_epochs: int = 500) -> TrainOutcome:
    """
    Train until the schedule stops (or max_epochs is reached).

    Args:
        model: Initial model, left untouched
        splits: Encoded "train" and "val" examples
        schedule_config: Schedule; steps_per_epoch is overridden to match the data
        optimizer_config: Adam hyper-parameters and batch size
        seed: Seed of the shuffling RNG
        max_epochs: Hard cap on the number of epochs

    Returns:
        TrainOutcome
    """
    train_examples = splits["train"]
    val_examples = splits.get("val", [])
    if not train_examples:
        raise ValueError("training split is empty")
    if not val_examples and schedule_config.is_adaptive:
        raise ValueError("an adaptive schedule needs a non-empty validation split")

    steps_per_epoch = math.ceil(len(train_examples) / optimizer_config.batch_size)
    scheduler = LearningRateScheduler(replace(schedule_config, steps_per_epoch=steps_per_epoch))
    rng = np.random.default_rng(seed)
    parameters = {name: value.copy() for name, value in model.parameters.items()}
    working = replace(model, parameters=parameters)
    adam = AdamState()

    val_losses: List[Optional[float]] = []
    lrs: List[float] = []
    diverged = False

    for epoch in range(max_epochs):
        lr = 0.0
        for step, batch_indices in enumerate(_batches(rng.permutation(len(train_examples)),
                                                      optimizer_config.batch_size)):
            lr = scheduler.lr_for_step(step)
            batch = [train_examples[i] for i in batch_indices]
            loss, grads = loss_and_gradients(working, batch)
            if not math.isfinite(loss):
                diverged = True
                break
            adam, working.parameters = adam_step(adam, working.parameters, grads, lr, optimizer_config)
        if diverged:
            logger.warning(f"[Train] non-finite training loss in epoch {epoch + 1}")
            break

        val_loss = cross_entropy(working, val_examples) if val_examples else None
        try:
            decision = scheduler.step_epoch(val_loss)
        except NumericalDivergenceError as exc:
            logger.warning(f"[Train] {exc}")
            diverged = True
            break
        val_losses.append(val_loss)
        lrs.append(lr)
        logger.debug(f"[Train] epoch={epoch + 1} lr={lr:.3e} val_loss={val_loss} decision={decision.value}")
        if decision is EpochDecision.STOP:
            break

    epochs_run = len(val_losses)
    reached_cap = not diverged and not scheduler.stopped
    if reached_cap:
        logger.warning(f"[Train] hard cap of {max_epochs} epochs reached without a stop")
    return TrainOutcome(
        epochs_run=epochs_run,
        per_epoch_val_loss=val_losses,
        per_epoch_lr=lrs,
        final_parameters=working.parameters,
        diverged=diverged,
        reached_cap=reached_cap,
        decisions=list(scheduler.decisions),
    )
