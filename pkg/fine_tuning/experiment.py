"""Experiment definitions and per-seed run records."""

import math
from dataclasses import asdict, dataclass, field, fields
from typing import Any, Dict, List, Optional, Tuple

from .config import DEFAULT_SEEDS

SCHEMA_VERSION = 1

# approaches that train for a recorded number of epochs instead of monitoring validation loss
PINNED_APPROACHES = ("ablation_adaptive_linear", "ablation_adaptive_hybrid")


def round_half_up(value: float) -> int:
    return int(math.floor(value + 0.5))


def is_adaptive_approach(name: str) -> bool:
    """Adaptive approaches are named `adaptive` or `adaptive_<variant>`."""
    return name == "adaptive" or name.startswith("adaptive_")


@dataclass(frozen=True)
class ExperimentSpec:
    approach: str
    corpus_id: str
    x_train: float
    x_val: Optional[float] = None
    seeds: Tuple[int, ...] = DEFAULT_SEEDS
    merge_train_val: bool = False
    pinned_epochs: Optional[float] = None

    def __post_init__(self):
        object.__setattr__(self, "seeds", tuple(self.seeds))
        if self.x_val is None:
            object.__setattr__(self, "x_val", self.x_train)
        for name in ("x_train", "x_val"):
            value = getattr(self, name)
            if not 0.0 < value <= 1.0:
                raise ValueError(f"{name} must lie in (0, 1], got {value}")
        if not self.seeds:
            raise ValueError("at least one seed is required")
        if len(set(self.seeds)) != len(self.seeds):
            raise ValueError(f"duplicate seeds in {self.seeds}")
        if self.pinned_epochs is not None:
            if not (self.merge_train_val or self.approach in PINNED_APPROACHES):
                raise ValueError("pinned_epochs only applies to train+val retraining or the pinned ablations")
            if self.pinned_epochs <= 0:
                raise ValueError("pinned_epochs must be positive")
        elif self.approach in PINNED_APPROACHES:
            raise ValueError(f"approach {self.approach!r} needs pinned_epochs")
        elif self.merge_train_val and is_adaptive_approach(self.approach):
            raise ValueError(f"train+val retraining of {self.approach!r} needs the recorded pinned_epochs")

    @property
    def n_runs(self) -> int:
        return len(self.seeds)

    @property
    def label(self) -> str:
        """Approach name plus the modifiers that distinguish report columns."""
        label = self.approach
        if self.x_val != self.x_train:
            label += f"[x_val={self.x_val:g}]"
        if self.merge_train_val:
            label += "+val"
        return label

    @property
    def spec_id(self) -> str:
        pinned = "-" if self.pinned_epochs is None else f"{self.pinned_epochs:g}"
        return (f"{self.approach}|{self.corpus_id}|x_train={self.x_train:g}|x_val={self.x_val:g}"
                f"|merge={int(self.merge_train_val)}|pinned={pinned}")


@dataclass
class RunResult:
    spec_id: str
    approach: str
    label: str
    corpus_id: str
    x_train: float
    x_val: float
    merge_train_val: bool
    pinned_epochs: Optional[float]
    seed: int
    epochs_run: float
    test_f1: float
    converged: bool
    val_f1: Optional[float] = None
    # f1 as measured, kept when a diverged or capped run is recorded as non-converged
    raw_test_f1: Optional[float] = None
    diverged: bool = False
    reached_cap: bool = False
    per_epoch_val_loss: List[Optional[float]] = field(default_factory=list)
    per_epoch_lr: List[float] = field(default_factory=list)
    wall_time: Optional[float] = None
    schema_version: int = SCHEMA_VERSION

    def __post_init__(self):
        if self.converged != (self.test_f1 > 0):
            raise ValueError(f"converged={self.converged} contradicts test_f1={self.test_f1}")

    @property
    def key(self) -> Tuple[str, int]:
        return self.spec_id, self.seed

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "RunResult":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown fields {sorted(unknown)}")
        return cls(**data)
