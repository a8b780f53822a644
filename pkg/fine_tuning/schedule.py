"""
Learning-rate schedule state machine.

Covers the adaptive approach (warm-up, constant learning rate, a validation
triggered cool-down with patience and optional resumption) as well as the
fixed-epoch approaches with linear or hybrid decay.

All transition functions are pure: they take a ScheduleState and return a new
one. LearningRateScheduler wraps a config and its evolving state for use inside
a training loop.
"""

import logging
import math
from dataclasses import dataclass, replace
from enum import Enum
from typing import List, Optional, Sequence, Tuple, Union

logger = logging.getLogger(__name__)

DEFAULT_MAX_LR = 2e-5
DEFAULT_WARMUP_EPOCHS = 2
DEFAULT_PATIENCE = 7


class ScheduleStoppedError(RuntimeError):
    """Raised when a stopped schedule is queried or fed another epoch."""


class NumericalDivergenceError(ArithmeticError):
    """Raised when a non-finite validation loss reaches the schedule."""


class CoolDownShape(Enum):
    LINEAR = "linear"
    CONSTANT = "constant"


class DecayShape(Enum):
    LINEAR = "linear"
    HYBRID = "hybrid"


class Phase(Enum):
    WARM_UP = "warm_up"
    CONSTANT = "constant"
    COOL_DOWN = "cool_down"
    STOPPED = "stopped"


class EpochDecision(Enum):
    CONTINUE = "continue"
    ENTER_COOL_DOWN = "enter_cool_down"
    RESUME_CONSTANT = "resume_constant"
    STOP = "stop"


@dataclass(frozen=True)
class AdaptiveMode:
    """Validation-monitored training with a patience-long cool-down."""
    patience: int = DEFAULT_PATIENCE
    cooldown_shape: CoolDownShape = CoolDownShape.LINEAR
    resumption: bool = True


@dataclass(frozen=True)
class FixedMode:
    """Predetermined epoch count. Hybrid decay holds max_lr until the last `hybrid_patience` epochs."""
    total_epochs: int
    decay_shape: DecayShape = DecayShape.LINEAR
    hybrid_patience: Optional[int] = None


ScheduleMode = Union[AdaptiveMode, FixedMode]


@dataclass(frozen=True)
class ScheduleConfig:
    mode: ScheduleMode
    warmup_epochs: int = DEFAULT_WARMUP_EPOCHS
    max_lr: float = DEFAULT_MAX_LR
    steps_per_epoch: int = 1

    def __post_init__(self):
        if self.warmup_epochs < 0:
            raise ValueError(f"warmup_epochs must be non-negative, got {self.warmup_epochs}")
        if not self.max_lr > 0:
            raise ValueError(f"max_lr must be positive, got {self.max_lr}")
        if self.steps_per_epoch < 1:
            raise ValueError(f"steps_per_epoch must be positive, got {self.steps_per_epoch}")

        mode = self.mode
        if isinstance(mode, AdaptiveMode):
            if mode.patience < 0:
                raise ValueError(f"patience must be >= 0, got {mode.patience}")
        elif isinstance(mode, FixedMode):
            if mode.total_epochs <= self.warmup_epochs:
                raise ValueError(
                    f"total_epochs ({mode.total_epochs}) must exceed warmup_epochs ({self.warmup_epochs})"
                )
            if mode.decay_shape is DecayShape.HYBRID:
                if mode.hybrid_patience is None or mode.hybrid_patience < 0:
                    raise ValueError("hybrid decay needs a non-negative hybrid_patience")
                if mode.hybrid_patience >= mode.total_epochs - self.warmup_epochs:
                    raise ValueError(
                        f"hybrid_patience ({mode.hybrid_patience}) must be smaller than "
                        f"total_epochs - warmup_epochs ({mode.total_epochs - self.warmup_epochs})"
                    )
        else:
            raise TypeError(f"Unsupported schedule mode: {mode!r}")

    @property
    def is_adaptive(self) -> bool:
        return isinstance(self.mode, AdaptiveMode)


@dataclass(frozen=True)
class ScheduleState:
    phase: Phase
    epochs_completed: int = 0
    best_val_loss: Optional[float] = None
    stop_epoch: Optional[int] = None
    # cool-down bookkeeping, meaningful only while phase is COOL_DOWN
    epochs_remaining: int = 0
    lr_at_entry: float = 0.0
    cooldown_entry_epoch: Optional[int] = None


@dataclass(frozen=True)
class ScheduleTrace:
    stop_epoch: Optional[int]
    lr_curve: Tuple[float, ...]
    decisions: Tuple[EpochDecision, ...]
    reached_cap: bool


def initial_state(config: ScheduleConfig) -> ScheduleState:
    return ScheduleState(phase=Phase.WARM_UP if config.warmup_epochs > 0 else Phase.CONSTANT)


def _fixed_lr(config: ScheduleConfig, mode: FixedMode, step_fraction: float) -> float:
    if mode.decay_shape is DecayShape.HYBRID:
        knee = mode.total_epochs - mode.hybrid_patience
        if step_fraction <= knee:
            return config.max_lr
        if mode.hybrid_patience == 0:
            return 0.0
        remaining = (mode.total_epochs - step_fraction) / mode.hybrid_patience
    else:
        remaining = (mode.total_epochs - step_fraction) / (mode.total_epochs - config.warmup_epochs)
    return config.max_lr * min(1.0, max(0.0, remaining))


def lr_at(config: ScheduleConfig, state: ScheduleState, step_fraction: float) -> float:
    """
    Learning rate at a point of the run measured in epochs.

    Args:
        config: Schedule configuration
        state: Current schedule state
        step_fraction: Epochs elapsed within the run, e.g. 3.5 is half-way through epoch 4

    Returns:
        float: The learning rate
    """
    if step_fraction < 0:
        raise ValueError(f"step_fraction must be non-negative, got {step_fraction}")
    if state.phase is Phase.STOPPED:
        raise ScheduleStoppedError(f"schedule stopped at epoch {state.stop_epoch}")
    if step_fraction > state.epochs_completed + 1:
        raise ValueError(
            f"step_fraction {step_fraction} lies beyond the current epoch ({state.epochs_completed + 1})"
        )

    if config.warmup_epochs > 0 and step_fraction < config.warmup_epochs:
        return config.max_lr * step_fraction / config.warmup_epochs

    mode = config.mode
    if isinstance(mode, FixedMode):
        return _fixed_lr(config, mode, step_fraction)

    if state.phase is Phase.COOL_DOWN:
        if mode.cooldown_shape is CoolDownShape.CONSTANT:
            return state.lr_at_entry
        elapsed = step_fraction - state.cooldown_entry_epoch
        return state.lr_at_entry * min(1.0, max(0.0, 1.0 - elapsed / mode.patience))
    return config.max_lr


def _stop(state: ScheduleState, epoch: int) -> Tuple[ScheduleState, EpochDecision]:
    stopped = replace(state, phase=Phase.STOPPED, stop_epoch=epoch, epochs_remaining=0)
    return stopped, EpochDecision.STOP


def observe_validation_loss(config: ScheduleConfig, state: ScheduleState,
                            val_loss: Optional[float]) -> Tuple[ScheduleState, EpochDecision]:
    """
    Advance the schedule by one completed epoch.

    A loss strictly below the best seen so far is an improvement; ties are not.
    Fixed modes accept val_loss=None (training without validation monitoring).

    Returns:
        (new state, decision for this epoch)
    """
    if state.phase is Phase.STOPPED:
        raise ScheduleStoppedError(f"schedule already stopped at epoch {state.stop_epoch}")
    if val_loss is not None and not math.isfinite(val_loss):
        raise NumericalDivergenceError(
            f"non-finite validation loss {val_loss} after epoch {state.epochs_completed + 1}"
        )

    epoch = state.epochs_completed + 1
    improved = val_loss is not None and (state.best_val_loss is None or val_loss < state.best_val_loss)
    advanced = replace(
        state,
        epochs_completed=epoch,
        best_val_loss=val_loss if improved else state.best_val_loss,
    )
    mode = config.mode

    if isinstance(mode, FixedMode):
        if epoch >= mode.total_epochs:
            return _stop(advanced, epoch)
        phase = Phase.WARM_UP if epoch < config.warmup_epochs else Phase.CONSTANT
        return replace(advanced, phase=phase), EpochDecision.CONTINUE

    if val_loss is None:
        raise ValueError("an adaptive schedule needs a validation loss for every epoch")

    # warm-up always runs to completion
    if state.phase is Phase.WARM_UP:
        phase = Phase.WARM_UP if epoch < config.warmup_epochs else Phase.CONSTANT
        return replace(advanced, phase=phase), EpochDecision.CONTINUE

    if state.phase is Phase.CONSTANT:
        if improved:
            return advanced, EpochDecision.CONTINUE
        if mode.patience == 0:
            return _stop(advanced, epoch)
        cooling = replace(
            advanced,
            phase=Phase.COOL_DOWN,
            epochs_remaining=mode.patience,
            lr_at_entry=config.max_lr,
            cooldown_entry_epoch=epoch,
        )
        return cooling, EpochDecision.ENTER_COOL_DOWN

    if improved and mode.resumption:
        resumed = replace(
            advanced,
            phase=Phase.CONSTANT,
            epochs_remaining=0,
            lr_at_entry=0.0,
            cooldown_entry_epoch=None,
        )
        return resumed, EpochDecision.RESUME_CONSTANT

    remaining = state.epochs_remaining - 1
    if remaining <= 0:
        return _stop(advanced, epoch)
    return replace(advanced, epochs_remaining=remaining), EpochDecision.CONTINUE


class LearningRateScheduler:
    """Owns one run's schedule state. Not shared between runs."""

    def __init__(self, config: ScheduleConfig):
        self.config = config
        self.state = initial_state(config)
        self.decisions: List[EpochDecision] = []

    @property
    def stopped(self) -> bool:
        return self.state.phase is Phase.STOPPED

    @property
    def epochs_completed(self) -> int:
        return self.state.epochs_completed

    def lr(self, step_fraction: float) -> float:
        return lr_at(self.config, self.state, step_fraction)

    def lr_for_step(self, step_in_epoch: int) -> float:
        """LR for the given optimizer step (0-based) of the upcoming epoch, taken at the step's end."""
        fraction = self.state.epochs_completed + (step_in_epoch + 1) / self.config.steps_per_epoch
        return self.lr(fraction)

    def step_epoch(self, val_loss: Optional[float]) -> EpochDecision:
        self.state, decision = observe_validation_loss(self.config, self.state, val_loss)
        self.decisions.append(decision)
        if decision is not EpochDecision.CONTINUE:
            logger.debug(f"[Schedule] epoch {self.state.epochs_completed}: {decision.value}")
        return decision


def schedule_trace(config: ScheduleConfig, loss_sequence: Sequence[Optional[float]],
                   max_epochs: Optional[int] = None) -> ScheduleTrace:
    """
    Replay a loss sequence through the schedule.

    The cap defaults to the length of the sequence (or total_epochs for fixed
    modes, which do not need losses). Reaching the cap without a Stop is
    reported through `reached_cap` rather than raised.
    """
    if max_epochs is None:
        max_epochs = len(loss_sequence)
        if isinstance(config.mode, FixedMode):
            max_epochs = max(max_epochs, config.mode.total_epochs)

    scheduler = LearningRateScheduler(config)
    lr_curve: List[float] = []
    for epoch_index in range(max_epochs):
        if epoch_index < len(loss_sequence):
            loss = loss_sequence[epoch_index]
        elif not config.is_adaptive:
            loss = None
        else:
            break
        for step in range(config.steps_per_epoch):
            lr_curve.append(scheduler.lr_for_step(step))
        if scheduler.step_epoch(loss) is EpochDecision.STOP:
            break

    reached_cap = not scheduler.stopped
    if reached_cap:
        logger.warning(f"[Schedule] no stop after {scheduler.epochs_completed} epochs (cap reached)")
    return ScheduleTrace(
        stop_epoch=scheduler.state.stop_epoch,
        lr_curve=tuple(lr_curve),
        decisions=tuple(scheduler.decisions),
        reached_cap=reached_cap,
    )
