import time
from dataclasses import dataclass, replace
from typing import Callable, Dict, List, Optional, Sequence

from ..config import ExperimentConfig
from ..corpus import Sentence
from ..experiment import ExperimentSpec, RunResult, is_adaptive_approach, round_half_up
from ..nermetrics import evaluate
from ..schedule import (
    AdaptiveMode, CoolDownShape, DecayShape, FixedMode, ScheduleConfig, ScheduleMode,
)
from ..toytrainer import TaggerModel, Vocabulary, encode_corpus, init_tagger, predict, train
from .base_manager import BaseManager

ORIGINAL_EPOCHS = 5
STABLE_EPOCHS = 20


class UnknownApproachError(ValueError):
    """Approach name not in the registry."""


@dataclass(frozen=True)
class ApproachDefinition:
    name: str
    description: str
    # (config, pinned_epochs) -> schedule mode
    build: Callable[[ExperimentConfig, Optional[float]], ScheduleMode]
    # None means config.patience
    patience: Optional[int] = None

    @property
    def adaptive(self) -> bool:
        return is_adaptive_approach(self.name)

    def patience_for(self, config: ExperimentConfig) -> int:
        return config.patience if self.patience is None else self.patience


def _pinned(pinned_epochs: Optional[float]) -> int:
    if pinned_epochs is None:
        raise ValueError("this approach needs pinned_epochs")
    return round_half_up(pinned_epochs)


def _adaptive(patience: Optional[int] = None, cooldown: CoolDownShape = CoolDownShape.LINEAR,
              resumption: bool = True):
    def build(config: ExperimentConfig, _pinned_epochs: Optional[float]) -> ScheduleMode:
        return AdaptiveMode(
            patience=config.patience if patience is None else patience,
            cooldown_shape=cooldown,
            resumption=resumption,
        )
    return build


APPROACHES: Dict[str, ApproachDefinition] = {
    definition.name: definition for definition in [
        ApproachDefinition("original", "5 epochs, linear decay after warm-up",
                           lambda c, p: FixedMode(ORIGINAL_EPOCHS, DecayShape.LINEAR)),
        ApproachDefinition("stable", "20 epochs, linear decay after warm-up",
                           lambda c, p: FixedMode(STABLE_EPOCHS, DecayShape.LINEAR)),
        ApproachDefinition("adaptive", "constant LR, validation-triggered linear cool-down with resumption",
                           _adaptive()),
        ApproachDefinition("adaptive_p0", "adaptive, stop on first non-improvement",
                           _adaptive(patience=0), patience=0),
        ApproachDefinition("adaptive_p3", "adaptive with patience 3", _adaptive(patience=3), patience=3),
        ApproachDefinition("adaptive_p5", "adaptive with patience 5", _adaptive(patience=5), patience=5),
        ApproachDefinition("adaptive_p9", "adaptive with patience 9", _adaptive(patience=9), patience=9),
        ApproachDefinition("adaptive_no_resumption", "adaptive, cool-down always runs to the end",
                           _adaptive(resumption=False)),
        ApproachDefinition("adaptive_constant_cooldown", "adaptive, LR stays constant during cool-down",
                           _adaptive(cooldown=CoolDownShape.CONSTANT)),
        ApproachDefinition("ablation_fixed20_hybrid", "20 epochs, constant LR then linear decay over the patience",
                           lambda c, p: FixedMode(STABLE_EPOCHS, DecayShape.HYBRID, c.patience)),
        ApproachDefinition("ablation_adaptive_linear", "recorded adaptive epoch count, linear decay",
                           lambda c, p: FixedMode(_pinned(p), DecayShape.LINEAR)),
        ApproachDefinition("ablation_adaptive_hybrid", "recorded adaptive epoch count, hybrid decay",
                           lambda c, p: FixedMode(_pinned(p), DecayShape.HYBRID, c.patience)),
    ]
}


def get_approach(name: str) -> ApproachDefinition:
    try:
        return APPROACHES[name]
    except KeyError:
        raise UnknownApproachError(
            f"Unknown approach {name!r}; choose from {', '.join(sorted(APPROACHES))}"
        ) from None


class RunManager(BaseManager):
    """Turns an ExperimentSpec into seeded training runs."""

    def get_manager_name(self) -> str:
        return "RunManager"

    def schedule_for(self, spec: ExperimentSpec) -> ScheduleConfig:
        definition = get_approach(spec.approach)
        if spec.merge_train_val and definition.adaptive:
            # no validation data left: train for the recorded epochs, decaying over the variant's patience
            mode: ScheduleMode = FixedMode(_pinned(spec.pinned_epochs), DecayShape.HYBRID,
                                           definition.patience_for(self.config))
        else:
            mode = definition.build(self.config, spec.pinned_epochs)
        return ScheduleConfig(mode=mode, warmup_epochs=self.config.warmup_epochs, max_lr=self.config.max_lr)

    def validate(self, spec: ExperimentSpec) -> None:
        """Raise before training when the spec cannot produce a schedule or corpus."""
        try:
            self.schedule_for(spec)
        except UnknownApproachError:
            raise
        except ValueError as e:
            raise ValueError(f"{spec.spec_id}: {e}") from e
        self.controller.corpus_manager.get(spec.corpus_id)

    def run_single(self, spec: ExperimentSpec, seed: int, record_traces: Optional[bool] = None) -> RunResult:
        config = self.config
        record_traces = config.record_traces if record_traces is None else record_traces
        started = time.perf_counter()

        schedule = self.schedule_for(spec)
        corpus = self.controller.corpus_manager.prepare(
            spec.corpus_id, spec.x_train, spec.x_val, seed, spec.merge_train_val
        )
        vocabulary, splits = encode_corpus(corpus)
        model = init_tagger(vocabulary.vocab_size, config.embed_dim, vocabulary.num_tags, seed,
                            config.max_sequence_length)
        outcome = train(model, splits, schedule, config.optimizer_config(), seed, max_epochs=config.max_epochs)
        trained = replace(model, parameters=outcome.final_parameters)

        # a diverged run keeps the parameters from before the non-finite step
        raw_f1 = self.f1_on(trained, vocabulary, corpus.test)
        val_f1 = self.f1_on(trained, vocabulary, corpus.val) if corpus.val else None
        failed = outcome.diverged or outcome.reached_cap
        test_f1 = 0.0 if failed else raw_f1

        if outcome.diverged:
            self.log_event(f"{spec.spec_id} seed={seed} diverged after {outcome.epochs_run} epochs", "warning")
        elif outcome.reached_cap:
            self.log_event(f"{spec.spec_id} seed={seed} hit the {config.max_epochs}-epoch cap", "cap")

        result = RunResult(
            spec_id=spec.spec_id,
            approach=spec.approach,
            label=spec.label,
            corpus_id=spec.corpus_id,
            x_train=spec.x_train,
            x_val=spec.x_val,
            merge_train_val=spec.merge_train_val,
            pinned_epochs=spec.pinned_epochs,
            seed=seed,
            epochs_run=float(outcome.epochs_run),
            test_f1=test_f1,
            converged=test_f1 > 0,
            val_f1=val_f1,
            raw_test_f1=raw_f1,
            diverged=outcome.diverged,
            reached_cap=outcome.reached_cap,
            per_epoch_val_loss=list(outcome.per_epoch_val_loss) if record_traces else [],
            per_epoch_lr=list(outcome.per_epoch_lr) if record_traces else [],
            wall_time=round(time.perf_counter() - started, 3) if config.record_wall_time else None,
        )
        self.log_event(
            f"{spec.label} {spec.corpus_id} x={spec.x_train:g} seed={seed}: "
            f"epochs={outcome.epochs_run} f1={test_f1:.4f}", "debug"
        )
        return result

    def run_experiment(self, spec: ExperimentSpec, record_traces: Optional[bool] = None) -> List[RunResult]:
        self.validate(spec)
        return [self.run_single(spec, seed, record_traces) for seed in spec.seeds]

    def f1_on(self, model: TaggerModel, vocabulary: Vocabulary, sentences: Sequence[Sentence]) -> float:
        gold, pred = [], []
        for sentence in sentences:
            tags = vocabulary.decode_tags(predict(model, vocabulary.encode_tokens(sentence.tokens)))
            # tokens past max_sequence_length are predicted as O
            tags += ["O"] * (len(sentence) - len(tags))
            gold.append(list(sentence.tags))
            pred.append(tags)
        return evaluate(gold, pred).f1
