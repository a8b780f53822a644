"""
Toy tagger and optimizer tests.

Test Categories:
1. Forward pass
2. Loss and gradients (including a finite-difference check)
3. Adam with decoupled weight decay
4. Training loop
"""

import math
import os
import sys

import numpy as np
import pytest

sys.path.append(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from fine_tuning.corpus import SyntheticCorpusSpec, generate_synthetic
from fine_tuning.nermetrics import evaluate
from fine_tuning.schedule import AdaptiveMode, EpochDecision, FixedMode, ScheduleConfig
from fine_tuning.toytrainer import (
    AdamState, OptimizerConfig, TaggerModel, Vocabulary, adam_step, cross_entropy, encode_corpus,
    forward, init_tagger, loss_and_gradients, predict, train, zero_tagger,
)

FD_STEP = 1e-6


def random_model(rng: np.random.Generator) -> TaggerModel:
    vocab, dim, tags = int(rng.integers(3, 7)), int(rng.integers(1, 4)), int(rng.integers(2, 6))
    model = zero_tagger(vocab, dim, tags)
    for name, value in model.parameters.items():
        model.parameters[name] = rng.normal(0.0, 1.0, size=value.shape)
    return model


def random_batch(rng: np.random.Generator, model: TaggerModel):
    batch = []
    for _ in range(int(rng.integers(1, 4))):
        length = int(rng.integers(1, 6))
        batch.append((rng.integers(0, model.vocab_size, size=length).tolist(),
                      rng.integers(0, model.num_tags, size=length).tolist()))
    return batch


@pytest.fixture(scope="module")
def small_corpus():
    return generate_synthetic(SyntheticCorpusSpec(num_sentences=60, noise_rate=0.0, seed=3))


class TestForward:

    def test_zero_model_is_uniform(self):
        model = zero_tagger(vocab_size=10, embed_dim=4, num_tags=5)
        probabilities = forward(model, [1, 2, 3])
        np.testing.assert_allclose(probabilities, np.full((3, 5), 0.2), atol=1e-15)

    def test_softmax_by_hand(self):
        model = zero_tagger(vocab_size=2, embed_dim=1, num_tags=2)
        model.parameters["bias"] = np.array([0.0, math.log(3.0)])
        np.testing.assert_allclose(forward(model, [1])[0], [0.25, 0.75], atol=1e-12)

    def test_truncates_to_max_sequence_length(self):
        model = init_tagger(20, 4, 3, seed=1, max_sequence_length=4)
        assert forward(model, list(range(10))).shape == (4, 3)

    def test_empty_sentence(self):
        model = init_tagger(20, 4, 3, seed=1)
        assert forward(model, []).shape == (0, 3)

    def test_rows_sum_to_one(self):
        model = random_model(np.random.default_rng(5))
        probabilities = forward(model, [0, 1, 2, 1, 0])
        np.testing.assert_allclose(probabilities.sum(axis=1), 1.0, atol=1e-9)

    def test_token_out_of_range(self):
        model = init_tagger(5, 2, 3, seed=1)
        with pytest.raises(ValueError):
            forward(model, [5])

    def test_init_within_bounds(self):
        model = init_tagger(50, 8, 7, seed=9)
        for value in model.parameters.values():
            assert np.all(np.abs(value) <= 0.1)


class TestLossAndGradients:

    def test_certain_model_has_zero_loss_and_gradients(self):
        model = zero_tagger(vocab_size=4, embed_dim=2, num_tags=2)
        model.parameters["bias"] = np.array([1000.0, 0.0])
        loss, grads = loss_and_gradients(model, [([1, 2, 3], [0, 0, 0])])
        assert loss == 0.0
        for grad in grads.values():
            assert np.all(grad == 0.0)

    def test_uniform_model_loss(self):
        model = zero_tagger(vocab_size=4, embed_dim=2, num_tags=5)
        loss, _ = loss_and_gradients(model, [([1, 2], [0, 4]), ([3], [2])])
        assert loss == pytest.approx(math.log(5), abs=1e-12)

    def test_gradient_shapes(self):
        model = init_tagger(8, 3, 4, seed=2)
        _, grads = loss_and_gradients(model, [([1, 2, 3], [0, 1, 2])])
        for name, value in model.parameters.items():
            assert grads[name].shape == value.shape

    def test_tag_out_of_range(self):
        model = init_tagger(8, 3, 4, seed=2)
        with pytest.raises(ValueError):
            loss_and_gradients(model, [([1, 2], [0, 4])])

    def test_empty_batch(self):
        with pytest.raises(ValueError):
            loss_and_gradients(init_tagger(8, 3, 4, seed=2), [])

    def test_validation_loss_matches_batch_loss(self):
        model = init_tagger(8, 3, 4, seed=2)
        batch = [([1, 2, 3], [0, 1, 2]), ([4, 5], [3, 3])]
        assert cross_entropy(model, batch) == pytest.approx(loss_and_gradients(model, batch)[0], abs=1e-14)

    def test_gradients_match_finite_differences(self):
        rng = np.random.default_rng(2024)
        for _ in range(20):
            model = random_model(rng)
            assert model.num_parameters() <= 200
            batch = random_batch(rng, model)
            _, grads = loss_and_gradients(model, batch)
            for name, value in model.parameters.items():
                numeric = np.zeros_like(value)
                for index in np.ndindex(value.shape):
                    original = value[index]
                    value[index] = original + FD_STEP
                    plus = loss_and_gradients(model, batch)[0]
                    value[index] = original - FD_STEP
                    minus = loss_and_gradients(model, batch)[0]
                    value[index] = original
                    numeric[index] = (plus - minus) / (2 * FD_STEP)
                scale = np.maximum(np.maximum(np.abs(grads[name]), np.abs(numeric)), 1e-4)
                assert np.max(np.abs(grads[name] - numeric) / scale) < 1e-5, name


class TestAdam:

    def test_zero_lr_without_decay_is_identity(self):
        params = {"w": np.array([1.0, -2.0, 3.0])}
        grads = {"w": np.array([0.3, 0.1, -0.5])}
        config = OptimizerConfig(weight_decay=0.0)
        state = AdamState()
        for _ in range(3):
            state, params = adam_step(state, params, grads, 0.0, config)
        np.testing.assert_array_equal(params["w"], [1.0, -2.0, 3.0])
        assert state.step == 3

    def test_first_step_moves_by_lr_against_gradient(self):
        config = OptimizerConfig(weight_decay=0.0)
        _, params = adam_step(AdamState(), {"w": np.array([1.0, 1.0])}, {"w": np.array([0.5, -2.0])}, 0.1, config)
        np.testing.assert_allclose(params["w"], [0.9, 1.1], rtol=1e-6)

    def test_decoupled_weight_decay(self):
        config = OptimizerConfig(weight_decay=0.01)
        _, params = adam_step(AdamState(), {"w": np.array([3.0])}, {"w": np.array([0.0])}, 2e-5, config)
        assert params["w"][0] == pytest.approx(3.0 * (1 - 2e-7), rel=1e-15)

    def test_without_bias_correction_first_step_is_larger(self):
        config = OptimizerConfig(weight_decay=0.0, bias_correction=False)
        _, params = adam_step(AdamState(), {"w": np.array([1.0])}, {"w": np.array([0.5])}, 0.1, config)
        assert params["w"][0] < 0.9

    def test_inputs_are_not_modified(self):
        params = {"w": np.array([1.0])}
        adam_step(AdamState(), params, {"w": np.array([1.0])}, 0.1)
        assert params["w"][0] == 1.0

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            adam_step(AdamState(), {"w": np.zeros(3)}, {"w": np.zeros(2)}, 0.1)

    def test_state_shape_mismatch(self):
        state = AdamState(step=1, first_moment={"w": np.zeros(2)}, second_moment={"w": np.zeros(2)})
        with pytest.raises(ValueError):
            adam_step(state, {"w": np.zeros(3)}, {"w": np.zeros(3)}, 0.1)

    @pytest.mark.parametrize("kwargs", [{"beta1": 1.0}, {"beta2": 0.0}, {"weight_decay": -0.1}, {"batch_size": 0}])
    def test_invalid_config(self, kwargs):
        with pytest.raises(ValueError):
            OptimizerConfig(**kwargs)


class TestTraining:

    def _setup(self, corpus, seed=43):
        vocabulary, splits = encode_corpus(corpus)
        model = init_tagger(vocabulary.vocab_size, 8, vocabulary.num_tags, seed)
        return vocabulary, splits, model

    def test_fixed_schedule_runs_total_epochs(self, small_corpus):
        _, splits, model = self._setup(small_corpus)
        outcome = train(model, splits, ScheduleConfig(FixedMode(5), max_lr=0.05), OptimizerConfig(), seed=43)
        assert outcome.epochs_run == 5
        assert len(outcome.per_epoch_val_loss) == len(outcome.per_epoch_lr) == 5
        assert outcome.per_epoch_lr[-1] == 0.0
        assert not outcome.diverged

    def test_same_seed_is_bit_identical(self, small_corpus):
        _, splits, model = self._setup(small_corpus)
        config = ScheduleConfig(AdaptiveMode(patience=2), max_lr=0.05)
        first = train(model, splits, config, OptimizerConfig(), seed=44, max_epochs=30)
        second = train(model, splits, config, OptimizerConfig(), seed=44, max_epochs=30)
        assert first.per_epoch_val_loss == second.per_epoch_val_loss
        assert first.per_epoch_lr == second.per_epoch_lr
        for name in first.final_parameters:
            np.testing.assert_array_equal(first.final_parameters[name], second.final_parameters[name])

    def test_model_is_left_untouched(self, small_corpus):
        _, splits, model = self._setup(small_corpus)
        before = {k: v.copy() for k, v in model.parameters.items()}
        train(model, splits, ScheduleConfig(FixedMode(3), max_lr=0.05), OptimizerConfig(), seed=1)
        for name, value in before.items():
            np.testing.assert_array_equal(model.parameters[name], value)

    def test_adaptive_run_stops_or_reports_cap(self, small_corpus):
        _, splits, model = self._setup(small_corpus)
        outcome = train(model, splits, ScheduleConfig(AdaptiveMode(), max_lr=0.05), OptimizerConfig(),
                        seed=45, max_epochs=80)
        assert len(outcome.per_epoch_val_loss) == outcome.epochs_run
        if outcome.reached_cap:
            assert outcome.epochs_run == 80
        else:
            assert outcome.decisions[-1] is EpochDecision.STOP
            assert outcome.epochs_run >= 2 + 1 + 7

    def test_adaptive_needs_validation_data(self, small_corpus):
        _, splits, model = self._setup(small_corpus)
        with pytest.raises(ValueError):
            train(model, {"train": splits["train"], "val": []}, ScheduleConfig(AdaptiveMode()),
                  OptimizerConfig(), seed=1)

    def test_fixed_schedule_without_validation(self, small_corpus):
        _, splits, model = self._setup(small_corpus)
        outcome = train(model, {"train": splits["train"], "val": []}, ScheduleConfig(FixedMode(4), max_lr=0.05),
                        OptimizerConfig(), seed=1)
        assert outcome.epochs_run == 4
        assert outcome.per_epoch_val_loss == [None] * 4

    def test_noise_free_corpus_is_learned(self):
        corpus = generate_synthetic(SyntheticCorpusSpec(num_sentences=2000, noise_rate=0.0, seed=11))
        vocabulary, splits = encode_corpus(corpus)
        model = init_tagger(vocabulary.vocab_size, 16, vocabulary.num_tags, seed=43)
        outcome = train(model, splits, ScheduleConfig(FixedMode(20), max_lr=0.05), OptimizerConfig(), seed=43)
        trained = TaggerModel(model.vocab_size, model.embed_dim, model.num_tags, outcome.final_parameters)
        predictions = [vocabulary.decode_tags(predict(trained, vocabulary.encode_tokens(s.tokens)))
                       for s in corpus.test]
        report = evaluate([list(s.tags) for s in corpus.test], predictions)
        assert report.f1 == 1.0
        assert outcome.per_epoch_val_loss[-1] < outcome.per_epoch_val_loss[0]

    def test_non_finite_loss_marks_run_diverged(self, small_corpus):
        vocabulary, splits = encode_corpus(small_corpus)
        model = init_tagger(vocabulary.vocab_size, 4, vocabulary.num_tags, seed=43)
        model.parameters["bias"][0] = np.nan
        outcome = train(model, splits, ScheduleConfig(FixedMode(5), max_lr=0.05), OptimizerConfig(), seed=43)
        assert outcome.diverged
        assert not outcome.reached_cap
        assert outcome.epochs_run == 0
        assert outcome.per_epoch_val_loss == [] and outcome.per_epoch_lr == []

    def test_vanishing_learning_rate_keeps_validation_loss_constant(self, small_corpus):
        vocabulary, splits = encode_corpus(small_corpus)
        model = init_tagger(vocabulary.vocab_size, 4, vocabulary.num_tags, seed=43)
        outcome = train(model, splits, ScheduleConfig(FixedMode(5), max_lr=1e-300),
                        OptimizerConfig(weight_decay=0.0), seed=43)
        initial = cross_entropy(model, splits["val"])
        assert outcome.per_epoch_val_loss == [initial] * 5


class TestVocabulary:

    def test_unknown_tokens_map_to_zero(self, small_corpus):
        vocabulary = Vocabulary.from_corpus(small_corpus)
        assert vocabulary.encode_tokens(["never-seen-token"]) == [0]

    def test_tag_layout(self):
        vocabulary = Vocabulary([], ["LOC", "PER"])
        assert vocabulary.tags == ["O", "B-LOC", "I-LOC", "B-PER", "I-PER"]
