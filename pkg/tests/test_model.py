import itertools

import numpy as np
import pytest

from pcpg_seq2seq.config import ModelConfig
from pcpg_seq2seq.errors import ShapeError
from pcpg_seq2seq.grad_core import Tape
from pcpg_seq2seq.model import Seq2SeqModel, parameter_shapes
from pcpg_seq2seq.seeding import substream
from pcpg_seq2seq.vocab import BOS, EOS, PAD


def _frames(model, length, seed=0):
    return substream(seed, "data").normal(size=(length, model.config.feature_dim))


def test_parameter_layout(tiny_model, tiny_model_config):
    shapes = parameter_shapes(tiny_model_config)
    assert list(tiny_model.parameters) == list(shapes)
    assert shapes["output.W"] == (8 + 16, 40)
    assert tiny_model.num_parameters() == sum(int(np.prod(s)) for s in shapes.values())


def test_encoder_shapes(tiny_model):
    encoder = tiny_model.encode(_frames(tiny_model, 5), Tape(False))
    assert encoder.outputs.shape == (5, 16)
    assert len(encoder.final_hidden) == 2
    assert encoder.keys.shape == (5, 8)


def test_single_frame_input(tiny_model):
    encoder = tiny_model.encode(_frames(tiny_model, 1), Tape(False))
    weights, _ = tiny_model.attend(tiny_model.initial_state(encoder, Tape(False))[-1], encoder, Tape(False))
    np.testing.assert_allclose(weights.data, [1.0])


def test_feature_width_mismatch(tiny_model):
    with pytest.raises(ShapeError):
        tiny_model.encode(np.zeros((3, 7)), Tape(False))


def test_decode_step_distribution(tiny_model):
    tape = Tape(False)
    encoder = tiny_model.encode(_frames(tiny_model, 4), tape)
    step = tiny_model.decode_step(tiny_model.initial_state(encoder, tape), BOS, encoder, tape)
    assert step.logits.shape == (40,)
    assert np.all(step.attention.data >= 0.0)
    assert abs(step.attention.data.sum() - 1.0) < 1e-9
    probs = np.exp(step.log_probs.data)
    assert abs(probs.sum() - 1.0) < 1e-9
    assert probs[PAD] == 0.0 and probs[BOS] == 0.0


def test_sampled_episode_never_emits_control_tokens(tiny_model):
    encoder = tiny_model.encode(_frames(tiny_model, 4), Tape(False))
    for seed in range(10):
        episode = tiny_model.sample_episode(encoder, 6, substream(seed, "episodes"), Tape(False))
        assert 1 <= len(episode) <= 6
        assert PAD not in episode.tokens and BOS not in episode.tokens
        assert EOS not in episode.tokens[:-1]
        assert episode.log_probs.shape == (len(episode),)


def test_sampling_is_seed_deterministic(tiny_model):
    encoder = tiny_model.encode(_frames(tiny_model, 4), Tape(False))
    first = tiny_model.sample_episode(encoder, 8, substream(3, "episodes"), Tape(False))
    second = tiny_model.sample_episode(encoder, 8, substream(3, "episodes"), Tape(False))
    assert first.tokens == second.tokens
    np.testing.assert_array_equal(first.log_probs.data, second.log_probs.data)


def test_zero_temperature_is_greedy(tiny_model):
    encoder = tiny_model.encode(_frames(tiny_model, 4), Tape(False))
    episode = tiny_model.sample_episode(encoder, 8, substream(0, "episodes"), Tape(False), temperature=0.0)
    assert episode.tokens == tiny_model.greedy_decode(encoder, 8)


def test_initialization_is_seed_deterministic(tiny_model_config):
    a = Seq2SeqModel.initialize(tiny_model_config, substream(5, "init"))
    b = Seq2SeqModel.initialize(tiny_model_config, substream(5, "init"))
    for name in a.parameters:
        np.testing.assert_array_equal(a[name].data, b[name].data)


def test_teacher_forced_log_probs_match_sequence_log_prob(tiny_model):
    encoder = tiny_model.encode(_frames(tiny_model, 4), Tape(False))
    tokens = (5, 9, EOS)
    log_probs = tiny_model.decode_teacher_forced(tokens, encoder, Tape(False))
    assert log_probs.shape == (3,)
    assert tiny_model.sequence_log_prob(encoder, tokens) == pytest.approx(float(log_probs.data.sum()))


def test_beam_width_one_equals_greedy(tiny_model):
    for seed in range(5):
        encoder = tiny_model.encode(_frames(tiny_model, 3 + seed, seed), Tape(False))
        assert tiny_model.beam_search(encoder, 1, 6) == tiny_model.greedy_decode(encoder, 6)


def test_beam_never_worse_than_greedy(tiny_model):
    for seed in range(5):
        encoder = tiny_model.encode(_frames(tiny_model, 4, seed), Tape(False))
        greedy = tiny_model.greedy_decode(encoder, 6)
        beam = tiny_model.beam_search(encoder, 4, 6, length_penalty=0.0)
        best = tiny_model.sequence_log_prob(encoder, beam)
        assert best >= tiny_model.sequence_log_prob(encoder, greedy) - 1e-12


def test_wide_beam_matches_exhaustive_search():
    config = ModelConfig(
        vocab_size=5,
        feature_dim=4,
        frontend_dim=4,
        encoder_hidden=4,
        decoder_hidden=4,
        embed_dim=3,
        attention_dim=4,
        num_layers=1,
        dropout=0.0,
    )
    model = Seq2SeqModel.initialize(config, substream(1, "init"))
    max_len = 3
    symbols = model.allowed_tokens
    for seed in range(3):
        encoder = model.encode(substream(seed, "data").normal(size=(3, 4)), Tape(False))
        candidates = []
        for length in range(1, max_len + 1):
            for body in itertools.product([t for t in symbols if t != EOS], repeat=length - 1):
                candidates.append(body + (EOS,))
            if length == max_len:
                candidates.extend(itertools.product([t for t in symbols if t != EOS], repeat=length))
        best = max(candidates, key=lambda c: model.sequence_log_prob(encoder, c))
        beam = model.beam_search(encoder, len(candidates), max_len, length_penalty=0.0)
        assert model.sequence_log_prob(encoder, beam) == pytest.approx(model.sequence_log_prob(encoder, best))



def test_default_length_penalty_beam_never_worse_than_greedy(tiny_model_config):
    for model_seed in range(20):
        model = Seq2SeqModel.initialize(tiny_model_config, substream(model_seed, "init"))
        for seed in range(10):
            encoder = model.encode(_frames(model, 2 + seed % 4, 100 * model_seed + seed), Tape(False))
            greedy = model.sequence_log_prob(encoder, model.greedy_decode(encoder, 6))
            beam = model.sequence_log_prob(encoder, model.beam_search(encoder, 4, 6))
            assert beam >= greedy - 1e-12


def _small_vocab_model():
    config = ModelConfig(
        vocab_size=5,
        feature_dim=4,
        frontend_dim=4,
        encoder_hidden=4,
        decoder_hidden=4,
        embed_dim=3,
        attention_dim=4,
        num_layers=1,
        dropout=0.0,
    )
    return Seq2SeqModel.initialize(config, substream(2, "init"))


def _all_sequences(symbols, max_len):
    body = [t for t in symbols if t != EOS]
    out = []
    for length in range(1, max_len + 1):
        out.extend(prefix + (EOS,) for prefix in itertools.product(body, repeat=length - 1))
    out.extend(itertools.product(body, repeat=max_len))
    return out


def test_pruned_beam_matches_exhaustive_search_at_length_four():
    model = _small_vocab_model()
    max_len = 4
    candidates = _all_sequences(model.allowed_tokens, max_len)
    assert len(candidates) == 31
    for seed in range(5):
        encoder = model.encode(substream(seed, "data").normal(size=(4, 4)), Tape(False))
        scores = [model.sequence_log_prob(encoder, c) for c in candidates]
        best = max(scores)
        greedy = model.sequence_log_prob(encoder, model.greedy_decode(encoder, max_len))
        # 16 live prefixes at most, so the last expansion (24 candidates) is pruned
        exact = model.beam_search(encoder, 16, max_len, length_penalty=0.0)
        assert model.sequence_log_prob(encoder, exact) == pytest.approx(best, rel=1e-12)
        for width in (2, 3, 4):
            found = model.sequence_log_prob(
                encoder, model.beam_search(encoder, width, max_len, length_penalty=0.0)
            )
            assert greedy - 1e-12 <= found <= best + 1e-12

def test_invalid_beam_width(tiny_model):
    encoder = tiny_model.encode(_frames(tiny_model, 2), Tape(False))
    with pytest.raises(ValueError):
        tiny_model.beam_search(encoder, 0, 4)


def test_dropout_changes_outputs_only_with_rng(tiny_model_config):
    config = tiny_model_config.model_copy(update={"dropout": 0.5})
    model = Seq2SeqModel.initialize(config, substream(0, "init"))
    tape = Tape(False)
    encoder = model.encode(_frames(model, 3), tape)
    hidden = model.initial_state(encoder, tape)
    plain = model.decode_step(hidden, BOS, encoder, tape).log_probs.data
    again = model.decode_step(hidden, BOS, encoder, tape).log_probs.data
    dropped = model.decode_step(hidden, BOS, encoder, tape, dropout_rng=substream(0, "dropout")).log_probs.data
    np.testing.assert_array_equal(plain, again)
    assert not np.array_equal(plain, dropped)


def test_state_dict_round_trip(tiny_model, tiny_model_config):
    other = Seq2SeqModel.initialize(tiny_model_config, substream(9, "init"))
    other.load_state_dict(tiny_model.state_dict())
    for name in tiny_model.parameters:
        np.testing.assert_array_equal(other[name].data, tiny_model[name].data)
    with pytest.raises(ValueError):
        other.load_state_dict({"frontend.W": np.zeros((40, 8))})


def test_copy_is_independent(tiny_model):
    clone = tiny_model.copy()
    clone["output.b"].data[:] = 1.0
    assert not np.array_equal(clone["output.b"].data, tiny_model["output.b"].data)
