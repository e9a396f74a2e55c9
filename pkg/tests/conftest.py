import pytest

from pcpg_seq2seq.config import KernelConfig, ModelConfig, TrainConfig
from pcpg_seq2seq.model import Seq2SeqModel
from pcpg_seq2seq.seeding import substream
from pcpg_seq2seq.tasks import gen_copy


@pytest.fixture
def tiny_model_config() -> ModelConfig:
    return ModelConfig(
        vocab_size=40,
        feature_dim=40,
        frontend_dim=8,
        encoder_hidden=8,
        decoder_hidden=8,
        embed_dim=6,
        attention_dim=8,
        num_layers=2,
        dropout=0.0,
    )


@pytest.fixture
def tiny_model(tiny_model_config) -> Seq2SeqModel:
    return Seq2SeqModel.initialize(tiny_model_config, substream(0, "init"))


@pytest.fixture
def tiny_dataset():
    return gen_copy(8, (2, 3), seed=0, feature_dim=40, noise=0.1, max_repeat=2)


@pytest.fixture
def tiny_train_config() -> TrainConfig:
    return TrainConfig(
        lam=0.5,
        num_samples=2,
        kernel=KernelConfig(k=3, s=1),
        lr=0.01,
        optimizer="sgd",
        batch_size=2,
        max_iters=4,
        max_decode_len=5,
        eval_every=2,
        checkpoint_every=2,
        patience=0,
        train_eval_samples=4,
        val_eval_samples=4,
        seed=0,
    )
