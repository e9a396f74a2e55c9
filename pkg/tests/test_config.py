import pytest

from pcpg_seq2seq.config import ExperimentConfig, KernelConfig, TrainConfig, dump_config, load_config
from pcpg_seq2seq.errors import ConfigError
from pcpg_seq2seq.pcpg import BoundaryPolicy


def _write(tmp_path, text):
    path = tmp_path / "exp.yaml"
    path.write_text(text)
    return path


def test_minimal_config_uses_defaults(tmp_path):
    config = load_config(_write(tmp_path, "schema_version: 1\n"))
    assert config.train.lam == 0.5
    assert config.train.kernel.k == 5 and config.train.kernel.s == 1
    assert config.train.optimizer == "adam" and config.train.lr == 0.001
    assert config.model.dropout == 0.5


def test_lambda_key_and_kernel(tmp_path):
    text = (
        "schema_version: 1\n"
        "train:\n"
        "  lambda: 0.25\n"
        "  kernel: {k: 3, s: 2, w: [1, 2, 1], padding: truncate}\n"
    )
    config = load_config(_write(tmp_path, text))
    assert config.train.lam == 0.25
    kernel = config.train.kernel.to_kernel()
    assert kernel.w == pytest.approx((0.25, 0.5, 0.25))
    assert config.train.kernel.padding is BoundaryPolicy.TRUNCATE


@pytest.mark.parametrize(
    "text",
    [
        "schema_version: 2\n",
        "seed: 1\n",
        "schema_version: 1\ntrain:\n  lamda: 0.5\n",
        "schema_version: 1\ntrain:\n  lambda: 1.5\n",
        "schema_version: 1\ntrain:\n  num_samples: 0\n",
        "schema_version: 1\ntrain:\n  lr: 0\n",
        "schema_version: [1\n",
        "- 1\n- 2\n",
    ],
)
def test_invalid_configs(tmp_path, text):
    with pytest.raises(ConfigError):
        load_config(_write(tmp_path, text))


def test_missing_config(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "absent.yaml")


def test_dump_round_trip(tmp_path):
    config = ExperimentConfig(
        schema_version=1,
        train=TrainConfig(lam=0.3, kernel=KernelConfig(k=3, s=1, w=[0.25, 0.5, 0.25])),
    )
    assert load_config(_write(tmp_path, dump_config(config))) == config


def test_mismatched_kernel_weights():
    with pytest.raises(ConfigError):
        KernelConfig(k=3, w=[0.5, 0.5]).to_kernel()
