import numpy as np
import pytest

from pcpg_seq2seq.checkpoint import MAGIC, load_model, read_checkpoint, save_model, write_checkpoint
from pcpg_seq2seq.errors import DataError


def test_tensor_round_trip(tmp_path):
    tensors = {"a": np.arange(6.0).reshape(2, 3), "b": np.array([np.pi]), "c": np.array(-0.5)}
    write_checkpoint(tmp_path / "t.ckpt", tensors, {"iteration": 7})
    loaded, metadata = read_checkpoint(tmp_path / "t.ckpt")
    assert metadata == {"iteration": 7}
    assert list(loaded) == ["a", "b", "c"]
    for name, value in tensors.items():
        np.testing.assert_array_equal(loaded[name], value)
        assert loaded[name].shape == value.shape


def test_file_starts_with_magic(tmp_path):
    write_checkpoint(tmp_path / "t.ckpt", {}, {})
    assert (tmp_path / "t.ckpt").read_bytes()[:8] == MAGIC


def test_model_round_trip(tmp_path, tiny_model):
    save_model(tmp_path / "m.ckpt", tiny_model, {"opt.steps": np.array([3.0])}, iteration=12)
    model, rest, metadata = load_model(tmp_path / "m.ckpt")
    assert metadata["iteration"] == 12
    assert model.config == tiny_model.config
    np.testing.assert_array_equal(rest["opt.steps"], [3.0])
    for name in tiny_model.parameters:
        np.testing.assert_array_equal(model[name].data, tiny_model[name].data)


@pytest.mark.parametrize(
    "corrupt",
    [
        lambda data: b"NOTACKPT" + data[8:],
        lambda data: data[:8] + (2).to_bytes(4, "little") + data[12:],
        lambda data: data[:-5],
        lambda data: data + b"\x00",
    ],
)
def test_corrupted_checkpoints_rejected(tmp_path, tiny_model, corrupt):
    path = tmp_path / "m.ckpt"
    save_model(path, tiny_model)
    path.write_bytes(corrupt(path.read_bytes()))
    with pytest.raises(DataError):
        load_model(path)


def test_missing_checkpoint(tmp_path):
    with pytest.raises(DataError):
        load_model(tmp_path / "absent.ckpt")
