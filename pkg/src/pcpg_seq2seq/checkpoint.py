"""Versioned binary checkpoint files.

Layout (all integers little-endian)::

    b"PCPGCKPT"                magic, 8 bytes
    u32 version                currently 1
    u32 n, n bytes             UTF-8 JSON metadata (model config, iteration, ...)
    u32 count                  number of tensors
    count x tensor record:
        u16 n, n bytes         UTF-8 tensor name
        u8 ndim
        ndim x u32             dimensions
        prod(dims) x f64       row-major values
"""

import json
import logging
import struct
from pathlib import Path
from typing import Any, BinaryIO, Dict, Optional, Tuple, Union

import numpy as np

from .config import ModelConfig
from .errors import DataError
from .grad_core import parameter
from .model import Seq2SeqModel, parameter_shapes

logger = logging.getLogger(__name__)

MAGIC = b"PCPGCKPT"
VERSION = 1


def _read(stream: BinaryIO, size: int) -> bytes:
    data = stream.read(size)
    if len(data) != size:
        raise DataError("checkpoint is truncated")
    return data


def write_checkpoint(
    path: Union[str, Path], tensors: Dict[str, np.ndarray], metadata: Dict[str, Any]
) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    meta = json.dumps(metadata, sort_keys=True).encode("utf-8")
    tmp = path.with_suffix(path.suffix + ".tmp")
    with open(tmp, "wb") as out:
        out.write(MAGIC)
        out.write(struct.pack("<II", VERSION, len(meta)))
        out.write(meta)
        out.write(struct.pack("<I", len(tensors)))
        for name, value in tensors.items():
            value = np.ascontiguousarray(value, dtype="<f8")
            encoded = name.encode("utf-8")
            out.write(struct.pack("<H", len(encoded)))
            out.write(encoded)
            out.write(struct.pack("<B", value.ndim))
            out.write(struct.pack(f"<{value.ndim}I", *value.shape))
            out.write(value.tobytes(order="C"))
    tmp.replace(path)
    logger.debug("Wrote checkpoint %s (%d tensors)", path, len(tensors))


def read_checkpoint(path: Union[str, Path]) -> Tuple[Dict[str, np.ndarray], Dict[str, Any]]:
    path = Path(path)
    if not path.is_file():
        raise DataError(f"checkpoint not found: {path}")
    with open(path, "rb") as stream:
        if _read(stream, len(MAGIC)) != MAGIC:
            raise DataError(f"{path}: not a checkpoint (bad magic)")
        version, meta_len = struct.unpack("<II", _read(stream, 8))
        if version != VERSION:
            raise DataError(f"{path}: unsupported checkpoint version {version}")
        try:
            metadata = json.loads(_read(stream, meta_len).decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise DataError(f"{path}: corrupted metadata: {exc}") from exc
        (count,) = struct.unpack("<I", _read(stream, 4))
        tensors: Dict[str, np.ndarray] = {}
        for _ in range(count):
            (name_len,) = struct.unpack("<H", _read(stream, 2))
            name = _read(stream, name_len).decode("utf-8")
            (ndim,) = struct.unpack("<B", _read(stream, 1))
            shape = struct.unpack(f"<{ndim}I", _read(stream, 4 * ndim))
            size = int(np.prod(shape)) if ndim else 1
            raw = _read(stream, 8 * size)
            tensors[name] = np.frombuffer(raw, dtype="<f8").reshape(shape).astype(np.float64)
        if stream.read(1):
            raise DataError(f"{path}: trailing bytes after last tensor")
    return tensors, metadata


def save_model(
    path: Union[str, Path],
    model: Seq2SeqModel,
    extra_tensors: Optional[Dict[str, np.ndarray]] = None,
    **metadata: Any,
) -> None:
    """Model parameters under ``model.*`` plus any optimizer state tensors."""
    tensors = {f"model.{name}": value for name, value in model.state_dict().items()}
    tensors.update(extra_tensors or {})
    metadata["model_config"] = model.config.model_dump(mode="json")
    write_checkpoint(path, tensors, metadata)


def load_model(path: Union[str, Path]) -> Tuple[Seq2SeqModel, Dict[str, np.ndarray], Dict[str, Any]]:
    """Rebuild the model; returns (model, non-model tensors, metadata)."""
    tensors, metadata = read_checkpoint(path)
    if "model_config" not in metadata:
        raise DataError(f"{path}: checkpoint has no model_config")
    config = ModelConfig.model_validate(metadata["model_config"])
    params = {}
    for name, shape in parameter_shapes(config).items():
        key = f"model.{name}"
        if key not in tensors or tensors[key].shape != shape:
            raise DataError(f"{path}: missing or misshapen tensor {key}")
        params[name] = parameter(tensors[key], name=name)
    rest = {k: v for k, v in tensors.items() if not k.startswith("model.")}
    return Seq2SeqModel(config, params), rest, metadata
