"""Checkpoint file: magic, format version, JSON model config, flat little-endian float64 parameters."""

import json
import logging
import os
import struct
from pathlib import Path

import numpy as np

from models.equivariant import EquivariantTransformer, ModelConfig, flat_parameters, load_flat_parameters
from utils.errors import DataError

logger = logging.getLogger(__name__)

MAGIC = b"FRADCKPT"
FORMAT_VERSION = 1
_HEADER = struct.Struct("<8sII")


def save_checkpoint(model: EquivariantTransformer, path: Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    config_bytes = json.dumps(model.config.model_dump(), sort_keys=True).encode("utf-8")
    vector = flat_parameters(model).astype("<f8")
    tmp = path.with_name(path.name + ".tmp")
    with tmp.open("wb") as handle:
        handle.write(_HEADER.pack(MAGIC, FORMAT_VERSION, len(config_bytes)))
        handle.write(config_bytes)
        handle.write(vector.tobytes())
    os.replace(tmp, path)
    logger.info(f"Saved checkpoint with {vector.size} parameters to {path}")
    return path


def load_checkpoint(path: Path) -> EquivariantTransformer:
    path = Path(path)
    if not path.exists():
        raise DataError(f"Checkpoint not found: {path}")
    data = path.read_bytes()
    if len(data) < _HEADER.size:
        raise DataError(f"{path} is too short to be a checkpoint")
    magic, version, config_len = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise DataError(f"{path} is not a frad-desk checkpoint")
    if version != FORMAT_VERSION:
        raise DataError(f"Unsupported checkpoint version {version} in {path}")
    offset = _HEADER.size
    config = ModelConfig.model_validate_json(data[offset:offset + config_len])
    vector = np.frombuffer(data[offset + config_len:], dtype="<f8").astype(np.float64)
    model = EquivariantTransformer(config)
    try:
        load_flat_parameters(model, vector)
    except ValueError as exc:
        raise DataError(f"{path}: {exc}") from None
    return model
