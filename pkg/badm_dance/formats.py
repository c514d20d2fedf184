"""On-disk formats: motion, feature and beat JSON, ``.bdt`` tensors, checkpoints.

``.bdt`` block::

    b"BADM" | u32 version=1 | u32 rows | u32 cols | rows*cols little-endian float32

``.bdck`` checkpoint::

    b"BDCK" | u32 version=1 | u32 header length | UTF-8 JSON header | .bdt blocks

The checkpoint header lists tensor names and shapes in block order. No field
depends on the clock, so writing the same content twice gives identical bytes.
"""

from __future__ import annotations

import io
import json
import logging
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import BinaryIO

import numpy as np

from . import __version__
from .errors import DimMismatch, FileFormatError
from .motion import FRAME_DIMS, MotionSequence

logger = logging.getLogger(__name__)

TOOL_NAME = "badm-dance"
TENSOR_MAGIC = b"BADM"
CHECKPOINT_MAGIC = b"BDCK"
FORMAT_VERSION = 1
_U32 = struct.Struct("<I")


def provenance(command: str, seed: int | None, config: dict | None = None) -> dict:
    """The block every output file carries: tool, version, command, seed, config."""
    return {
        "tool": TOOL_NAME,
        "version": __version__,
        "command": command,
        "seed": seed,
        "config": config or {},
    }


def _write_json(path: str | Path, payload: dict) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, indent=1, sort_keys=True) + "\n")
    return path


def _read_json(path: str | Path, required: set[str]) -> dict:
    try:
        raw = json.loads(Path(path).read_text())
    except json.JSONDecodeError as e:
        raise FileFormatError(f"{path} is not valid JSON: {e}")
    if not isinstance(raw, dict):
        raise FileFormatError(f"{path} must hold a JSON object")
    missing = required - set(raw)
    if missing:
        raise FileFormatError(f"{path} is missing keys {sorted(missing)}")
    return raw


def _field(raw: dict, path, key: str, kind=int):
    try:
        return kind(raw[key])
    except (KeyError, TypeError, ValueError) as e:
        raise FileFormatError(f"{path}: bad {key!r} field: {e}")


def _int_list(value) -> list[int]:
    if not isinstance(value, list):
        raise TypeError(f"expected a list, got {type(value).__name__}")
    return [int(v) for v in value]


def _matrix(raw: dict, path, dim: int | None) -> np.ndarray:
    try:
        data = np.asarray(raw["data"], dtype=np.float64)
    except (TypeError, ValueError) as e:
        raise FileFormatError(f"{path}: data is not a numeric matrix: {e}")
    frames = _field(raw, path, "frames")
    if data.ndim != 2 or data.shape[0] != frames:
        raise FileFormatError(f"{path}: data is {data.shape}, expected {frames} rows")
    if data.shape[1] != _field(raw, path, "dim") or (
        dim is not None and data.shape[1] != dim
    ):
        raise DimMismatch(
            f"{path}: rows have {data.shape[1]} values, dim says {raw['dim']}"
        )
    return data


def save_motion(path, motion: MotionSequence, prov: dict | None = None) -> Path:
    """Write a motion as JSON with its frame count, width and provenance."""
    return _write_json(
        path,
        {
            "fps": motion.fps,
            "frames": motion.n_frames,
            "dim": FRAME_DIMS,
            "data": motion.data.tolist(),
            "provenance": prov or provenance("unknown", None),
        },
    )


def load_motion(path) -> MotionSequence:
    """Read a motion JSON file; rows must be ``FRAME_DIMS`` wide."""
    raw = _read_json(path, {"fps", "frames", "dim", "data"})
    return MotionSequence(_field(raw, path, "fps"), _matrix(raw, path, FRAME_DIMS))


@dataclass(frozen=True)
class FeatureFile:
    fps: int
    data: np.ndarray


def save_features(path, fps: int, data: np.ndarray, prov: dict | None = None) -> Path:
    """Write per-frame music features as JSON."""
    data = np.asarray(data, dtype=np.float64)
    return _write_json(
        path,
        {
            "fps": fps,
            "frames": data.shape[0],
            "dim": data.shape[1],
            "data": data.tolist(),
            "provenance": prov or provenance("unknown", None),
        },
    )


def load_features(path) -> FeatureFile:
    """Features from JSON, or from a ``.bdt`` block (fps unknown, reported as 0)."""
    if Path(path).suffix == ".bdt":
        return FeatureFile(0, read_tensor_file(path))
    raw = _read_json(path, {"fps", "frames", "dim", "data"})
    return FeatureFile(_field(raw, path, "fps"), _matrix(raw, path, None))


@dataclass(frozen=True)
class BeatFile:
    fps: int
    frames: int
    beats: list[int]


def save_beats(path, beat_file: BeatFile, prov: dict | None = None) -> Path:
    """Write beat frame indices as JSON."""
    return _write_json(
        path,
        {
            "fps": beat_file.fps,
            "frames": beat_file.frames,
            "beats": list(beat_file.beats),
            "provenance": prov or provenance("unknown", None),
        },
    )


def load_beats(path) -> BeatFile:
    """Read a beat file; every index must lie inside the declared frames."""
    raw = _read_json(path, {"fps", "frames", "beats"})
    beats = _field(raw, path, "beats", _int_list)
    frames = _field(raw, path, "frames")
    if any(not 0 <= b < frames for b in beats):
        raise FileFormatError(f"{path}: beat index outside [0, {frames})")
    return BeatFile(_field(raw, path, "fps"), frames, beats)


def write_tensor(stream: BinaryIO, array: np.ndarray) -> None:
    """Append one float32 ``.bdt`` block; arrays above 2-D keep their last axis."""
    array = np.asarray(array, dtype=np.float64)
    matrix = array.reshape(-1, array.shape[-1]) if array.ndim else array.reshape(1, 1)
    stream.write(TENSOR_MAGIC)
    stream.write(_U32.pack(FORMAT_VERSION))
    stream.write(_U32.pack(matrix.shape[0]))
    stream.write(_U32.pack(matrix.shape[1]))
    stream.write(np.ascontiguousarray(matrix, dtype="<f4").tobytes())


def _read_exact(stream: BinaryIO, count: int, what: str) -> bytes:
    chunk = stream.read(count)
    if len(chunk) != count:
        raise FileFormatError(
            f"Truncated {what}: wanted {count} bytes, got {len(chunk)}"
        )
    return chunk


def read_tensor(stream: BinaryIO) -> np.ndarray:
    """Read one ``.bdt`` block as a float64 matrix."""
    magic = _read_exact(stream, 4, "tensor magic")
    if magic != TENSOR_MAGIC:
        raise FileFormatError(f"Bad tensor magic {magic!r}")
    version, rows, cols = (
        _U32.unpack(_read_exact(stream, 4, "tensor header"))[0] for _ in range(3)
    )
    if version != FORMAT_VERSION:
        raise FileFormatError(f"Unsupported tensor version {version}")
    payload = _read_exact(stream, rows * cols * 4, "tensor data")
    return np.frombuffer(payload, dtype="<f4").astype(np.float64).reshape(rows, cols)


def write_tensor_file(path, array: np.ndarray) -> Path:
    """Write one ``.bdt`` block to a file."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("wb") as f:
        write_tensor(f, array)
    return path


def read_tensor_file(path) -> np.ndarray:
    """Read the first ``.bdt`` block of a file."""
    with Path(path).open("rb") as f:
        return read_tensor(f)


@dataclass
class Checkpoint:
    """Named parameters plus the run configuration they were trained with."""

    params: dict[str, np.ndarray]
    config: dict
    provenance: dict
    epoch: int = 0


def checkpoint_bytes(ckpt: Checkpoint) -> bytes:
    """Serialize a checkpoint; equal content gives equal bytes."""
    names = list(ckpt.params)
    header = {
        "config": ckpt.config,
        "provenance": ckpt.provenance,
        "epoch": ckpt.epoch,
        "tensors": [[name, list(np.shape(ckpt.params[name]))] for name in names],
    }
    encoded = json.dumps(header, sort_keys=True).encode("utf-8")
    buffer = io.BytesIO()
    buffer.write(CHECKPOINT_MAGIC)
    buffer.write(_U32.pack(FORMAT_VERSION))
    buffer.write(_U32.pack(len(encoded)))
    buffer.write(encoded)
    for name in names:
        write_tensor(buffer, ckpt.params[name])
    return buffer.getvalue()


def save_checkpoint(path, ckpt: Checkpoint) -> Path:
    """Write ``checkpoint_bytes`` to ``path``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(checkpoint_bytes(ckpt))
    logger.debug(f"Wrote checkpoint {path} ({len(ckpt.params)} tensors)")
    return path


def load_checkpoint(path) -> Checkpoint:
    """Read a checkpoint; parameters come back as float32-rounded float64 arrays."""
    with Path(path).open("rb") as f:
        magic = _read_exact(f, 4, "checkpoint magic")
        if magic != CHECKPOINT_MAGIC:
            raise FileFormatError(f"{path}: bad checkpoint magic {magic!r}")
        version = _U32.unpack(_read_exact(f, 4, "checkpoint version"))[0]
        if version != FORMAT_VERSION:
            raise FileFormatError(f"{path}: unsupported checkpoint version {version}")
        length = _U32.unpack(_read_exact(f, 4, "checkpoint header length"))[0]
        try:
            header = json.loads(_read_exact(f, length, "checkpoint header"))
        except (json.JSONDecodeError, UnicodeDecodeError) as e:
            raise FileFormatError(f"{path}: unreadable checkpoint header: {e}")
        missing = {"tensors", "config", "provenance"} - set(
            header if isinstance(header, dict) else ()
        )
        if missing:
            raise FileFormatError(f"{path}: checkpoint header lacks {sorted(missing)}")
        params = {}
        try:
            for name, shape in header["tensors"]:
                params[name] = read_tensor(f).reshape(shape)
            epoch = int(header.get("epoch", 0))
        except (TypeError, ValueError) as e:
            raise FileFormatError(f"{path}: tensors do not match the header: {e}")
    return Checkpoint(
        params=params,
        config=header["config"],
        provenance=header["provenance"],
        epoch=epoch,
    )
