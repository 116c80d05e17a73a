"""Binary ``POUR1`` checkpoint container for frames, feature matrices and models.

Layout (all integers little-endian)::

    b"POUR1"
    u8  tag length, tag (ascii: "etf" | "features" | "model")
    u32 meta length, meta (canonical JSON, utf-8)
    u32 array count
    per array: u32 ndim, ndim x u64 dims
    payload: every array as little-endian float64, row-major, in order
    u64 checksum: blake2b-64 of everything between the magic and the checksum

Round trips are bit-exact.
"""

from __future__ import annotations

import hashlib
import json
import struct
from pathlib import Path
from typing import Optional, Union

import numpy as np

from .errors import CheckpointError, ChecksumError, ShapeMismatchError
from .geometry import EtfFrame, projector_from_direction
from .synthetic import FeatureMatrix
from .toy_model import Layer, ToyModel

MAGIC = b"POUR1"
_LE_F64 = np.dtype("<f8")

Checkpointable = Union[EtfFrame, FeatureMatrix, ToyModel]


def _checksum(body: bytes) -> bytes:
    return hashlib.blake2b(body, digest_size=8).digest()


def _pack(tag: str, meta: dict, arrays: list[np.ndarray]) -> bytes:
    tag_b = tag.encode("ascii")
    meta_b = json.dumps(meta, sort_keys=True, separators=(",", ":")).encode()
    parts = [struct.pack("<B", len(tag_b)), tag_b, struct.pack("<I", len(meta_b)), meta_b]
    parts.append(struct.pack("<I", len(arrays)))
    for a in arrays:
        parts.append(struct.pack("<I", a.ndim))
        parts.append(struct.pack(f"<{a.ndim}Q", *a.shape))
    for a in arrays:
        parts.append(np.ascontiguousarray(a, dtype=_LE_F64).tobytes())
    body = b"".join(parts)
    return MAGIC + body + _checksum(body)


def _unpack(blob: bytes) -> tuple[str, dict, list[np.ndarray]]:
    if blob[: len(MAGIC)] != MAGIC:
        raise CheckpointError("bad magic: not a POUR1 checkpoint")
    if len(blob) < len(MAGIC) + 8:
        raise ChecksumError("checkpoint truncated")
    body, stored = blob[len(MAGIC):-8], blob[-8:]
    if _checksum(body) != stored:
        raise ChecksumError("checksum mismatch (file truncated or corrupted)")
    try:
        pos = 0
        (tag_len,) = struct.unpack_from("<B", body, pos)
        pos += 1
        tag = body[pos:pos + tag_len].decode("ascii")
        pos += tag_len
        (meta_len,) = struct.unpack_from("<I", body, pos)
        pos += 4
        meta = json.loads(body[pos:pos + meta_len])
        pos += meta_len
        (count,) = struct.unpack_from("<I", body, pos)
        pos += 4
        shapes = []
        for _ in range(count):
            (ndim,) = struct.unpack_from("<I", body, pos)
            pos += 4
            shapes.append(struct.unpack_from(f"<{ndim}Q", body, pos))
            pos += 8 * ndim
        arrays = []
        for shape in shapes:
            size = int(np.prod(shape, dtype=np.int64))
            arr = np.frombuffer(body, dtype=_LE_F64, count=size, offset=pos).reshape(shape)
            arrays.append(arr.astype(np.float64))
            pos += 8 * size
    except (struct.error, ValueError, UnicodeDecodeError) as exc:
        raise CheckpointError(f"malformed checkpoint: {exc}") from exc
    if pos != len(body):
        raise CheckpointError("trailing bytes after payload")
    return tag, meta, arrays


def _encode(obj: Checkpointable) -> tuple[str, dict, list[np.ndarray]]:
    if isinstance(obj, EtfFrame):
        return "etf", {}, [obj.directions]
    if isinstance(obj, FeatureMatrix):
        return "features", {"class_count": obj.class_count}, [obj.rows, obj.labels.astype(np.float64)]
    if isinstance(obj, ToyModel):
        arrays = [p for layer in obj.layers for p in (layer.weight, layer.bias)] + [obj.head]
        meta = {
            "activations": [layer.activation for layer in obj.layers],
            "masked_class": obj.masked_class,
            "projection": obj.projection is not None,
        }
        if obj.projection is not None:
            arrays.append(obj.projection.source_direction)
        return "model", meta, arrays
    raise TypeError(f"cannot checkpoint {type(obj).__name__}")


def _decode(tag: str, meta: dict, arrays: list[np.ndarray]) -> Checkpointable:
    if tag == "etf":
        return EtfFrame(arrays[0])
    if tag == "features":
        return FeatureMatrix(arrays[0], arrays[1].astype(np.int64), int(meta["class_count"]))
    if tag == "model":
        acts = meta["activations"]
        layers = [Layer(arrays[2 * i], arrays[2 * i + 1], a) for i, a in enumerate(acts)]
        head = arrays[2 * len(acts)]
        proj = projector_from_direction(arrays[-1]) if meta["projection"] else None
        return ToyModel(layers, head, proj, meta["masked_class"])
    raise CheckpointError(f"unknown checkpoint type tag {tag!r}")


def dumps(obj: Checkpointable) -> bytes:
    return _pack(*_encode(obj))


def loads(blob: bytes) -> Checkpointable:
    return _decode(*_unpack(blob))


def save_checkpoint(obj: Checkpointable, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(dumps(obj))
    return path


def load_checkpoint(
    path,
    expected_type: Optional[type] = None,
    class_count: Optional[int] = None,
    dim: Optional[int] = None,
) -> Checkpointable:
    """Load and validate a checkpoint.

    ``class_count`` / ``dim`` (ambient dim of a frame, row dim of features,
    input dim of a model) raise :class:`ShapeMismatchError` when they disagree
    with the stored object.
    """
    obj = loads(Path(path).read_bytes())
    if expected_type is not None and not isinstance(obj, expected_type):
        raise ShapeMismatchError(f"expected {expected_type.__name__}, found {type(obj).__name__}")
    if class_count is not None and obj.class_count != class_count:
        raise ShapeMismatchError(f"checkpoint has C={obj.class_count}, expected C={class_count}")
    if dim is not None:
        stored = {EtfFrame: "ambient_dim", FeatureMatrix: "dim", ToyModel: "input_dim"}[type(obj)]
        if getattr(obj, stored) != dim:
            raise ShapeMismatchError(f"checkpoint {stored}={getattr(obj, stored)}, expected {dim}")
    return obj
