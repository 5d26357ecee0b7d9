"""Binary checkpoint serialization.

Layout: 5-byte magic, u64 little-endian header length, UTF-8 JSON header,
then all tensor payloads as contiguous little-endian float32. The header
records name/dtype/shape/offset per tensor plus a free-form ``meta`` dict,
so a file is self-describing without touching the payload.
"""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..errors import CheckpointFormatError, CheckpointIntegrityError

MAGIC = b"MVQA1"
VERSION = 1
_HEADER_LEN = struct.Struct("<Q")


@dataclass
class Checkpoint:
    """Named float32 tensors plus JSON-serializable metadata."""

    tensors: dict[str, np.ndarray]
    meta: dict = field(default_factory=dict)

    def digest(self) -> str:
        """Short stable identifier for the weights plus metadata."""
        h = hashlib.sha256()
        h.update(json.dumps(self.meta, sort_keys=True, ensure_ascii=False).encode("utf-8"))
        for name in sorted(self.tensors):
            h.update(name.encode("utf-8"))
            arr = np.asarray(self.tensors[name], dtype=np.float32)
            h.update(arr.tobytes(order="C"))
        return h.hexdigest()[:16]


def save_checkpoint(ckpt: Checkpoint, path: str | Path) -> None:
    """Write a checkpoint to ``path``.

    Tensor values are stored bit-exactly as float32; inputs of other dtypes
    are cast first. The write goes through a temp file, so a crashed save
    never leaves a half-written checkpoint behind.
    """
    path = Path(path)
    arrays: dict[str, np.ndarray] = {}
    for name, arr in ckpt.tensors.items():
        # asarray keeps 0-d shapes; tobytes(order="C") below handles layout
        arrays[name] = np.asarray(arr, dtype=np.float32)
    entries = []
    offset = 0
    for name, arr in arrays.items():
        nbytes = int(np.prod(arr.shape, dtype=np.int64)) * 4
        entries.append(
            {"name": name, "dtype": "f32", "shape": [int(s) for s in arr.shape], "offset": offset}
        )
        offset += nbytes
    header = {"version": VERSION, "tensors": entries, "meta": ckpt.meta}
    header_bytes = json.dumps(header, ensure_ascii=False).encode("utf-8")
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as f:
        f.write(MAGIC)
        f.write(_HEADER_LEN.pack(len(header_bytes)))
        f.write(header_bytes)
        for arr in arrays.values():
            f.write(arr.astype("<f4", copy=False).tobytes(order="C"))
    tmp.replace(path)


def load_checkpoint(path: str | Path) -> Checkpoint:
    """Read a checkpoint from disk.

    Raises CheckpointFormatError for a wrong magic, unreadable header, or
    unsupported version, and CheckpointIntegrityError when the payload does
    not match the header's declared sizes (truncation, trailing bytes,
    out-of-order offsets).
    """
    path = Path(path)
    try:
        blob = path.read_bytes()
    except FileNotFoundError:
        raise CheckpointFormatError(f"checkpoint not found: {path}") from None
    if len(blob) < len(MAGIC) + _HEADER_LEN.size:
        raise CheckpointFormatError(f"file too short to be a checkpoint: {path}")
    if blob[: len(MAGIC)] != MAGIC:
        raise CheckpointFormatError(f"bad magic bytes in {path}")
    (header_len,) = _HEADER_LEN.unpack_from(blob, len(MAGIC))
    header_start = len(MAGIC) + _HEADER_LEN.size
    header_end = header_start + header_len
    if header_end > len(blob):
        raise CheckpointIntegrityError(f"declared header overruns file: {path}")
    try:
        header = json.loads(blob[header_start:header_end].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointFormatError(f"unreadable header in {path}: {exc}") from None
    if not isinstance(header, dict) or header.get("version") != VERSION:
        raise CheckpointFormatError(
            f"unsupported checkpoint version {header.get('version')!r} in {path}"
        )
    entries = header.get("tensors")
    meta = header.get("meta", {})
    if not isinstance(entries, list) or not isinstance(meta, dict):
        raise CheckpointFormatError(f"malformed header in {path}")

    payload = blob[header_end:]
    tensors: dict[str, np.ndarray] = {}
    expected_end = 0
    for entry in entries:
        try:
            name = entry["name"]
            dtype = entry["dtype"]
            shape = tuple(int(s) for s in entry["shape"])
            offset = int(entry["offset"])
        except (KeyError, TypeError, ValueError):
            raise CheckpointFormatError(f"malformed tensor entry in {path}") from None
        if dtype != "f32":
            raise CheckpointFormatError(f"unsupported dtype {dtype!r} for {name} in {path}")
        if name in tensors:
            raise CheckpointFormatError(f"duplicate tensor name {name!r} in {path}")
        nbytes = int(np.prod(shape, dtype=np.int64)) * 4
        if offset != expected_end:
            raise CheckpointIntegrityError(
                f"tensor {name!r} offset {offset} does not follow previous payload in {path}"
            )
        if offset + nbytes > len(payload):
            raise CheckpointIntegrityError(f"payload truncated at tensor {name!r} in {path}")
        arr = np.frombuffer(payload, dtype="<f4", count=nbytes // 4, offset=offset)
        tensors[name] = arr.reshape(shape).copy()
        expected_end = offset + nbytes
    if expected_end != len(payload):
        raise CheckpointIntegrityError(
            f"payload has {len(payload) - expected_end} trailing bytes in {path}"
        )
    return Checkpoint(tensors=tensors, meta=meta)
