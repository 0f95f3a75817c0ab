"""Named-tensor archive: a small safetensors-like container for f32 tensors.

Layout::

    u64 little-endian header length
    UTF-8 JSON header {name: {"dtype": "f32", "shape": [...], "offset": o, "nbytes": b}, ...}
    raw little-endian buffer (offsets relative to its start, 8-byte aligned)

An optional ``"__metadata__"`` entry maps strings to strings.
"""
from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping

import numpy as np

_DTYPES = {"f32": np.dtype("<f4")}
_META_KEY = "__metadata__"


class ArchiveError(ValueError):
    pass


@dataclass
class NamedTensorArchive:
    tensors: dict[str, np.ndarray]
    metadata: dict[str, str] = field(default_factory=dict)

    def __getitem__(self, name: str) -> np.ndarray:
        try:
            return self.tensors[name]
        except KeyError:
            raise ArchiveError(f"archive has no tensor named {name!r}") from None

    def __contains__(self, name: str) -> bool:
        return name in self.tensors

    def names(self) -> list[str]:
        return sorted(self.tensors)


def _as_f32(value) -> np.ndarray:
    if hasattr(value, "detach"):
        value = value.detach().cpu().numpy()
    return np.array(value, dtype=_DTYPES["f32"], order="C")


def encode_archive(tensors: Mapping[str, object], metadata: Mapping[str, str] | None = None) -> bytes:
    header: dict[str, object] = {}
    chunks = []
    offset = 0
    for name in sorted(tensors):
        if name == _META_KEY:
            raise ArchiveError(f"{_META_KEY!r} is reserved")
        arr = _as_f32(tensors[name])
        raw = arr.tobytes(order="C")
        header[name] = {"dtype": "f32", "shape": list(arr.shape), "offset": offset, "nbytes": len(raw)}
        pad = (-len(raw)) % 8
        chunks.append(raw + b"\0" * pad)
        offset += len(raw) + pad
    if metadata:
        header[_META_KEY] = {str(k): str(v) for k, v in sorted(metadata.items())}
    blob = json.dumps(header, separators=(",", ":"), sort_keys=True).encode("utf-8")
    blob += b" " * ((-(8 + len(blob))) % 8)
    return struct.pack("<Q", len(blob)) + blob + b"".join(chunks)


def decode_archive(data: bytes) -> NamedTensorArchive:
    if len(data) < 8:
        raise ArchiveError("archive truncated before header length")
    (hlen,) = struct.unpack("<Q", data[:8])
    if 8 + hlen > len(data):
        raise ArchiveError(f"header length {hlen} exceeds archive size {len(data)}")
    try:
        header = json.loads(data[8:8 + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ArchiveError(f"corrupt archive header: {exc}") from exc
    if not isinstance(header, dict):
        raise ArchiveError("archive header must be a JSON object")
    buf = memoryview(data)[8 + hlen:]
    metadata = header.pop(_META_KEY, {}) or {}
    tensors = {}
    for name, info in header.items():
        try:
            dtype = _DTYPES[info["dtype"]]
            shape = tuple(int(d) for d in info["shape"])
            offset, nbytes = int(info["offset"]), int(info["nbytes"])
        except (KeyError, TypeError, ValueError) as exc:
            raise ArchiveError(f"bad header entry for {name!r}: {exc!r}") from exc
        expected = int(np.prod(shape, dtype=np.int64)) * dtype.itemsize
        if nbytes != expected:
            raise ArchiveError(f"{name!r}: nbytes {nbytes} does not match shape {shape}")
        if offset % 8 or offset < 0 or offset + nbytes > len(buf):
            raise ArchiveError(f"{name!r}: offset {offset} out of range or misaligned")
        tensors[name] = np.frombuffer(buf[offset:offset + nbytes], dtype=dtype).reshape(shape).copy()
    return NamedTensorArchive(tensors, dict(metadata))


def save_archive(tensors: Mapping[str, object], path, metadata: Mapping[str, str] | None = None) -> Path:
    path = Path(path)
    path.write_bytes(encode_archive(tensors, metadata))
    return path


def load_archive(path) -> NamedTensorArchive:
    return decode_archive(Path(path).read_bytes())
