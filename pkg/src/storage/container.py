"""
FEEN container: one versioned binary format for meshes, bases, datasets,
models and fields.

Byte layout (all integers little-endian):

    offset 0   4 bytes   magic b"FEEN"
    offset 4   u32       format version (1)
    offset 8   u32       section count S
    offset 12  S x 88    section table entries:
                 32 bytes  name, UTF-8, NUL padded
                 u32       element type (1 = f64, 2 = i64, 3 = UTF-8 JSON)
                 u32       ndim (0..4)
                 4 x u64   shape (unused dimensions are 0)
                 u64       payload byte offset from file start
                 u64       payload byte length
    payloads   8-byte aligned, IEEE-754 f64 / two's complement i64, C order

The JSON section ``__metadata__`` always comes first and carries ``kind``,
free-form metadata and ``payload_sha256``, a digest of every array section
that is verified on load.
"""
import hashlib
import json
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Optional, Union

import numpy as np

from src.utils.exceptions import ContainerError, HashMismatch
from src.utils.logger import get_logger

logger = get_logger('storage')

MAGIC = b"FEEN"
FORMAT_VERSION = 1
HEADER = struct.Struct('<4sII')
ENTRY = struct.Struct('<32sII4QQQ')
MAX_NDIM = 4
ALIGN = 8
METADATA_SECTION = "__metadata__"

DTYPE_F64, DTYPE_I64, DTYPE_JSON = 1, 2, 3
_NUMPY_TYPES = {DTYPE_F64: np.dtype('<f8'), DTYPE_I64: np.dtype('<i8')}


def _pad(n: int) -> int:
    return (-n) % ALIGN


def _dtype_code(arr: np.ndarray) -> int:
    if np.issubdtype(arr.dtype, np.floating):
        return DTYPE_F64
    if np.issubdtype(arr.dtype, np.integer) or arr.dtype == np.bool_:
        return DTYPE_I64
    raise ContainerError(f"unsupported array dtype {arr.dtype}")


def _payload_digest(arrays: Dict[str, np.ndarray]) -> str:
    digest = hashlib.sha256()
    for name, arr in arrays.items():
        code = _dtype_code(arr)
        digest.update(name.encode('utf-8'))
        digest.update(np.asarray(arr.shape, dtype='<i8').tobytes())
        digest.update(np.ascontiguousarray(arr, dtype=_NUMPY_TYPES[code]).tobytes())
    return digest.hexdigest()


@dataclass
class FeenContainer:
    kind: str
    metadata: Dict[str, Any] = field(default_factory=dict)
    arrays: Dict[str, np.ndarray] = field(default_factory=dict)

    def to_bytes(self) -> bytes:
        """Serialize deterministically (sorted JSON keys, insertion-ordered arrays)."""
        meta = dict(self.metadata)
        meta['kind'] = self.kind
        meta['payload_sha256'] = _payload_digest(self.arrays)
        meta_bytes = json.dumps(meta, sort_keys=True, separators=(',', ':')).encode('utf-8')

        sections = [(METADATA_SECTION, DTYPE_JSON, (len(meta_bytes),), meta_bytes)]
        for name, arr in self.arrays.items():
            if len(name.encode('utf-8')) > 32 or name == METADATA_SECTION:
                raise ContainerError(f"invalid section name {name!r}")
            arr = np.asarray(arr)
            if arr.ndim > MAX_NDIM:
                raise ContainerError(f"section {name} has {arr.ndim} dimensions (max {MAX_NDIM})")
            code = _dtype_code(arr)
            payload = np.ascontiguousarray(arr, dtype=_NUMPY_TYPES[code]).tobytes()
            sections.append((name, code, arr.shape, payload))

        offset = HEADER.size + ENTRY.size * len(sections)
        offset += _pad(offset)
        table, blobs = [], []
        for name, code, shape, payload in sections:
            dims = list(shape) + [0] * (MAX_NDIM - len(shape))
            table.append(ENTRY.pack(name.encode('utf-8'), code, len(shape), *dims, offset, len(payload)))
            blobs.append(payload + b'\0' * _pad(len(payload)))
            offset += len(payload) + _pad(len(payload))

        head = HEADER.pack(MAGIC, FORMAT_VERSION, len(sections)) + b''.join(table)
        return head + b'\0' * _pad(len(head)) + b''.join(blobs)

    @classmethod
    def from_bytes(cls, data: bytes, source: str = "<bytes>") -> "FeenContainer":
        if len(data) < HEADER.size:
            raise ContainerError("file too short for a FEEN header", file_path=source)
        magic, version, count = HEADER.unpack_from(data, 0)
        if magic != MAGIC:
            raise ContainerError("not a FEEN file (bad magic)", file_path=source)
        if version != FORMAT_VERSION:
            raise ContainerError(f"unsupported FEEN version {version}", file_path=source)
        table_end = HEADER.size + ENTRY.size * count
        if table_end > len(data):
            raise ContainerError("section table truncated", file_path=source)

        spans = []
        metadata: Optional[Dict[str, Any]] = None
        arrays: Dict[str, np.ndarray] = {}
        for i in range(count):
            raw_name, code, ndim, *rest = ENTRY.unpack_from(data, HEADER.size + i * ENTRY.size)
            dims, offset, length = rest[:MAX_NDIM], rest[MAX_NDIM], rest[MAX_NDIM + 1]
            name = raw_name.rstrip(b'\0').decode('utf-8')
            shape = tuple(int(d) for d in dims[:ndim])
            if ndim > MAX_NDIM or offset < table_end or offset + length > len(data):
                raise ContainerError(f"section {name} lies outside the file", file_path=source)
            spans.append((offset, offset + length, name))
            payload = data[offset:offset + length]
            if code == DTYPE_JSON:
                if name != METADATA_SECTION:
                    raise ContainerError(f"unexpected JSON section {name}", file_path=source)
                try:
                    metadata = json.loads(payload.decode('utf-8'))
                except (UnicodeDecodeError, json.JSONDecodeError) as e:
                    raise ContainerError(f"metadata is not valid JSON: {e}", file_path=source)
            elif code in _NUMPY_TYPES:
                expected = int(np.prod(shape, dtype=np.int64)) * 8
                if expected != length:
                    raise ContainerError(f"section {name}: shape {shape} needs {expected} bytes, found {length}",
                                         file_path=source)
                arrays[name] = np.frombuffer(payload, dtype=_NUMPY_TYPES[code]).reshape(shape).copy()
            else:
                raise ContainerError(f"section {name} has unknown element type {code}", file_path=source)

        spans.sort()
        for (_, end, a), (start, _, b) in zip(spans, spans[1:]):
            if start < end:
                raise ContainerError(f"sections {a} and {b} overlap", file_path=source)
        if metadata is None or 'kind' not in metadata:
            raise ContainerError("missing metadata section", file_path=source)

        stored = metadata.pop('payload_sha256', None)
        actual = _payload_digest(arrays)
        if stored != actual:
            raise HashMismatch("payload digest does not match its contents", expected=stored, found=actual)
        kind = metadata.pop('kind')
        return cls(kind=kind, metadata=metadata, arrays=arrays)


def write_container(path: Union[str, Path], container: FeenContainer) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    data = container.to_bytes()
    path.write_bytes(data)
    logger.debug(f"Wrote {container.kind} container ({len(data)} bytes) to {path}", operation='write_container')
    return path


def read_container(path: Union[str, Path], expected_kind: Optional[str] = None) -> FeenContainer:
    path = Path(path)
    try:
        data = path.read_bytes()
    except OSError as e:
        raise ContainerError(f"cannot read container: {e}", file_path=str(path))
    container = FeenContainer.from_bytes(data, str(path))
    if expected_kind and container.kind != expected_kind:
        raise ContainerError(f"expected a {expected_kind} container, found {container.kind}", file_path=str(path))
    return container
