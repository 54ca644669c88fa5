"""Byte-deterministic container files for persisted artifacts.

Layout: magic (4 bytes) | version (u32 LE) | header length (u64 LE) |
header JSON (UTF-8, sorted keys) | raw array payload | crc32 (u32 LE).
The CRC covers everything after the magic. Arrays are described in the
header under "arrays" as ordered [name, dtype, shape] triples and stored
back to back in C order, so identical inputs produce identical bytes.
"""
from __future__ import annotations

import json
import struct
import zlib
from pathlib import Path

import numpy as np

from .errors import ArtifactFileError

_VERSION_FMT = "<I"
_HEADER_LEN_FMT = "<Q"
_CRC_FMT = "<I"

# dtypes allowed in containers; anything else is a programming error
_ALLOWED_DTYPES = {"int32", "int64", "float64", "uint8"}


def write_container(
    path: str | Path,
    magic: bytes,
    version: int,
    header: dict,
    arrays: dict[str, np.ndarray],
) -> None:
    if len(magic) != 4:
        raise ValueError("magic must be exactly 4 bytes")
    array_index = []
    blobs = []
    for name, arr in arrays.items():
        arr = np.ascontiguousarray(arr)
        dtype = arr.dtype.name
        if dtype not in _ALLOWED_DTYPES:
            raise ValueError(f"dtype {dtype} not allowed in container files")
        array_index.append([name, dtype, list(arr.shape)])
        blobs.append(arr.tobytes())
    full_header = dict(header)
    full_header["arrays"] = array_index
    header_bytes = json.dumps(full_header, sort_keys=True, ensure_ascii=False).encode("utf-8")

    body = bytearray()
    body += struct.pack(_VERSION_FMT, version)
    body += struct.pack(_HEADER_LEN_FMT, len(header_bytes))
    body += header_bytes
    for blob in blobs:
        body += blob
    crc = zlib.crc32(bytes(body)) & 0xFFFFFFFF
    with open(path, "wb") as fh:
        fh.write(magic)
        fh.write(body)
        fh.write(struct.pack(_CRC_FMT, crc))


def read_container(path: str | Path, magic: bytes) -> tuple[int, dict, dict[str, np.ndarray]]:
    try:
        raw = Path(path).read_bytes()
    except OSError as exc:
        raise ArtifactFileError(f"cannot read {path}: {exc}") from exc
    if len(raw) < 4 + 4 + 8 + 4:
        raise ArtifactFileError(f"{path}: truncated file")
    if raw[:4] != magic:
        raise ArtifactFileError(
            f"{path}: bad magic {raw[:4]!r}, expected {magic!r}"
        )
    body, crc_bytes = raw[4:-4], raw[-4:]
    (stored_crc,) = struct.unpack(_CRC_FMT, crc_bytes)
    if zlib.crc32(body) & 0xFFFFFFFF != stored_crc:
        raise ArtifactFileError(f"{path}: checksum mismatch, file corrupt or truncated")
    (version,) = struct.unpack_from(_VERSION_FMT, body, 0)
    (header_len,) = struct.unpack_from(_HEADER_LEN_FMT, body, 4)
    header_start = 4 + 8
    header_end = header_start + header_len
    if header_end > len(body):
        raise ArtifactFileError(f"{path}: truncated header")
    try:
        header = json.loads(body[header_start:header_end].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ArtifactFileError(f"{path}: unreadable header: {exc}") from exc

    arrays: dict[str, np.ndarray] = {}
    offset = header_end
    for name, dtype, shape in header.get("arrays", []):
        count = int(np.prod(shape)) if shape else 1
        nbytes = count * np.dtype(dtype).itemsize
        if offset + nbytes > len(body):
            raise ArtifactFileError(f"{path}: truncated payload for array {name!r}")
        arr = np.frombuffer(body, dtype=dtype, count=count, offset=offset)
        arrays[name] = arr.reshape(shape).copy()
        offset += nbytes
    if offset != len(body):
        raise ArtifactFileError(f"{path}: trailing bytes after payload")
    return version, header, arrays
