"""Binary model-state files with strict integrity checking.

Layout, front to back:

    7 bytes   magic "RANCKPT"
    1 byte    format version
    4 bytes   header length, little-endian unsigned
    N bytes   UTF-8 JSON header: caller metadata plus a tensor
              manifest (name, shape, dtype, byte offset)
    M bytes   tensor payload, little-endian IEEE-754, manifest order
    4 bytes   CRC-32 of the payload, little-endian

The header JSON is serialized with sorted keys and no whitespace, so
writing the same state twice produces byte-identical files.  Each
failure mode gets its own error: wrong version, corrupted payload,
short file, and (at the callers' level) vocabulary-digest mismatch.
"""

from __future__ import annotations

import json
import struct
import zlib

import numpy as np

from .errors import ChecksumError, IntegrityError, TruncatedError, VersionError

MAGIC = b"RANCKPT"
FORMAT_VERSION = 1

_DTYPES = {"float64": "<f8", "float32": "<f4"}


def serialize(header: dict, arrays: list) -> bytes:
    """Build the full file image for ``(name, array)`` pairs."""
    manifest = []
    chunks = []
    offset = 0
    for name, arr in arrays:
        arr = np.ascontiguousarray(arr)
        dtype = str(arr.dtype)
        if dtype not in _DTYPES:
            raise IntegrityError(f"tensor {name} has unsupported dtype {dtype}")
        raw = arr.astype(_DTYPES[dtype]).tobytes()
        manifest.append(
            {"name": name, "shape": list(arr.shape), "dtype": dtype, "offset": offset}
        )
        chunks.append(raw)
        offset += len(raw)
    payload = b"".join(chunks)
    full_header = dict(header)
    full_header["tensors"] = manifest
    head = json.dumps(full_header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    return b"".join(
        [
            MAGIC,
            bytes([FORMAT_VERSION]),
            struct.pack("<I", len(head)),
            head,
            payload,
            struct.pack("<I", zlib.crc32(payload)),
        ]
    )


def deserialize(blob: bytes):
    """Parse a file image back into (header, name->array)."""
    if len(blob) < len(MAGIC) + 1 + 4:
        raise TruncatedError("file too short for magic and header length")
    if blob[: len(MAGIC)] != MAGIC:
        raise IntegrityError("not a checkpoint file (bad magic)")
    version = blob[len(MAGIC)]
    if version != FORMAT_VERSION:
        raise VersionError(f"format version {version}, expected {FORMAT_VERSION}")
    pos = len(MAGIC) + 1
    (head_len,) = struct.unpack_from("<I", blob, pos)
    pos += 4
    if len(blob) < pos + head_len:
        raise TruncatedError("header cut short")
    try:
        header = json.loads(blob[pos : pos + head_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise IntegrityError(f"unreadable header: {exc}") from None
    pos += head_len

    manifest = header.get("tensors")
    if not isinstance(manifest, list):
        raise IntegrityError("header lacks a tensor manifest")
    payload_len = 0
    for entry in manifest:
        count = int(np.prod(entry["shape"], dtype=np.int64)) if entry["shape"] else 1
        payload_len = max(
            payload_len,
            entry["offset"] + count * np.dtype(_DTYPES[entry["dtype"]]).itemsize,
        )
    if len(blob) < pos + payload_len + 4:
        raise TruncatedError("payload cut short")
    payload = blob[pos : pos + payload_len]
    (stored_crc,) = struct.unpack_from("<I", blob, pos + payload_len)
    if len(blob) != pos + payload_len + 4:
        raise IntegrityError("trailing bytes after checksum")
    if zlib.crc32(payload) != stored_crc:
        raise ChecksumError("payload checksum mismatch")

    arrays = {}
    for entry in manifest:
        wire = np.dtype(_DTYPES[entry["dtype"]])
        count = int(np.prod(entry["shape"], dtype=np.int64)) if entry["shape"] else 1
        start = entry["offset"]
        flat = np.frombuffer(payload, dtype=wire, count=count, offset=start)
        arrays[entry["name"]] = (
            flat.astype(entry["dtype"]).reshape(entry["shape"])
        )
    return header, arrays


def write_file(path, header: dict, arrays: list) -> None:
    with open(path, "wb") as fh:
        fh.write(serialize(header, arrays))


def read_file(path):
    with open(path, "rb") as fh:
        return deserialize(fh.read())
