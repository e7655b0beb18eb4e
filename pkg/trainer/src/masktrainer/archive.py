"""Writer and reader for the FMW weight-archive container.

Layout: the magic bytes ``FMW1``, a little-endian uint32 header length, a JSON
header, then every tensor as little-endian float32, tiled back to back in
header order.  Offsets in the header count float32 elements, not bytes.
"""
from __future__ import annotations

import hashlib
import json
import struct
from pathlib import Path

import numpy as np

from .errors import ArchiveError

MAGIC = b"FMW1"

_RESERVED_KEYS = ("arch", "input", "classes", "eps", "tensors")


def write_archive(path, tensors, class_names, eps, arch="mobilenetv2", extra=None):
    """Serialise ``tensors`` (an ordered name -> array mapping) to ``path``.

    Returns the SHA-256 hex digest of the written file.  ``extra`` keys are
    merged into the JSON header so provenance such as the training seed
    travels with the weights.
    """
    entries = []
    payload = bytearray()
    offset = 0
    for name, value in tensors.items():
        array = np.ascontiguousarray(value, dtype=np.float32)
        entries.append({"name": name, "shape": list(array.shape), "offset": offset})
        payload.extend(array.tobytes())
        offset += array.size
    header = {
        "arch": arch,
        "input": [1, 3, 224, 224],
        "classes": list(class_names),
        "eps": float(eps),
        "tensors": entries,
    }
    for key, value in dict(extra or {}).items():
        if key in _RESERVED_KEYS:
            raise ArchiveError(f"extra header key {key!r} collides with a reserved key")
        header[key] = value
    blob = json.dumps(header, separators=(",", ":")).encode("utf-8")
    path = Path(path)
    with open(path, "wb") as handle:
        handle.write(MAGIC)
        handle.write(struct.pack("<I", len(blob)))
        handle.write(blob)
        handle.write(bytes(payload))
    return sha256_file(path)


def read_archive(path):
    """Parse an archive back into ``(header, tensors)``.

    ``tensors`` is an ordered name -> float32-array mapping; ``header`` is the
    decoded JSON dict, including any extra keys.  Raises :class:`ArchiveError`
    on malformed containers, including gaps or overlaps in the payload tiling.
    """
    data = Path(path).read_bytes()
    if len(data) < 8 or data[:4] != MAGIC:
        raise ArchiveError(f"{path}: not a weight archive")
    (header_len,) = struct.unpack_from("<I", data, 4)
    if len(data) < 8 + header_len:
        raise ArchiveError(f"{path}: truncated header")
    try:
        header = json.loads(data[8 : 8 + header_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ArchiveError(f"{path}: invalid header JSON: {exc}") from exc
    payload = data[8 + header_len :]
    if len(payload) % 4:
        raise ArchiveError(f"{path}: payload is not a whole number of float32 values")
    total = len(payload) // 4
    tensors = {}
    expected_offset = 0
    for entry in header.get("tensors", []):
        name, shape, offset = entry["name"], entry["shape"], entry["offset"]
        if offset != expected_offset:
            raise ArchiveError(
                f"{path}: tensor {name!r} at offset {offset}, expected {expected_offset}"
            )
        size = int(np.prod(shape, dtype=np.int64)) if shape else 1
        if offset + size > total:
            raise ArchiveError(f"{path}: tensor {name!r} overruns the payload")
        view = np.frombuffer(payload, dtype="<f4", count=size, offset=offset * 4)
        tensors[name] = view.reshape(shape).copy()
        expected_offset = offset + size
    if expected_offset != total:
        raise ArchiveError(
            f"{path}: payload holds {total} values but tensors cover {expected_offset}"
        )
    return header, tensors


def sha256_file(path):
    """SHA-256 hex digest of a file's bytes."""
    digest = hashlib.sha256()
    with open(path, "rb") as handle:
        for chunk in iter(lambda: handle.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()
