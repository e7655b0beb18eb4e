"""Weight archive container.

An archive is a single binary file holding every parameter tensor of a
trained network plus the metadata needed to bind them to a graph:

  bytes 0..3    magic ``FMW1``
  bytes 4..7    header length ``L`` as unsigned 32-bit little-endian
  bytes 8..8+L  UTF-8 JSON header
  remainder     payload: concatenated tensors as little-endian float32

The header is ``{"arch": string, "input": [1,3,224,224],
"classes": [string...], "eps": number, "tensors": [...]}`` where each
tensor record is ``{"name", "shape", "offset"}`` and ``offset`` counts
float32 elements from the start of the payload. Extra header keys (e.g. a
training seed) are preserved verbatim. Parsing is strict: the tensor
records must tile the payload exactly — no gaps, no overlap, no trailing
bytes.

Tensor layout conventions: convolution kernels ``[oc, ic, kh, kw]``,
depthwise kernels ``[c, 1, kh, kw]``, dense weights ``[out, in]``,
per-channel vectors ``[c]``.

Structural problems (bad magic, truncated or malformed header) raise
:class:`~maskpipe.errors.FormatError`; a header that is well formed but
disagrees with the payload raises :class:`~maskpipe.errors.CorruptionError`.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import CorruptionError, FormatError

MAGIC = b"FMW1"

_KNOWN_KEYS = ("arch", "input", "classes", "eps", "tensors")


@dataclass(frozen=True)
class TensorEntry:
    """One tensor record from an archive header."""

    name: str
    shape: tuple[int, ...]
    offset: int

    @property
    def size(self) -> int:
        n = 1
        for d in self.shape:
            n *= d
        return n


@dataclass
class WeightArchive:
    """A parsed archive: metadata plus named float32 tensors.

    ``tensors`` preserves payload order, which makes a load/serialize
    round trip reproduce the tensor manifest and payload exactly.
    """

    arch: str
    input_shape: tuple[int, int, int, int]
    class_names: tuple[str, ...]
    eps: float
    tensors: dict[str, np.ndarray] = field(default_factory=dict)
    extra: dict = field(default_factory=dict)

    def entries(self) -> list[TensorEntry]:
        """Header records that :func:`serialize_archive` would emit."""
        out = []
        offset = 0
        for name, arr in self.tensors.items():
            out.append(TensorEntry(name, tuple(arr.shape), offset))
            offset += arr.size
        return out


def _require(cond: bool, message: str) -> None:
    if not cond:
        raise FormatError(message)


def _is_int(v) -> bool:
    return isinstance(v, int) and not isinstance(v, bool)


def _parse_header(blob: bytes) -> tuple[dict, list[TensorEntry]]:
    try:
        header = json.loads(blob.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"archive header is not valid JSON: {exc}") from exc
    _require(isinstance(header, dict), "archive header must be a JSON object")
    for key in _KNOWN_KEYS:
        _require(key in header, f"archive header is missing {key!r}")
    _require(isinstance(header["arch"], str), "archive 'arch' must be a string")
    shape = header["input"]
    _require(isinstance(shape, list) and len(shape) == 4
             and all(_is_int(d) and d >= 1 for d in shape),
             "archive 'input' must be a [n, c, h, w] shape of positive integers")
    names = header["classes"]
    _require(isinstance(names, list) and len(names) >= 1
             and all(isinstance(s, str) and s for s in names)
             and len(set(names)) == len(names),
             "archive 'classes' must be a list of unique non-empty strings")
    _require(isinstance(header["eps"], (int, float)) and not isinstance(header["eps"], bool),
             "archive 'eps' must be a number")
    _require(isinstance(header["tensors"], list), "archive 'tensors' must be a list")

    entries = []
    seen = set()
    for i, rec in enumerate(header["tensors"]):
        _require(isinstance(rec, dict), f"tensor record {i} must be an object")
        for key in ("name", "shape", "offset"):
            _require(key in rec, f"tensor record {i} is missing {key!r}")
        name, tshape, offset = rec["name"], rec["shape"], rec["offset"]
        _require(isinstance(name, str) and name != "", f"tensor record {i} has an invalid name")
        _require(name not in seen, f"duplicate tensor name {name!r}")
        seen.add(name)
        _require(isinstance(tshape, list) and all(_is_int(d) and d >= 0 for d in tshape),
                 f"tensor {name!r} has an invalid shape")
        _require(_is_int(offset) and offset >= 0,
                 f"tensor {name!r} has an invalid offset")
        entries.append(TensorEntry(name, tuple(tshape), offset))
    return header, entries


def load_weight_archive(data: bytes) -> WeightArchive:
    """Decode an archive from bytes, validating it end to end."""
    _require(len(data) >= 8, "archive is truncated (shorter than the fixed prefix)")
    _require(data[:4] == MAGIC, "not a weight archive (bad magic)")
    (header_len,) = struct.unpack_from("<I", data, 4)
    _require(len(data) >= 8 + header_len, "archive is truncated inside the header")
    header, entries = _parse_header(data[8:8 + header_len])

    payload = data[8 + header_len:]
    if len(payload) % 4 != 0:
        raise CorruptionError(
            f"payload length {len(payload)} is not a whole number of float32 values")
    total = len(payload) // 4

    # The records must tile the payload exactly.
    end = 0
    for entry in sorted(entries, key=lambda e: e.offset):
        if entry.offset != end:
            raise CorruptionError(
                f"tensor {entry.name!r} starts at element {entry.offset}, expected {end} "
                "(records must cover the payload with no gaps or overlap)")
        end = entry.offset + entry.size
    if end != total:
        raise CorruptionError(
            f"tensor records cover {end} float32 values but the payload holds {total}")

    flat = np.frombuffer(payload, dtype="<f4")
    tensors: dict[str, np.ndarray] = {}
    for entry in sorted(entries, key=lambda e: e.offset):
        arr = flat[entry.offset:entry.offset + entry.size].reshape(entry.shape)
        tensors[entry.name] = np.ascontiguousarray(arr, dtype=np.float32)
    return WeightArchive(
        arch=header["arch"],
        input_shape=tuple(header["input"]),
        class_names=tuple(header["classes"]),
        eps=float(header["eps"]),
        tensors=tensors,
        extra={k: v for k, v in header.items() if k not in _KNOWN_KEYS},
    )


def serialize_archive(archive: WeightArchive) -> bytes:
    """Encode an archive to bytes; inverse of :func:`load_weight_archive`."""
    records = []
    chunks = []
    offset = 0
    for name, arr in archive.tensors.items():
        a = np.ascontiguousarray(arr, dtype="<f4")
        records.append({"name": name, "shape": list(a.shape), "offset": offset})
        chunks.append(a.tobytes())
        offset += a.size
    header = {
        "arch": archive.arch,
        "input": list(archive.input_shape),
        "classes": list(archive.class_names),
        "eps": archive.eps,
        "tensors": records,
    }
    header.update(archive.extra)
    blob = json.dumps(header, separators=(",", ":")).encode("utf-8")
    return MAGIC + struct.pack("<I", len(blob)) + blob + b"".join(chunks)


def load_archive(path) -> WeightArchive:
    """Read and parse an archive file."""
    with open(path, "rb") as fh:
        return load_weight_archive(fh.read())


def write_archive(path, archive: WeightArchive) -> None:
    """Serialize an archive to a file."""
    with open(path, "wb") as fh:
        fh.write(serialize_archive(archive))
