"""Dataset manifests and the binary pixmap codec.

A manifest is a CSV file with header ``path,label,split`` and an optional
fourth ``augment`` column holding a JSON augmentation descriptor array (see
:mod:`maskpipe.augment`); the plan cell may be empty. Splits are ``train``
or ``test``; labels must come from the class list the manifest is parsed
against, and paths must be unique. Parse failures raise
:class:`~maskpipe.errors.ParseError` carrying the 1-based line number.

Images travel as binary P6 pixmaps with maxval 255: header tokens separated
by whitespace and ``#`` comments, one whitespace byte after the maxval, then
exactly ``width * height * 3`` RGB bytes. Anything structurally wrong is a
:class:`~maskpipe.errors.FormatError`; legal-but-unhandled variants (ASCII
``P3``, 16-bit maxval) are :class:`~maskpipe.errors.UnsupportedError`; a
payload that does not match its header is a
:class:`~maskpipe.errors.CorruptionError`.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np

from .augment import AugmentPlan, parse_plan, plan_to_json
from .errors import (CorruptionError, FormatError, MaskpipeError, ParseError,
                     UnsupportedError)

SPLITS = ("train", "test")
DEFAULT_CLASS_NAMES = ("with_mask", "without_mask")

_BASE_COLUMNS = ("path", "label", "split")
_PLAN_COLUMN = "augment"
_WHITESPACE = b" \t\n\r\x0b\x0c"


@dataclass(frozen=True)
class ManifestEntry:
    """One dataset row: an image path, its label, its split, and edits to apply."""

    path: str
    label: str
    split: str
    plan: AugmentPlan | None = None


def parse_manifest(text: str,
                   class_names: tuple[str, ...] = DEFAULT_CLASS_NAMES,
                   ) -> list[ManifestEntry]:
    """Parse manifest CSV text, reporting problems with their line number.

    Labels must belong to ``class_names`` and paths must be unique; the
    first offending row aborts the parse with its line number.
    """
    allowed = tuple(class_names)
    reader = csv.reader(io.StringIO(text))
    rows = iter(reader)
    try:
        header = [cell.strip() for cell in next(rows)]
    except StopIteration:
        raise ParseError(1, "manifest is empty; expected a header row") from None
    if tuple(header) not in (_BASE_COLUMNS, _BASE_COLUMNS + (_PLAN_COLUMN,)):
        raise ParseError(reader.line_num,
                         "header must be 'path,label,split' optionally followed "
                         f"by ',{_PLAN_COLUMN}', got {','.join(header)!r}")
    want = len(header)

    entries = []
    seen_paths: set[str] = set()
    for row in rows:
        line = reader.line_num
        if not row:
            continue
        cells = [cell.strip() for cell in row]
        if len(cells) != want:
            raise ParseError(line, f"expected {want} fields, got {len(cells)}")
        path, label, split = cells[:3]
        if not path:
            raise ParseError(line, "path must not be empty")
        if label not in allowed:
            raise ParseError(line,
                             f"unknown label {label!r}; expected one of "
                             f"{', '.join(allowed)}")
        if split not in SPLITS:
            raise ParseError(line,
                             f"split must be one of {', '.join(SPLITS)}, got {split!r}")
        if path in seen_paths:
            raise ParseError(line, f"duplicate path {path!r}")
        seen_paths.add(path)
        plan: AugmentPlan | None = None
        if want == 4 and cells[3]:
            try:
                plan = parse_plan(cells[3])
            except MaskpipeError as exc:
                raise ParseError(line, str(exc)) from exc
        entries.append(ManifestEntry(path, label, split, plan))
    return entries


def load_manifest(path,
                  class_names: tuple[str, ...] = DEFAULT_CLASS_NAMES,
                  ) -> list[ManifestEntry]:
    """Read and parse a manifest file."""
    with open(path, "r", encoding="utf-8", newline="") as fh:
        return parse_manifest(fh.read(), class_names)


def serialize_manifest(entries) -> str:
    """Render entries back to CSV; inverse of :func:`parse_manifest`."""
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(_BASE_COLUMNS + (_PLAN_COLUMN,))
    for e in entries:
        writer.writerow([e.path, e.label, e.split,
                         plan_to_json(e.plan) if e.plan and e.plan.ops else ""])
    return out.getvalue()


def split_stats(entries) -> dict:
    """Image counts per label and split; zero-filled for an empty manifest."""
    labels: dict[str, dict[str, int]] = {}
    splits = {s: 0 for s in SPLITS}
    for e in entries:
        row = labels.setdefault(e.label, {s: 0 for s in SPLITS})
        row[e.split] += 1
        splits[e.split] += 1
    for row in labels.values():
        row["total"] = sum(row[s] for s in SPLITS)
    return {"labels": labels, "splits": splits, "total": len(entries)}


def _scan_header(data: bytes) -> tuple[list[int], int]:
    """Read the three header integers after the magic; returns (values, position)."""
    i = 2
    values: list[int] = []
    n = len(data)
    while len(values) < 3:
        while i < n and data[i] in _WHITESPACE:
            i += 1
        if i >= n:
            raise FormatError("pixmap header is truncated")
        ch = data[i:i + 1]
        if ch == b"#":
            while i < n and data[i] != 0x0A:
                i += 1
            continue
        if not ch.isdigit():
            raise FormatError(f"unexpected byte {ch!r} in pixmap header")
        start = i
        while i < n and data[i:i + 1].isdigit():
            i += 1
        values.append(int(data[start:i]))
    if i >= n or data[i] not in _WHITESPACE:
        raise FormatError("pixmap header must end with one whitespace byte")
    return values, i + 1


def decode_ppm(data: bytes) -> np.ndarray:
    """Decode a binary P6 pixmap into a uint8 [h, w, 3] array."""
    if len(data) < 2 or data[0:1] != b"P":
        raise FormatError("not a pixmap (bad magic)")
    magic = data[0:2]
    if magic == b"P3":
        raise UnsupportedError("ASCII pixmaps (P3) are not supported; use binary P6")
    if magic != b"P6":
        raise FormatError(f"not a P6 pixmap (magic {magic!r})")
    (width, height, maxval), pos = _scan_header(data)
    if width < 1 or height < 1:
        raise FormatError(f"pixmap extent must be positive, got {width}x{height}")
    if maxval != 255:
        if 1 <= maxval <= 65535:
            raise UnsupportedError(f"only maxval 255 is supported, got {maxval}")
        raise FormatError(f"pixmap maxval {maxval} is out of range")
    expected = width * height * 3
    payload = data[pos:]
    if len(payload) < expected:
        raise CorruptionError(
            f"pixmap payload is truncated: need {expected} bytes, have {len(payload)}")
    if len(payload) > expected:
        raise CorruptionError(
            f"pixmap has {len(payload) - expected} trailing bytes after the payload")
    return np.frombuffer(payload, dtype=np.uint8).reshape(height, width, 3).copy()


def encode_ppm(image: np.ndarray) -> bytes:
    """Encode a uint8 [h, w, 3] array as a binary P6 pixmap."""
    from .augment import _check_image

    img = _check_image(image)
    h, w = img.shape[:2]
    return b"P6\n%d %d\n255\n" % (w, h) + np.ascontiguousarray(img).tobytes()


def read_ppm(path) -> np.ndarray:
    """Read and decode a pixmap file."""
    with open(path, "rb") as fh:
        return decode_ppm(fh.read())


def write_ppm(path, image: np.ndarray) -> None:
    """Encode and write a pixmap file."""
    with open(path, "wb") as fh:
        fh.write(encode_ppm(image))
