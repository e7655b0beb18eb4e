"""Stream detection, evaluation, and benchmarking.

Frame sources come in two shapes: a directory of ``.ppm`` frames consumed in
lexicographic order, or a single raw stream file — magic ``FRS1``, then the
frame width and height as unsigned 32-bit little-endian, then back-to-back
RGB8 frames. A final partial frame means the recording was cut off and
raises :class:`~maskpipe.errors.CorruptionError`. Within one session every
frame must share the first frame's dimensions. A directory frame that fails
to decode is skipped with a logged warning (keeping its position number);
an empty directory is a valid zero-frame recording.

Detection crops a region from each frame — the boxes a sidecar supplies,
or the largest centered square when there is none — then preprocesses,
classifies, and smooths each track through :mod:`maskpipe.debounce`,
emitting one JSON object per decision::

    {"frame": 3, "track": 0, "label": "Mask", "p_mask": 0.93,
     "p_nomask": 0.07, "alert": false}

Classification is pure and can shard across worker threads; decisions are
folded in frame order regardless of thread count, so the output stream is
byte-identical for any ``threads`` value.

A sidecar is a JSON-lines file tagging frames with face boxes:
``{"frame": 4, "track": 1, "box": [x, y, w, h]}`` (``track`` optional,
default 0). Frame numbers must be non-decreasing. When a sidecar is given,
only its entries are classified, each track debounced independently;
without one, every frame is a single track-0 detection.
"""

from __future__ import annotations

import itertools
import json
import logging
import os
import struct
from concurrent.futures import ThreadPoolExecutor
from time import perf_counter

import numpy as np

from .dataset import read_ppm
from .debounce import debounce_new, debounce_step
from .errors import (CorruptionError, FormatError, MaskpipeError,
                     ParameterError, ParseError, ShapeError)
from .metrics import ConfusionCounts, build_report
from .model import Model, preprocess

STREAM_MAGIC = b"FRS1"

# Class index conventions for two-class detection: scores order (p_mask, p_nomask).
MASK_CLASS = 0
NOMASK_CLASS = 1

log = logging.getLogger("maskpipe")


def write_frs1(path, frames, width: int | None = None, height: int | None = None) -> int:
    """Write RGB8 frames as a raw stream file; returns the frame count.

    Extent is taken from the first frame unless given explicitly (required
    for an empty stream); every frame must match it.
    """
    frames = iter(frames)
    first = next(frames, None)
    if first is not None:
        if width is None:
            height, width = first.shape[0], first.shape[1]
    elif width is None or height is None:
        raise ParameterError("an empty stream needs an explicit width and height")
    count = 0
    with open(path, "wb") as fh:
        fh.write(STREAM_MAGIC + struct.pack("<II", width, height))
        for frame in itertools.chain([] if first is None else [first], frames):
            if frame.dtype != np.uint8 or frame.shape != (height, width, 3):
                raise ShapeError(
                    f"frame {count} must be uint8 [{height}, {width}, 3], "
                    f"got {frame.dtype} {frame.shape}")
            fh.write(np.ascontiguousarray(frame).tobytes())
            count += 1
    return count


def _iter_frs1(path):
    with open(path, "rb") as fh:
        header = fh.read(12)
        if len(header) < 12:
            raise FormatError("stream header is truncated")
        if header[:4] != STREAM_MAGIC:
            raise FormatError(f"not a frame stream (magic {header[:4]!r})")
        width, height = struct.unpack("<II", header[4:])
        if width < 1 or height < 1:
            raise FormatError(f"stream extent must be positive, got {width}x{height}")
        frame_bytes = width * height * 3
        index = 0
        while True:
            blob = fh.read(frame_bytes)
            if not blob:
                return
            if len(blob) < frame_bytes:
                raise CorruptionError(
                    f"frame {index} is truncated: need {frame_bytes} bytes, "
                    f"have {len(blob)}")
            yield index, np.frombuffer(blob, dtype=np.uint8).reshape(height, width, 3)
            index += 1


def _iter_frame_dir(path):
    names = sorted(n for n in os.listdir(path) if n.endswith(".ppm"))
    extent = None
    for index, name in enumerate(names):
        try:
            frame = read_ppm(os.path.join(path, name))
        except MaskpipeError as exc:
            log.warning("skipping frame %d (%s): %s", index, name, exc)
            continue
        if extent is None:
            extent = frame.shape[:2]
        elif frame.shape[:2] != extent:
            raise FormatError(
                f"frame {index} ({name}) is {frame.shape[1]}x{frame.shape[0]}, "
                f"but this recording is {extent[1]}x{extent[0]}")
        yield index, frame


def iter_frames(source):
    """Numbered frames of a recording, in order.

    ``source`` may be a ``.ppm`` directory, an FRS1 file path, or any
    iterable of RGB8 arrays; yields ``(index, frame)`` pairs. Directory
    indices follow the sorted filename position, so a skipped (undecodable)
    frame leaves a gap rather than renumbering its successors.
    """
    if isinstance(source, (str, os.PathLike)):
        if os.path.isdir(source):
            return _iter_frame_dir(source)
        return _iter_frs1(source)
    return enumerate(source)


def load_sidecar(path) -> dict[int, list[tuple[int, tuple[int, int, int, int]]]]:
    """Parse a face-box sidecar into ``frame -> [(track, box), ...]``.

    Lines must carry non-decreasing frame numbers, at most one box per
    (frame, track), and a ``box`` of ``[x, y, w, h]`` integers.
    """
    out: dict[int, list[tuple[int, tuple[int, int, int, int]]]] = {}
    last_frame = -1
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(lineno, f"invalid JSON: {exc}") from exc
            if not isinstance(rec, dict):
                raise ParseError(lineno, "each sidecar line must be a JSON object")
            unknown = set(rec) - {"frame", "track", "box"}
            if unknown:
                raise ParseError(lineno, f"unknown keys: {', '.join(sorted(unknown))}")
            if "frame" not in rec or "box" not in rec:
                raise ParseError(lineno, "each sidecar line needs 'frame' and 'box'")
            frame = rec["frame"]
            track = rec.get("track", 0)
            for key, v in (("frame", frame), ("track", track)):
                if not isinstance(v, int) or isinstance(v, bool) or v < 0:
                    raise ParseError(lineno, f"{key!r} must be a non-negative integer")
            b = rec["box"]
            ok = (isinstance(b, list) and len(b) == 4
                  and all(isinstance(v, int) and not isinstance(v, bool) for v in b)
                  and b[0] >= 0 and b[1] >= 0 and b[2] >= 1 and b[3] >= 1)
            if not ok:
                raise ParseError(lineno, "'box' must be [x, y, w, h] with w and h >= 1")
            if frame < last_frame:
                raise ParseError(
                    lineno, f"frame numbers must be non-decreasing, got {frame} "
                    f"after {last_frame}")
            last_frame = frame
            if any(t == track for t, _ in out.get(frame, [])):
                raise ParseError(lineno, f"duplicate track {track} for frame {frame}")
            out.setdefault(frame, []).append((track, tuple(b)))
    return out


def centered_square(frame: np.ndarray) -> np.ndarray:
    """The largest centered square crop of a frame."""
    h, w = frame.shape[:2]
    side = min(h, w)
    y0 = (h - side) // 2
    x0 = (w - side) // 2
    return frame[y0:y0 + side, x0:x0 + side]


def _detections(index: int, frame: np.ndarray, sidecar):
    if sidecar is None:
        return [(0, centered_square(frame))]
    out = []
    for track, box in sidecar.get(index, []):
        x, y, w, h = box
        if y + h > frame.shape[0] or x + w > frame.shape[1]:
            raise ShapeError(
                f"sidecar box {list(box)} exceeds frame {index} extent "
                f"{frame.shape[1]}x{frame.shape[0]}")
        out.append((track, frame[y:y + h, x:x + w]))
    return out


def _chunked(iterable, size: int):
    it = iter(iterable)
    while True:
        block = list(itertools.islice(it, size))
        if not block:
            return
        yield block


def event_line(frame: int, track: int, label: str, p_mask: float,
               p_nomask: float, alert: bool) -> str:
    """One decision as its canonical JSON line (no trailing newline)."""
    return json.dumps(
        {"frame": frame, "track": track, "label": label,
         "p_mask": p_mask, "p_nomask": p_nomask, "alert": alert},
        separators=(",", ":"))


def detect_stream(source, model: Model, sidecar=None, sink=None,
                  threads: int = 1) -> dict:
    """Classify a recording and write one decision line per detection to sink.

    ``source`` is anything :func:`iter_frames` accepts; ``sidecar`` a mapping
    from :func:`load_sidecar`. Inference shards across ``threads`` workers,
    but decisions always fold in frame order, so the event stream is
    identical for any thread count. Returns a summary dict: frames seen,
    detections and alerts emitted, elapsed wall time, throughput, and mean
    per-detection model latency.
    """
    if model.num_classes != 2:
        raise ParameterError(
            f"stream detection needs a two-class model, got {model.num_classes} classes")
    if threads < 1:
        raise ParameterError(f"threads must be >= 1, got {threads}")
    target = model.input_shape[2]

    frames_seen = 0

    def jobs():
        nonlocal frames_seen
        for index, frame in iter_frames(source):
            frames_seen += 1
            for track, image in _detections(index, frame, sidecar):
                yield index, track, image

    def score(job):
        _, _, image = job
        t0 = perf_counter()
        probs = model.forward(preprocess(image, target))[0]
        return probs, perf_counter() - t0

    states: dict[int, object] = {}
    detections = 0
    alerts = 0
    latency_total = 0.0
    started = perf_counter()
    pool = ThreadPoolExecutor(max_workers=threads) if threads > 1 else None
    try:
        for chunk in _chunked(jobs(), max(8, threads * 4)):
            results = pool.map(score, chunk) if pool else map(score, chunk)
            for (index, track, _), (probs, seconds) in zip(chunk, results):
                state = states.setdefault(track, debounce_new())
                p_mask = float(probs[MASK_CLASS])
                p_nomask = float(probs[NOMASK_CLASS])
                event = debounce_step(state, p_mask, p_nomask, index)
                detections += 1
                alerts += event.alert
                latency_total += seconds
                if sink is not None:
                    sink.write(event_line(index, track, event.label,
                                          p_mask, p_nomask, event.alert) + "\n")
    finally:
        if pool is not None:
            pool.shutdown(wait=True)
    elapsed = perf_counter() - started
    if sink is not None:
        sink.flush()
    return {
        "frames": frames_seen,
        "detections": detections,
        "alerts": alerts,
        "elapsed_s": elapsed,
        "fps": frames_seen / elapsed if elapsed > 0 else 0.0,
        "mean_latency_ms": (latency_total / detections * 1000.0) if detections else 0.0,
    }


def render_summary(summary: dict) -> str:
    """The detection summary as one human-readable line."""
    return ("frames {frames}  detections {detections}  alerts {alerts}  "
            "fps {fps:.2f}  mean latency {mean_latency_ms:.2f} ms").format(**summary)


def evaluate(entries, model: Model, root: str = ".") -> dict:
    """Score every test-split manifest image against its label.

    Actual class = manifest label, predicted = argmax of the model's
    probabilities; returns the metrics report dict with an extra
    ``undecodable`` count of images that failed to read (such entries are
    excluded from the confusion counts). Manifest paths resolve against
    ``root``; augmentation plans describe training-time expansion and do
    not alter evaluation inputs.
    """
    class_names = model.class_names
    index_of = {name: i for i, name in enumerate(class_names)}
    selected = [e for e in entries if e.split == "test"]
    if not selected:
        raise ParameterError("manifest has no rows in the test split")
    counts = ConfusionCounts(class_names)
    undecodable = 0
    target = model.input_shape[2]
    for entry in selected:
        if entry.label not in index_of:
            raise ParameterError(
                f"manifest label {entry.label!r} is not one of {', '.join(class_names)}")
        try:
            image = read_ppm(os.path.join(root, entry.path))
        except (OSError, MaskpipeError) as exc:
            log.warning("skipping unreadable entry %s: %s", entry.path, exc)
            undecodable += 1
            continue
        probs = model.forward(preprocess(image, target))[0]
        counts.update(index_of[entry.label], int(np.argmax(probs)))
    if counts.total == 0:
        raise ParameterError("no test entry could be decoded")
    report = build_report(counts)
    report["undecodable"] = undecodable
    return report


def bench(model: Model, frames: int, threads: int = 1) -> dict:
    """Time the pipeline stages over synthetic random frames.

    Generates ``frames`` random RGB images at the model's input size,
    then measures preprocess, forward (sharded across ``threads``), and
    debounce per frame. Returns wall time, throughput, and a per-stage
    latency breakdown in milliseconds.
    """
    if frames < 1:
        raise ParameterError(f"frames must be >= 1, got {frames}")
    if threads < 1:
        raise ParameterError(f"threads must be >= 1, got {threads}")
    side = model.input_shape[2]
    rng = np.random.default_rng(0)
    images = [rng.integers(0, 256, size=(side, side, 3), dtype=np.uint8)
              for _ in range(frames)]

    started = perf_counter()
    pre_times = []
    tensors = []
    for img in images:
        t0 = perf_counter()
        tensors.append(preprocess(img, side))
        pre_times.append(perf_counter() - t0)

    def forward(tensor):
        t0 = perf_counter()
        probs = model.forward(tensor)[0]
        return probs, perf_counter() - t0

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(forward, tensors))
    else:
        results = [forward(t) for t in tensors]

    fwd_times = []
    deb_times = []
    state = debounce_new()
    for i, (probs, seconds) in enumerate(results):
        fwd_times.append(seconds)
        t0 = perf_counter()
        debounce_step(state, float(probs[MASK_CLASS]), float(probs[NOMASK_CLASS]), i)
        deb_times.append(perf_counter() - t0)
    elapsed = perf_counter() - started

    def stats(times):
        return {"mean_ms": sum(times) * 1000.0 / len(times),
                "min_ms": min(times) * 1000.0,
                "max_ms": max(times) * 1000.0}

    return {
        "frames": frames,
        "threads": threads,
        "elapsed_s": elapsed,
        "fps": frames / elapsed if elapsed > 0 else 0.0,
        "stages": {"preprocess": stats(pre_times),
                   "forward": stats(fwd_times),
                   "debounce": stats(deb_times)},
    }


def render_bench(result: dict) -> str:
    """The benchmark result as an aligned text table."""
    lines = [f"frames {result['frames']}  threads {result['threads']}  "
             f"elapsed {result['elapsed_s']:.3f} s  fps {result['fps']:.2f}",
             f"{'stage':<12}{'mean ms':>10}{'min ms':>10}{'max ms':>10}"]
    for name, row in result["stages"].items():
        lines.append(f"{name:<12}{row['mean_ms']:>10.3f}"
                     f"{row['min_ms']:>10.3f}{row['max_ms']:>10.3f}")
    return "\n".join(lines) + "\n"
