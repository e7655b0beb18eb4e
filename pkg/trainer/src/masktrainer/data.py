"""Dataset handling: manifest parsing, image IO, and synthetic corpora."""
from __future__ import annotations

import csv
import io
from pathlib import Path
from typing import NamedTuple

import numpy as np
from PIL import Image

from .errors import ConfigError

SPLITS = ("train", "test")


class Entry(NamedTuple):
    path: str
    label: str
    split: str


def parse_manifest(text, class_names):
    """Parse manifest CSV text into entries.

    The first row must be a header starting with ``path,label,split``; a
    trailing ``augment`` column is tolerated and ignored, since augmentation
    plans target the inference engine rather than training.
    """
    class_set = set(class_names)
    reader = csv.reader(io.StringIO(text))
    rows = list(reader)
    if not rows:
        raise ConfigError("manifest is empty")
    header = rows[0]
    if header[:3] != ["path", "label", "split"] or len(header) > 4:
        raise ConfigError(f"manifest header must start with path,label,split; got {header}")
    entries = []
    seen = set()
    for line_no, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if len(row) < 3 or len(row) > len(header):
            raise ConfigError(f"manifest line {line_no}: expected {len(header)} fields, got {len(row)}")
        path, label, split = row[0], row[1], row[2]
        if not path:
            raise ConfigError(f"manifest line {line_no}: empty path")
        if label not in class_set:
            raise ConfigError(f"manifest line {line_no}: unknown label {label!r}")
        if split not in SPLITS:
            raise ConfigError(f"manifest line {line_no}: unknown split {split!r}")
        if path in seen:
            raise ConfigError(f"manifest line {line_no}: duplicate path {path!r}")
        seen.add(path)
        entries.append(Entry(path, label, split))
    return entries


def load_manifest(path, class_names):
    return parse_manifest(Path(path).read_text(encoding="utf-8"), class_names)


def load_image(path):
    """Decode any PIL-readable image file to an (h, w, 3) uint8 array."""
    with Image.open(path) as image:
        return np.asarray(image.convert("RGB"), dtype=np.uint8)


def to_batch(images, size=224):
    """Stack images into a normalised NHWC float32 batch in [-1, 1]."""
    prepared = []
    for image in images:
        if image.shape[0] != size or image.shape[1] != size:
            resized = Image.fromarray(image).resize((size, size), Image.BILINEAR)
            image = np.asarray(resized, dtype=np.uint8)
        prepared.append(image)
    batch = np.stack(prepared).astype(np.float32)
    return batch / 127.5 - 1.0


def augment_training_set(images, labels, rng):
    """Deterministically enlarge a training set.

    Every image contributes its horizontal mirror, and a seeded brightness
    jitter in [0.8, 1.2] is applied to the mirrored copy.
    """
    out_images = list(images)
    out_labels = list(labels)
    for image, label in zip(images, labels):
        factor = rng.uniform(0.8, 1.2)
        mirrored = image[:, ::-1].astype(np.float32) * factor
        out_images.append(np.clip(np.rint(mirrored), 0, 255).astype(np.uint8))
        out_labels.append(label)
    return out_images, out_labels


def synth_dataset(out_dir, count, class_names=("with_mask", "without_mask"), seed=0, size=96):
    """Write a label-separable synthetic image corpus plus manifest.

    Class ``i`` gets a strong offset on colour channel ``min(i, 2)`` over
    uniform noise, so even a frozen random backbone yields features a linear
    head can separate.  Every tenth image lands in the test split.  Returns
    the manifest path.
    """
    if count < len(class_names):
        raise ConfigError(f"need at least {len(class_names)} images, got {count}")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    rows = ["path,label,split"]
    for index in range(count):
        class_index = index % len(class_names)
        image = rng.integers(0, 120, size=(size, size, 3), dtype=np.uint8)
        image = image.astype(np.int16)
        image[:, :, min(class_index, 2)] += 110
        image = np.clip(image, 0, 255).astype(np.uint8)
        name = f"synth{index:04d}.ppm"
        Image.fromarray(image).save(out_dir / name, format="PPM")
        split = "test" if index % 10 == 9 else "train"
        rows.append(f"{name},{class_names[class_index]},{split}")
    manifest = out_dir / "manifest.csv"
    manifest.write_text("\n".join(rows) + "\n", encoding="utf-8")
    return manifest
