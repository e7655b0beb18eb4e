"""Parity fixtures: reference inputs and probabilities for an exported archive.

A fixture bundles a 224x224 source image (stored as PPM so the inference
engine ingests it byte-for-byte), the normalised input tensor actually fed to
the network, and the probabilities this trainer's model produced.  Replaying
the PPM through an independently implemented engine bound to the same archive
must reproduce the probabilities within float32 tolerance.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from . import mapping
from .archive import read_archive, sha256_file
from .data import load_image, to_batch
from .errors import ArchiveError, ExportError, FixtureError

SUM_TOLERANCE = 1e-6


@dataclass
class ParityFixture:
    name: str
    image: np.ndarray
    input_tensor: np.ndarray
    probabilities: tuple
    archive_sha256: str


def rebuild_model(archive_path, width=1.0):
    """Reconstruct a Keras model carrying exactly an archive's weights."""
    header, tensors = read_archive(archive_path)
    num_classes = len(header["classes"])
    mapping.validate_export(tensors, num_classes, width)
    model = mapping.build_model(num_classes, width=width)
    mapping.import_tensors(model, tensors, width)
    return model, header


def make_fixtures(archive_path, images, count, width=1.0):
    """Predict on ``count`` images with the archive's weights.

    Images are resized to the network input size if needed; the stored image
    is always the one actually fed to the model.  Raises
    :class:`FixtureError` when the archive and images cannot produce a
    consistent fixture set.
    """
    if count < 1:
        raise FixtureError(f"fixture count must be at least 1, got {count}")
    if count > len(images):
        raise FixtureError(f"asked for {count} fixtures but only {len(images)} images given")
    size = mapping.INPUT_SIZE
    prepared = []
    for image in images[:count]:
        array = np.asarray(image)
        if array.dtype != np.uint8 or array.ndim != 3 or array.shape[2] != 3:
            raise FixtureError("fixture images must be uint8 arrays of shape (h, w, 3)")
        if array.shape[0] != size or array.shape[1] != size:
            array = np.asarray(
                Image.fromarray(array).resize((size, size), Image.BILINEAR), dtype=np.uint8
            )
        prepared.append(array)

    try:
        model, _header = rebuild_model(archive_path, width)
        sha = sha256_file(archive_path)
    except (ArchiveError, ExportError, OSError) as exc:
        raise FixtureError(f"cannot rebuild model from {archive_path}: {exc}") from exc

    batch = to_batch(prepared, size)
    probabilities = model.predict(batch, verbose=0)
    fixtures = []
    for index, (image, probs) in enumerate(zip(prepared, probabilities)):
        total = float(np.sum(probs, dtype=np.float64))
        if abs(total - 1.0) > SUM_TOLERANCE:
            raise FixtureError(
                f"fixture {index}: probabilities sum to {total!r}, outside {SUM_TOLERANCE}"
            )
        tensor = batch[index].transpose(2, 0, 1)[None].astype(np.float32)
        fixtures.append(
            ParityFixture(
                name=f"fixture{index:02d}",
                image=image,
                input_tensor=tensor,
                probabilities=tuple(float(p) for p in probs),
                archive_sha256=sha,
            )
        )
    return fixtures


def write_fixtures(out_dir, fixtures):
    """Write fixtures as PPM sources, raw float32 tensors, and a JSON index."""
    if not fixtures:
        raise FixtureError("no fixtures to write")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    entries = []
    for fixture in fixtures:
        image_name = f"{fixture.name}.ppm"
        tensor_name = f"{fixture.name}.f32"
        Image.fromarray(fixture.image).save(out_dir / image_name, format="PPM")
        fixture.input_tensor.astype("<f4").tofile(out_dir / tensor_name)
        entries.append(
            {
                "name": fixture.name,
                "image": image_name,
                "tensor": tensor_name,
                "tensor_shape": list(fixture.input_tensor.shape),
                "probabilities": list(fixture.probabilities),
            }
        )
    index = {
        "archive_sha256": fixtures[0].archive_sha256,
        "count": len(fixtures),
        "fixtures": entries,
    }
    index_path = out_dir / "fixtures.json"
    index_path.write_text(json.dumps(index, indent=2) + "\n", encoding="utf-8")
    return index_path


def load_fixtures(fixture_dir):
    """Read a fixture directory back into ParityFixture objects."""
    fixture_dir = Path(fixture_dir)
    index_path = fixture_dir / "fixtures.json"
    try:
        index = json.loads(index_path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise FixtureError(f"cannot read fixture index {index_path}: {exc}") from exc
    fixtures = []
    for entry in index["fixtures"]:
        image = load_image(fixture_dir / entry["image"])
        tensor = np.fromfile(fixture_dir / entry["tensor"], dtype="<f4")
        tensor = tensor.reshape(entry["tensor_shape"])
        fixtures.append(
            ParityFixture(
                name=entry["name"],
                image=image,
                input_tensor=tensor,
                probabilities=tuple(entry["probabilities"]),
                archive_sha256=index["archive_sha256"],
            )
        )
    return fixtures
