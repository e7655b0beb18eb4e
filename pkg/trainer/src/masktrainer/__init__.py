"""masktrainer: offline trainer-exporter for the maskpipe inference engine.

Trains a MobileNetV2-based mask classifier with Keras, exports the weights in
the engine's FMW archive layout, records training curves, and emits parity
fixtures so an independent engine implementation can be checked against the
training framework through files alone.
"""
from .archive import read_archive, sha256_file, write_archive
from .data import load_manifest, parse_manifest, synth_dataset
from .errors import ArchiveError, ConfigError, ExportError, FixtureError, TrainerError
from .train import TrainConfig, train_and_export

__version__ = "1.0.0"

__all__ = [
    "ArchiveError",
    "ConfigError",
    "ExportError",
    "FixtureError",
    "TrainerError",
    "TrainConfig",
    "load_manifest",
    "parse_manifest",
    "read_archive",
    "sha256_file",
    "synth_dataset",
    "train_and_export",
    "write_archive",
    "__version__",
]
