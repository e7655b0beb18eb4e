"""Transfer-learning training loop with archive export and training curves."""
from __future__ import annotations

import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import data
from .archive import write_archive
from .errors import ConfigError


@dataclass
class TrainConfig:
    """Everything one training run needs, with sanity checks in validate()."""

    manifest: str
    out_archive: str
    curve_csv: str
    epochs: int = 100
    batch_size: int = 32
    learning_rate: float = 1e-3
    seed: int = 0
    val_fraction: float = 0.1
    width: float = 1.0
    class_names: tuple = ("with_mask", "without_mask")
    fixture_dir: str = None
    fixture_count: int = 10
    extra_header: dict = field(default_factory=dict)

    def validate(self):
        if self.epochs < 1:
            raise ConfigError(f"epochs must be at least 1, got {self.epochs}")
        if self.batch_size < 1:
            raise ConfigError(f"batch size must be at least 1, got {self.batch_size}")
        if not self.learning_rate > 0:
            raise ConfigError(f"learning rate must be positive, got {self.learning_rate}")
        if not 0 < self.val_fraction < 1:
            raise ConfigError(
                f"validation fraction must lie strictly between 0 and 1, got {self.val_fraction}"
            )
        if not self.width > 0:
            raise ConfigError(f"width multiplier must be positive, got {self.width}")
        if len(self.class_names) < 2:
            raise ConfigError("need at least two class names")
        if len(set(self.class_names)) != len(self.class_names):
            raise ConfigError("class names must be unique")
        if self.fixture_dir is not None and self.fixture_count < 1:
            raise ConfigError(f"fixture count must be at least 1, got {self.fixture_count}")


def _load_split(config):
    """Decode training-split images and split off a validation slice."""
    manifest_path = Path(config.manifest)
    root = manifest_path.parent
    entries = data.load_manifest(manifest_path, config.class_names)
    label_index = {name: i for i, name in enumerate(config.class_names)}
    images, labels = [], []
    for entry in entries:
        if entry.split != "train":
            continue
        images.append(data.load_image(root / entry.path))
        labels.append(label_index[entry.label])
    if not images:
        raise ConfigError("manifest has no training rows")
    rng = np.random.default_rng(config.seed)
    order = rng.permutation(len(images))
    val_count = max(1, round(len(images) * config.val_fraction))
    if val_count >= len(images):
        raise ConfigError(
            f"validation fraction {config.val_fraction} leaves no training rows "
            f"(have {len(images)} images)"
        )
    val_idx = set(order[:val_count].tolist())
    train_images = [images[i] for i in range(len(images)) if i not in val_idx]
    train_labels = [labels[i] for i in range(len(images)) if i not in val_idx]
    val_images = [images[i] for i in sorted(val_idx)]
    val_labels = [labels[i] for i in sorted(val_idx)]
    train_images, train_labels = data.augment_training_set(train_images, train_labels, rng)
    return train_images, train_labels, val_images, val_labels


def _write_curve(path, config, history):
    losses = history["loss"]
    accuracies = history["accuracy"]
    val_losses = history["val_loss"]
    val_accuracies = history["val_accuracy"]
    lines = [
        f"# optimizer=adam learning_rate={config.learning_rate} seed={config.seed}",
        "epoch,train_loss,train_accuracy,val_loss,val_accuracy",
    ]
    for epoch in range(len(losses)):
        lines.append(
            f"{epoch + 1},{losses[epoch]:.6f},{accuracies[epoch]:.6f},"
            f"{val_losses[epoch]:.6f},{val_accuracies[epoch]:.6f}"
        )
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def train_and_export(config):
    """Run one training job end to end.

    Seeds everything for reproducibility, trains a classifier head on a
    frozen backbone, writes the training curve CSV, exports the weights as an
    archive, and optionally emits parity fixtures.  Returns a summary dict.
    """
    config.validate()
    os.environ.setdefault("TF_CPP_MIN_LOG_LEVEL", "2")
    import tensorflow as tf

    from . import fixtures as fixtures_mod, mapping

    tf.keras.utils.set_random_seed(config.seed)
    tf.config.experimental.enable_op_determinism()

    train_images, train_labels, val_images, val_labels = _load_split(config)
    x_train = data.to_batch(train_images, mapping.INPUT_SIZE)
    y_train = np.asarray(train_labels, dtype=np.int32)
    x_val = data.to_batch(val_images, mapping.INPUT_SIZE)
    y_val = np.asarray(val_labels, dtype=np.int32)

    model = mapping.build_model(len(config.class_names), width=config.width)
    mapping.calibrate_batch_norm(model, x_train[: min(16, len(x_train))])
    mapping.set_backbone_trainable(model, False)
    model.compile(
        optimizer=tf.keras.optimizers.Adam(learning_rate=config.learning_rate),
        loss="sparse_categorical_crossentropy",
        metrics=["accuracy"],
    )
    history = model.fit(
        x_train,
        y_train,
        validation_data=(x_val, y_val),
        epochs=config.epochs,
        batch_size=config.batch_size,
        verbose=0,
    ).history

    _write_curve(config.curve_csv, config, history)

    tensors, eps = mapping.export_tensors(model, config.width)
    mapping.validate_export(tensors, len(config.class_names), config.width)
    extra = {"seed": config.seed, "epochs": config.epochs, **config.extra_header}
    sha = write_archive(
        config.out_archive, tensors, config.class_names, eps, extra=extra
    )

    summary = {
        "archive": str(config.out_archive),
        "archive_sha256": sha,
        "curve": str(config.curve_csv),
        "epochs": len(history["loss"]),
        "first_train_loss": float(history["loss"][0]),
        "final_train_loss": float(history["loss"][-1]),
        "final_val_accuracy": float(history["val_accuracy"][-1]),
        "fixtures": None,
    }

    if config.fixture_dir is not None:
        sources = _fixture_sources(config.fixture_count, config.seed + 1, mapping.INPUT_SIZE)
        parity = fixtures_mod.make_fixtures(
            config.out_archive, sources, config.fixture_count, width=config.width
        )
        summary["fixtures"] = str(fixtures_mod.write_fixtures(config.fixture_dir, parity))
    return summary


def _fixture_sources(count, seed, size):
    """Seeded probe images with per-image global structure.

    Pure i.i.d. noise images wash out under global average pooling and can
    all land on the same prediction, so each probe combines noise with a
    distinct colour cast — differences that survive spatial averaging.
    """
    rng = np.random.default_rng(seed)
    sources = []
    for _ in range(count):
        noise = rng.integers(0, 120, size=(size, size, 3), dtype=np.uint8)
        cast = rng.integers(30, 136, size=3)
        image = np.clip(noise.astype(np.int16) + cast.astype(np.int16), 0, 255)
        sources.append(image.astype(np.uint8))
    return sources
