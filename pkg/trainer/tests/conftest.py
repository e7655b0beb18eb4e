"""Session fixtures: one real training run shared by the trainer tests."""
from types import SimpleNamespace

import pytest

from masktrainer import TrainConfig, synth_dataset, train_and_export


@pytest.fixture(scope="session")
def trained(tmp_path_factory):
    """Train once on a synthetic corpus and export archive, curve, fixtures."""
    root = tmp_path_factory.mktemp("trained")
    manifest = synth_dataset(root / "corpus", 60, seed=3)
    config = TrainConfig(
        manifest=str(manifest),
        out_archive=str(root / "model.fmw"),
        curve_csv=str(root / "curve.csv"),
        epochs=2,
        batch_size=16,
        learning_rate=0.01,
        seed=7,
        fixture_dir=str(root / "fixtures"),
        fixture_count=5,
    )
    summary = train_and_export(config)
    return SimpleNamespace(
        root=root,
        manifest=manifest,
        config=config,
        summary=summary,
        archive=root / "model.fmw",
        curve=root / "curve.csv",
        fixture_dir=root / "fixtures",
    )
