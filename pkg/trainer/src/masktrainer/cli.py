"""Command-line interface: synth, train, and fixtures subcommands."""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .errors import ConfigError, TrainerError


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(1)


def _build_parser():
    parser = _Parser(prog="masktrainer", description="Train and export mask-classifier weights")
    sub = parser.add_subparsers(dest="command", required=True)

    synth = sub.add_parser("synth", help="generate a synthetic labelled image corpus")
    synth.add_argument("--out", required=True, help="output directory")
    synth.add_argument("--count", type=int, default=100, help="number of images")
    synth.add_argument("--seed", type=int, default=0)
    synth.add_argument("--size", type=int, default=96, help="image edge length in pixels")
    synth.add_argument(
        "--classes", default="with_mask,without_mask", help="comma-separated class names"
    )

    train = sub.add_parser("train", help="train a classifier head and export the archive")
    train.add_argument("--manifest", required=True, help="dataset manifest CSV")
    train.add_argument("--archive", required=True, help="output weight archive path")
    train.add_argument("--curve", required=True, help="output training-curve CSV path")
    train.add_argument("--epochs", type=int, default=100)
    train.add_argument("--batch-size", type=int, default=32)
    train.add_argument("--learning-rate", type=float, default=1e-3)
    train.add_argument("--seed", type=int, default=0)
    train.add_argument("--val-fraction", type=float, default=0.1)
    train.add_argument("--width", type=float, default=1.0)
    train.add_argument(
        "--classes", default="with_mask,without_mask", help="comma-separated class names"
    )
    train.add_argument("--fixtures", default=None, help="also write parity fixtures here")
    train.add_argument("--fixture-count", type=int, default=10)

    fixtures = sub.add_parser("fixtures", help="build parity fixtures for an existing archive")
    fixtures.add_argument("--archive", required=True, help="weight archive to replay")
    fixtures.add_argument("--images", required=True, help="directory of source images")
    fixtures.add_argument("--out", required=True, help="output fixture directory")
    fixtures.add_argument("--count", type=int, default=10)
    fixtures.add_argument("--width", type=float, default=1.0)
    return parser


def _parse_classes(text):
    names = tuple(name.strip() for name in text.split(",") if name.strip())
    if len(names) < 2:
        raise ConfigError(f"need at least two class names, got {text!r}")
    return names


def _run_synth(args):
    from .data import synth_dataset

    manifest = synth_dataset(
        args.out, args.count, _parse_classes(args.classes), seed=args.seed, size=args.size
    )
    print(f"wrote {args.count} images and {manifest}")
    return 0


def _run_train(args):
    from .train import TrainConfig, train_and_export

    config = TrainConfig(
        manifest=args.manifest,
        out_archive=args.archive,
        curve_csv=args.curve,
        epochs=args.epochs,
        batch_size=args.batch_size,
        learning_rate=args.learning_rate,
        seed=args.seed,
        val_fraction=args.val_fraction,
        width=args.width,
        class_names=_parse_classes(args.classes),
        fixture_dir=args.fixtures,
        fixture_count=args.fixture_count,
    )
    summary = train_and_export(config)
    print(
        f"trained {summary['epochs']} epochs: loss {summary['first_train_loss']:.4f} -> "
        f"{summary['final_train_loss']:.4f}, val accuracy {summary['final_val_accuracy']:.4f}"
    )
    print(f"archive {summary['archive']} sha256 {summary['archive_sha256']}")
    print(f"curve {summary['curve']}")
    if summary["fixtures"]:
        print(f"fixtures {summary['fixtures']}")
    return 0


def _run_fixtures(args):
    from .data import load_image
    from .fixtures import make_fixtures, write_fixtures

    image_dir = Path(args.images)
    images = []
    for path in sorted(p for p in image_dir.iterdir() if p.is_file()):
        try:
            images.append(load_image(path))
        except OSError:
            print(f"masktrainer: skipping undecodable {path}", file=sys.stderr)
    fixtures = make_fixtures(args.archive, images, args.count, width=args.width)
    index = write_fixtures(args.out, fixtures)
    print(f"wrote {len(fixtures)} fixtures to {index}")
    return 0


def main(argv=None):
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else 1
    runners = {"synth": _run_synth, "train": _run_train, "fixtures": _run_fixtures}
    try:
        return runners[args.command](args)
    except ConfigError as exc:
        print(f"masktrainer: config error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"masktrainer: input error: {exc}", file=sys.stderr)
        return 2
    except TrainerError as exc:
        print(f"masktrainer: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    raise SystemExit(main())
