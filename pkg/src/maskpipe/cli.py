"""Command-line interface.

Three subcommands share a bound model archive:

  maskpipe detect --model W --source SRC [--sidecar S] [--out F] [--threads N]
  maskpipe eval   --model W --manifest M [--report F]
  maskpipe bench  --model W --frames N [--threads N]

``detect`` writes decision JSON lines to ``--out`` (stdout by default) and a
one-line summary to stderr; ``eval`` prints the text report and, with
``--report``, also writes it as JSON; ``bench`` times synthetic frames.
The kernel backend is chosen by the ``MASKPIPE_BACKEND`` environment
variable (``auto``, ``native``, or ``numpy``).

Exit codes: 0 success, 1 usage error, 2 unreadable or malformed input,
3 weight archive that cannot be loaded or bound.
"""

from __future__ import annotations

import argparse
import contextlib
import os
import sys

from .dataset import load_manifest
from .errors import MaskpipeError
from .metrics import render_text, report_to_json
from .model import load_model
from .pipeline import (bench, detect_stream, evaluate, load_sidecar,
                       render_bench, render_summary)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_INPUT = 2
EXIT_MODEL = 3


class _Parser(argparse.ArgumentParser):
    """argparse, but usage problems exit with status 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _build_parser() -> _Parser:
    parser = _Parser(prog="maskpipe",
                     description="Real-time facemask detection pipeline.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("detect", help="classify a frame stream and emit decisions")
    p.add_argument("--model", required=True, help="weight archive (.fmw) to bind")
    p.add_argument("--source", required=True,
                   help="frame source: a .ppm directory or an FRS1 file")
    p.add_argument("--sidecar", help="JSONL face-box sidecar")
    p.add_argument("--out", default="-",
                   help="decision JSONL destination (default: stdout)")
    p.add_argument("--threads", type=int, default=1,
                   help="classification worker threads (default: 1)")

    p = sub.add_parser("eval", help="score manifest test images against their labels")
    p.add_argument("--model", required=True, help="weight archive (.fmw) to bind")
    p.add_argument("--manifest", required=True, help="dataset manifest CSV")
    p.add_argument("--report", help="also write the report as JSON to this file")

    p = sub.add_parser("bench", help="time the pipeline stages over synthetic frames")
    p.add_argument("--model", required=True, help="weight archive (.fmw) to bind")
    p.add_argument("--frames", type=int, required=True,
                   help="number of synthetic frames to time")
    p.add_argument("--threads", type=int, default=1,
                   help="classification worker threads (default: 1)")
    return parser


def _fail(kind: str, exc: Exception, code: int) -> int:
    print(f"maskpipe: {kind}: {exc}", file=sys.stderr)
    return code


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE

    if getattr(args, "threads", 1) < 1:
        print("maskpipe: error: --threads must be >= 1", file=sys.stderr)
        return EXIT_USAGE
    if getattr(args, "frames", 1) < 1:
        print("maskpipe: error: --frames must be >= 1", file=sys.stderr)
        return EXIT_USAGE

    try:
        model = load_model(args.model)
        if args.command == "detect" and model.num_classes != 2:
            raise MaskpipeError(
                f"archive holds {model.num_classes} classes; "
                "stream detection needs a two-class model")
    except (MaskpipeError, OSError) as exc:
        return _fail("model", exc, EXIT_MODEL)

    try:
        if args.command == "detect":
            sidecar = load_sidecar(args.sidecar) if args.sidecar else None
            with contextlib.ExitStack() as stack:
                if args.out == "-":
                    sink = sys.stdout
                else:
                    sink = stack.enter_context(open(args.out, "w", encoding="utf-8"))
                summary = detect_stream(args.source, model, sidecar=sidecar,
                                        sink=sink, threads=args.threads)
            print(render_summary(summary), file=sys.stderr)
        elif args.command == "eval":
            entries = load_manifest(args.manifest, model.class_names)
            root = os.path.dirname(os.path.abspath(args.manifest))
            report = evaluate(entries, model, root)
            sys.stdout.write(render_text(report))
            if report.get("undecodable"):
                print(f"maskpipe: {report['undecodable']} entries could not be "
                      "decoded and were excluded", file=sys.stderr)
            if args.report:
                with open(args.report, "w", encoding="utf-8") as fh:
                    fh.write(report_to_json(report) + "\n")
        else:
            result = bench(model, args.frames, threads=args.threads)
            sys.stdout.write(render_bench(result))
    except (MaskpipeError, OSError) as exc:
        return _fail("input", exc, EXIT_INPUT)
    return EXIT_OK
