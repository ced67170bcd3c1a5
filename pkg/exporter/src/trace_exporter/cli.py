"""Command line for the trace exporter."""

from __future__ import annotations

import argparse
import importlib
import logging
import sys
from typing import Sequence

from trace_exporter import __version__
from trace_exporter.backend import MockBackend, ModelBackend
from trace_exporter.export import ExportConfig, export_corpus, read_manifest


def load_backend(spec: str) -> ModelBackend:
    """Resolve a backend: 'mock' or a 'package.module:factory' path."""
    if spec == "mock":
        return MockBackend()
    module_name, _, factory_name = spec.partition(":")
    if not factory_name:
        raise SystemExit(f"backend {spec!r} must look like 'package.module:factory'")
    module = importlib.import_module(module_name)
    return getattr(module, factory_name)()


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="st-trace-export", description=__doc__)
    parser.add_argument("--version", action="version", version=f"st-trace-export {__version__}")
    parser.add_argument("--manifest", required=True, help="TSV with columns id, audio, duration_ms, reference")
    parser.add_argument("--out", required=True, help="output JSONL path")
    parser.add_argument("--layers", default="4", help="comma list of 1-based decoder layers to export")
    parser.add_argument("--head-mode", choices=["averaged", "stacked"], default="averaged")
    parser.add_argument("--segment-ms", type=float, default=800.0)
    parser.add_argument("--beam", type=int, default=5)
    parser.add_argument(
        "--backend", default="mock", help="'mock' or a 'package.module:factory' returning a ModelBackend"
    )
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        config = ExportConfig(
            output_path=args.out,
            layers=tuple(int(part) for part in args.layers.split(",") if part),
            head_mode=args.head_mode,
            segment_ms=args.segment_ms,
            beam_size=args.beam,
        )
        backend = load_backend(args.backend)
        utterances = read_manifest(args.manifest)
        report = export_corpus(config, utterances, backend)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(f"wrote {report.written} trace(s) to {args.out}; {len(report.failures)} failure(s)")
    for utterance_id, message in report.failures:
        print(f"failed: {utterance_id}: {message}", file=sys.stderr)
    return 0 if report.ok else 1


if __name__ == "__main__":
    sys.exit(main())
