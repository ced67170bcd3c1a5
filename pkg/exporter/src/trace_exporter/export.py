"""Export pipeline: manifest in, schema-1 JSONL traces out.

The wire format is the simulag trace schema (see the simulag README):
one utterance per line, steps on the segment schedule, raw per-token
attention rows. Utterances that fail to decode are logged and skipped;
the run is reported as failed if any were.
"""

from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from trace_exporter.backend import ModelBackend, PrefixDecode, Utterance

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1
AVERAGED = "averaged"
STACKED = "stacked"


@dataclass(frozen=True)
class ExportConfig:
    """What to export and how; mirrors the CLI flags."""

    output_path: str
    layers: tuple[int, ...] = (4,)
    head_mode: str = AVERAGED
    segment_ms: float = 800.0
    beam_size: int = 5

    def __post_init__(self) -> None:
        if self.head_mode not in (AVERAGED, STACKED):
            raise ValueError(f"head_mode must be '{AVERAGED}' or '{STACKED}', got {self.head_mode!r}")
        if self.segment_ms <= 0:
            raise ValueError(f"segment_ms must be positive, got {self.segment_ms}")
        if self.beam_size < 1:
            raise ValueError(f"beam_size must be >= 1, got {self.beam_size}")
        if not self.layers:
            raise ValueError("at least one decoder layer must be exported")


@dataclass
class ExportReport:
    written: int = 0
    failures: list[tuple[str, str]] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.failures


def read_manifest(path: str) -> list[Utterance]:
    """TSV manifest with header: id, audio, duration_ms, reference."""
    utterances = []
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh, delimiter="\t")
        missing = {"id", "audio", "duration_ms", "reference"} - set(reader.fieldnames or ())
        if missing:
            raise ValueError(f"manifest {path} lacks columns: {sorted(missing)}")
        for row in reader:
            utterances.append(
                Utterance(
                    id=row["id"],
                    audio=row["audio"],
                    duration_ms=float(row["duration_ms"]),
                    reference=row["reference"],
                )
            )
    return utterances


def prefix_schedule(segment_ms: float, duration_ms: float) -> list[float]:
    schedule = []
    k = 1
    while k * segment_ms < duration_ms - 1e-9:
        schedule.append(k * segment_ms)
        k += 1
    schedule.append(duration_ms)
    return schedule


def _mean_over_heads(stack: list[list[list[float]]]) -> list[list[float]]:
    n_heads = len(stack)
    return [
        [math.fsum(head_rows[j][f] for head_rows in stack) / n_heads for f in range(len(stack[0][j]))]
        for j in range(len(stack[0]))
    ]


def _layer_entry(layer: int, decode: PrefixDecode, head_mode: str) -> dict:
    stack = decode.attention[layer]
    if any(len(head_rows) != len(decode.tokens) for head_rows in stack):
        raise ValueError(f"layer {layer}: attention rows do not match {len(decode.tokens)} hypothesis tokens")
    for head_rows in stack:
        for row in head_rows:
            if len(row) != decode.n_frames:
                raise ValueError(f"layer {layer}: row width {len(row)} != n_frames {decode.n_frames}")
    if head_mode == AVERAGED:
        if decode.tokens:
            return {"layer": layer, "rows": _mean_over_heads(stack)}
        return {"layer": layer, "rows": []}
    return {"layer": layer, "heads": stack}


def trace_record(utterance: Utterance, config: ExportConfig, backend: ModelBackend) -> dict:
    steps = []
    for prefix_ms in prefix_schedule(config.segment_ms, utterance.duration_ms):
        decode = backend.decode_prefix(utterance, prefix_ms, config.beam_size, config.layers)
        steps.append(
            {
                "prefix_ms": prefix_ms,
                "n_frames": decode.n_frames,
                "detected_words": decode.detected_words,
                "hypothesis": list(decode.tokens),
                "attention": {
                    "head_mode": config.head_mode,
                    "layers": [_layer_entry(layer, decode, config.head_mode) for layer in config.layers],
                },
            }
        )
    return {
        "schema": SCHEMA_VERSION,
        "id": utterance.id,
        "source_duration_ms": utterance.duration_ms,
        "segment_ms": config.segment_ms,
        "reference": utterance.reference,
        "decoder_layers": backend.decoder_layers,
        "attention_heads": backend.attention_heads,
        "steps": steps,
    }


def export_corpus(config: ExportConfig, utterances: Iterable[Utterance], backend: ModelBackend) -> ExportReport:
    """Decode every utterance sequentially and write one JSONL line each."""
    bad_layers = [layer for layer in config.layers if not 1 <= layer <= backend.decoder_layers]
    if bad_layers:
        raise ValueError(f"layers {bad_layers} outside the model's 1..{backend.decoder_layers}")
    report = ExportReport()
    with open(config.output_path, "w", encoding="utf-8") as fh:
        for utterance in utterances:
            try:
                record = trace_record(utterance, config, backend)
            except Exception as exc:
                logger.warning("skipping utterance %s: %s", utterance.id, exc)
                report.failures.append((utterance.id, str(exc)))
                continue
            fh.write(json.dumps(record, ensure_ascii=False))
            fh.write("\n")
            report.written += 1
    return report
