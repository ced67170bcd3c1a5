"""Core data model: traces, policy configuration, validation, JSONL I/O.

A trace records, for one utterance, the model output observed at every
audio prefix (one step per 800ms segment by default): the from-scratch
hypothesis, the raw encoder-decoder attention matrix aligned to it, and
the number of source words detected so far. Attention is stored raw,
including the mass on the final frame; filtering is the engine's job.

All types are immutable after construction and safe to share across
workers. Times are milliseconds everywhere; encoder frames carry no
intrinsic duration.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Iterable, Iterator, Sequence, Union

SCHEMA_VERSION = 1

RAW_ROW_SUM_TOL = 1e-4
FILTERED_ROW_SUM_TOL = 1e-6

DEFAULT_SEGMENT_MS = 800.0
DEFAULT_DECODER_LAYERS = 6
DEFAULT_ATTENTION_HEADS = 8
DEFAULT_LAYER = 4

AVERAGED = "averaged"

EDATT = "edatt"
LOCAL_AGREEMENT = "local_agreement"
WAITK = "waitk"
POLICY_KINDS = (EDATT, LOCAL_AGREEMENT, WAITK)

HeadSpec = Union[str, int]


class TraceError(Exception):
    """Structured failure tied to a trace file or a trace query."""

    def to_json(self) -> dict:
        return {"error": type(self).__name__, "message": str(self)}


class MissingStepError(TraceError):
    """A queried prefix has no recorded step."""

    def __init__(self, utterance_id: str, prefix_ms: float, known_prefixes: Sequence[float]):
        self.utterance_id = utterance_id
        self.prefix_ms = prefix_ms
        self.nearest = _nearest(prefix_ms, known_prefixes)
        super().__init__(
            f"utterance {utterance_id!r}: no recorded step at prefix {prefix_ms}ms; "
            f"nearest recorded prefixes: {self.nearest}"
        )

    def to_json(self) -> dict:
        out = super().to_json()
        out.update({"utterance_id": self.utterance_id, "prefix_ms": self.prefix_ms, "nearest": self.nearest})
        return out


class ConfigError(ValueError):
    """Rejected policy or run configuration."""


class ShapeError(ValueError):
    """Mismatched matrix shapes."""


def _nearest(prefix_ms: float, known: Sequence[float], count: int = 2) -> list[float]:
    return sorted(known, key=lambda p: (abs(p - prefix_ms), p))[:count]


@dataclass(frozen=True, slots=True)
class AttentionRow:
    """Attention weights of one hypothesis token over the encoder frames."""

    weights: tuple[float, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "weights", tuple(float(w) for w in self.weights))


@dataclass(frozen=True, slots=True)
class AttentionMatrix:
    """Per-token attention rows for one (layer, head) selection.

    ``head_spec`` is either the string ``"averaged"`` or a 1-based head
    index. ``layer_index`` is 1-based.
    """

    rows: tuple[AttentionRow, ...]
    n_frames: int
    layer_index: int = DEFAULT_LAYER
    head_spec: HeadSpec = AVERAGED

    def __post_init__(self) -> None:
        object.__setattr__(self, "rows", tuple(self.rows))


@dataclass(frozen=True, slots=True)
class PrefixStep:
    """Model output after consuming ``prefix_ms`` of source audio."""

    prefix_ms: float
    n_frames: int
    detected_words: int
    hypothesis: tuple[str, ...]
    attention: AttentionMatrix

    def __post_init__(self) -> None:
        object.__setattr__(self, "hypothesis", tuple(self.hypothesis))


@dataclass(frozen=True, slots=True)
class UtteranceTrace:
    """All recorded steps of one utterance, ordered by prefix."""

    id: str
    source_duration_ms: float
    segment_ms: float
    reference: str
    steps: tuple[PrefixStep, ...]
    decoder_layers: int = DEFAULT_DECODER_LAYERS
    attention_heads: int = DEFAULT_ATTENTION_HEADS

    def __post_init__(self) -> None:
        object.__setattr__(self, "steps", tuple(self.steps))

    def step_at(self, prefix_ms: float) -> PrefixStep:
        for step in self.steps:
            if step.prefix_ms == prefix_ms:
                return step
        raise MissingStepError(self.id, prefix_ms, [s.prefix_ms for s in self.steps])


@dataclass(frozen=True, slots=True)
class PolicyConfig:
    """Full decision-policy configuration; one instance per run.

    ``alpha`` and ``lambda_`` drive the attention-threshold policy, ``k``
    drives wait-k. ``unfiltered`` evaluates the threshold on raw rows
    (keeping the final frame) for diagnostic comparisons only.
    """

    policy_kind: str
    alpha: float | None = None
    lambda_: int = 2
    layer: int = DEFAULT_LAYER
    head_spec: HeadSpec = AVERAGED
    k: int | None = None
    segment_ms: float = DEFAULT_SEGMENT_MS
    unfiltered: bool = False

    def __post_init__(self) -> None:
        if self.policy_kind not in POLICY_KINDS:
            raise ConfigError(f"unknown policy kind {self.policy_kind!r}; expected one of {POLICY_KINDS}")
        if self.segment_ms <= 0:
            raise ConfigError(f"segment_ms must be positive, got {self.segment_ms}")
        if self.policy_kind == EDATT:
            if self.alpha is None or not 0.0 < self.alpha < 1.0:
                raise ConfigError(f"alpha must lie strictly inside (0, 1), got {self.alpha}")
            if self.lambda_ < 1:
                raise ConfigError(f"lambda must be >= 1, got {self.lambda_}")
            if self.layer < 1:
                raise ConfigError(f"layer must be >= 1, got {self.layer}")
            if self.head_spec != AVERAGED and (not isinstance(self.head_spec, int) or self.head_spec < 1):
                raise ConfigError(f"head_spec must be 'averaged' or a 1-based head index, got {self.head_spec!r}")
        if self.policy_kind == WAITK and (self.k is None or self.k < 1):
            raise ConfigError(f"wait-k requires k >= 1, got {self.k}")


@dataclass(frozen=True, slots=True)
class DelayRecord:
    """Delays of one emitted token: source audio consumed and wall clock."""

    token: str
    ideal_delay_ms: float
    ca_delay_ms: float


@dataclass(frozen=True, slots=True)
class Violation:
    """One failed invariant, tied to an utterance and optionally a step."""

    utterance_id: str
    rule: str
    message: str
    step_index: int | None = None
    line: int | None = None

    def to_json(self) -> dict:
        out = {"utterance_id": self.utterance_id, "rule": self.rule, "message": self.message}
        if self.step_index is not None:
            out["step_index"] = self.step_index
        if self.line is not None:
            out["line"] = self.line
        return out


def prefix_schedule(segment_ms: float, source_duration_ms: float) -> list[float]:
    """Prefix lengths a streaming run visits: one per segment, final = duration."""
    if segment_ms <= 0 or source_duration_ms <= 0:
        raise ConfigError("segment_ms and source_duration_ms must be positive")
    schedule = []
    k = 1
    while k * segment_ms < source_duration_ms - 1e-9:
        schedule.append(k * segment_ms)
        k += 1
    schedule.append(source_duration_ms)
    return schedule


# --------------------------------------------------------------------------
# Validation


def validate_trace(trace: UtteranceTrace) -> list[Violation]:
    """Check every trace invariant; empty result means the trace is valid."""
    out: list[Violation] = []

    def bad(rule: str, message: str, step_index: int | None = None) -> None:
        out.append(Violation(trace.id, rule, message, step_index))

    if trace.source_duration_ms <= 0:
        bad("duration-positive", f"source_duration_ms must be positive, got {trace.source_duration_ms}")
    if trace.segment_ms <= 0:
        bad("segment-positive", f"segment_ms must be positive, got {trace.segment_ms}")
    if not trace.steps:
        bad("steps-present", "trace has no steps")
    if out:
        return out

    expected = prefix_schedule(trace.segment_ms, trace.source_duration_ms)
    got = [s.prefix_ms for s in trace.steps]
    if len(got) != len(expected) or any(abs(g - e) > 1e-6 for g, e in zip(got, expected)):
        bad("segment-schedule", f"step prefixes {got} do not cover the segment schedule {expected}")
    if abs(got[-1] - trace.source_duration_ms) > 1e-6:
        bad("final-step-coverage", f"final step ends at {got[-1]}ms, not source_duration_ms={trace.source_duration_ms}ms")

    prev_frames = 0
    for i, step in enumerate(trace.steps):
        m = step.attention
        if step.n_frames < prev_frames:
            bad("frame-monotonicity", f"n_frames dropped from {prev_frames} to {step.n_frames}", i)
        prev_frames = step.n_frames
        if step.detected_words < 0:
            bad("detected-words-sign", f"detected_words must be >= 0, got {step.detected_words}", i)
        if len(m.rows) != len(step.hypothesis):
            bad("row-count", f"{len(m.rows)} attention rows for {len(step.hypothesis)} hypothesis tokens", i)
        if m.n_frames != step.n_frames:
            bad("frame-count", f"attention declares {m.n_frames} frames, step declares {step.n_frames}", i)
        if not 1 <= m.layer_index <= trace.decoder_layers:
            bad("layer-range", f"layer {m.layer_index} outside declared 1..{trace.decoder_layers}", i)
        if m.head_spec != AVERAGED and not (isinstance(m.head_spec, int) and 1 <= m.head_spec <= trace.attention_heads):
            bad("head-range", f"head {m.head_spec!r} outside declared 1..{trace.attention_heads}", i)
        for j, row in enumerate(m.rows):
            if len(row.weights) != m.n_frames:
                bad("row-width", f"row {j} has {len(row.weights)} weights for {m.n_frames} frames", i)
                continue
            if any(w < 0 for w in row.weights):
                bad("weight-sign", f"row {j} contains a negative weight", i)
            total = math.fsum(row.weights)
            if abs(total - 1.0) > RAW_ROW_SUM_TOL:
                bad("row-normalization", f"row {j} sums to {total:.6f}, outside 1 +/- {RAW_ROW_SUM_TOL}", i)
    return out


# --------------------------------------------------------------------------
# JSONL serialization
#
# One utterance per line. Attention is a bundle of per-layer matrices in one
# of three head modes: "averaged" (one matrix), "single" (one matrix from one
# head), or "stacked" (heads x tokens x frames). Loading selects one
# (layer, head) view; weights survive a round trip bit-exactly.


def trace_to_json(trace: UtteranceTrace) -> dict:
    steps = []
    for step in trace.steps:
        m = step.attention
        if m.head_spec == AVERAGED:
            layer_obj = {"layer": m.layer_index, "rows": [list(r.weights) for r in m.rows]}
            head_mode = AVERAGED
        else:
            layer_obj = {"layer": m.layer_index, "head": m.head_spec, "rows": [list(r.weights) for r in m.rows]}
            head_mode = "single"
        steps.append(
            {
                "prefix_ms": step.prefix_ms,
                "n_frames": step.n_frames,
                "detected_words": step.detected_words,
                "hypothesis": list(step.hypothesis),
                "attention": {"head_mode": head_mode, "layers": [layer_obj]},
            }
        )
    return {
        "schema": SCHEMA_VERSION,
        "id": trace.id,
        "source_duration_ms": trace.source_duration_ms,
        "segment_ms": trace.segment_ms,
        "reference": trace.reference,
        "decoder_layers": trace.decoder_layers,
        "attention_heads": trace.attention_heads,
        "steps": steps,
    }


def _mean_rows(head_rows: list[list[list[float]]]) -> list[list[float]]:
    n_heads = len(head_rows)
    out = []
    for token_rows in zip(*head_rows):
        out.append([math.fsum(vals) / n_heads for vals in zip(*token_rows)])
    return out


def _check_stack(heads: list) -> None:
    if not heads:
        raise TraceError("stacked attention entry has no heads")
    n_rows = len(heads[0])
    for h, head_rows in enumerate(heads):
        if len(head_rows) != n_rows:
            raise TraceError(f"head {h + 1} has {len(head_rows)} rows, head 1 has {n_rows}")
        for j, row in enumerate(head_rows):
            if len(row) != len(heads[0][j]):
                raise TraceError(f"head {h + 1} row {j} width differs from head 1")


def _select_rows(bundle: dict, layer: int | None, head_spec: HeadSpec) -> tuple[int, list[list[float]]]:
    layers = {entry["layer"]: entry for entry in bundle["layers"]}
    if layer is None:
        layer = DEFAULT_LAYER if DEFAULT_LAYER in layers else min(layers) if len(layers) == 1 else None
        if layer is None:
            raise TraceError(f"trace stores layers {sorted(layers)}; pass an explicit layer")
    if layer not in layers:
        raise TraceError(f"layer {layer} not stored in trace (available: {sorted(layers)})")
    entry = layers[layer]
    mode = bundle.get("head_mode", AVERAGED)

    if mode == "stacked":
        heads: list = entry["heads"]
        _check_stack(heads)
        if head_spec == AVERAGED:
            return layer, _mean_rows(heads)
        if not isinstance(head_spec, int) or not 1 <= head_spec <= len(heads):
            raise TraceError(f"head {head_spec!r} not stored (stacked heads: 1..{len(heads)})")
        return layer, heads[head_spec - 1]

    stored_head: HeadSpec = AVERAGED if mode == AVERAGED else entry.get("head", AVERAGED)
    if head_spec != stored_head:
        raise TraceError(f"trace stores head {stored_head!r} for layer {layer}, cannot select {head_spec!r}")
    return layer, entry["rows"]


def stored_views(obj: dict) -> list[tuple[int, HeadSpec]]:
    """Every (layer, head) view a raw record can serve without re-selection."""
    views: list[tuple[int, HeadSpec]] = []
    for step in obj.get("steps", []):
        bundle = step["attention"]
        mode = bundle.get("head_mode", AVERAGED)
        for entry in bundle["layers"]:
            head: HeadSpec = AVERAGED if mode in (AVERAGED, "stacked") else entry.get("head", AVERAGED)
            if (entry["layer"], head) not in views:
                views.append((entry["layer"], head))
        break
    return views


def trace_from_json(obj: dict, layer: int | None = None, head_spec: HeadSpec = AVERAGED) -> UtteranceTrace:
    """Build a trace from one decoded JSONL record, selecting a (layer, head) view."""
    if obj.get("schema") != SCHEMA_VERSION:
        raise TraceError(f"missing or unsupported schema version {obj.get('schema')!r}; expected {SCHEMA_VERSION}")
    steps = []
    for raw in obj["steps"]:
        sel_layer, rows = _select_rows(raw["attention"], layer, head_spec)
        matrix = AttentionMatrix(
            rows=tuple(AttentionRow(tuple(r)) for r in rows),
            n_frames=int(raw["n_frames"]),
            layer_index=sel_layer,
            head_spec=head_spec,
        )
        steps.append(
            PrefixStep(
                prefix_ms=float(raw["prefix_ms"]),
                n_frames=int(raw["n_frames"]),
                detected_words=int(raw["detected_words"]),
                hypothesis=tuple(raw["hypothesis"]),
                attention=matrix,
            )
        )
    return UtteranceTrace(
        id=str(obj["id"]),
        source_duration_ms=float(obj["source_duration_ms"]),
        segment_ms=float(obj["segment_ms"]),
        reference=str(obj.get("reference", "")),
        steps=tuple(steps),
        decoder_layers=int(obj.get("decoder_layers", DEFAULT_DECODER_LAYERS)),
        attention_heads=int(obj.get("attention_heads", DEFAULT_ATTENTION_HEADS)),
    )


def write_traces(path: str, traces: Iterable[UtteranceTrace]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for trace in traces:
            fh.write(json.dumps(trace_to_json(trace), ensure_ascii=False))
            fh.write("\n")


def read_traces(path: str, layer: int | None = None, head_spec: HeadSpec = AVERAGED) -> list[UtteranceTrace]:
    traces = []
    for lineno, obj in _parse_lines(path):
        if isinstance(obj, Violation):
            raise TraceError(f"line {obj.line}: {obj.message}")
        traces.append(trace_from_json(obj, layer=layer, head_spec=head_spec))
    return traces


def _parse_lines(path: str) -> Iterator[tuple[int, dict | Violation]]:
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                yield lineno, Violation("<file>", "parse", f"invalid JSON: {exc}", line=lineno)
                continue
            if not isinstance(obj, dict):
                yield lineno, Violation("<file>", "parse", "record is not a JSON object", line=lineno)
                continue
            yield lineno, obj


def validate_file(path: str, layer: int | None = None, head_spec: HeadSpec | None = None) -> list[Violation]:
    """Validate a JSONL trace file defensively; never raises on bad input.

    With no explicit selection, every stored (layer, head) view of each
    record is validated; otherwise just the requested one.
    """
    out: list[Violation] = []
    seen_ids: set[str] = set()
    for lineno, obj in _parse_lines(path):
        if isinstance(obj, Violation):
            out.append(obj)
            continue
        uid = str(obj.get("id", f"<line {lineno}>"))
        try:
            if layer is None and head_spec is None:
                views = stored_views(obj) or [(None, AVERAGED)]
            else:
                views = [(layer, AVERAGED if head_spec is None else head_spec)]
            traces = [trace_from_json(obj, layer=vl, head_spec=vh) for vl, vh in views]
        except (TraceError, KeyError, TypeError, ValueError) as exc:
            out.append(Violation(uid, "parse", f"malformed record: {exc}", line=lineno))
            continue
        if traces[0].id in seen_ids:
            out.append(Violation(traces[0].id, "duplicate-id", "utterance id repeats an earlier line", line=lineno))
        seen_ids.add(traces[0].id)
        seen_rules: set[tuple] = set()
        for trace in traces:
            for v in validate_trace(trace):
                key = (v.rule, v.message, v.step_index)
                if key not in seen_rules:
                    seen_rules.add(key)
                    out.append(Violation(v.utterance_id, v.rule, v.message, v.step_index, lineno))
    return out
