"""Model boundary: scripted trace replay and a synthetic trace generator.

An adapter answers "what did the model output after this much audio?".
The scripted adapter replays a recorded trace; the synthetic adapter
manufactures one with a controllable pseudo-diagonal attention pattern
and a configurable spike on the final frame, which makes policy behavior
predictable enough to verify by brute force.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass, replace
from typing import Protocol

from simulag.core import (
    AVERAGED,
    DEFAULT_LAYER,
    DEFAULT_SEGMENT_MS,
    AttentionMatrix,
    AttentionRow,
    ConfigError,
    HeadSpec,
    PrefixStep,
    UtteranceTrace,
    prefix_schedule,
)

_WORDS = (
    "the", "a", "old", "new", "river", "garden", "city", "light", "story", "window",
    "quiet", "market", "bridge", "winter", "morning", "letter", "train", "stone",
    "voice", "harbor", "field", "cloud", "paper", "road", "summer", "night", "door",
    "forest", "island", "mountain", "song", "rain",
)


class Adapter(Protocol):
    """What the harness needs from a model stand-in."""

    utterance_id: str
    segment_ms: float
    source_duration_ms: float
    reference: str

    def query(self, prefix_ms: float) -> PrefixStep: ...


class ScriptedAdapter:
    """Replays the recorded steps of one trace, byte for byte."""

    def __init__(self, trace: UtteranceTrace):
        self.trace = trace
        self.utterance_id = trace.id
        self.segment_ms = trace.segment_ms
        self.source_duration_ms = trace.source_duration_ms
        self.reference = trace.reference

    def query(self, prefix_ms: float) -> PrefixStep:
        return self.trace.step_at(prefix_ms)


@dataclass(frozen=True, slots=True)
class SyntheticSpec:
    """Recipe for a synthetic utterance trace.

    Row ``j`` of each step puts ``tail_mass_beta`` on the final frame and
    the rest on a triangular kernel of half-width ``spread`` centered at
    frame ``round(j * slope)`` (clamped away from the final frame), so the
    matrix is pseudo-diagonal by construction. The hypothesis reveals the
    fixed token list proportionally to the audio fraction consumed, and
    ``seed`` only picks the token surface strings.
    """

    n_target_tokens: int
    frames_per_segment: int = 8
    slope: float = 4.0
    tail_mass_beta: float = 0.0
    spread: int = 1
    seed: int = 0
    n_segments: int = 4
    segment_ms: float = DEFAULT_SEGMENT_MS
    source_words: int | None = None
    layer: int = DEFAULT_LAYER
    head_spec: HeadSpec = AVERAGED

    def __post_init__(self) -> None:
        if self.n_target_tokens < 1:
            raise ConfigError(f"n_target_tokens must be >= 1, got {self.n_target_tokens}")
        if self.frames_per_segment < 2:
            raise ConfigError(f"frames_per_segment must be >= 2, got {self.frames_per_segment}")
        if not 0.0 <= self.tail_mass_beta < 1.0:
            raise ConfigError(f"tail_mass_beta must lie in [0, 1), got {self.tail_mass_beta}")
        if self.spread < 0:
            raise ConfigError(f"spread must be >= 0, got {self.spread}")
        if self.slope <= 0:
            raise ConfigError(f"slope must be positive, got {self.slope}")
        if self.n_segments < 1:
            raise ConfigError(f"n_segments must be >= 1, got {self.n_segments}")
        if self.segment_ms <= 0:
            raise ConfigError(f"segment_ms must be positive, got {self.segment_ms}")

    @property
    def source_duration_ms(self) -> float:
        return self.n_segments * self.segment_ms

    def tokens(self) -> tuple[str, ...]:
        rng = random.Random(self.seed)
        return tuple(rng.choice(_WORDS) for _ in range(self.n_target_tokens))

    def to_json(self) -> dict:
        return {
            "n_target_tokens": self.n_target_tokens,
            "frames_per_segment": self.frames_per_segment,
            "slope": self.slope,
            "tail_mass_beta": self.tail_mass_beta,
            "spread": self.spread,
            "seed": self.seed,
            "n_segments": self.n_segments,
            "segment_ms": self.segment_ms,
            "source_words": self.source_words,
            "layer": self.layer,
            "head_spec": self.head_spec,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "SyntheticSpec":
        return cls(**obj)


def _synthetic_row(spec: SyntheticSpec, token_index: int, n_frames: int) -> AttentionRow:
    usable = n_frames - 1
    anchor = min(round(token_index * spec.slope), usable - 1)
    peak = spec.spread + 1
    kernel = [max(0.0, peak - abs(f - anchor)) for f in range(usable)]
    ksum = math.fsum(kernel)
    scale = (1.0 - spec.tail_mass_beta) / ksum
    return AttentionRow(tuple(k * scale for k in kernel) + (spec.tail_mass_beta,))


def synthetic_query(spec: SyntheticSpec, prefix_ms: float) -> PrefixStep:
    """Deterministic step for one prefix; a pure function of (spec, prefix_ms)."""
    segments = prefix_ms / spec.segment_ms
    s = round(segments)
    if abs(segments - s) > 1e-9 or not 1 <= s <= spec.n_segments:
        raise ConfigError(
            f"prefix {prefix_ms}ms is not a whole number of {spec.segment_ms}ms segments within the utterance"
        )
    n_frames = s * spec.frames_per_segment
    revealed = spec.n_target_tokens * s // spec.n_segments
    hypothesis = spec.tokens()[:revealed]
    source_words = spec.n_target_tokens if spec.source_words is None else spec.source_words
    rows = tuple(_synthetic_row(spec, j, n_frames) for j in range(revealed))
    return PrefixStep(
        prefix_ms=prefix_ms,
        n_frames=n_frames,
        detected_words=source_words * s // spec.n_segments,
        hypothesis=hypothesis,
        attention=AttentionMatrix(rows=rows, n_frames=n_frames, layer_index=spec.layer, head_spec=spec.head_spec),
    )


def build_synthetic_trace(spec: SyntheticSpec, utterance_id: str = "synthetic-0000") -> UtteranceTrace:
    steps = tuple(synthetic_query(spec, prefix) for prefix in prefix_schedule(spec.segment_ms, spec.source_duration_ms))
    return UtteranceTrace(
        id=utterance_id,
        source_duration_ms=spec.source_duration_ms,
        segment_ms=spec.segment_ms,
        reference=" ".join(spec.tokens()),
        steps=steps,
    )


class SyntheticAdapter:
    """Serves synthetic steps; equivalent to replaying ``build_synthetic_trace``."""

    def __init__(self, spec: SyntheticSpec, utterance_id: str = "synthetic-0000"):
        self.spec = spec
        self.utterance_id = utterance_id
        self.segment_ms = spec.segment_ms
        self.source_duration_ms = spec.source_duration_ms
        self.reference = " ".join(spec.tokens())

    def query(self, prefix_ms: float) -> PrefixStep:
        return synthetic_query(self.spec, prefix_ms)


def synthetic_corpus(spec: SyntheticSpec, count: int) -> list[UtteranceTrace]:
    """A corpus of ``count`` traces differing only in seed (and so in wording)."""
    return [
        build_synthetic_trace(replace(spec, seed=spec.seed + i), utterance_id=f"synthetic-{i:04d}")
        for i in range(count)
    ]
