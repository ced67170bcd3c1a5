"""Model boundary of the exporter, plus a deterministic mock backend.

A real bridge (fairseq, HuggingFace, ...) implements ``ModelBackend``:
load the checkpoint once, then for every audio prefix run offline beam
decoding and capture the encoder-decoder attention weights of the
requested decoder layers (per head, softmax-normalized over encoder
frames) via forward hooks, along with the CTC word count over the
prefix. The mock backend manufactures all of that deterministically so
the export pipeline can be exercised and tested without a toolkit.
"""

from __future__ import annotations

import math
import zlib
from dataclasses import dataclass
from typing import Protocol, Sequence


@dataclass(frozen=True)
class Utterance:
    """One dataset row: where the audio lives and what the reference says."""

    id: str
    audio: str
    duration_ms: float
    reference: str


@dataclass(frozen=True)
class PrefixDecode:
    """Everything captured from one from-scratch decode of an audio prefix.

    ``attention`` maps a decoder layer (1-based) to a heads x tokens x
    frames weight stack; every row is softmax-normalized over frames.
    """

    tokens: tuple[str, ...]
    n_frames: int
    detected_words: int
    attention: dict[int, list[list[list[float]]]]


class ModelBackend(Protocol):
    decoder_layers: int
    attention_heads: int

    def decode_prefix(
        self, utterance: Utterance, prefix_ms: float, beam_size: int, layers: Sequence[int]
    ) -> PrefixDecode: ...


class MockBackend:
    """Deterministic stand-in for a trained model.

    The mock "translates" by revealing the reference words proportionally
    to the audio fraction consumed, places each token's attention on a
    triangular kernel around its estimated audio position (with a small
    per-head offset), and pins ``tail_mass`` of every row on the final
    frame, mimicking the concentration real models show there. Frame
    counts grow linearly with the prefix, roughly one frame per
    ``frame_stride_ms`` of audio.
    """

    def __init__(
        self,
        decoder_layers: int = 6,
        attention_heads: int = 8,
        frame_stride_ms: float = 120.0,
        tail_mass: float = 0.88,
        spread: int = 1,
    ):
        self.decoder_layers = decoder_layers
        self.attention_heads = attention_heads
        self.frame_stride_ms = frame_stride_ms
        self.tail_mass = tail_mass
        self.spread = spread

    def decode_prefix(
        self, utterance: Utterance, prefix_ms: float, beam_size: int, layers: Sequence[int]
    ) -> PrefixDecode:
        if beam_size < 1:
            raise ValueError(f"beam_size must be >= 1, got {beam_size}")
        words = utterance.reference.split()
        if not words:
            raise ValueError(f"utterance {utterance.id!r} has an empty reference")
        fraction = prefix_ms / utterance.duration_ms
        revealed = len(words) if fraction >= 1.0 else round(len(words) * fraction)
        tokens = tuple(words[:revealed])
        n_frames = max(2, round(prefix_ms / self.frame_stride_ms))
        attention = {
            layer: [
                [self._row(utterance, layer, head, j, len(words), n_frames, prefix_ms) for j in range(revealed)]
                for head in range(self.attention_heads)
            ]
            for layer in layers
        }
        return PrefixDecode(
            tokens=tokens,
            n_frames=n_frames,
            detected_words=int(len(words) * min(fraction, 1.0)),
            attention=attention,
        )

    def _row(
        self, utterance: Utterance, layer: int, head: int, token_index: int, n_words: int, n_frames: int, prefix_ms: float
    ) -> list[float]:
        # token's estimated position in the full audio, mapped to the
        # prefix's frame axis (frames scale linearly with audio)
        full_frames = utterance.duration_ms / self.frame_stride_ms
        anchor = (token_index + 0.5) / n_words * full_frames
        jitter = zlib.crc32(f"{utterance.id}:{layer}:{head}:{token_index}".encode()) % 3 - 1
        center = min(max(round(anchor) + jitter, 0), n_frames - 2)
        peak = self.spread + 1
        kernel = [max(0.0, peak - abs(f - center)) for f in range(n_frames - 1)]
        scale = (1.0 - self.tail_mass) / math.fsum(kernel)
        return [k * scale for k in kernel] + [self.tail_mass]
