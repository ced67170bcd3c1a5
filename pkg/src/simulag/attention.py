"""Attention preprocessing: last-frame filtering, head averaging, tail mass.

Raw encoder-decoder attention concentrates a large share of its mass on
the final frame of the audio prefix. Dropping that frame and renormalizing
recovers a pseudo-diagonal source-target pattern, which is what the
threshold policy and the diagnostics operate on.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence, Union

from simulag.core import AVERAGED, AttentionMatrix, AttentionRow, ShapeError

# Residual mass below this means the row kept essentially nothing after the
# final frame was dropped; the fallback is uniform, flagged so policies can
# elect to wait instead of trusting it.
DEGENERATE_EPSILON = 1e-8


@dataclass(frozen=True, slots=True)
class FilteredRow:
    """One attention row with the final frame removed and mass renormalized."""

    weights: tuple[float, ...]
    degenerate: bool = False


def filter_last_frame(row: AttentionRow, epsilon: float = DEGENERATE_EPSILON) -> FilteredRow:
    """Drop the final frame and renormalize the rest.

    Rows with fewer than two frames are rejected: there is nothing left to
    renormalize, and callers must wait for more audio instead. If the
    surviving mass is below ``epsilon`` the result is the uniform
    distribution, flagged degenerate.
    """
    weights = row.weights
    if len(weights) < 2:
        raise ShapeError(f"cannot filter a row with {len(weights)} frame(s); need >= 2")
    kept = weights[:-1]
    residual = math.fsum(kept)
    if residual < epsilon:
        return FilteredRow(weights=(1.0 / len(kept),) * len(kept), degenerate=True)
    return FilteredRow(weights=tuple(w / residual for w in kept))


def filter_matrix(matrix: AttentionMatrix, epsilon: float = DEGENERATE_EPSILON) -> tuple[FilteredRow, ...]:
    return tuple(filter_last_frame(row, epsilon) for row in matrix.rows)


def filtered_attention_matrix(matrix: AttentionMatrix, epsilon: float = DEGENERATE_EPSILON) -> AttentionMatrix:
    """Filtered view of a whole matrix, for diagnostics over n_frames - 1 columns."""
    rows = tuple(AttentionRow(fr.weights) for fr in filter_matrix(matrix, epsilon))
    return AttentionMatrix(rows=rows, n_frames=matrix.n_frames - 1, layer_index=matrix.layer_index, head_spec=matrix.head_spec)


def average_heads(stack: Sequence[AttentionMatrix]) -> AttentionMatrix:
    """Elementwise arithmetic mean of per-head matrices of one layer."""
    if not stack:
        raise ShapeError("cannot average an empty head stack")
    first = stack[0]
    for m in stack[1:]:
        if m.n_frames != first.n_frames or len(m.rows) != len(first.rows):
            raise ShapeError(
                f"head stack shapes differ: {len(first.rows)}x{first.n_frames} vs {len(m.rows)}x{m.n_frames}"
            )
        if m.layer_index != first.layer_index:
            raise ShapeError(f"head stack mixes layers {first.layer_index} and {m.layer_index}")
    n = len(stack)
    rows = []
    for token_rows in zip(*(m.rows for m in stack)):
        rows.append(AttentionRow(tuple(math.fsum(vals) / n for vals in zip(*(r.weights for r in token_rows)))))
    return AttentionMatrix(rows=tuple(rows), n_frames=first.n_frames, layer_index=first.layer_index, head_spec=AVERAGED)


def tail_mass(row: Union[FilteredRow, Sequence[float]], last_n: int) -> float:
    """Sum of the last ``last_n`` weights, clamped to the row length."""
    weights = row.weights if isinstance(row, FilteredRow) else row
    if last_n < 0:
        raise ValueError(f"last_n must be >= 0, got {last_n}")
    n = min(last_n, len(weights))
    if n == 0:
        return 0.0
    return math.fsum(weights[len(weights) - n :])


def diagonality_score(matrix: AttentionMatrix, band: int = 1) -> float:
    """Mean per-row mass within ``band`` frames of a linear source-target anchor.

    Row ``j`` of ``R`` rows over ``F`` frames is anchored at frame
    ``round(j * F / R)`` (clamped); a pseudo-diagonal matrix scores near 1,
    a uniform one near ``(2*band + 1) / F``.
    """
    if band < 0:
        raise ValueError(f"band must be >= 0, got {band}")
    rows = matrix.rows
    if not rows:
        raise ShapeError("diagonality_score needs a non-empty matrix")
    n_rows = len(rows)
    n_frames = matrix.n_frames
    per_row = []
    for j, row in enumerate(rows):
        anchor = min(round(j * n_frames / n_rows), n_frames - 1)
        lo = max(0, anchor - band)
        hi = min(n_frames - 1, anchor + band)
        per_row.append(math.fsum(row.weights[lo : hi + 1]))
    return math.fsum(per_row) / n_rows
