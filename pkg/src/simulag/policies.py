"""Decision policies: attention-threshold, local agreement, wait-k.

All three answer the same question each step: given the current prefix
step and what was already released, how many new tokens may be written
(zero means keep reading). The output stream is append-only; when the
step hypothesis no longer extends the released prefix, the policy emits
nothing and the mismatch is logged.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

from simulag.core import EDATT, LOCAL_AGREEMENT, WAITK, ConfigError, PolicyConfig, PrefixStep
from simulag.attention import filter_last_frame, tail_mass


@dataclass(slots=True)
class PolicyState:
    """Mutable per-utterance policy memory."""

    emitted: list[str] = field(default_factory=list)
    previous_hypothesis: list[str] | None = None
    step_index: int = 0


def align_emitted(step_hypothesis: Sequence[str], emitted: Sequence[str]) -> int | None:
    """Index where new tokens start, or None when the released prefix mismatches."""
    if len(emitted) > len(step_hypothesis):
        return None
    for got, want in zip(step_hypothesis, emitted):
        if got != want:
            return None
    return len(emitted)


def _log(events: list | None, kind: str, detail: str) -> None:
    if events is not None:
        events.append((kind, detail))


def edatt_step(step: PrefixStep, state: PolicyState, cfg: PolicyConfig, events: list | None = None) -> int:
    """Emit consecutive tokens while their attention stays off the newest frames.

    A token is released while the mass of the last ``lambda_`` weights of
    its filtered attention row stays strictly below ``alpha``; the scan
    stops at the first violation or at a degenerate row (all pre-filter
    mass sat on the dropped frame, so the evidence points at audio that
    just arrived).
    """
    if cfg.policy_kind != EDATT:
        raise ConfigError(f"edatt_step called with policy_kind {cfg.policy_kind!r}")
    matrix = step.attention
    if matrix.layer_index != cfg.layer or matrix.head_spec != cfg.head_spec:
        raise ConfigError(
            f"step carries attention for layer {matrix.layer_index}/head {matrix.head_spec!r}, "
            f"config wants layer {cfg.layer}/head {cfg.head_spec!r}"
        )
    start = align_emitted(step.hypothesis, state.emitted)
    if start is None:
        _log(events, "prefix-mismatch", f"released prefix no longer matches hypothesis at {step.prefix_ms}ms")
        return 0
    if not cfg.unfiltered and matrix.n_frames <= cfg.lambda_ + 1:
        # Filtering leaves <= lambda_ frames, so the window covers the whole
        # row and its mass is 1 >= alpha: nothing can be released yet.
        return 0

    emitted = 0
    for j in range(start, len(step.hypothesis)):
        row = matrix.rows[j]
        if cfg.unfiltered:
            mass = tail_mass(row.weights, cfg.lambda_)
        else:
            filtered = filter_last_frame(row)
            if filtered.degenerate:
                _log(events, "degenerate-row", f"token {j} kept no mass after frame filtering at {step.prefix_ms}ms")
                break
            mass = tail_mass(filtered, cfg.lambda_)
        if mass < cfg.alpha:
            emitted += 1
        else:
            break
    return emitted


def _common_prefix_len(a: Sequence[str], b: Sequence[str]) -> int:
    n = 0
    for x, y in zip(a, b):
        if x != y:
            break
        n += 1
    return n


def la_step(step: PrefixStep, state: PolicyState, events: list | None = None) -> int:
    """Release the agreed prefix of the two most recent from-scratch hypotheses.

    The first step only stores its hypothesis; afterwards the emittable
    region is the longest common prefix of the previous and current
    hypotheses, minus what already went out.
    """
    previous = state.previous_hypothesis
    state.previous_hypothesis = list(step.hypothesis)
    if previous is None:
        return 0
    start = align_emitted(step.hypothesis, state.emitted)
    if start is None:
        _log(events, "prefix-mismatch", f"released prefix no longer matches hypothesis at {step.prefix_ms}ms")
        return 0
    agreed = _common_prefix_len(previous, step.hypothesis)
    return max(0, agreed - len(state.emitted))


def waitk_step(step: PrefixStep, state: PolicyState, cfg: PolicyConfig, events: list | None = None) -> int:
    """Keep the output k words behind the detected source words.

    Token i (1-based) becomes allowed once detected_words >= k + i - 1,
    i.e. the running allowance is detected_words - k + 1.
    """
    if cfg.policy_kind != WAITK:
        raise ConfigError(f"waitk_step called with policy_kind {cfg.policy_kind!r}")
    start = align_emitted(step.hypothesis, state.emitted)
    if start is None:
        _log(events, "prefix-mismatch", f"released prefix no longer matches hypothesis at {step.prefix_ms}ms")
        return 0
    allowed_total = max(0, step.detected_words - cfg.k + 1)
    return max(0, min(allowed_total, len(step.hypothesis)) - len(state.emitted))


def apply_policy(step: PrefixStep, state: PolicyState, cfg: PolicyConfig, events: list | None = None) -> int:
    if cfg.policy_kind == EDATT:
        return edatt_step(step, state, cfg, events)
    if cfg.policy_kind == LOCAL_AGREEMENT:
        return la_step(step, state, events)
    if cfg.policy_kind == WAITK:
        return waitk_step(step, state, cfg, events)
    raise ConfigError(f"unknown policy kind {cfg.policy_kind!r}")
