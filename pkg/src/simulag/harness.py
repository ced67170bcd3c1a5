"""READ/WRITE simulation loop with deterministic delay accounting.

Reading a segment advances source time and wall time together (audio
arrives in real time); model computation advances wall time only, charged
through a pluggable cost model at query time. Each emitted token records
the source audio consumed so far (ideal delay) and the simulated wall
clock (computational-aware delay). Once the source is exhausted the rest
of the final hypothesis is flushed unconditionally.
"""

from __future__ import annotations

import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

from simulag.adapters import Adapter, ScriptedAdapter
from simulag.core import DelayRecord, PolicyConfig, TraceError, UtteranceTrace, prefix_schedule
from simulag.policies import PolicyState, apply_policy

# (event kind: "query" | "policy", prefix_ms, hypothesis length) -> cost in ms
CostModel = Callable[[str, float, int], float]


def zero_cost(kind: str, prefix_ms: float, hyp_len: int) -> float:
    return 0.0


@dataclass(frozen=True, slots=True)
class LinearCost:
    """Query cost a + b * prefix_ms; decision overhead is folded into ``a``."""

    a: float = 0.0
    b: float = 0.0

    def __call__(self, kind: str, prefix_ms: float, hyp_len: int) -> float:
        if kind != "query":
            return 0.0
        return self.a + self.b * prefix_ms


@dataclass(slots=True)
class SimulationClock:
    """Deterministic two-track clock: source audio consumed vs wall time."""

    cost_model: CostModel = zero_cost
    source_time_ms: float = 0.0
    wall_time_ms: float = 0.0

    def read(self, ms: float) -> None:
        if ms < 0:
            raise ValueError(f"cannot read a negative amount of audio ({ms}ms)")
        self.source_time_ms += ms
        self.wall_time_ms += ms

    def charge(self, kind: str, prefix_ms: float, hyp_len: int) -> None:
        cost = self.cost_model(kind, prefix_ms, hyp_len)
        if cost < 0:
            raise ValueError(f"cost model returned a negative cost ({cost}ms) for {kind!r}")
        self.wall_time_ms += cost


@dataclass(frozen=True, slots=True)
class SimEvent:
    kind: str
    prefix_ms: float
    detail: str


@dataclass(frozen=True, slots=True)
class RunResult:
    """Everything one simulated utterance produced."""

    utterance_id: str
    tokens: tuple[str, ...]
    delays: tuple[DelayRecord, ...]
    events: tuple[SimEvent, ...]
    reference: str = ""

    @property
    def ideal_delays_ms(self) -> tuple[float, ...]:
        return tuple(d.ideal_delay_ms for d in self.delays)

    @property
    def ca_delays_ms(self) -> tuple[float, ...]:
        return tuple(d.ca_delay_ms for d in self.delays)


@dataclass(frozen=True, slots=True)
class UtteranceFailure:
    utterance_id: str
    error: dict


def run_utterance(adapter: Adapter, cfg: PolicyConfig, clock: SimulationClock | None = None) -> RunResult:
    """Simulate one utterance under the configured policy."""
    if abs(adapter.segment_ms - cfg.segment_ms) > 1e-9:
        raise TraceError(
            f"utterance {adapter.utterance_id!r}: adapter segments are {adapter.segment_ms}ms, "
            f"config wants {cfg.segment_ms}ms"
        )
    clock = clock if clock is not None else SimulationClock()
    state = PolicyState()
    events: list[SimEvent] = []
    delays: list[DelayRecord] = []
    final_step = None

    for prefix_ms in prefix_schedule(adapter.segment_ms, adapter.source_duration_ms):
        read_ms = prefix_ms - clock.source_time_ms
        clock.read(read_ms)
        events.append(SimEvent("read", prefix_ms, f"{read_ms:g}ms of audio"))

        step = adapter.query(prefix_ms)
        clock.charge("query", prefix_ms, len(step.hypothesis))
        final_step = step

        policy_events: list[tuple[str, str]] = []
        emit = apply_policy(step, state, cfg, policy_events)
        clock.charge("policy", prefix_ms, len(step.hypothesis))
        for kind, detail in policy_events:
            events.append(SimEvent(kind, prefix_ms, detail))

        if emit > 0:
            start = len(state.emitted)
            new_tokens = step.hypothesis[start : start + emit]
            for token in new_tokens:
                delays.append(DelayRecord(token, ideal_delay_ms=clock.source_time_ms, ca_delay_ms=clock.wall_time_ms))
            state.emitted.extend(new_tokens)
            events.append(SimEvent("write", prefix_ms, " ".join(new_tokens)))
        state.step_index += 1

    remaining = final_step.hypothesis[len(state.emitted) :]
    if remaining:
        for token in remaining:
            delays.append(
                DelayRecord(token, ideal_delay_ms=adapter.source_duration_ms, ca_delay_ms=clock.wall_time_ms)
            )
        state.emitted.extend(remaining)
        events.append(SimEvent("flush", adapter.source_duration_ms, " ".join(remaining)))

    return RunResult(
        utterance_id=adapter.utterance_id,
        tokens=tuple(state.emitted),
        delays=tuple(delays),
        events=tuple(events),
        reference=adapter.reference,
    )


def _run_one(args: tuple[UtteranceTrace, PolicyConfig, CostModel]) -> RunResult:
    trace, cfg, cost_model = args
    return run_utterance(ScriptedAdapter(trace), cfg, SimulationClock(cost_model))


def run_corpus(
    traces: Iterable[UtteranceTrace],
    cfg: PolicyConfig,
    cost_model: CostModel = zero_cost,
    jobs: int = 1,
) -> tuple[list[RunResult], list[UtteranceFailure]]:
    """Simulate every utterance independently; results come back sorted by id.

    A trace whose adapter raises a structured error is reported as a
    failure without affecting the rest of the batch.
    """
    trace_list = sorted(traces, key=lambda t: t.id)
    results: list[RunResult] = []
    failures: list[UtteranceFailure] = []
    if jobs > 1:
        work = [(t, cfg, cost_model) for t in trace_list]
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            for trace, outcome in zip(trace_list, pool.map(_run_one_safe, work)):
                if isinstance(outcome, UtteranceFailure):
                    failures.append(outcome)
                else:
                    results.append(outcome)
    else:
        for trace in trace_list:
            outcome = _run_one_safe((trace, cfg, cost_model))
            if isinstance(outcome, UtteranceFailure):
                failures.append(outcome)
            else:
                results.append(outcome)
    return results, failures


def _run_one_safe(args: tuple[UtteranceTrace, PolicyConfig, CostModel]) -> RunResult | UtteranceFailure:
    trace = args[0]
    try:
        return _run_one(args)
    except TraceError as exc:
        return UtteranceFailure(trace.id, exc.to_json())


# --------------------------------------------------------------------------
# Delay-log JSONL: one line per utterance, the metrics module's input and
# the format golden end-to-end runs are compared in.


def delay_log_line(result: RunResult) -> str:
    return json.dumps(
        {
            "id": result.utterance_id,
            "tokens": list(result.tokens),
            "ideal_delays_ms": list(result.ideal_delays_ms),
            "ca_delays_ms": list(result.ca_delays_ms),
        },
        ensure_ascii=False,
    )


def write_delay_log(path: str, results: Sequence[RunResult]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for result in results:
            fh.write(delay_log_line(result))
            fh.write("\n")


def read_delay_log(path: str) -> list[dict]:
    out = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                out.append(json.loads(line))
    return out
