"""Decision policies and latency benchmarking for streaming speech translation.

The package simulates READ/WRITE streaming inference over recorded model
traces: an adapter replays per-prefix hypotheses and encoder-decoder
attention, a policy decides how many tokens to release at each step, and
the harness produces per-token delays that feed the latency metrics
(average lagging and friends) plus corpus BLEU.
"""

from simulag.core import (
    AttentionMatrix,
    AttentionRow,
    ConfigError,
    DelayRecord,
    MissingStepError,
    PolicyConfig,
    PrefixStep,
    TraceError,
    UtteranceTrace,
    Violation,
    read_traces,
    validate_file,
    validate_trace,
    write_traces,
)
from simulag.adapters import ScriptedAdapter, SyntheticAdapter, SyntheticSpec
from simulag.harness import LinearCost, RunResult, SimulationClock, run_corpus, run_utterance, zero_cost
from simulag.metrics import LatencyInput, MetricReport, average_lagging, bleu_corpus, dal, laal, tokenize_13a

__version__ = "0.1.0"

__all__ = [
    "AttentionMatrix",
    "AttentionRow",
    "ConfigError",
    "DelayRecord",
    "LatencyInput",
    "LinearCost",
    "MetricReport",
    "MissingStepError",
    "PolicyConfig",
    "PrefixStep",
    "RunResult",
    "ScriptedAdapter",
    "SimulationClock",
    "SyntheticAdapter",
    "SyntheticSpec",
    "TraceError",
    "UtteranceTrace",
    "Violation",
    "average_lagging",
    "bleu_corpus",
    "dal",
    "laal",
    "read_traces",
    "run_corpus",
    "run_utterance",
    "tokenize_13a",
    "validate_file",
    "validate_trace",
    "write_traces",
    "zero_cost",
]
