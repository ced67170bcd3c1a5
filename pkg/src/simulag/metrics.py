"""Latency metrics (AL, LAAL, DAL and computational-aware variants) and BLEU.

Latency metrics consume the per-token delay series a run produced. The
computational-aware variant of each metric is the same formula applied to
wall-clock delays, with the cutoff for AL/LAAL taken against that series'
own final-flush boundary instead of the source duration.

BLEU is corpus-level, case-sensitive, with mteval-13a tokenization,
exponential smoothing of zero n-gram counts (orders up to 4) and the
standard brevity penalty.
"""

from __future__ import annotations

import math
import re
from collections import Counter
from dataclasses import dataclass
from typing import Sequence

from simulag.harness import RunResult

BLEU_ORDER = 4

# Stand-in for log(0) so zero precisions drive the score to zero instead of
# raising; matches common BLEU scorer behavior.
_LOG_ZERO = -9999999999.0


@dataclass(frozen=True, slots=True)
class LatencyInput:
    """One delay series plus the lengths the lagging schedule needs.

    ``tau_boundary_ms`` marks the delay value of the final flush; tokens at
    or past it are treated as emitted after the source ended. It defaults
    to ``source_duration_ms``, which is correct for ideal delays; pass the
    flush wall time for computational-aware series.
    """

    delays: tuple[float, ...]
    source_duration_ms: float
    ref_len: int
    tau_boundary_ms: float | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "delays", tuple(float(d) for d in self.delays))
        if len(self.delays) < 1:
            raise ValueError("delay series must contain at least one token")
        if self.ref_len < 1:
            raise ValueError(f"ref_len must be >= 1, got {self.ref_len}")
        if self.source_duration_ms <= 0:
            raise ValueError(f"source_duration_ms must be positive, got {self.source_duration_ms}")
        if any(b < a for a, b in zip(self.delays, self.delays[1:])):
            raise ValueError("delays must be non-decreasing")

    @property
    def hyp_len(self) -> int:
        return len(self.delays)

    @property
    def boundary(self) -> float:
        return self.source_duration_ms if self.tau_boundary_ms is None else self.tau_boundary_ms


def _tau(inp: LatencyInput) -> int:
    """1-based index of the first token emitted at/after the source ended."""
    for i, d in enumerate(inp.delays):
        if d >= inp.boundary:
            return i + 1
    return inp.hyp_len


def average_lagging(inp: LatencyInput) -> float:
    """Mean excess of delays over the ideal schedule, up to the first flush token.

    gamma = |X| / |Y*|; AL = (1/tau) * sum_{i <= tau} (d_i - (i-1) * gamma).
    """
    gamma = inp.source_duration_ms / inp.ref_len
    tau = _tau(inp)
    return math.fsum(inp.delays[i] - i * gamma for i in range(tau)) / tau


def laal(inp: LatencyInput) -> float:
    """Length-adaptive AL: the schedule divides by max(|Y|, |Y*|).

    Equals AL whenever the hypothesis is no longer than the reference;
    longer hypotheses stop earning negative lagging from the inflated
    schedule.
    """
    gamma = inp.source_duration_ms / max(inp.hyp_len, inp.ref_len)
    tau = _tau(inp)
    return math.fsum(inp.delays[i] - i * gamma for i in range(tau)) / tau


def dal(inp: LatencyInput) -> float:
    """Differentiable AL: delays first pass through a minimum-spacing recurrence.

    d'_1 = d_1, d'_i = max(d_i, d'_{i-1} + gamma) with gamma = |X| / |Y*|;
    DAL averages d'_i - (i-1) * gamma over the whole hypothesis.
    """
    gamma = inp.source_duration_ms / inp.ref_len
    spaced = []
    previous = None
    for d in inp.delays:
        previous = d if previous is None else max(d, previous + gamma)
        spaced.append(previous)
    return math.fsum(spaced[i] - i * gamma for i in range(len(spaced))) / len(spaced)


# --------------------------------------------------------------------------
# BLEU


def tokenize_13a(text: str) -> list[str]:
    """mteval-13a tokenization: unescape entities, split out punctuation.

    Case is preserved; periods and commas stay attached between digits.
    """
    norm = text
    norm = norm.replace("<skipped>", "")
    norm = norm.replace("-\n", "")
    norm = norm.replace("\n", " ")
    norm = norm.replace("&quot;", '"')
    norm = norm.replace("&amp;", "&")
    norm = norm.replace("&lt;", "<")
    norm = norm.replace("&gt;", ">")

    norm = f" {norm} "
    norm = re.sub(r"([\{-\~\[-\` -\&\(-\+\:-\@\/])", r" \1 ", norm)
    norm = re.sub(r"([^0-9])([\.,])", r"\1 \2 ", norm)
    norm = re.sub(r"([\.,])([^0-9])", r" \1 \2", norm)
    norm = re.sub(r"([0-9])(-)", r"\1 \2 ", norm)
    return norm.split()


def _ngrams(tokens: Sequence[str], max_order: int = BLEU_ORDER) -> Counter:
    counts: Counter = Counter()
    for order in range(1, max_order + 1):
        for i in range(len(tokens) - order + 1):
            counts[tuple(tokens[i : i + order])] += 1
    return counts


def _log_or_floor(value: float) -> float:
    return math.log(value) if value > 0.0 else _LOG_ZERO


def bleu_corpus(hypotheses: Sequence[str], references: Sequence[str]) -> float:
    """Corpus BLEU in [0, 100] over paired, untokenized sentence strings."""
    if len(hypotheses) != len(references):
        raise ValueError(f"corpus sizes differ: {len(hypotheses)} hypotheses vs {len(references)} references")
    if not hypotheses:
        raise ValueError("cannot score an empty corpus")

    correct = [0] * BLEU_ORDER
    total = [0] * BLEU_ORDER
    sys_len = 0
    ref_len = 0
    for hyp, ref in zip(hypotheses, references):
        hyp_tokens = tokenize_13a(hyp)
        ref_tokens = tokenize_13a(ref)
        sys_len += len(hyp_tokens)
        ref_len += len(ref_tokens)
        ref_counts = _ngrams(ref_tokens)
        for ngram, count in _ngrams(hyp_tokens).items():
            order = len(ngram)
            correct[order - 1] += min(count, ref_counts.get(ngram, 0))
            total[order - 1] += count

    precisions = [0.0] * BLEU_ORDER
    smooth = 1.0
    for n in range(BLEU_ORDER):
        if total[n] == 0:
            break
        if correct[n] == 0:
            smooth *= 2.0
            precisions[n] = 100.0 / (smooth * total[n])
        else:
            precisions[n] = 100.0 * correct[n] / total[n]

    brevity_penalty = 1.0
    if sys_len < ref_len:
        brevity_penalty = math.exp(1.0 - ref_len / sys_len) if sys_len > 0 else 0.0
    return brevity_penalty * math.exp(math.fsum(_log_or_floor(p) for p in precisions) / BLEU_ORDER)


# --------------------------------------------------------------------------
# Reports

METRIC_COLUMNS = ("BLEU", "AL", "AL_CA", "LAAL", "LAAL_CA", "DAL", "DAL_CA")


@dataclass(frozen=True, slots=True)
class UtteranceMetrics:
    utterance_id: str
    bleu: float
    al: float
    al_ca: float
    laal: float
    laal_ca: float
    dal: float
    dal_ca: float

    def to_json(self) -> dict:
        return {
            "id": self.utterance_id,
            "BLEU": self.bleu,
            "AL": self.al,
            "AL_CA": self.al_ca,
            "LAAL": self.laal,
            "LAAL_CA": self.laal_ca,
            "DAL": self.dal,
            "DAL_CA": self.dal_ca,
        }


@dataclass(frozen=True, slots=True)
class MetricReport:
    """Corpus aggregates (latency: unweighted means; BLEU: corpus-level)."""

    n_utterances: int
    bleu: float | None = None
    al: float | None = None
    al_ca: float | None = None
    laal: float | None = None
    laal_ca: float | None = None
    dal: float | None = None
    dal_ca: float | None = None
    per_utterance: tuple[UtteranceMetrics, ...] = ()
    flags: tuple[str, ...] = ()

    def to_json(self) -> dict:
        return {
            "n_utterances": self.n_utterances,
            "corpus": {
                "BLEU": self.bleu,
                "AL": self.al,
                "AL_CA": self.al_ca,
                "LAAL": self.laal,
                "LAAL_CA": self.laal_ca,
                "DAL": self.dal,
                "DAL_CA": self.dal_ca,
            },
            "per_utterance": [u.to_json() for u in self.per_utterance],
            "flags": list(self.flags),
        }

    def tsv_row(self) -> str:
        header = "\t".join(METRIC_COLUMNS)
        if self.n_utterances == 0:
            return header + "\n" + "\t".join(["NA"] * len(METRIC_COLUMNS)) + "\n"
        values = (self.bleu, self.al, self.al_ca, self.laal, self.laal_ca, self.dal, self.dal_ca)
        return header + "\n" + "\t".join(f"{v:.2f}" for v in values) + "\n"


def _ref_token_count(reference: str) -> int:
    return max(1, len(reference.split()))


def utterance_metrics(
    utterance_id: str,
    ideal_delays: Sequence[float],
    ca_delays: Sequence[float],
    source_duration_ms: float,
    reference: str,
    hypothesis_text: str,
) -> UtteranceMetrics:
    ref_len = _ref_token_count(reference)
    ideal = LatencyInput(tuple(ideal_delays), source_duration_ms, ref_len)
    ca = LatencyInput(tuple(ca_delays), source_duration_ms, ref_len, tau_boundary_ms=ca_delays[-1])
    return UtteranceMetrics(
        utterance_id=utterance_id,
        bleu=bleu_corpus([hypothesis_text], [reference]),
        al=average_lagging(ideal),
        al_ca=average_lagging(ca),
        laal=laal(ideal),
        laal_ca=laal(ca),
        dal=dal(ideal),
        dal_ca=dal(ca),
    )


def corpus_report(runs: Sequence[RunResult], source_durations: dict[str, float]) -> MetricReport:
    """Aggregate per-utterance metrics and corpus BLEU over finished runs."""
    scored = [r for r in runs if r.delays]
    skipped = [r.utterance_id for r in runs if not r.delays]
    if not scored:
        flags = ("no data",) + (("empty runs: " + ", ".join(skipped),) if skipped else ())
        return MetricReport(n_utterances=0, flags=flags)

    per = [
        utterance_metrics(
            r.utterance_id,
            r.ideal_delays_ms,
            r.ca_delays_ms,
            source_durations[r.utterance_id],
            r.reference,
            " ".join(r.tokens),
        )
        for r in scored
    ]
    n = len(per)
    flags = tuple(f"skipped empty-output utterance {uid}" for uid in skipped)
    return MetricReport(
        n_utterances=n,
        bleu=bleu_corpus([" ".join(r.tokens) for r in scored], [r.reference for r in scored]),
        al=math.fsum(u.al for u in per) / n,
        al_ca=math.fsum(u.al_ca for u in per) / n,
        laal=math.fsum(u.laal for u in per) / n,
        laal_ca=math.fsum(u.laal_ca for u in per) / n,
        dal=math.fsum(u.dal for u in per) / n,
        dal_ca=math.fsum(u.dal_ca for u in per) / n,
        per_utterance=tuple(per),
        flags=flags,
    )
