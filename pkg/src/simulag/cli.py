"""Command-line surface: simulate, sweep, synth, validate, dump-attention, metrics.

Every subcommand is deterministic given its inputs and flags; outputs
carry no timestamps or environment data. Domain errors print a
machine-readable JSON object and exit nonzero.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from typing import Sequence

from simulag import __version__
from simulag.adapters import SyntheticSpec, build_synthetic_trace, synthetic_corpus
from simulag.attention import diagonality_score, filtered_attention_matrix
from simulag.core import (
    AVERAGED,
    ConfigError,
    PolicyConfig,
    TraceError,
    UtteranceTrace,
    _parse_lines,
    read_traces,
    trace_from_json,
    validate_file,
    write_traces,
)
from simulag.harness import LinearCost, UtteranceFailure, read_delay_log, run_corpus, write_delay_log
from simulag.metrics import MetricReport, bleu_corpus, corpus_report, utterance_metrics

DEFAULT_ALPHAS = (0.6, 0.4, 0.2, 0.1, 0.05, 0.03)
DEFAULT_LAMBDAS = (2,)
DEFAULT_LAYERS = (4,)


class CliError(Exception):
    def __init__(self, payload: dict, code: int = 2):
        super().__init__(payload.get("message", "error"))
        self.payload = payload
        self.code = code


def _fail(message: str, code: int = 2, **extra) -> CliError:
    return CliError({"error": "cli", "message": message, **extra}, code)


def _parse_head(value: str) -> str | int:
    if value == AVERAGED:
        return AVERAGED
    try:
        return int(value)
    except ValueError:
        raise _fail(f"--head must be 'averaged' or a 1-based head index, got {value!r}", error_kind="config")


def _csv(value: str, cast) -> tuple:
    return tuple(cast(part) for part in value.split(",") if part != "")


def _policy_config(args: argparse.Namespace) -> PolicyConfig:
    try:
        return PolicyConfig(
            policy_kind=args.policy,
            alpha=args.alpha,
            lambda_=args.lambda_,
            layer=args.layer,
            head_spec=_parse_head(args.head),
            k=args.k,
            segment_ms=args.segment_ms,
            unfiltered=args.unfiltered,
        )
    except ConfigError as exc:
        raise _fail(str(exc), error_kind="config")


def _load_traces(args: argparse.Namespace, layer: int | None, head: str | int) -> list[UtteranceTrace]:
    problems = validate_file(args.trace, layer=layer, head_spec=head)
    if problems:
        raise CliError({"error": "validation", "violations": [v.to_json() for v in problems]}, 2)
    return read_traces(args.trace, layer=layer, head_spec=head)


def _write_report(out_dir: str, report: MetricReport, failures: Sequence[UtteranceFailure]) -> None:
    payload = report.to_json()
    payload["failures"] = [{"id": f.utterance_id, **f.error} for f in failures]
    with open(os.path.join(out_dir, "report.json"), "w", encoding="utf-8") as fh:
        json.dump(payload, fh, ensure_ascii=False, indent=2, sort_keys=True)
        fh.write("\n")
    with open(os.path.join(out_dir, "report.tsv"), "w", encoding="utf-8") as fh:
        fh.write(report.tsv_row())


def cmd_simulate(args: argparse.Namespace) -> int:
    cfg = _policy_config(args)
    traces = _load_traces(args, layer=args.layer, head=_parse_head(args.head))
    results, failures = run_corpus(traces, cfg, LinearCost(args.cost_a, args.cost_b), jobs=args.jobs)
    os.makedirs(args.out, exist_ok=True)
    write_delay_log(os.path.join(args.out, "delays.jsonl"), results)
    report = corpus_report(results, {t.id: t.source_duration_ms for t in traces})
    _write_report(args.out, report, failures)
    return 1 if failures else 0


def _grid(args: argparse.Namespace) -> list[PolicyConfig]:
    heads = tuple(_parse_head(h) for h in args.heads.split(","))
    configs = []
    try:
        if args.policy == "edatt":
            for layer in sorted(args.layers):
                for head in sorted(heads, key=str):
                    for lam in sorted(args.lambdas):
                        for alpha in sorted(args.alphas):
                            configs.append(
                                PolicyConfig(
                                    "edatt",
                                    alpha=alpha,
                                    lambda_=lam,
                                    layer=layer,
                                    head_spec=head,
                                    segment_ms=args.segment_ms,
                                    unfiltered=args.unfiltered,
                                )
                            )
        elif args.policy == "waitk":
            for k in sorted(args.ks):
                configs.append(PolicyConfig("waitk", k=k, segment_ms=args.segment_ms))
        else:
            configs.append(PolicyConfig("local_agreement", segment_ms=args.segment_ms))
    except ConfigError as exc:
        raise _fail(str(exc), error_kind="config")
    return configs


def _config_cells(cfg: PolicyConfig) -> list[str]:
    return [
        cfg.policy_kind,
        "-" if cfg.alpha is None else f"{cfg.alpha:g}",
        f"{cfg.lambda_}" if cfg.policy_kind == "edatt" else "-",
        f"{cfg.layer}" if cfg.policy_kind == "edatt" else "-",
        str(cfg.head_spec) if cfg.policy_kind == "edatt" else "-",
        "-" if cfg.k is None else f"{cfg.k}",
    ]


def cmd_sweep(args: argparse.Namespace) -> int:
    configs = _grid(args)
    head_for_load = _parse_head(args.heads.split(",")[0]) if args.policy == "edatt" else AVERAGED
    any_failures = False
    rows = []
    for cfg in configs:
        traces = _load_traces(args, layer=cfg.layer if cfg.policy_kind == "edatt" else None, head=cfg.head_spec if cfg.policy_kind == "edatt" else head_for_load)
        results, failures = run_corpus(traces, cfg, LinearCost(args.cost_a, args.cost_b), jobs=args.jobs)
        any_failures = any_failures or bool(failures)
        report = corpus_report(results, {t.id: t.source_duration_ms for t in traces})
        if report.n_utterances == 0:
            cells = ["NA"] * 7
        else:
            cells = [
                f"{report.bleu:.2f}",
                f"{report.al:.2f}",
                f"{report.al_ca:.2f}",
                f"{report.laal:.2f}",
                f"{report.laal_ca:.2f}",
                f"{report.dal:.2f}",
                f"{report.dal_ca:.2f}",
            ]
        rows.append("\t".join(_config_cells(cfg) + cells))
    header = "\t".join(["policy", "alpha", "lambda", "layer", "head", "k", "BLEU", "AL", "AL_CA", "LAAL", "LAAL_CA", "DAL", "DAL_CA"])
    with open(args.out, "w", encoding="utf-8") as fh:
        fh.write(header + "\n")
        for row in rows:
            fh.write(row + "\n")
    return 1 if any_failures else 0


def cmd_synth(args: argparse.Namespace) -> int:
    if args.spec_json:
        with open(args.spec_json, "r", encoding="utf-8") as fh:
            spec = SyntheticSpec.from_json(json.load(fh))
    else:
        try:
            spec = SyntheticSpec(
                n_target_tokens=args.tokens,
                frames_per_segment=args.frames_per_segment,
                slope=args.slope,
                tail_mass_beta=args.beta,
                spread=args.spread,
                seed=args.seed,
                n_segments=args.segments,
                segment_ms=args.segment_ms,
                source_words=args.source_words,
            )
        except ConfigError as exc:
            raise _fail(str(exc), error_kind="config")
    if args.count == 1:
        traces = [build_synthetic_trace(spec)]
    else:
        traces = synthetic_corpus(spec, args.count)
    write_traces(args.out, traces)
    return 0


def cmd_validate(args: argparse.Namespace) -> int:
    head = _parse_head(args.head) if args.head is not None else None
    violations = validate_file(args.trace, layer=args.layer, head_spec=head)
    print(json.dumps({"violations": [v.to_json() for v in violations], "count": len(violations)}, ensure_ascii=False))
    return 1 if violations else 0


def _dump_views(obj: dict, layer: int | None, head_arg: str):
    bundle_heads: list[str | int]
    first = obj["steps"][0]["attention"] if obj["steps"] else {"head_mode": AVERAGED, "layers": []}
    if head_arg == "all":
        if first.get("head_mode") == "stacked":
            n_heads = len(first["layers"][0]["heads"])
            bundle_heads = [AVERAGED] + [h + 1 for h in range(n_heads)]
        else:
            bundle_heads = [AVERAGED]
    else:
        bundle_heads = [_parse_head(head_arg)]
    for head in bundle_heads:
        yield head, trace_from_json(obj, layer=layer, head_spec=head)


def cmd_dump_attention(args: argparse.Namespace) -> int:
    os.makedirs(args.out, exist_ok=True)
    score_rows = []
    for lineno, obj in _parse_lines(args.trace):
        if not isinstance(obj, dict):
            raise CliError({"error": "validation", "violations": [obj.to_json()]}, 2)
        if not obj.get("steps"):
            continue
        for head, trace in _dump_views(obj, args.layer, args.head):
            final = trace.steps[-1]
            matrix = final.attention
            views = [("raw", matrix)]
            if matrix.n_frames >= 2:
                views.append(("filtered", filtered_attention_matrix(matrix)))
            wanted = "filtered" if args.filtered else "raw"
            for name, view in views:
                if name == wanted and view.rows:
                    path = os.path.join(args.out, f"{trace.id}__layer{matrix.layer_index}__head-{head}.tsv")
                    with open(path, "w", encoding="utf-8") as fh:
                        for token, row in zip(final.hypothesis, view.rows):
                            fh.write(token + "\t" + "\t".join(f"{w:.9g}" for w in row.weights) + "\n")
            if matrix.rows and matrix.n_frames >= 2:
                raw_score = diagonality_score(matrix, args.band)
                filt_score = diagonality_score(filtered_attention_matrix(matrix), args.band)
                score_rows.append(
                    f"{trace.id}\t{matrix.layer_index}\t{head}\t{args.band}\t{raw_score:.6f}\t{filt_score:.6f}"
                )
    with open(os.path.join(args.out, "diagonality.tsv"), "w", encoding="utf-8") as fh:
        fh.write("utterance\tlayer\thead\tband\traw_score\tfiltered_score\n")
        for row in score_rows:
            fh.write(row + "\n")
    return 0


def cmd_metrics(args: argparse.Namespace) -> int:
    log = read_delay_log(args.delays)
    with open(args.references, "r", encoding="utf-8") as fh:
        references = [line.rstrip("\n") for line in fh]
    if len(references) != len(log):
        raise _fail(f"{len(log)} delay-log lines but {len(references)} reference lines")
    per = []
    for entry, reference in zip(log, references):
        if not entry["ideal_delays_ms"]:
            continue
        # Flush-terminated logs end at the source duration, so the last
        # ideal delay recovers |X| without carrying it in the schema.
        per.append(
            utterance_metrics(
                entry["id"],
                entry["ideal_delays_ms"],
                entry["ca_delays_ms"],
                entry["ideal_delays_ms"][-1],
                reference,
                " ".join(entry["tokens"]),
            )
        )
    if not per:
        report = MetricReport(n_utterances=0, flags=("no data",))
    else:
        n = len(per)
        report = MetricReport(
            n_utterances=n,
            bleu=bleu_corpus(
                [" ".join(e["tokens"]) for e in log if e["ideal_delays_ms"]],
                [r for e, r in zip(log, references) if e["ideal_delays_ms"]],
            ),
            al=math.fsum(u.al for u in per) / n,
            al_ca=math.fsum(u.al_ca for u in per) / n,
            laal=math.fsum(u.laal for u in per) / n,
            laal_ca=math.fsum(u.laal_ca for u in per) / n,
            dal=math.fsum(u.dal for u in per) / n,
            dal_ca=math.fsum(u.dal_ca for u in per) / n,
            per_utterance=tuple(per),
        )
    os.makedirs(args.out, exist_ok=True)
    _write_report(args.out, report, [])
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="simulag", description=__doc__)
    parser.add_argument("--version", action="version", version=f"simulag {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_policy_flags(p: argparse.ArgumentParser) -> None:
        p.add_argument("--policy", choices=["edatt", "local_agreement", "waitk"], default="edatt")
        p.add_argument("--alpha", type=float, default=None)
        p.add_argument("--lambda", dest="lambda_", type=int, default=2)
        p.add_argument("--layer", type=int, default=4)
        p.add_argument("--head", default=AVERAGED, help="'averaged' or a 1-based head index")
        p.add_argument("--k", type=int, default=None)
        p.add_argument("--segment-ms", type=float, default=800.0)
        p.add_argument("--unfiltered", action="store_true", help="evaluate the threshold on unfiltered rows")

    def add_cost_flags(p: argparse.ArgumentParser) -> None:
        p.add_argument("--cost-a", type=float, default=0.0, help="fixed per-query cost in ms")
        p.add_argument("--cost-b", type=float, default=0.0, help="per-query cost in ms per ms of prefix")
        p.add_argument("--jobs", type=int, default=1)

    p = sub.add_parser("simulate", help="run one policy over a trace file and score it")
    p.add_argument("--trace", required=True)
    add_policy_flags(p)
    add_cost_flags(p)
    p.add_argument("--out", required=True, help="output directory (delays.jsonl, report.json, report.tsv)")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("sweep", help="grid of configurations, one scored TSV row each")
    p.add_argument("--trace", required=True)
    p.add_argument("--policy", choices=["edatt", "local_agreement", "waitk"], default="edatt")
    p.add_argument("--alphas", type=lambda s: _csv(s, float), default=DEFAULT_ALPHAS)
    p.add_argument("--lambdas", type=lambda s: _csv(s, int), default=DEFAULT_LAMBDAS)
    p.add_argument("--layers", type=lambda s: _csv(s, int), default=DEFAULT_LAYERS)
    p.add_argument("--heads", default=AVERAGED, help="comma list of 'averaged' and/or 1-based head indices")
    p.add_argument("--ks", type=lambda s: _csv(s, int), default=(1, 3, 5, 7))
    p.add_argument("--segment-ms", type=float, default=800.0)
    p.add_argument("--unfiltered", action="store_true")
    add_cost_flags(p)
    p.add_argument("--out", required=True, help="output TSV path")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("synth", help="generate synthetic traces")
    p.add_argument("--out", required=True)
    p.add_argument("--count", type=int, default=1)
    p.add_argument("--tokens", type=int, default=12)
    p.add_argument("--frames-per-segment", type=int, default=8)
    p.add_argument("--slope", type=float, default=4.0)
    p.add_argument("--beta", type=float, default=0.0, help="attention mass pinned on the final frame")
    p.add_argument("--spread", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--segments", type=int, default=4)
    p.add_argument("--segment-ms", type=float, default=800.0)
    p.add_argument("--source-words", type=int, default=None)
    p.add_argument("--spec-json", default=None, help="JSON file with SyntheticSpec fields (overrides flags)")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("validate", help="validate a JSONL trace file")
    p.add_argument("--trace", required=True)
    p.add_argument("--layer", type=int, default=None, help="validate one stored layer (default: all stored views)")
    p.add_argument("--head", default=None, help="validate one head view (default: all stored views)")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("dump-attention", help="final-step attention matrices as TSV plus diagonality scores")
    p.add_argument("--trace", required=True)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--layer", type=int, default=None)
    p.add_argument("--head", default=AVERAGED, help="'averaged', a 1-based head index, or 'all'")
    p.add_argument("--filtered", action="store_true", help="dump filtered matrices instead of raw")
    p.add_argument("--band", type=int, default=1)
    p.set_defaults(func=cmd_dump_attention)

    p = sub.add_parser("metrics", help="score a delay log against a reference file")
    p.add_argument("--delays", required=True, help="delay-log JSONL from simulate")
    p.add_argument("--references", required=True, help="one reference sentence per line, aligned with the log")
    p.add_argument("--out", required=True, help="output directory (report.json, report.tsv)")
    p.set_defaults(func=cmd_metrics)

    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except CliError as exc:
        print(json.dumps(exc.payload, ensure_ascii=False))
        return exc.code
    except (ConfigError, TraceError) as exc:
        payload = exc.to_json() if isinstance(exc, TraceError) else {"error": "config", "message": str(exc)}
        print(json.dumps(payload, ensure_ascii=False))
        return 2
    except OSError as exc:
        print(json.dumps({"error": "io", "message": str(exc)}, ensure_ascii=False))
        return 2


if __name__ == "__main__":
    sys.exit(main())
