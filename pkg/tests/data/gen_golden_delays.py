"""Reference delay log for the golden end-to-end test.

Straight-line re-derivation of the attention-threshold run over the
bundled fixture traces with alpha=0.2, lambda=2, layer 4, averaged heads,
800ms segments and a zero cost model. Deliberately independent of the
simulag package: plain json plus explicit loops, so the committed log
checks the engine rather than echoing it.

Run from the repository root:

    python tests/data/gen_golden_delays.py
"""

from __future__ import annotations

import json
import math
import os

ALPHA = 0.2
LAM = 2
EPSILON = 1e-8

HERE = os.path.dirname(os.path.abspath(__file__))


def emit_count(hypothesis, rows, n_frames, emitted):
    if emitted != hypothesis[: len(emitted)] or len(emitted) > len(hypothesis):
        return 0
    if n_frames <= LAM + 1:
        return 0
    count = 0
    for j in range(len(emitted), len(hypothesis)):
        kept = rows[j][:-1]
        residual = math.fsum(kept)
        if residual < EPSILON:
            break
        filtered = [w / residual for w in kept]
        if math.fsum(filtered[-LAM:]) < ALPHA:
            count += 1
        else:
            break
    return count


def run(record):
    emitted = []
    ideal = []
    ca = []
    source = 0.0
    wall = 0.0
    final_hypothesis = []
    for step in record["steps"]:
        prefix = step["prefix_ms"]
        wall += prefix - source
        source = prefix
        hypothesis = step["hypothesis"]
        rows = step["attention"]["layers"][0]["rows"]
        final_hypothesis = hypothesis
        w = emit_count(hypothesis, rows, step["n_frames"], emitted)
        for token in hypothesis[len(emitted) : len(emitted) + w]:
            emitted.append(token)
            ideal.append(source)
            ca.append(wall)
    for token in final_hypothesis[len(emitted) :]:
        emitted.append(token)
        ideal.append(record["source_duration_ms"])
        ca.append(wall)
    return {"id": record["id"], "tokens": emitted, "ideal_delays_ms": ideal, "ca_delays_ms": ca}


def main() -> None:
    src = os.path.join(HERE, "fixture_traces.jsonl")
    out = os.path.join(HERE, "golden_edatt_delays.jsonl")
    with open(src, "r", encoding="utf-8") as fh:
        records = [json.loads(line) for line in fh if line.strip()]
    with open(out, "w", encoding="utf-8") as fh:
        for record in sorted(records, key=lambda r: r["id"]):
            fh.write(json.dumps(run(record), ensure_ascii=False))
            fh.write("\n")
    print(f"wrote {out}")


if __name__ == "__main__":
    main()
