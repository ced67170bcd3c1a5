"""Freezes reference tokenizations and the BLEU oracle value.

Runs a stock sacreBLEU implementation (pass the path to its single-file
module) over the bundled strings and micro-corpus, and commits the
results as JSON. Generated once with sacrebleu 1.4.5; the committed
values, not this script, are what the test suite asserts against.

    python tests/data/gen_text_fixtures.py --sacrebleu-path /path/to/sacrebleu.py
"""

from __future__ import annotations

import argparse
import importlib.util
import json
import os

HERE = os.path.dirname(os.path.abspath(__file__))

TOKENIZER_STRINGS = [
    "Hello, world!",
    "abc",
    "",
    "   ",
    "The cat sat on the mat.",
    "A (very) small step; a giant leap.",
    'She said "never again" and left.',
    "He said &quot;go&quot; &amp; then left.",
    "3.5 million people",
    "He bought 3 apples, 2 pears and 10 plums.",
    "1,000,000 reasons",
    "pages 10-12 are missing",
    "a well-known state-of-the-art system",
    "Version 2.0.1 shipped yesterday.",
    "What?!",
    "co-operate, re-enter, pre-empt",
    "C'est la vie",
    "don't stop",
    "the end.",
    "... and so it begins",
    "(a) first item; (b) second item",
    "x < y > z",
    "5 + 3 = 8",
    "50% of 200 is 100",
    "use the #hashtag now",
    "user@example.com sent it",
    "path/to/file.txt is missing",
    "она сказала да",
    "Καλημέρα κόσμε",
    "Grüße aus Köln: schön, oder?",
    "El niño comió 2 manzanas.",
    "naïve café déjà-vu",
    "Ich werde über das Klima sprechen.",
    "tapi: the quick brown fox",
    "brackets [inside] braces {outside}",
    "a~b^c_d`e",
    "multi   space     input",
    "tab\tseparated\tvalues",
    "line\nbreak inside",
    "ends with number 42",
    "42 starts it",
    "12.34.56 dotted run",
    "trailing comma,",
    ",leading comma",
    "double  ,, commas",
    "$100 or €90",
    "it cost 3,14 in some locales",
    "semi;colon:mix",
    "quote's inside",
    "final sentence, with everything: 1,234.5 items (49%) done - almost!",
]

BLEU_HYPOTHESES = [
    "The cat sat on the mat.",
    "A quick brown fox jumped over a lazy dog yesterday evening.",
    "He bought 3 apples, 2 pears and 10 plums at the market.",
    "Wind solar geothermal tidal",
    "The committee will meet again on Thursday to discuss the proposal in detail.",
]

BLEU_REFERENCES = [
    "The cat sat on the mat.",
    "The quick brown fox jumps over the lazy dog.",
    "He bought 3 apples, 2 pears, and 10 plums at the market.",
    "Wind, solar, geothermal and tidal power are renewable sources.",
    "The committee meets again on Thursday to discuss the proposal.",
]


def load_module(path: str):
    # sacrebleu's single-file distribution imports portalocker (download
    # cache locking) and instantiates a MeCab tokenizer at module scope;
    # 13a scoring never touches either, so stubs suffice.
    import sys
    import types

    if "portalocker" not in sys.modules:
        stub = types.ModuleType("portalocker")
        stub.Lock = object
        sys.modules["portalocker"] = stub
    if "MeCab" not in sys.modules:
        dictionary = types.SimpleNamespace(size=392126, next=None)
        tagger = types.SimpleNamespace(dictionary_info=lambda: dictionary, parse=lambda line: line, version=lambda: "stub")
        mecab = types.ModuleType("MeCab")
        mecab.Tagger = lambda *args: tagger
        sys.modules["MeCab"] = mecab
    spec = importlib.util.spec_from_file_location("ref_sacrebleu", path)
    module = importlib.util.module_from_spec(spec)
    spec.loader.exec_module(module)
    return module


def main() -> None:
    parser = argparse.ArgumentParser()
    parser.add_argument("--sacrebleu-path", required=True)
    args = parser.parse_args()
    ref = load_module(args.sacrebleu_path)

    tokenizations = [ref.tokenize_13a(s).split() for s in TOKENIZER_STRINGS]
    score = ref.corpus_bleu(BLEU_HYPOTHESES, [BLEU_REFERENCES], smooth_method="exp", tokenize="13a").score

    out = os.path.join(HERE, "text_fixtures.json")
    with open(out, "w", encoding="utf-8") as fh:
        json.dump(
            {
                "reference_scorer": f"sacrebleu {getattr(ref, 'VERSION', 'unknown')}",
                "tokenizer_cases": [
                    {"text": text, "tokens": tokens} for text, tokens in zip(TOKENIZER_STRINGS, tokenizations)
                ],
                "micro_corpus": {
                    "hypotheses": BLEU_HYPOTHESES,
                    "references": BLEU_REFERENCES,
                    "bleu": score,
                },
            },
            fh,
            ensure_ascii=False,
            indent=2,
        )
        fh.write("\n")
    print(f"wrote {out} (BLEU = {score:.6f})")


if __name__ == "__main__":
    main()
