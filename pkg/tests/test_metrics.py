from __future__ import annotations

import random

import pytest

from simulag.adapters import SyntheticAdapter, SyntheticSpec
from simulag.core import PolicyConfig
from simulag.harness import LinearCost, SimulationClock, run_utterance
from simulag.metrics import (
    LatencyInput,
    average_lagging,
    bleu_corpus,
    corpus_report,
    dal,
    laal,
    tokenize_13a,
    utterance_metrics,
)


def brute_force_al(delays, source, ref_len, boundary=None):
    boundary = source if boundary is None else boundary
    gamma = source / ref_len
    tau = len(delays)
    for i, d in enumerate(delays):
        if d >= boundary:
            tau = i + 1
            break
    total = 0.0
    for i in range(tau):
        total += delays[i] - i * gamma
    return total / tau


def brute_force_laal(delays, source, ref_len, boundary=None):
    boundary = source if boundary is None else boundary
    gamma = source / max(len(delays), ref_len)
    tau = len(delays)
    for i, d in enumerate(delays):
        if d >= boundary:
            tau = i + 1
            break
    total = 0.0
    for i in range(tau):
        total += delays[i] - i * gamma
    return total / tau


def brute_force_dal(delays, source, ref_len):
    gamma = source / ref_len
    spaced = []
    for i, d in enumerate(delays):
        spaced.append(d if i == 0 else max(d, spaced[i - 1] + gamma))
    return sum(dp - i * gamma for i, dp in enumerate(spaced)) / len(delays)


def random_flush_terminated_series(rng):
    source = rng.uniform(1_000.0, 30_000.0)
    hyp_len = rng.randint(1, 60)
    ref_len = rng.randint(1, 60)
    flushed = rng.randint(1, hyp_len)
    delays = sorted(rng.uniform(0.0, source) for _ in range(hyp_len - flushed)) + [source] * flushed
    return tuple(delays), source, ref_len


class TestAverageLagging:
    def test_single_token_after_full_source(self):
        assert average_lagging(LatencyInput((2000.0,), 2000.0, 1)) == 2000.0

    def test_worked_example(self):
        assert average_lagging(LatencyInput((800.0, 800.0, 1600.0, 2400.0), 2400.0, 4)) == 500.0

    def test_constant_series_collapses_to_source(self):
        assert average_lagging(LatencyInput((2400.0,) * 5, 2400.0, 5)) == 2400.0

    def test_tau_fallback_without_flush(self):
        delays = (5.0, 5.0, 5.0)
        got = average_lagging(LatencyInput(delays, 10.0, 3))
        assert got == pytest.approx(brute_force_al(delays, 10.0, 3), rel=1e-12)

    def test_negative_lagging_possible(self):
        assert average_lagging(LatencyInput((10.0, 10.0, 10.0, 2400.0), 2400.0, 4)) < 0


class TestLaal:
    def test_equals_al_when_hypothesis_not_longer(self):
        rng = random.Random(51)
        for _ in range(100):
            delays, source, ref_len = random_flush_terminated_series(rng)
            if len(delays) > ref_len:
                ref_len = len(delays) + rng.randint(0, 5)
            inp = LatencyInput(delays, source, ref_len)
            assert laal(inp) == average_lagging(inp)

    def test_worked_example(self):
        assert laal(LatencyInput((800.0, 800.0, 1600.0, 2400.0, 2400.0), 2400.0, 4)) == 680.0

    def test_single_token(self):
        assert laal(LatencyInput((2400.0,), 2400.0, 7)) == 2400.0

    def test_laal_dominates_al(self):
        # LAAL - AL = (gamma_al - gamma_laal) * sum(i - 1) / tau, so the gap
        # is strictly positive exactly when the hypothesis is longer than
        # the reference and more than one term enters the sum.
        rng = random.Random(52)
        for _ in range(300):
            delays, source, ref_len = random_flush_terminated_series(rng)
            inp = LatencyInput(delays, source, ref_len)
            assert laal(inp) >= average_lagging(inp) - 1e-9
            if len(delays) <= ref_len:
                assert laal(inp) == average_lagging(inp)
            elif _tau_of(inp) >= 2:
                assert laal(inp) > average_lagging(inp)


def _tau_of(inp):
    for i, d in enumerate(inp.delays):
        if d >= inp.boundary:
            return i + 1
    return inp.hyp_len


class TestDal:
    def test_worked_example(self):
        assert dal(LatencyInput((800.0, 800.0, 1600.0, 2400.0), 2400.0, 4)) == 800.0

    def test_single_token(self):
        assert dal(LatencyInput((2400.0,), 2400.0, 1)) == 2400.0

    def test_perfectly_spaced_delays_return_gamma(self):
        source, ref_len = 3000.0, 6
        gamma = source / ref_len
        delays = tuple(gamma * (i + 1) for i in range(6))
        assert dal(LatencyInput(delays, source, ref_len)) == pytest.approx(gamma, rel=1e-12)

    def test_spaced_delays_dominate_raw(self):
        rng = random.Random(53)
        for _ in range(100):
            delays, source, ref_len = random_flush_terminated_series(rng)
            gamma = source / ref_len
            spaced = []
            for i, d in enumerate(delays):
                spaced.append(d if i == 0 else max(d, spaced[-1] + gamma))
            assert all(sp >= d for sp, d in zip(spaced, delays))
            assert all(b - a >= gamma - 1e-9 for a, b in zip(spaced, spaced[1:]))
            assert dal(LatencyInput(delays, source, ref_len)) >= min(delays) - 1e-9


class TestLatencyInputValidation:
    def test_empty_series_rejected(self):
        with pytest.raises(ValueError):
            LatencyInput((), 1000.0, 1)

    def test_decreasing_delays_rejected(self):
        with pytest.raises(ValueError):
            LatencyInput((500.0, 400.0), 1000.0, 1)

    def test_bad_ref_len_rejected(self):
        with pytest.raises(ValueError):
            LatencyInput((500.0,), 1000.0, 0)

    def test_bad_source_rejected(self):
        with pytest.raises(ValueError):
            LatencyInput((500.0,), 0.0, 1)


class TestCaVariants:
    def test_ca_metrics_dominate_ideal_on_harness_output(self):
        rng = random.Random(54)
        for _ in range(30):
            spec = SyntheticSpec(
                n_target_tokens=rng.randint(2, 12),
                frames_per_segment=rng.randint(3, 9),
                slope=rng.uniform(1.0, 4.0),
                tail_mass_beta=rng.choice([0.0, 0.2, 0.5]),
                spread=rng.randint(0, 2),
                seed=rng.randint(0, 999),
                n_segments=rng.randint(2, 5),
            )
            cost = LinearCost(rng.uniform(0.0, 300.0), rng.uniform(0.0, 0.2))
            result = run_utterance(
                SyntheticAdapter(spec), PolicyConfig("edatt", alpha=0.2, lambda_=2), SimulationClock(cost)
            )
            assert all(c >= i for c, i in zip(result.ca_delays_ms, result.ideal_delays_ms))
            ref_len = rng.randint(1, 20)
            ideal = LatencyInput(result.ideal_delays_ms, spec.source_duration_ms, ref_len)
            ca = LatencyInput(
                result.ca_delays_ms, spec.source_duration_ms, ref_len, tau_boundary_ms=result.ca_delays_ms[-1]
            )
            assert average_lagging(ca) >= average_lagging(ideal) - 1e-9
            assert laal(ca) >= laal(ideal) - 1e-9
            assert dal(ca) >= dal(ideal) - 1e-9

    def test_ca_tau_uses_flush_boundary(self):
        # Two tokens before the flush, two at it; with computation cost the
        # CA boundary sits above the source duration.
        ideal = (800.0, 1600.0, 2400.0, 2400.0)
        ca = (900.0, 1800.0, 2700.0, 2700.0)
        inp = LatencyInput(ca, 2400.0, 4, tau_boundary_ms=2700.0)
        got = average_lagging(inp)
        assert got == pytest.approx(brute_force_al(ca, 2400.0, 4, boundary=2700.0), rel=1e-12)


class TestBleu:
    def test_identical_corpus_scores_100(self):
        hyps = ["The cat sat.", "A long sentence with many words in it."]
        assert round(bleu_corpus(hyps, list(hyps)), 2) == 100.0

    def test_zero_fourgram_overlap_is_smoothed(self):
        score = bleu_corpus(["a b c d e"], ["a x b y c z d"])
        assert 0.0 < score < 100.0

    def test_micro_corpus_matches_committed_oracle(self, text_fixtures):
        micro = text_fixtures["micro_corpus"]
        got = bleu_corpus(micro["hypotheses"], micro["references"])
        assert got == pytest.approx(micro["bleu"], abs=0.01)

    def test_permutation_invariance(self):
        hyps = ["the cat", "a dog barked", "green ideas sleep"]
        refs = ["the cat", "a dog barked loudly", "colorless green ideas sleep furiously"]
        base = bleu_corpus(hyps, refs)
        order = [2, 0, 1]
        assert bleu_corpus([hyps[i] for i in order], [refs[i] for i in order]) == base

    def test_brevity_penalty_applies(self):
        short = bleu_corpus(["the cat"], ["the cat sat on the mat"])
        assert short < bleu_corpus(["the cat sat on the mat"], ["the cat sat on the mat"])

    def test_empty_corpus_rejected(self):
        with pytest.raises(ValueError):
            bleu_corpus([], [])

    def test_length_mismatch_rejected(self):
        with pytest.raises(ValueError):
            bleu_corpus(["a"], ["a", "b"])

    def test_case_sensitive(self):
        assert bleu_corpus(["The Cat"], ["the cat"]) < 100.0


class TestTokenize13a:
    def test_punctuation_split(self):
        assert tokenize_13a("Hello, world!") == ["Hello", ",", "world", "!"]

    def test_plain_word(self):
        assert tokenize_13a("abc") == ["abc"]

    def test_empty_string(self):
        assert tokenize_13a("") == []

    def test_digits_keep_separators(self):
        assert tokenize_13a("3.5 million") == ["3.5", "million"]
        assert tokenize_13a("1,000,000") == ["1,000,000"]

    def test_committed_fixture_set(self, text_fixtures):
        for case in text_fixtures["tokenizer_cases"]:
            assert tokenize_13a(case["text"]) == case["tokens"], case["text"]


class TestReports:
    def test_utterance_metrics_laal_collapse(self):
        m = utterance_metrics("u1", (800.0, 1600.0), (800.0, 1600.0), 1600.0, "three word ref", "two tokens")
        assert m.laal == m.al
        assert m.al_ca == m.al

    def test_corpus_report_empty(self):
        report = corpus_report([], {})
        assert report.n_utterances == 0 and "no data" in report.flags
        assert report.tsv_row().splitlines()[1].split("\t") == ["NA"] * 7

    def test_tsv_row_layout(self):
        report = corpus_report([], {})
        assert report.tsv_row().splitlines()[0] == "BLEU\tAL\tAL_CA\tLAAL\tLAAL_CA\tDAL\tDAL_CA"
