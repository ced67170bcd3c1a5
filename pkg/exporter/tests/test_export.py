from __future__ import annotations

import json
import math
import subprocess
import sys

import pytest

from trace_exporter.backend import MockBackend, Utterance
from trace_exporter.cli import main as cli_main
from trace_exporter.export import ExportConfig, export_corpus, prefix_schedule, read_manifest

UTTS = [
    Utterance(id="mock-001", audio="audio/a.wav", duration_ms=2400.0, reference="the old bridge stood over the river"),
    Utterance(id="mock-002", audio="audio/b.wav", duration_ms=3000.0, reference="a quiet morning light crossed the field and warmed it"),
]


def export(tmp_path, utterances=UTTS, **cfg_kwargs):
    out = tmp_path / "traces.jsonl"
    config = ExportConfig(output_path=str(out), **cfg_kwargs)
    report = export_corpus(config, utterances, MockBackend())
    return out, report


def run_primary_validator(path):
    proc = subprocess.run(
        [sys.executable, "-m", "simulag.cli", "validate", "--trace", str(path)],
        capture_output=True,
        text=True,
    )
    return proc.returncode, json.loads(proc.stdout)


class TestExportCorpus:
    def test_two_utterances_two_lines_with_expected_step_counts(self, tmp_path):
        out, report = export(tmp_path)
        assert report.ok and report.written == 2
        lines = [json.loads(line) for line in out.read_text().splitlines()]
        assert len(lines) == 2
        for record, utt in zip(lines, UTTS):
            assert len(record["steps"]) == math.ceil(utt.duration_ms / 800.0)
            assert record["steps"][-1]["prefix_ms"] == utt.duration_ms

    def test_rows_sum_to_one_within_trace_tolerance(self, tmp_path):
        out, _ = export(tmp_path)
        for line in out.read_text().splitlines():
            record = json.loads(line)
            for step in record["steps"]:
                for entry in step["attention"]["layers"]:
                    for row in entry["rows"]:
                        assert abs(math.fsum(row) - 1.0) <= 1e-4
                        assert all(w >= 0.0 for w in row)

    def test_passes_primary_validator(self, tmp_path):
        out, _ = export(tmp_path)
        code, payload = run_primary_validator(out)
        assert code == 0
        assert payload == {"violations": [], "count": 0}

    def test_stacked_export_passes_primary_validator(self, tmp_path):
        out, _ = export(tmp_path, head_mode="stacked", layers=(3, 4))
        code, payload = run_primary_validator(out)
        assert code == 0, payload
        record = json.loads(out.read_text().splitlines()[0])
        entry = record["steps"][-1]["attention"]["layers"][0]
        assert len(entry["heads"]) == 8

    def test_loads_through_scripted_replay(self, tmp_path):
        simulag = pytest.importorskip("simulag")
        out, _ = export(tmp_path)
        traces = simulag.read_traces(str(out))
        adapter = simulag.ScriptedAdapter(traces[0])
        first = adapter.query(800.0)
        assert first.prefix_ms == 800.0
        assert len(first.attention.rows) == len(first.hypothesis)
        result = simulag.run_utterance(adapter, simulag.PolicyConfig("edatt", alpha=0.2, lambda_=2))
        assert result.tokens == tuple(UTTS[0].reference.split())

    def test_deterministic_across_runs(self, tmp_path):
        out1 = tmp_path / "first.jsonl"
        out2 = tmp_path / "second.jsonl"
        export_corpus(ExportConfig(output_path=str(out1)), UTTS, MockBackend())
        export_corpus(ExportConfig(output_path=str(out2)), UTTS, MockBackend())
        assert out1.read_bytes() == out2.read_bytes()

    def test_failures_logged_and_skipped(self, tmp_path):
        bad = Utterance(id="mock-bad", audio="x.wav", duration_ms=1600.0, reference="")
        out, report = export(tmp_path, utterances=[UTTS[0], bad, UTTS[1]])
        assert report.written == 2
        assert [uid for uid, _ in report.failures] == ["mock-bad"]
        ids = [json.loads(line)["id"] for line in out.read_text().splitlines()]
        assert ids == ["mock-001", "mock-002"]

    def test_layer_out_of_model_range_rejected(self, tmp_path):
        with pytest.raises(ValueError):
            export(tmp_path, layers=(9,))

    def test_frame_counts_non_decreasing(self, tmp_path):
        out, _ = export(tmp_path)
        for line in out.read_text().splitlines():
            frames = [step["n_frames"] for step in json.loads(line)["steps"]]
            assert frames == sorted(frames)


class TestConfigAndManifest:
    def test_bad_config_rejected(self, tmp_path):
        with pytest.raises(ValueError):
            ExportConfig(output_path="x", head_mode="first")
        with pytest.raises(ValueError):
            ExportConfig(output_path="x", segment_ms=0)
        with pytest.raises(ValueError):
            ExportConfig(output_path="x", beam_size=0)
        with pytest.raises(ValueError):
            ExportConfig(output_path="x", layers=())

    def test_manifest_round_trip(self, tmp_path):
        manifest = tmp_path / "data.tsv"
        manifest.write_text(
            "id\taudio\tduration_ms\treference\n"
            "u1\ta.wav\t2400\tthe old bridge stood\n"
            "u2\tb.wav\t1600.5\tquiet morning light\n"
        )
        utterances = read_manifest(str(manifest))
        assert [u.id for u in utterances] == ["u1", "u2"]
        assert utterances[1].duration_ms == 1600.5

    def test_manifest_missing_columns(self, tmp_path):
        manifest = tmp_path / "bad.tsv"
        manifest.write_text("id\taudio\n1\tx\n")
        with pytest.raises(ValueError):
            read_manifest(str(manifest))

    def test_schedule_matches_segment_grid(self):
        assert prefix_schedule(800.0, 2400.0) == [800.0, 1600.0, 2400.0]
        assert prefix_schedule(800.0, 2600.0) == [800.0, 1600.0, 2400.0, 2600.0]


class TestCli:
    def write_manifest(self, tmp_path):
        manifest = tmp_path / "data.tsv"
        manifest.write_text(
            "id\taudio\tduration_ms\treference\n"
            "cli-1\ta.wav\t2400\tthe old bridge stood over the river\n"
            "cli-2\tb.wav\t3000\ta quiet morning light crossed the field\n"
        )
        return manifest

    def test_end_to_end_export_validates(self, tmp_path, capsys):
        manifest = self.write_manifest(tmp_path)
        out = tmp_path / "cli_traces.jsonl"
        assert cli_main(["--manifest", str(manifest), "--out", str(out), "--layers", "4"]) == 0
        assert "wrote 2 trace(s)" in capsys.readouterr().out
        code, payload = run_primary_validator(out)
        assert code == 0 and payload["count"] == 0

    def test_unknown_backend_path(self, tmp_path, capsys):
        manifest = self.write_manifest(tmp_path)
        with pytest.raises(SystemExit):
            cli_main(["--manifest", str(manifest), "--out", str(tmp_path / "t.jsonl"), "--backend", "nonsense"])

    def test_bad_manifest_exit_code(self, tmp_path, capsys):
        missing = tmp_path / "does-not-exist.tsv"
        assert cli_main(["--manifest", str(missing), "--out", str(tmp_path / "t.jsonl")]) == 2
