# tests/test_cli.py
import json
import os
import sys

import numpy as np
import pytest
import soundfile as sf

# Ajouter le répertoire parent au path
sys.path.insert(0, os.path.dirname(os.path.dirname(__file__)))

from src.cli import build_parser, main
from src.core.config import CONFIG_ENV, LOG_LEVEL_ENV
from src.data.documents import read_document
from src.data.reports import GRAPH_FILE, REPORT_FILE, TIMINGS_FILE, TRACE_FILE, TRIALS_FILE

SMALL_CONFIG = """
session:
  sample_rate: 8000
train:
  segment_seconds: 0.5
  loss_tail_seconds: 0.3
  warmup_seconds: 0.2
  console_steps: 1
  console_steps_prune: 1
  finetune_steps: 1
  log_every: 0
prune:
  rounds: 1
stft:
  fft_sizes: [64, 128, 256]
  mel_bins: 16
  a_weighting_taps: 63
"""


@pytest.fixture(autouse=True)
def clean_env(monkeypatch):
    monkeypatch.delenv(CONFIG_ENV, raising=False)
    monkeypatch.delenv(LOG_LEVEL_ENV, raising=False)


@pytest.fixture
def config_path(tmp_path):
    path = tmp_path / "config.yaml"
    path.write_text(SMALL_CONFIG)
    return str(path)


@pytest.fixture
def song(tmp_path, config_path):
    """Session synthetique de 2 pistes, 1 s a 8 kHz."""
    out = tmp_path / "song"
    code = main([
        "--config", config_path, "synth", "--out-dir", str(out), "--tracks", "2",
        "--groups", "a,b", "--active", "g:all,e:0", "--seconds", "1.0", "--sample-rate", "8000", "--seed", "1",
    ])
    assert code == 0
    return out


class TestParser:
    def test_subcommands(self):
        parser = build_parser()
        args = parser.parse_args(["prune", "--manifest", "m.json", "--sampler", "dry_wet", "--tolerance", "0.02"])
        assert args.command == "prune"
        assert args.sampler == "dry_wet"
        assert args.tolerance == 0.02

    def test_invalid_sampler(self):
        with pytest.raises(SystemExit):
            build_parser().parse_args(["prune", "--manifest", "m.json", "--sampler", "random"])


class TestSynthAndRender:
    def test_synth_files(self, song):
        assert sorted(os.listdir(song)) == ["manifest.json", "mix.wav", "synth_0.wav", "synth_1.wav", "truth.json"]

    def test_render_truth_reproduces_mix(self, song, tmp_path, config_path):
        out = str(tmp_path / "render.wav")
        code = main([
            "--config", config_path, "render",
            "--graph", str(song / "truth.json"), "--manifest", str(song / "manifest.json"), "--out", out,
        ])
        assert code == 0
        rendered, rate = sf.read(out, always_2d=True)
        original, _ = sf.read(str(song / "mix.wav"), always_2d=True)
        assert rate == 8000
        assert np.allclose(rendered, original, atol=1e-5)

    def test_export_dot(self, song, tmp_path, config_path):
        out = tmp_path / "truth.dot"
        code = main(["--config", config_path, "export-dot", "--graph", str(song / "truth.json"), "--out", str(out)])
        assert code == 0
        text = out.read_text()
        assert text.startswith("digraph")
        assert text.count("label=g") == 2

    def test_export_dot_stdout(self, song, config_path, capsys):
        assert main(["--config", config_path, "export-dot", "--graph", str(song / "truth.json")]) == 0
        assert "->" in capsys.readouterr().out


@pytest.mark.slow
class TestTrainingCommands:
    def test_fit(self, song, tmp_path, config_path):
        out = tmp_path / "fit"
        code = main(["--config", config_path, "fit", "--manifest", str(song / "manifest.json"), "--out-dir", str(out)])
        assert code == 0
        assert {GRAPH_FILE, REPORT_FILE, TRACE_FILE, TIMINGS_FILE} <= set(os.listdir(out))
        report = json.loads((out / REPORT_FILE).read_text())
        assert report["command"] == "fit"
        assert report["metrics"]["total_ratio"] == 0
        graph, _ = read_document(str(out / GRAPH_FILE))
        assert len(graph.processors()) == 7 * (2 + 2)

    def test_fit_partial_chain(self, song, tmp_path, config_path):
        out = tmp_path / "fit"
        code = main([
            "--config", config_path, "fit", "--manifest", str(song / "manifest.json"),
            "--out-dir", str(out), "--chain", "eg",
        ])
        assert code == 0
        graph, _ = read_document(str(out / GRAPH_FILE))
        assert len(graph.processors()) == 2 * (2 + 2)

    def test_prune_then_scan(self, song, tmp_path, config_path):
        out = tmp_path / "prune"
        code = main(["--config", config_path, "prune", "--manifest", str(song / "manifest.json"), "--out-dir", str(out)])
        assert code == 0
        assert TRIALS_FILE in os.listdir(out)
        report = json.loads((out / REPORT_FILE).read_text())
        assert [p["round"] for p in report["progress"]] == [1]

        csv = tmp_path / "importance.csv"
        code = main([
            "--config", config_path, "scan", "--graph", str(out / GRAPH_FILE),
            "--manifest", str(song / "manifest.json"), "--out", str(csv),
        ])
        assert code == 0
        assert csv.read_text().startswith("node_id,node_type,weight,delta")
        assert (tmp_path / "importance_correlation.json").exists()

    def test_seeded_prune_runs_are_byte_identical(self, song, tmp_path, config_path):
        """Deux elagages avec la meme graine : documents et rapports identiques octet par octet."""
        runs = []
        for name in ("first", "second"):
            out = tmp_path / name
            code = main([
                "--config", config_path, "prune", "--manifest", str(song / "manifest.json"),
                "--out-dir", str(out), "--seed", "3",
            ])
            assert code == 0
            runs.append(out)
        for filename in (GRAPH_FILE, REPORT_FILE, TRACE_FILE, TRIALS_FILE):
            assert (runs[0] / filename).read_bytes() == (runs[1] / filename).read_bytes(), filename


class TestErrors:
    def test_unknown_config_key(self, tmp_path):
        path = tmp_path / "bad.yaml"
        path.write_text("train:\n  speed: 3\n")
        assert main(["--config", str(path), "export-dot", "--graph", "x.json"]) == 1

    def test_missing_graph(self, tmp_path, config_path):
        assert main(["--config", config_path, "export-dot", "--graph", str(tmp_path / "absent.json")]) == 1

    def test_invalid_active(self, tmp_path, config_path):
        code = main(["--config", config_path, "synth", "--out-dir", str(tmp_path / "s"), "--active", "x:all"])
        assert code == 1

    def test_missing_manifest(self, tmp_path, config_path):
        code = main(["--config", config_path, "fit", "--manifest", str(tmp_path / "absent.json")])
        assert code == 1

    def test_prune_divergence_writes_checkpoint(self, song, tmp_path, config_path):
        """Un mix contenant des NaN fait diverger l'entrainement : checkpoint ecrit, code 1."""
        mix, rate = sf.read(str(song / "mix.wav"), always_2d=True)
        mix[:, :] = np.nan
        sf.write(str(song / "mix.wav"), mix, rate, subtype="FLOAT")
        out = tmp_path / "prune"
        code = main(["--config", config_path, "prune", "--manifest", str(song / "manifest.json"), "--out-dir", str(out)])
        assert code == 1
        assert "checkpoint.json" in os.listdir(out)
        assert GRAPH_FILE not in os.listdir(out)
        graph, store = read_document(str(out / "checkpoint.json"))
        assert len(graph.processors()) == 7 * (2 + 2)
        store.check_covers(graph)
