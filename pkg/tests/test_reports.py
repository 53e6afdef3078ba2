# tests/test_reports.py
import json
import os
import re
import sys

import pandas as pd
import pytest

# Ajouter le répertoire parent au path
sys.path.insert(0, os.path.dirname(os.path.dirname(__file__)))

from src.core.graph import apply_prune
from src.core.models import LossBreakdown, NodeType, PruneMask
from src.data.dot import export_dot
from src.data.reports import (
    IMPORTANCE_FILE,
    REPORT_FILE,
    TIMINGS_FILE,
    TRACE_FILE,
    TRIALS_FILE,
    RunDirectory,
    RunReport,
    emit_report,
    list_runs,
    read_jsonl,
    write_jsonl,
)


@pytest.fixture
def run(console, tmp_path):
    """Dossier d'execution d'un prune factice."""
    pruned = apply_prune(console, PruneMask.removing(range(1, 8)))
    trace = [
        {"step": 0, "phase": "console", "L_a": 2.0, "L_g": 0.1, "L_p": 0.0, "total": 2.1},
        {"step": 0, "phase": "prune", "L_a": 1.5, "L_g": 0.1, "L_p": 3.0, "total": 1.6},
    ]
    trials = [{"round": 1, "sampler": "dry_wet", "candidates": [3], "L_a": 1.4, "threshold": 1.5, "accepted": True}]
    progress = [{"round": 1, "sampler": "dry_wet", "processor_count": 14, "pruning_ratio": 1 / 3,
                 "mean_drywet_weight": 0.5, "threshold": 1.4, "trials": 1}]
    report = emit_report(
        str(tmp_path / "run1"), "prune", {"seed": 0}, console, pruned,
        LossBreakdown(audio=1.5, total=1.5), LossBreakdown(audio=1.4, total=1.4),
        trace, trials=trials, progress=progress, threshold=1.4, timings={"pruning": 1.25},
    )
    return tmp_path, report


class TestEmitReport:
    def test_files(self, run):
        tmp_path, _ = run
        assert sorted(os.listdir(tmp_path / "run1")) == sorted([REPORT_FILE, TRACE_FILE, TRIALS_FILE, TIMINGS_FILE])

    def test_report_content(self, run):
        tmp_path, report = run
        data = json.loads((tmp_path / "run1" / REPORT_FILE).read_text())
        assert "timings" not in data
        assert data["command"] == "prune"
        assert data["metrics"]["total_ratio"] == pytest.approx(7 / 21)
        assert data["final_loss"]["L_a"] == 1.4
        assert data["trial_log_path"] == TRIALS_FILE

    def test_timings_separate(self, run):
        tmp_path, _ = run
        assert json.loads((tmp_path / "run1" / TIMINGS_FILE).read_text()) == {"pruning": 1.25}

    def test_report_stable_without_timings(self, run):
        """Deux rapports aux durees differentes ont le meme report.json."""
        _, report = run
        other = RunReport(**{**report.__dict__, "timings": {"pruning": 99.0}})
        assert other.to_json() == report.to_json()

    def test_fit_without_trials(self, console, tmp_path):
        report = emit_report(
            str(tmp_path / "fit"), "fit", {}, console, console,
            LossBreakdown(audio=1.0), LossBreakdown(audio=1.0), [],
        )
        assert report.trial_log_path is None
        assert not os.path.exists(tmp_path / "fit" / TRIALS_FILE)
        assert report.metrics["total_ratio"] == 0


class TestJsonl:
    def test_round_trip(self, tmp_path):
        records = [{"a": 1}, {"b": [1, 2]}]
        path = str(tmp_path / "x.jsonl")
        write_jsonl(path, records)
        assert read_jsonl(path) == records

    def test_empty(self, tmp_path):
        path = str(tmp_path / "x.jsonl")
        write_jsonl(path, [])
        assert read_jsonl(path) == []


class TestRunDirectory:
    def test_reads_artifacts(self, run):
        tmp_path, report = run
        directory = RunDirectory(str(tmp_path / "run1"))
        loaded = directory.report()
        assert loaded.timings == {"pruning": 1.25}
        assert loaded.metrics == report.metrics
        assert list(directory.loss_trace()["phase"]) == ["console", "prune"]
        assert directory.trials()["accepted"].tolist() == [True]
        assert directory.progress()["processor_count"].tolist() == [14]
        assert directory.importance() is None

    def test_importance_csv(self, run):
        tmp_path, _ = run
        df = pd.DataFrame({"node_id": [1], "node_type": ["e"], "weight": [0.5], "delta": [0.01]})
        df.to_csv(tmp_path / "run1" / IMPORTANCE_FILE, index=False)
        assert RunDirectory(str(tmp_path / "run1")).importance().equals(df)

    def test_missing_directory(self, tmp_path):
        directory = RunDirectory(str(tmp_path / "absent"))
        assert directory.report() is None
        assert directory.loss_trace().empty
        assert directory.trials().empty
        assert directory.progress().empty

    def test_list_runs(self, run):
        tmp_path, _ = run
        (tmp_path / "not_a_run").mkdir()
        assert list_runs(str(tmp_path)) == ["run1"]
        assert list_runs(str(tmp_path / "absent")) == []


class TestExportDot:
    def test_labels_and_edges(self, console):
        source = export_dot(console)
        assert source.startswith("digraph mixgraph")
        assert source.count("label=g") == len(console.nodes_of_type(NodeType.GAIN_PAN))
        for src, dst in console.edges:
            assert f"{src} -> {dst}" in source

    def test_pruned_graph(self, console):
        pruned = apply_prune(console, PruneMask.removing(range(1, 8)))
        source = export_dot(pruned)
        assert "\t1 " not in source
        assert "0 -> 16" in source

    def test_weights_tooltip(self, console, store):
        source = export_dot(console, weights=store.weights())
        assert "tooltip=\"w=0.500\"" in source

    def test_round_trip_edge_set(self, console):
        """Aretes et types relus depuis le texte DOT."""
        pruned = apply_prune(console, PruneMask.removing([n.id for n in console.processors()][::2]))
        source = export_dot(pruned)
        edges = {(int(a), int(b)) for a, b in re.findall(r"^\s*(\d+) -> (\d+)", source, flags=re.M)}
        labels = {int(i): tag for i, tag in re.findall(r"^\s*(\d+) \[label=(\w)", source, flags=re.M)}
        assert edges == set(pruned.edges)
        assert labels == {n.id: n.node_type.value for n in pruned.nodes}
        assert len(edges) == len(pruned.edges)
