"""Rapports d'exécution et journaux JSON-lines."""

import json
import logging
import os
from dataclasses import asdict, dataclass, field
from typing import Any, Dict, Iterable, List, Optional

import pandas as pd

from src.core.graph import metrics
from src.core.models import Graph, LossBreakdown
from src.data.documents import atomic_write_text

logger = logging.getLogger(__name__)

REPORT_FILE = "report.json"
TRACE_FILE = "loss_trace.jsonl"
TRIALS_FILE = "trials.jsonl"
TIMINGS_FILE = "timings.json"
GRAPH_FILE = "graph.json"
IMPORTANCE_FILE = "importance.csv"


@dataclass
class RunReport:
    """Résumé lisible par machine d'une exécution fit ou prune."""
    command: str
    config: Dict[str, Any]
    console_loss: Dict[str, float]
    final_loss: Dict[str, float]
    metrics: Dict[str, Any]
    threshold: Optional[float] = None
    progress: List[Dict[str, Any]] = field(default_factory=list)
    loss_trace_path: str = TRACE_FILE
    trial_log_path: Optional[str] = None
    timings: Dict[str, float] = field(default_factory=dict)

    def to_json(self) -> str:
        """Document JSON ; les durées sont écrites à part (timings.json)."""
        data = asdict(self)
        data.pop("timings")
        return json.dumps(data, indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str, timings: Optional[Dict[str, float]] = None) -> "RunReport":
        data = json.loads(text)
        return cls(timings=timings or {}, **data)


def write_jsonl(path: str, records: Iterable[Dict[str, Any]]) -> None:
    """Écrit un enregistrement JSON par ligne (écriture atomique)."""
    lines = [json.dumps(record, sort_keys=True) for record in records]
    atomic_write_text(path, "\n".join(lines) + ("\n" if lines else ""))


def read_jsonl(path: str) -> List[Dict[str, Any]]:
    with open(path, "r", encoding="utf-8") as f:
        return [json.loads(line) for line in f if line.strip()]


def emit_report(
    run_dir: str,
    command: str,
    config: Dict[str, Any],
    console: Graph,
    graph: Graph,
    console_loss: LossBreakdown,
    final_loss: LossBreakdown,
    loss_trace: List[Dict[str, Any]],
    trials: Optional[List[Dict[str, Any]]] = None,
    progress: Optional[List[Dict[str, Any]]] = None,
    threshold: Optional[float] = None,
    timings: Optional[Dict[str, float]] = None,
) -> RunReport:
    """
    Écrit report.json, loss_trace.jsonl, trials.jsonl et timings.json.

    Returns:
        Le RunReport écrit
    """
    os.makedirs(run_dir, exist_ok=True)
    report = RunReport(
        command=command,
        config=config,
        console_loss=console_loss.as_dict(),
        final_loss=final_loss.as_dict(),
        metrics=metrics(console, graph).as_dict(),
        threshold=threshold,
        progress=list(progress or []),
        loss_trace_path=TRACE_FILE,
        trial_log_path=TRIALS_FILE if trials is not None else None,
        timings=dict(timings or {}),
    )
    write_jsonl(os.path.join(run_dir, TRACE_FILE), loss_trace)
    if trials is not None:
        write_jsonl(os.path.join(run_dir, TRIALS_FILE), trials)
    atomic_write_text(os.path.join(run_dir, TIMINGS_FILE), json.dumps(report.timings, indent=2))
    atomic_write_text(os.path.join(run_dir, REPORT_FILE), report.to_json())
    logger.info("Rapport écrit dans %s (ratio d'élagage %.3f)", run_dir, report.metrics["total_ratio"])
    return report


class RunDirectory:
    """Lecture des artefacts d'un dossier d'exécution (pour le dashboard)."""

    def __init__(self, path: str):
        self.path = path

    def _file(self, name: str) -> str:
        return os.path.join(self.path, name)

    def exists(self, name: str) -> bool:
        return os.path.exists(self._file(name))

    def report(self) -> Optional[RunReport]:
        if not self.exists(REPORT_FILE):
            return None
        timings = {}
        if self.exists(TIMINGS_FILE):
            with open(self._file(TIMINGS_FILE), "r", encoding="utf-8") as f:
                timings = json.load(f)
        with open(self._file(REPORT_FILE), "r", encoding="utf-8") as f:
            return RunReport.from_json(f.read(), timings)

    def loss_trace(self) -> pd.DataFrame:
        if not self.exists(TRACE_FILE):
            return pd.DataFrame(columns=["step", "phase", "L_a", "L_g", "L_p", "total"])
        return pd.DataFrame(read_jsonl(self._file(TRACE_FILE)))

    def trials(self) -> pd.DataFrame:
        if not self.exists(TRIALS_FILE):
            return pd.DataFrame(columns=["round", "sampler", "candidates", "L_a", "threshold", "accepted"])
        return pd.DataFrame(read_jsonl(self._file(TRIALS_FILE)))

    def progress(self) -> pd.DataFrame:
        report = self.report()
        return pd.DataFrame(report.progress if report else [])

    def importance(self) -> Optional[pd.DataFrame]:
        if not self.exists(IMPORTANCE_FILE):
            return None
        return pd.read_csv(self._file(IMPORTANCE_FILE))


def list_runs(runs_dir: str) -> List[str]:
    """Sous-dossiers contenant un report.json, triés par nom."""
    if not os.path.isdir(runs_dir):
        return []
    return sorted(
        name for name in os.listdir(runs_dir)
        if os.path.exists(os.path.join(runs_dir, name, REPORT_FILE))
    )
