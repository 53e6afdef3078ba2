"""Data module - Sessions audio, documents de graphe, rapports et exports."""

from src.data.documents import deserialize, read_document, serialize, write_document
from src.data.dot import export_dot
from src.data.loaders import AudioLoader, SessionLoader, SessionManifest, WavLoader, load_session
from src.data.reports import RunDirectory, RunReport, emit_report
from src.data.synth import SynthSpec, synth_generate
from src.data.transformers import AudioTransformer

__all__ = [
    "AudioLoader",
    "AudioTransformer",
    "RunDirectory",
    "RunReport",
    "SessionLoader",
    "SessionManifest",
    "SynthSpec",
    "WavLoader",
    "deserialize",
    "emit_report",
    "export_dot",
    "load_session",
    "read_document",
    "serialize",
    "synth_generate",
    "write_document",
]
