"""Génération de sessions synthétiques avec graphe de mixage connu."""

import json
import logging
import math
import os
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import torch
from scipy.signal import butter, sosfilt

from src.core.executor import execute
from src.core.graph import apply_prune, build_mixing_console
from src.core.models import FULL_CHAIN, Graph, NodeType, PruneMask, SongSession, SubgroupSpec
from src.core.params import EQ_BINS, PARAM_SHAPES, ParamStore
from src.data.documents import atomic_write_text, write_document
from src.data.loaders import write_wav
from src.data.transformers import AudioTransformer

logger = logging.getLogger(__name__)

# Logit dry/wet des processeurs actifs (w = 1 en float32 comme en float64)
ACTIVE_LOGIT = 40.0
MAX_HARMONICS = 40

DEFAULT_RANGES: Dict[str, Tuple[float, float]] = {
    "log_gain": (-1.0, 0.5),
    "log_side_gain": (-1.0, 1.0),
    "eq_depth": (0.1, 0.6),
    "comp_threshold_db": (-40.0, -15.0),
    "comp_ratio": (2.0, 6.0),
    "gate_threshold_db": (-60.0, -40.0),
    "gate_ratio": (1.5, 4.0),
    "time_constant_s": (0.005, 0.05),
    "reverb_level": (-5.0, -3.0),
    "reverb_decay": (0.02, 0.2),
    "delay_level": (-5.0, -2.0),
}


@dataclass(frozen=True)
class ActiveProcessor:
    """Position d'un processeur actif : type, chaîne de piste ou de bus, index (None = tous)."""
    node_type: NodeType
    scope: str = "track"
    index: Optional[int] = None


def parse_active(text: str) -> List[ActiveProcessor]:
    """
    Parse une liste "g:all,e:0,r:bus0,s:buses".

    Cibles : "all" (toutes les pistes), "<k>" (piste k), "bus<j>", "buses".
    """
    active = []
    for token in filter(None, (t.strip() for t in text.split(","))):
        letter, _, target = token.partition(":")
        node_type = NodeType.from_tag(letter)
        if not node_type.is_processor:
            raise ValueError(f"{letter!r} n'est pas un processeur")
        target = target or "all"
        if target == "all":
            active.append(ActiveProcessor(node_type, "track", None))
        elif target == "buses":
            active.append(ActiveProcessor(node_type, "bus", None))
        elif target.startswith("bus"):
            active.append(ActiveProcessor(node_type, "bus", int(target[3:])))
        else:
            active.append(ActiveProcessor(node_type, "track", int(target)))
    return active


@dataclass
class SynthSpec:
    """Recette d'une session synthétique."""
    track_count: int = 4
    subgroups: Optional[SubgroupSpec] = None
    active: List[ActiveProcessor] = field(default_factory=list)
    seconds: float = 30.0
    sample_rate: int = 30000
    base_frequency: float = 110.0
    noise_mix: float = 0.3
    level_db: float = -20.0
    param_ranges: Dict[str, Tuple[float, float]] = field(default_factory=lambda: dict(DEFAULT_RANGES))
    seed: int = 0

    def __post_init__(self):
        if self.track_count < 1:
            raise ValueError("track_count doit être >= 1")
        if self.subgroups is None:
            self.subgroups = SubgroupSpec.single(self.track_count)
        self.subgroups.validate_for(self.track_count)
        for item in self.active:
            limit = self.track_count if item.scope == "track" else len(self.subgroups.groups)
            if item.index is not None and not 0 <= item.index < limit:
                raise ValueError(f"Position hors console: {item}")


@dataclass
class SynthResult:
    """Session générée et graphe de vérité terrain."""
    session: SongSession
    graph: Graph
    store: ParamStore
    console: Graph


def _track_signal(spec: SynthSpec, k: int, rng: np.random.Generator) -> np.ndarray:
    """Dent de scie à bande limitée + bruit filtré, modulés en amplitude."""
    fs = spec.sample_rate
    n = int(round(spec.seconds * fs))
    t = np.arange(n) / fs
    f0 = spec.base_frequency * 2 ** (k * 7 / 12)

    saw = np.zeros(n)
    for h in range(1, MAX_HARMONICS + 1):
        if h * f0 >= 0.45 * fs:
            break
        saw += (-1) ** (h + 1) * np.sin(2 * np.pi * h * f0 * t) / h
    saw *= 2 / np.pi

    low = min(4 * f0, 0.3 * fs)
    high = min(16 * f0, 0.45 * fs)
    sos = butter(2, [low, high], btype="bandpass", fs=fs, output="sos")
    noise = sosfilt(sos, rng.standard_normal(n))
    noise /= np.sqrt(np.mean(noise ** 2)) + 1e-12

    rate = rng.uniform(0.2, 1.0)
    phase = rng.uniform(0, 2 * np.pi)
    envelope = 0.6 + 0.4 * np.sin(2 * np.pi * rate * t + phase)
    signal = envelope * ((1 - spec.noise_mix) * saw + spec.noise_mix * noise)
    return AudioTransformer.normalize_rms(signal, spec.level_db)


def _logit(p: float) -> float:
    return math.log(p / (1 - p))


def _sample_params(node_type: NodeType, spec: SynthSpec, rng: np.random.Generator) -> Dict[str, np.ndarray]:
    """Paramètres non contraints tirés dans les plages de la recette."""
    r = spec.param_ranges
    fs = spec.sample_rate
    shapes = PARAM_SHAPES[node_type]

    def uniform(key, size=None):
        lo, hi = r[key]
        return rng.uniform(lo, hi, size)

    if node_type == NodeType.GAIN_PAN:
        return {"log_gain": uniform("log_gain", 2)}
    if node_type == NodeType.STEREO_IMAGER:
        return {"log_side_gain": uniform("log_side_gain", 1)}
    if node_type == NodeType.EQUALIZER:
        # courbe lisse : somme de quelques cosinus
        f = np.linspace(0, 1, EQ_BINS)
        curve = np.zeros(EQ_BINS)
        for j in range(1, 5):
            curve += uniform("eq_depth") * rng.choice([-1, 1]) * np.cos(np.pi * j * f + rng.uniform(0, 2 * np.pi))
        return {"log_magnitude": curve}
    if node_type in (NodeType.COMPRESSOR, NodeType.NOISEGATE):
        prefix = "comp" if node_type == NodeType.COMPRESSOR else "gate"
        threshold = uniform(f"{prefix}_threshold_db")
        ratio = uniform(f"{prefix}_ratio")
        alpha = math.exp(-1.0 / (uniform("time_constant_s") * fs))
        return {
            "raw_threshold": np.array([_logit(-threshold / 60.0)]),
            "raw_ratio": np.array([_logit((ratio - 1.0) / 19.0)]),
            "raw_alpha": np.array([_logit(alpha)]),
        }
    if node_type == NodeType.REVERB:
        shape = shapes["init_log_magnitude"]
        level = np.repeat(uniform("reverb_level", (2, 1)), shape[1], axis=1)
        decay = np.repeat(uniform("reverb_decay", (2, 1)), shape[1], axis=1)
        return {"init_log_magnitude": level, "raw_decay": np.log(np.expm1(decay))}
    if node_type == NodeType.MULTITAP_DELAY:
        return {
            "raw_delay": rng.uniform(-2.0, 2.0, shapes["raw_delay"]),
            "log_magnitude": uniform("delay_level", shapes["log_magnitude"]),
        }
    raise ValueError(f"Type non supporté: {node_type}")


def _chain_nodes(graph: Graph, head: int) -> Dict[NodeType, int]:
    """Processeurs de la chaîne qui suit `head`, par type."""
    found = {}
    current = graph.successors(head)
    while len(current) == 1 and graph.get(current[0]).node_type.is_processor:
        node = graph.get(current[0])
        found[node.node_type] = node.id
        current = graph.successors(node.id)
    return found


def active_node_ids(console: Graph, spec: SynthSpec) -> List[int]:
    """Identifiants des processeurs actifs dans la console."""
    track_heads = [n.id for n in console.input_nodes]
    bus_heads = sorted(n.id for n in console.nodes_of_type(NodeType.MIX))
    ids = set()
    for item in spec.active:
        heads = track_heads if item.scope == "track" else bus_heads
        selected = heads if item.index is None else [heads[item.index]]
        for head in selected:
            ids.add(_chain_nodes(console, head)[item.node_type])
    return sorted(ids)


def synth_generate(spec: SynthSpec, rng: Optional[np.random.Generator] = None) -> SynthResult:
    """
    Génère une session synthétique et son graphe générateur.

    Args:
        spec: Recette
        rng: Générateur (défaut: seed de la recette)

    Returns:
        SynthResult (session, graphe de vérité terrain, paramètres, console)
    """
    rng = rng if rng is not None else np.random.default_rng(spec.seed)
    tracks = np.stack([AudioTransformer.to_stereo(_track_signal(spec, k, rng)) for k in range(spec.track_count)])

    console = build_mixing_console(spec.track_count, spec.subgroups, FULL_CHAIN)
    active = set(active_node_ids(console, spec))
    inactive = [n.id for n in console.processors() if n.id not in active]
    graph = apply_prune(console, PruneMask.removing(inactive))

    store = ParamStore.for_graph(console, spec.sample_rate, seed=spec.seed, dtype=torch.float64)
    store = store.restricted_to(graph)
    for node in graph.processors():
        store.set_node_params(node.id, _sample_params(node.node_type, spec, rng))
        store.set_logit(node.id, ACTIVE_LOGIT)

    with torch.no_grad():
        mix = execute(graph, store, torch.tensor(tracks, dtype=torch.float64)).mix.numpy()

    session = SongSession(
        tracks=tracks,
        subgroups=spec.subgroups,
        mix=mix,
        sample_rate=spec.sample_rate,
        names=[f"synth_{k}" for k in range(spec.track_count)],
    )
    logger.info(
        "Session synthétique: %d pistes, %d processeurs actifs", spec.track_count, len(graph.processors())
    )
    return SynthResult(session, graph, store, console)


def write_session(result: SynthResult, out_dir: str) -> str:
    """
    Écrit pistes, mix, manifest et graphe de vérité terrain.

    Returns:
        Chemin du manifest
    """
    os.makedirs(out_dir, exist_ok=True)
    session = result.session
    labels = session.subgroups.labels(session.track_count)
    tracks = []
    for k, name in enumerate(session.names):
        filename = f"{name}.wav"
        write_wav(os.path.join(out_dir, filename), session.tracks[k], session.sample_rate)
        tracks.append({"path": filename, "name": name, "subgroup": labels[k]})
    write_wav(os.path.join(out_dir, "mix.wav"), session.mix, session.sample_rate)

    manifest = {"tracks": tracks, "mix": "mix.wav", "sample_rate": session.sample_rate}
    manifest_path = os.path.join(out_dir, "manifest.json")
    atomic_write_text(manifest_path, json.dumps(manifest, indent=2))
    write_document(os.path.join(out_dir, "truth.json"), result.graph, result.store)
    return manifest_path
