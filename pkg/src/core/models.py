"""Modèles de données : graphe de mixage, masques, métriques et configurations."""

from collections import Counter
from dataclasses import dataclass, field, fields, asdict
from enum import Enum
from functools import cached_property
from typing import Any, Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from .errors import InvalidSubgroupError, UnknownNodeError


class NodeType(str, Enum):
    """Types de noeuds du graphe (tags d'une lettre)."""
    INPUT = "i"
    OUTPUT = "o"
    MIX = "m"
    EQUALIZER = "e"
    COMPRESSOR = "c"
    NOISEGATE = "n"
    STEREO_IMAGER = "s"
    GAIN_PAN = "g"
    MULTITAP_DELAY = "d"
    REVERB = "r"

    @property
    def is_processor(self) -> bool:
        """Vrai pour les 7 types de processeurs (élaguables)."""
        return self not in AUXILIARY_TYPES

    @classmethod
    def from_tag(cls, tag: str) -> "NodeType":
        """Retrouve un type à partir de sa lettre."""
        try:
            return cls(tag)
        except ValueError:
            raise ValueError(f"Type de noeud inconnu: {tag!r}") from None


AUXILIARY_TYPES = frozenset({NodeType.INPUT, NodeType.OUTPUT, NodeType.MIX})

# Ordre fixe de la chaîne série
FULL_CHAIN: Tuple[NodeType, ...] = (
    NodeType.EQUALIZER,
    NodeType.COMPRESSOR,
    NodeType.NOISEGATE,
    NodeType.STEREO_IMAGER,
    NodeType.GAIN_PAN,
    NodeType.MULTITAP_DELAY,
    NodeType.REVERB,
)
PROCESSOR_TYPES = FULL_CHAIN

# Départage des étages d'ordonnancement
TYPE_ORDER: Tuple[NodeType, ...] = (NodeType.INPUT,) + FULL_CHAIN + (NodeType.MIX, NodeType.OUTPUT)

# Processeurs soumis à la régularisation de gain
GAIN_STAGE_TYPES = frozenset({NodeType.EQUALIZER, NodeType.REVERB, NodeType.MULTITAP_DELAY})


def parse_chain(letters: str) -> Tuple[NodeType, ...]:
    """
    Convertit une chaîne de lettres (ex: "esg") en chaîne de processeurs.

    L'ordre canonique est imposé quel que soit l'ordre des lettres.
    """
    requested = set()
    for letter in letters:
        node_type = NodeType.from_tag(letter)
        if not node_type.is_processor:
            raise ValueError(f"{letter!r} n'est pas un processeur")
        requested.add(node_type)
    return tuple(t for t in FULL_CHAIN if t in requested)


@dataclass(frozen=True)
class Node:
    """Noeud du graphe."""
    id: int
    node_type: NodeType
    source_index: Optional[int] = None


@dataclass(frozen=True)
class Graph:
    """Graphe orienté acyclique de traitement audio."""
    nodes: Tuple[Node, ...] = ()
    edges: Tuple[Tuple[int, int], ...] = ()

    @cached_property
    def _by_id(self) -> Dict[int, Node]:
        return {node.id: node for node in self.nodes}

    @cached_property
    def _predecessors(self) -> Dict[int, List[int]]:
        preds: Dict[int, List[int]] = {node.id: [] for node in self.nodes}
        for src, dst in self.edges:
            preds.setdefault(dst, []).append(src)
        return {k: sorted(v) for k, v in preds.items()}

    @cached_property
    def _successors(self) -> Dict[int, List[int]]:
        succs: Dict[int, List[int]] = {node.id: [] for node in self.nodes}
        for src, dst in self.edges:
            succs.setdefault(src, []).append(dst)
        return {k: sorted(v) for k, v in succs.items()}

    @property
    def node_ids(self) -> List[int]:
        return [node.id for node in self.nodes]

    def get(self, node_id: int) -> Node:
        """Retourne le noeud d'identifiant donné."""
        try:
            return self._by_id[node_id]
        except KeyError:
            raise UnknownNodeError(f"Noeud inconnu: {node_id}") from None

    def __contains__(self, node_id: object) -> bool:
        return node_id in self._by_id

    def predecessors(self, node_id: int) -> List[int]:
        """Producteurs d'un noeud, par identifiant croissant."""
        return self._predecessors.get(node_id, [])

    def successors(self, node_id: int) -> List[int]:
        return self._successors.get(node_id, [])

    def nodes_of_type(self, node_type: NodeType) -> List[Node]:
        return [node for node in self.nodes if node.node_type == node_type]

    def processors(self) -> List[Node]:
        """Noeuds processeurs, par identifiant croissant."""
        return sorted((n for n in self.nodes if n.node_type.is_processor), key=lambda n: n.id)

    def processor_counts(self) -> Dict[NodeType, int]:
        counts = Counter(node.node_type for node in self.processors())
        return {t: counts.get(t, 0) for t in PROCESSOR_TYPES}

    @property
    def input_nodes(self) -> List[Node]:
        """Entrées triées par index de piste."""
        return sorted(self.nodes_of_type(NodeType.INPUT), key=lambda n: n.source_index or 0)

    @property
    def output_node(self) -> Node:
        outputs = self.nodes_of_type(NodeType.OUTPUT)
        if len(outputs) != 1:
            raise UnknownNodeError(f"Le graphe a {len(outputs)} noeuds de sortie")
        return outputs[0]


@dataclass(frozen=True)
class SubgroupSpec:
    """Partition des pistes en sous-groupes."""
    groups: Tuple[Tuple[int, ...], ...]

    def __post_init__(self):
        object.__setattr__(self, "groups", tuple(tuple(int(k) for k in g) for g in self.groups))

    @classmethod
    def from_labels(cls, labels: Sequence[Any]) -> "SubgroupSpec":
        """
        Construit la partition à partir d'un label par piste.

        Les groupes sont ordonnés par première apparition du label.
        """
        order: List[Any] = []
        members: Dict[Any, List[int]] = {}
        for k, label in enumerate(labels):
            if label not in members:
                order.append(label)
                members[label] = []
            members[label].append(k)
        return cls(tuple(tuple(members[label]) for label in order))

    @classmethod
    def single(cls, track_count: int) -> "SubgroupSpec":
        return cls((tuple(range(track_count)),))

    def validate_for(self, track_count: int) -> None:
        """Vérifie que les groupes partitionnent exactement les pistes."""
        if track_count < 1:
            raise InvalidSubgroupError(f"Nombre de pistes invalide: {track_count}")
        if not self.groups:
            raise InvalidSubgroupError("Aucun sous-groupe")
        seen: set = set()
        for j, group in enumerate(self.groups):
            if not group:
                raise InvalidSubgroupError(f"Sous-groupe {j} vide")
            for k in group:
                if k in seen:
                    raise InvalidSubgroupError(f"Piste {k} dans plusieurs sous-groupes")
                if not 0 <= k < track_count:
                    raise InvalidSubgroupError(f"Piste {k} hors de [0, {track_count})")
                seen.add(k)
        if len(seen) != track_count:
            missing = sorted(set(range(track_count)) - seen)
            raise InvalidSubgroupError(f"Pistes sans sous-groupe: {missing}")

    def labels(self, track_count: int) -> List[int]:
        """Index de groupe de chaque piste."""
        labels = [0] * track_count
        for j, group in enumerate(self.groups):
            for k in group:
                labels[k] = j
        return labels


@dataclass(frozen=True)
class PruneMask:
    """Masque binaire sur les noeuds processeurs (absent = conservé)."""
    keep: Mapping[int, int] = field(default_factory=dict)

    @classmethod
    def ones(cls, graph: Graph) -> "PruneMask":
        return cls({node.id: 1 for node in graph.processors()})

    @classmethod
    def removing(cls, node_ids: Iterable[int]) -> "PruneMask":
        return cls({int(i): 0 for i in node_ids})

    def __mul__(self, other: "PruneMask") -> "PruneMask":
        keys = set(self.keep) | set(other.keep)
        return PruneMask({k: self.value(k) * other.value(k) for k in sorted(keys)})

    def value(self, node_id: int) -> int:
        return int(self.keep.get(node_id, 1))

    def pruned_ids(self) -> List[int]:
        return sorted(k for k, v in self.keep.items() if v == 0)


@dataclass
class GraphMetrics:
    """Taux d'élagage d'un graphe élagué par rapport à sa console."""
    total_ratio: float = 0.0
    per_type_ratio: Dict[str, float] = field(default_factory=dict)
    node_count: int = 0
    processor_count: int = 0
    console_processor_count: int = 0

    @property
    def pruned_count(self) -> int:
        return self.console_processor_count - self.processor_count

    def as_dict(self) -> Dict[str, Any]:
        data = asdict(self)
        data["pruned_count"] = self.pruned_count
        return data


@dataclass
class Violation:
    """Violation d'un invariant de graphe."""
    kind: str
    message: str
    node_ids: Tuple[int, ...] = ()
    edges: Tuple[Tuple[int, int], ...] = ()


@dataclass
class ValidationReport:
    """Résultat de validate()."""
    violations: List[Violation] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def kinds(self) -> List[str]:
        return [v.kind for v in self.violations]

    def summary(self) -> str:
        if self.ok:
            return "ok"
        return "; ".join(f"{v.kind}: {v.message}" for v in self.violations)


@dataclass
class SongSession:
    """Pistes sèches, sous-groupes et mix cible d'une chanson."""
    tracks: np.ndarray  # (K, 2, N)
    subgroups: SubgroupSpec
    mix: np.ndarray  # (2, N)
    sample_rate: int = 30000
    names: List[str] = field(default_factory=list)

    def __post_init__(self):
        if self.tracks.ndim != 3 or self.tracks.shape[1] != 2:
            raise ValueError(f"Pistes de forme invalide: {self.tracks.shape}")
        if self.mix.shape != self.tracks.shape[1:]:
            raise ValueError(f"Mix {self.mix.shape} incompatible avec pistes {self.tracks.shape}")
        self.subgroups.validate_for(self.track_count)
        if not self.names:
            self.names = [f"track_{k}" for k in range(self.track_count)]

    @property
    def track_count(self) -> int:
        return int(self.tracks.shape[0])

    @property
    def length(self) -> int:
        return int(self.tracks.shape[-1])

    @property
    def duration(self) -> float:
        return self.length / self.sample_rate


@dataclass
class StftConfig:
    """Configuration du STFT multi-résolution de la loss."""
    fft_sizes: Tuple[int, ...] = (512, 1024, 4096)
    hop_divisor: int = 4
    mel_bins: int = 96
    a_weighting: bool = True
    a_weighting_taps: int = 1023
    eps: float = 1e-8

    def __post_init__(self):
        self.fft_sizes = tuple(int(n) for n in self.fft_sizes)


@dataclass
class LossWeights:
    """Pondérations des termes de la loss."""
    left_right: float = 0.5
    mid: float = 0.25
    side: float = 0.25
    gain_staging: float = 1e-3
    sparsity_max: float = 1e-4
    sparsity_ramp_steps: int = 4000


@dataclass
class LossBreakdown:
    """Détail des termes de loss (tenseurs pendant l'entraînement, floats sinon)."""
    audio: Any = 0.0
    left_right: Any = 0.0
    mid: Any = 0.0
    side: Any = 0.0
    gain_staging: Any = 0.0
    sparsity: Any = 0.0
    total: Any = 0.0

    def item(self) -> "LossBreakdown":
        """Copie avec des floats Python."""
        return LossBreakdown(**{f.name: float(getattr(self, f.name)) for f in fields(self)})

    def as_dict(self) -> Dict[str, float]:
        values = self.item()
        return {
            "L_a": values.audio,
            "L_lr": values.left_right,
            "L_m": values.mid,
            "L_s": values.side,
            "L_g": values.gain_staging,
            "L_p": values.sparsity,
            "total": values.total,
        }


@dataclass
class TrainConfig:
    """Configuration de l'entraînement."""
    learning_rate: float = 0.01
    console_steps: int = 12000
    console_steps_prune: int = 6000
    finetune_steps: int = 500
    segment_seconds: float = 3.8
    loss_tail_seconds: float = 2.8
    warmup_seconds: float = 1.0
    batch: int = 1
    betas: Tuple[float, float] = (0.9, 0.999)
    adam_eps: float = 1e-8
    weight_decay: float = 0.01
    grad_clip: float = 10.0
    log_every: int = 100
    seed: int = 0

    def __post_init__(self):
        self.betas = tuple(self.betas)
        if abs(self.warmup_seconds + self.loss_tail_seconds - self.segment_seconds) > 1e-9:
            raise ValueError("warmup_seconds + loss_tail_seconds doit valoir segment_seconds")
        if min(self.learning_rate, self.segment_seconds, self.loss_tail_seconds) <= 0:
            raise ValueError("Les durées et le learning rate doivent être positifs")


class Sampler(str, Enum):
    """Stratégies de tirage des candidats à l'élagage."""
    BRUTE_FORCE = "brute_force"
    DRY_WET = "dry_wet"
    HYBRID = "hybrid"


@dataclass
class PruneConfig:
    """Configuration de la recherche par élagage."""
    tolerance: float = 0.01
    sampler: Sampler = Sampler.HYBRID
    rounds: int = 12
    r_init: float = 0.1
    hybrid_period: int = 4
    seed: int = 0

    def __post_init__(self):
        self.sampler = Sampler(self.sampler)
        if self.tolerance < 0:
            raise ValueError("La tolérance doit être positive")
        if not 0 < self.r_init <= 1:
            raise ValueError("r_init doit être dans (0, 1]")
        if self.hybrid_period < 1:
            raise ValueError("hybrid_period doit être >= 1")


@dataclass
class ImportanceRecord:
    """Importance mesurée d'un processeur."""
    node_id: int
    node_type: str
    weight: float
    delta: float
