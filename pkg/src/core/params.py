"""Stockage des paramètres des processeurs et poids dry/wet."""

import logging
import math
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

import numpy as np
import torch

from .errors import MissingParameterError, UnknownNodeError
from .models import PROCESSOR_TYPES, Graph, NodeType

logger = logging.getLogger(__name__)

EQ_BINS = 1024
REVERB_FFT = 384
REVERB_BINS = REVERB_FFT // 2 + 1
DELAY_TAPS = 20
DELAY_FIR_BINS = 20

# Formes des paramètres par noeud (sans la dimension de batch)
PARAM_SHAPES: Dict[NodeType, Dict[str, Tuple[int, ...]]] = {
    NodeType.EQUALIZER: {"log_magnitude": (EQ_BINS,)},
    NodeType.COMPRESSOR: {"raw_threshold": (1,), "raw_ratio": (1,), "raw_alpha": (1,)},
    NodeType.NOISEGATE: {"raw_threshold": (1,), "raw_ratio": (1,), "raw_alpha": (1,)},
    NodeType.STEREO_IMAGER: {"log_side_gain": (1,)},
    NodeType.GAIN_PAN: {"log_gain": (2,)},
    NodeType.MULTITAP_DELAY: {
        "raw_delay": (2, DELAY_TAPS),
        "log_magnitude": (2, DELAY_TAPS, DELAY_FIR_BINS),
    },
    NodeType.REVERB: {"init_log_magnitude": (2, REVERB_BINS), "raw_decay": (2, REVERB_BINS)},
}


def _logit(p: float) -> float:
    return math.log(p / (1 - p))


def init_params(node_type: NodeType, sample_rate: int) -> Dict[str, np.ndarray]:
    """
    Valeurs initiales proches de l'identité.

    Args:
        node_type: Type de processeur
        sample_rate: Fréquence d'échantillonnage (constante de temps des dynamiques)

    Returns:
        Paramètres non contraints (float64), sans dimension de batch
    """
    shapes = PARAM_SHAPES[node_type]
    if node_type in (NodeType.COMPRESSOR, NodeType.NOISEGATE):
        # seuil -20 dB, ratio 1.5, attaque/relâche 10 ms
        return {
            "raw_threshold": np.full(1, _logit(20.0 / 60.0)),
            "raw_ratio": np.full(1, _logit(0.5 / 19.0)),
            "raw_alpha": np.full(1, _logit(math.exp(-1.0 / (0.01 * sample_rate)))),
        }
    if node_type == NodeType.REVERB:
        return {
            "init_log_magnitude": np.full(shapes["init_log_magnitude"], -3.0),
            "raw_decay": np.full(shapes["raw_decay"], math.log(math.expm1(0.3))),
        }
    if node_type == NodeType.MULTITAP_DELAY:
        return {
            "raw_delay": np.zeros(shapes["raw_delay"]),
            "log_magnitude": np.full(shapes["log_magnitude"], -3.0),
        }
    return {name: np.zeros(shape) for name, shape in shapes.items()}


def derive_noise_seed(run_seed: int, node_id: int) -> int:
    """Graine de bruit de réverbération propre à un noeud."""
    return int(np.random.SeedSequence([int(run_seed), int(node_id)]).generate_state(1)[0])


class ParamStore:
    """
    Tenseurs de paramètres par type de processeur, indexés par noeud.

    Chaque type possède un tenseur feuille (n_t, *forme) par paramètre et un
    vecteur de logits dry/wet (n_t,) ; w = sigmoid(logit).
    """

    def __init__(
        self,
        sample_rate: int,
        node_index: Mapping[NodeType, Sequence[int]],
        params: Mapping[NodeType, Mapping[str, torch.Tensor]],
        logits: Mapping[NodeType, torch.Tensor],
        noise_seeds: Optional[Mapping[int, int]] = None,
    ):
        self.sample_rate = int(sample_rate)
        self.node_index: Dict[NodeType, List[int]] = {t: list(ids) for t, ids in node_index.items()}
        self.params: Dict[NodeType, Dict[str, torch.Tensor]] = {t: dict(p) for t, p in params.items()}
        self.logits: Dict[NodeType, torch.Tensor] = dict(logits)
        self.noise_seeds: Dict[int, int] = {int(k): int(v) for k, v in (noise_seeds or {}).items()}
        self._rows: Dict[int, Tuple[NodeType, int]] = {}
        for node_type, ids in self.node_index.items():
            for row, node_id in enumerate(ids):
                self._rows[node_id] = (node_type, row)

    @classmethod
    def for_graph(
        cls,
        graph: Graph,
        sample_rate: int,
        seed: int = 0,
        dtype: torch.dtype = torch.float32,
    ) -> "ParamStore":
        """Initialise les paramètres de tous les processeurs d'un graphe."""
        node_index: Dict[NodeType, List[int]] = {}
        for node in graph.processors():
            node_index.setdefault(node.node_type, []).append(node.id)

        params, logits = {}, {}
        for node_type, ids in node_index.items():
            init = init_params(node_type, sample_rate)
            params[node_type] = {
                name: torch.tensor(np.stack([value] * len(ids)), dtype=dtype).requires_grad_()
                for name, value in init.items()
            }
            logits[node_type] = torch.zeros(len(ids), dtype=dtype, requires_grad=True)

        seeds = {i: derive_noise_seed(seed, i) for i in node_index.get(NodeType.REVERB, [])}
        logger.debug("ParamStore initialisé pour %d processeurs", len(graph.processors()))
        return cls(sample_rate, node_index, params, logits, seeds)

    # Accès

    @property
    def node_ids(self) -> List[int]:
        return sorted(self._rows)

    @property
    def dtype(self) -> torch.dtype:
        for tensor in self.logits.values():
            return tensor.dtype
        return torch.get_default_dtype()

    def __contains__(self, node_id: object) -> bool:
        return node_id in self._rows

    def locate(self, node_id: int) -> Tuple[NodeType, int]:
        """Type et ligne d'un noeud."""
        try:
            return self._rows[node_id]
        except KeyError:
            raise MissingParameterError(f"Pas de paramètres pour le noeud {node_id}") from None

    def _row_index(self, node_type: NodeType, node_ids: Sequence[int]) -> torch.Tensor:
        rows = []
        for node_id in node_ids:
            found_type, row = self.locate(node_id)
            if found_type != node_type:
                raise MissingParameterError(f"Le noeud {node_id} n'est pas de type {node_type.value}")
            rows.append(row)
        return torch.tensor(rows, dtype=torch.long)

    def gather(self, node_type: NodeType, node_ids: Sequence[int]) -> Dict[str, torch.Tensor]:
        """Paramètres des noeuds donnés, empilés sur une dimension de batch."""
        index = self._row_index(node_type, node_ids)
        return {name: t.index_select(0, index) for name, t in self.params[node_type].items()}

    def gather_logits(self, node_type: NodeType, node_ids: Sequence[int]) -> torch.Tensor:
        return self.logits[node_type].index_select(0, self._row_index(node_type, node_ids))

    def node_params(self, node_id: int) -> Dict[str, torch.Tensor]:
        """Copie détachée des paramètres d'un noeud."""
        node_type, row = self.locate(node_id)
        return {name: t[row].detach().clone() for name, t in self.params[node_type].items()}

    def logit(self, node_id: int) -> float:
        node_type, row = self.locate(node_id)
        return float(self.logits[node_type][row])

    def weight(self, node_id: int) -> float:
        """Poids dry/wet w = sigmoid(logit)."""
        node_type, row = self.locate(node_id)
        return float(torch.sigmoid(self.logits[node_type][row]))

    def weights(self) -> Dict[int, float]:
        return {node_id: self.weight(node_id) for node_id in self.node_ids}

    def weight_vector(self) -> torch.Tensor:
        """Tous les poids dry/wet (différentiables), par type puis par ligne."""
        parts = [torch.sigmoid(self.logits[t]) for t in PROCESSOR_TYPES if t in self.logits]
        if not parts:
            return torch.zeros(0, dtype=self.dtype)
        return torch.cat(parts)

    def parameters(self) -> List[torch.Tensor]:
        """Tenseurs feuilles optimisables, dans un ordre déterministe."""
        leaves = []
        for node_type in PROCESSOR_TYPES:
            if node_type not in self.params:
                continue
            leaves.extend(self.params[node_type][name] for name in sorted(self.params[node_type]))
            leaves.append(self.logits[node_type])
        return leaves

    def named_parameters(self) -> List[Tuple[str, torch.Tensor]]:
        named = []
        for node_type in PROCESSOR_TYPES:
            if node_type not in self.params:
                continue
            for name in sorted(self.params[node_type]):
                named.append((f"{node_type.value}.{name}", self.params[node_type][name]))
            named.append((f"{node_type.value}.logit", self.logits[node_type]))
        return named

    def check_covers(self, graph: Graph) -> None:
        """Vérifie que chaque processeur du graphe a ses paramètres."""
        for node in graph.processors():
            found_type, _ = self.locate(node.id)
            if found_type != node.node_type:
                raise MissingParameterError(
                    f"Noeud {node.id}: paramètres de type {found_type.value}, "
                    f"attendu {node.node_type.value}"
                )

    # Modification

    def set_node_params(self, node_id: int, values: Mapping[str, object]) -> None:
        """Écrit des valeurs non contraintes pour un noeud."""
        node_type, row = self.locate(node_id)
        with torch.no_grad():
            for name, value in values.items():
                if name not in self.params[node_type]:
                    raise UnknownNodeError(f"Paramètre {name!r} inconnu pour {node_type.value}")
                target = self.params[node_type][name]
                target[row] = torch.as_tensor(np.asarray(value), dtype=target.dtype).reshape(target.shape[1:])

    def set_logit(self, node_id: int, value: float) -> None:
        node_type, row = self.locate(node_id)
        with torch.no_grad():
            self.logits[node_type][row] = value

    def restricted_to(self, graph: Graph) -> "ParamStore":
        """Nouveau store limité aux processeurs de `graph` (lignes conservées copiées)."""
        self.check_covers(graph)
        keep = {node.id for node in graph.processors()}
        node_index, params, logits = {}, {}, {}
        for node_type, ids in self.node_index.items():
            kept = [i for i in ids if i in keep]
            if not kept:
                continue
            index = self._row_index(node_type, kept)
            node_index[node_type] = kept
            params[node_type] = {
                name: t.detach().index_select(0, index).clone().requires_grad_()
                for name, t in self.params[node_type].items()
            }
            logits[node_type] = self.logits[node_type].detach().index_select(0, index).clone().requires_grad_()
        seeds = {i: s for i, s in self.noise_seeds.items() if i in keep}
        return ParamStore(self.sample_rate, node_index, params, logits, seeds)

    def clone(self) -> "ParamStore":
        return self.to(self.dtype)

    def to(self, dtype: torch.dtype) -> "ParamStore":
        """Copie détachée dans un autre dtype."""
        params = {
            t: {name: v.detach().to(dtype).clone().requires_grad_() for name, v in p.items()}
            for t, p in self.params.items()
        }
        logits = {t: v.detach().to(dtype).clone().requires_grad_() for t, v in self.logits.items()}
        return ParamStore(self.sample_rate, self.node_index, params, logits, self.noise_seeds)

    def seeds_for(self, node_ids: Iterable[int]) -> List[Optional[int]]:
        return [self.noise_seeds.get(i) for i in node_ids]
