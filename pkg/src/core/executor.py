"""Ordonnancement par étages et rendu batché d'un graphe."""

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import torch

from .dsp import safe_norm, to_mid_side
from .errors import CacheMissingError, ShapeMismatchError
from .graph import apply_prune, topological_order
from .models import PROCESSOR_TYPES, TYPE_ORDER, Graph, NodeType, PruneMask
from .params import ParamStore
from .processors import drywet_apply, processor_forward

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Stage:
    """Ensemble de noeuds du même type, indépendants entre eux."""
    node_type: NodeType
    node_ids: Tuple[int, ...]


@dataclass(frozen=True)
class SchedulePlan:
    """Suite d'étages couvrant tous les noeuds du graphe."""
    stages: Tuple[Stage, ...]

    @property
    def processing_stage_count(self) -> int:
        """Nombre d'étages hors étage des entrées."""
        return sum(1 for s in self.stages if s.node_type != NodeType.INPUT)

    def __len__(self) -> int:
        return len(self.stages)

    def node_order(self) -> List[int]:
        return [i for stage in self.stages for i in stage.node_ids]


@dataclass
class RenderOutput:
    """Résultat d'un rendu."""
    mix: torch.Tensor
    node_outputs: Dict[int, torch.Tensor] = field(default_factory=dict)
    # norme mid de l'entrée et de la sortie wet de chaque processeur
    stage_norms: Dict[int, Tuple[torch.Tensor, torch.Tensor]] = field(default_factory=dict)
    plan: Optional[SchedulePlan] = None


def plan_schedule(graph: Graph) -> SchedulePlan:
    """
    Ordonnancement par liste en étages homogènes en type.

    Étape 0 : toutes les entrées. Ensuite, parmi les noeuds prêts, le type dont
    un noeud prêt a le plus long chemin restant vers la sortie est choisi
    (départage par TYPE_ORDER) et tous ses noeuds prêts forment l'étage suivant.
    """
    order = topological_order(graph)

    remaining_path: Dict[int, int] = {}
    for node in reversed(order):
        succs = graph.successors(node.id)
        remaining_path[node.id] = 1 + max((remaining_path[s] for s in succs), default=0)

    type_rank = {t: k for k, t in enumerate(TYPE_ORDER)}
    inputs = tuple(sorted(n.id for n in graph.nodes_of_type(NodeType.INPUT)))
    stages: List[Stage] = []
    done = set()
    if inputs:
        stages.append(Stage(NodeType.INPUT, inputs))
        done.update(inputs)

    pending = [n for n in order if n.id not in done]
    while pending:
        ready = [n for n in pending if all(p in done for p in graph.predecessors(n.id))]
        by_type: Dict[NodeType, List[int]] = {}
        for node in ready:
            by_type.setdefault(node.node_type, []).append(node.id)
        chosen = min(
            by_type,
            key=lambda t: (-max(remaining_path[i] for i in by_type[t]), type_rank[t]),
        )
        ids = tuple(sorted(by_type[chosen]))
        stages.append(Stage(chosen, ids))
        done.update(ids)
        pending = [n for n in pending if n.id not in done]

    return SchedulePlan(tuple(stages))


def bypassed_nodes(graph: Graph, store: ParamStore, mask: Optional[PruneMask] = None) -> List[int]:
    """Processeurs de poids effectif nul (masque à 0 ou w = 0 exactement)."""
    removed = []
    for node in graph.processors():
        if mask is not None and mask.value(node.id) == 0:
            removed.append(node.id)
        elif store.weight(node.id) == 0.0:
            removed.append(node.id)
    return removed


def _check_sources(graph: Graph, sources: torch.Tensor) -> None:
    count = len(graph.nodes_of_type(NodeType.INPUT))
    if sources.dim() != 3 or sources.shape[1] != 2 or sources.shape[0] != count:
        raise ShapeMismatchError(
            f"Sources attendues ({count}, 2, N), reçues {tuple(sources.shape)}"
        )


def _mask_vector(mask: Optional[PruneMask], node_ids: Sequence[int], like: torch.Tensor) -> torch.Tensor:
    if mask is None:
        return torch.ones(len(node_ids), dtype=like.dtype, device=like.device)
    return torch.tensor([float(mask.value(i)) for i in node_ids], dtype=like.dtype, device=like.device)


def _sum_inputs(graph: Graph, node_id: int, outputs: Mapping[int, torch.Tensor]) -> torch.Tensor:
    preds = graph.predecessors(node_id)
    total = outputs[preds[0]]
    for pred in preds[1:]:
        total = total + outputs[pred]
    return total


def _run(
    graph: Graph,
    store: ParamStore,
    sources: torch.Tensor,
    mask: Optional[PruneMask],
    plan: SchedulePlan,
    keep_intermediates: bool,
    batched: bool,
) -> RenderOutput:
    _check_sources(graph, sources)
    store.check_covers(graph)

    outputs: Dict[int, torch.Tensor] = {}
    norms: Dict[int, Tuple[torch.Tensor, torch.Tensor]] = {}
    for stage in plan.stages:
        if stage.node_type == NodeType.INPUT:
            for node_id in stage.node_ids:
                outputs[node_id] = sources[graph.get(node_id).source_index]
            continue
        if not stage.node_type.is_processor:
            for node_id in stage.node_ids:
                outputs[node_id] = _sum_inputs(graph, node_id, outputs)
            continue

        groups = [list(stage.node_ids)] if batched else [[i] for i in stage.node_ids]
        for ids in groups:
            u = torch.stack([outputs[graph.predecessors(i)[0]] for i in ids])
            params = store.gather(stage.node_type, ids)
            w = torch.sigmoid(store.gather_logits(stage.node_type, ids)) * _mask_vector(mask, ids, u)
            wet = processor_forward(stage.node_type, u, params, store.sample_rate, store.seeds_for(ids))
            y = drywet_apply(u, wet, w)
            u_mid = to_mid_side(u)[:, 0]
            wet_mid = to_mid_side(wet)[:, 0]
            for row, node_id in enumerate(ids):
                outputs[node_id] = y[row]
                norms[node_id] = (safe_norm(u_mid[row]), safe_norm(wet_mid[row]))

    mix = outputs[graph.output_node.id]
    return RenderOutput(
        mix=mix,
        node_outputs=outputs if keep_intermediates else {},
        stage_norms=norms,
        plan=plan,
    )


def execute(
    graph: Graph,
    store: ParamStore,
    sources: torch.Tensor,
    mask: Optional[PruneMask] = None,
    plan: Optional[SchedulePlan] = None,
    keep_intermediates: bool = False,
) -> RenderOutput:
    """
    Rend le mix d'un graphe, un appel de processeur batché par étage.

    Args:
        graph: Graphe validé
        store: Paramètres et logits dry/wet de tous les processeurs
        sources: Pistes sèches (K, 2, N), indexées par source_index
        mask: Masque d'élagage multiplié aux poids dry/wet
        plan: Ordonnancement précalculé (sinon plan_schedule)
        keep_intermediates: Conserver la sortie de chaque noeud

    Les processeurs de poids effectif nul sont retirés du graphe avant le
    rendu : le résultat est bit à bit celui de apply_prune sur le même masque.

    Returns:
        RenderOutput dont `mix` est (2, N)
    """
    removed = bypassed_nodes(graph, store, mask)
    if removed:
        graph = apply_prune(graph, PruneMask.removing(removed))
        plan = None
    plan = plan or plan_schedule(graph)
    return _run(graph, store, sources, mask, plan, keep_intermediates, batched=True)


def execute_reference(
    graph: Graph,
    store: ParamStore,
    sources: torch.Tensor,
    mask: Optional[PruneMask] = None,
    keep_intermediates: bool = False,
) -> RenderOutput:
    """Rendu de référence, noeud par noeud en ordre topologique."""
    stages = []
    for node in topological_order(graph):
        stages.append(Stage(node.node_type, (node.id,)))
    plan = SchedulePlan(tuple(stages))
    return _run(graph, store, sources, mask, plan, keep_intermediates, batched=False)


@dataclass
class GradientSet:
    """Gradients de la loss par rapport aux tenseurs d'un ParamStore."""
    params: Dict[NodeType, Dict[str, torch.Tensor]]
    logits: Dict[NodeType, torch.Tensor]
    store: ParamStore

    def node(self, node_id: int) -> Dict[str, torch.Tensor]:
        """Gradients d'un noeud, logit compris (clé "logit")."""
        node_type, row = self.store.locate(node_id)
        grads = {name: g[row] for name, g in self.params[node_type].items()}
        grads["logit"] = self.logits[node_type][row]
        return grads


def backward_pass(loss: torch.Tensor, store: ParamStore) -> GradientSet:
    """
    Gradients de `loss` par rapport à tous les paramètres et logits.

    Raises:
        CacheMissingError: si le rendu n'a pas été enregistré avec gradients
    """
    if not isinstance(loss, torch.Tensor) or loss.grad_fn is None:
        raise CacheMissingError("Aucun rendu enregistré avec gradients")
    leaves = store.parameters()
    grads = torch.autograd.grad(loss, leaves, allow_unused=True)
    grads = [torch.zeros_like(t) if g is None else g for t, g in zip(leaves, grads)]

    params: Dict[NodeType, Dict[str, torch.Tensor]] = {}
    logits: Dict[NodeType, torch.Tensor] = {}
    position = 0
    for node_type, names in ((t, sorted(store.params[t])) for t in PROCESSOR_TYPES if t in store.params):
        params[node_type] = {}
        for name in names:
            params[node_type][name] = grads[position]
            position += 1
        logits[node_type] = grads[position]
        position += 1
    return GradientSet(params, logits, store)
