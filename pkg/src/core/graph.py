"""Construction, validation et élagage des graphes de mixage."""

import logging
from typing import Dict, List, Sequence, Tuple

import networkx as nx

from .errors import CycleError, GraphValidationError, UnknownNodeError
from .models import (
    FULL_CHAIN,
    PROCESSOR_TYPES,
    Graph,
    GraphMetrics,
    Node,
    NodeType,
    PruneMask,
    SubgroupSpec,
    ValidationReport,
    Violation,
)

logger = logging.getLogger(__name__)


def _append_chain(
    nodes: List[Node],
    edges: List[Tuple[int, int]],
    head: int,
    chain: Sequence[NodeType],
) -> int:
    """Ajoute une chaîne série derrière `head` et retourne l'id de sa fin."""
    tail = head
    for node_type in chain:
        node = Node(len(nodes), node_type)
        nodes.append(node)
        edges.append((tail, node.id))
        tail = node.id
    return tail


def build_mixing_console(
    track_count: int,
    subgroups: SubgroupSpec,
    chain: Sequence[NodeType] = FULL_CHAIN,
) -> Graph:
    """
    Construit la console de mixage.

    Args:
        track_count: Nombre de pistes K
        subgroups: Partition des pistes en M groupes
        chain: Sous-ensemble ordonné des processeurs de chaque chaîne

    Returns:
        Graphe avec len(chain)·(K + M) processeurs
    """
    subgroups.validate_for(track_count)
    chain = tuple(chain)
    if any(not t.is_processor for t in chain) or len(set(chain)) != len(chain):
        raise GraphValidationError(f"Chaîne invalide: {[t.value for t in chain]}")
    if list(chain) != [t for t in FULL_CHAIN if t in chain]:
        raise GraphValidationError("La chaîne doit respecter l'ordre e→c→n→s→g→d→r")

    nodes: List[Node] = []
    edges: List[Tuple[int, int]] = []

    track_tails = {}
    for k in range(track_count):
        inp = Node(len(nodes), NodeType.INPUT, source_index=k)
        nodes.append(inp)
        track_tails[k] = _append_chain(nodes, edges, inp.id, chain)

    bus_tails = []
    for group in subgroups.groups:
        mix = Node(len(nodes), NodeType.MIX)
        nodes.append(mix)
        for k in group:
            edges.append((track_tails[k], mix.id))
        bus_tails.append(_append_chain(nodes, edges, mix.id, chain))

    out = Node(len(nodes), NodeType.OUTPUT)
    nodes.append(out)
    for tail in bus_tails:
        edges.append((tail, out.id))

    graph = Graph(tuple(nodes), tuple(edges))
    logger.debug(
        "Console construite: %d noeuds, %d processeurs", len(nodes), len(graph.processors())
    )
    return graph


def to_networkx(graph: Graph) -> nx.MultiDiGraph:
    """Convertit le graphe en MultiDiGraph networkx (arêtes multiples conservées)."""
    g = nx.MultiDiGraph()
    for node in graph.nodes:
        g.add_node(node.id, node_type=node.node_type)
    g.add_edges_from(graph.edges)
    return g


def validate(graph: Graph) -> ValidationReport:
    """
    Vérifie tous les invariants d'un graphe.

    Les violations sont retournées, jamais levées.
    """
    report = ValidationReport()
    add = report.violations.append

    ids = [node.id for node in graph.nodes]
    known = set(ids)
    duplicates = sorted({i for i in ids if ids.count(i) > 1})
    if duplicates:
        add(Violation("duplicate_id", f"Identifiants dupliqués: {duplicates}", tuple(duplicates)))

    for edge in graph.edges:
        if edge[0] not in known or edge[1] not in known:
            add(Violation("unknown_node", f"Arête {edge} vers un noeud inconnu", edges=(edge,)))

    seen_edges = set()
    for edge in graph.edges:
        if edge in seen_edges:
            add(Violation("duplicate_edge", f"Arête dupliquée {edge}", edges=(edge,)))
        seen_edges.add(edge)

    g = nx.DiGraph()
    g.add_nodes_from(known)
    g.add_edges_from(e for e in graph.edges if e[0] in known and e[1] in known)
    for cycle in nx.simple_cycles(g):
        add(Violation("cycle", f"Cycle {cycle}", tuple(cycle)))

    outputs = graph.nodes_of_type(NodeType.OUTPUT)
    if len(outputs) != 1:
        add(Violation(
            "output_count",
            f"{len(outputs)} noeuds de sortie (1 attendu)",
            tuple(n.id for n in outputs),
        ))

    source_indices: Dict[int, int] = {}
    for node in graph.nodes:
        n_in = len(graph.predecessors(node.id))
        n_out = len(graph.successors(node.id))
        node_type = node.node_type
        if node_type == NodeType.INPUT:
            if node.source_index is None:
                add(Violation("source_index", f"Entrée {node.id} sans source_index", (node.id,)))
            elif node.source_index in source_indices:
                add(Violation(
                    "source_index",
                    f"source_index {node.source_index} partagé",
                    (source_indices[node.source_index], node.id),
                ))
            else:
                source_indices[node.source_index] = node.id
            if n_in:
                add(Violation("fan_in", f"Entrée {node.id} avec {n_in} entrées", (node.id,)))
        elif node.source_index is not None:
            add(Violation("source_index", f"Noeud {node.id} non-entrée avec source_index", (node.id,)))

        if node_type.is_processor:
            if n_in != 1:
                add(Violation("fan_in", f"Processeur {node.id} avec {n_in} entrées", (node.id,)))
            if n_out != 1:
                add(Violation("fan_out", f"Processeur {node.id} avec {n_out} sorties", (node.id,)))
        elif node_type == NodeType.MIX and n_in < 1:
            add(Violation("fan_in", f"Mix {node.id} sans entrée", (node.id,)))
        elif node_type == NodeType.OUTPUT:
            if n_in < 1:
                add(Violation("fan_in", f"Sortie {node.id} sans entrée", (node.id,)))
            if n_out:
                add(Violation("fan_out", f"Sortie {node.id} avec {n_out} sorties", (node.id,)))

    if len(outputs) == 1:
        inputs = [n.id for n in graph.nodes_of_type(NodeType.INPUT)]
        from_inputs = set(inputs)
        for i in inputs:
            from_inputs |= nx.descendants(g, i)
        to_output = nx.ancestors(g, outputs[0].id) | {outputs[0].id}
        dangling = sorted(known - (from_inputs & to_output))
        if dangling:
            add(Violation("unreachable", f"Noeuds hors d'un chemin entrée→sortie: {dangling}", tuple(dangling)))

    return report


def topological_order(graph: Graph) -> List[Node]:
    """Ordre topologique, départagé par identifiant croissant."""
    g = nx.DiGraph()
    g.add_nodes_from(graph.node_ids)
    g.add_edges_from(graph.edges)
    if not nx.is_directed_acyclic_graph(g):
        cycle = nx.find_cycle(g)
        raise CycleError(f"Cycle détecté: {cycle}")
    return [graph.get(i) for i in nx.lexicographical_topological_sort(g, key=lambda i: i)]


def apply_prune(graph: Graph, mask: PruneMask) -> Graph:
    """
    Retire les processeurs masqués et reconnecte leur prédécesseur à leur successeur.

    L'ordre des arêtes restantes est conservé, ce qui rend le résultat
    indépendant de l'ordre de composition des masques.
    """
    for node_id in mask.keep:
        node = graph.get(node_id)
        if not node.node_type.is_processor:
            raise UnknownNodeError(f"Le noeud {node_id} ({node.node_type.value}) n'est pas élaguable")

    removed = mask.pruned_ids()
    if not removed:
        return graph

    edges = list(graph.edges)
    for node_id in removed:
        incoming = [i for i, e in enumerate(edges) if e[1] == node_id]
        outgoing = [i for i, e in enumerate(edges) if e[0] == node_id]
        if len(incoming) != 1 or len(outgoing) != 1:
            raise GraphValidationError(f"Processeur {node_id} sans entrée/sortie unique")
        pred = edges[incoming[0]][0]
        succ = edges[outgoing[0]][1]
        edges[incoming[0]] = (pred, succ)
        del edges[outgoing[0]]

    dropped = set(removed)
    nodes = tuple(n for n in graph.nodes if n.id not in dropped)
    return Graph(nodes, tuple(edges))


def metrics(console: Graph, pruned: Graph) -> GraphMetrics:
    """
    Taux d'élagage de `pruned` par rapport à `console`.

    Args:
        console: Console initiale
        pruned: Graphe obtenu par compositions de apply_prune

    Returns:
        GraphMetrics avec le taux global et par type
    """
    console_nodes = {n.id: n for n in console.nodes}
    for node in pruned.nodes:
        original = console_nodes.get(node.id)
        if original is None or original.node_type != node.node_type:
            raise GraphValidationError(f"Noeud {node.id} absent de la console ou de type différent")

    console_counts = console.processor_counts()
    pruned_counts = pruned.processor_counts()
    console_total = sum(console_counts.values())
    pruned_total = sum(pruned_counts.values())

    per_type = {}
    for node_type in PROCESSOR_TYPES:
        n = console_counts[node_type]
        per_type[node_type.value] = (n - pruned_counts[node_type]) / n if n else 0.0

    total = (console_total - pruned_total) / console_total if console_total else 0.0
    return GraphMetrics(
        total_ratio=total,
        per_type_ratio=per_type,
        node_count=len(pruned.nodes),
        processor_count=pruned_total,
        console_processor_count=console_total,
    )
