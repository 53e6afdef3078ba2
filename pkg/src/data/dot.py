"""Export DOT des graphes de mixage."""

from typing import Optional

from graphviz import Digraph

from src.core.models import Graph, NodeType

_COLORS = {
    NodeType.INPUT: "lightgrey",
    NodeType.OUTPUT: "lightgrey",
    NodeType.MIX: "white",
}


def export_dot(graph: Graph, name: str = "mixgraph", weights: Optional[dict] = None) -> str:
    """
    Texte DOT du graphe ; chaque noeud est étiqueté par la lettre de son type.

    Args:
        graph: Graphe à exporter
        name: Nom du digraph
        weights: Poids dry/wet optionnels, ajoutés en infobulle
    """
    dot = Digraph(name=name)
    dot.attr(rankdir="LR")
    for node in sorted(graph.nodes, key=lambda n: n.id):
        attrs = {"style": "filled", "fillcolor": _COLORS.get(node.node_type, "lightblue")}
        if weights and node.id in weights:
            attrs["tooltip"] = f"w={weights[node.id]:.3f}"
        dot.node(str(node.id), node.node_type.value, **attrs)
    for src, dst in graph.edges:
        dot.edge(str(src), str(dst))
    return dot.source
