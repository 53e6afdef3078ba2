"""Documents JSON de graphe (topologie, paramètres, poids dry/wet)."""

import json
import os
import tempfile
from typing import Any, Dict, List, Optional, Tuple

import numpy as np
import torch

from src.core.errors import DocumentParseError, MissingFileError
from src.core.graph import validate
from src.core.models import Graph, Node, NodeType
from src.core.params import PARAM_SHAPES, ParamStore

FORMAT = "mixgraph/1"

_DTYPES = {"float32": torch.float32, "float64": torch.float64}


def atomic_write_text(path: str, text: str) -> None:
    """Écrit un fichier via un fichier temporaire puis os.replace."""
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp_path = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as f:
            f.write(text)
        os.replace(tmp_path, path)
    except BaseException:
        if os.path.exists(tmp_path):
            os.remove(tmp_path)
        raise


def serialize(graph: Graph, store: ParamStore) -> str:
    """
    Sérialise un graphe et ses paramètres.

    Les flottants sont écrits avec repr (relecture bit-exacte) ; les poids
    dry/wet sont stockés sous forme de logits.
    """
    store.check_covers(graph)
    nodes = []
    for node in graph.nodes:
        entry: Dict[str, Any] = {"id": node.id, "type": node.node_type.value}
        if node.source_index is not None:
            entry["source"] = node.source_index
        nodes.append(entry)

    params, weights, seeds = {}, {}, {}
    for node in graph.processors():
        values = store.node_params(node.id)
        params[str(node.id)] = {name: values[name].flatten().tolist() for name in sorted(values)}
        weights[str(node.id)] = store.logit(node.id)
        if node.id in store.noise_seeds:
            seeds[str(node.id)] = store.noise_seeds[node.id]

    document = {
        "format": FORMAT,
        "sample_rate": store.sample_rate,
        "dtype": "float64" if store.dtype == torch.float64 else "float32",
        "nodes": nodes,
        "edges": [[src, dst] for src, dst in graph.edges],
        "weights": weights,
        "params": params,
        "noise_seeds": seeds,
    }
    return json.dumps(document, indent=1)


def _require(mapping: Dict[str, Any], key: str, location: str) -> Any:
    if not isinstance(mapping, dict) or key not in mapping:
        raise DocumentParseError(f"champ {key!r} manquant", location)
    return mapping[key]


def _parse_nodes(raw_nodes: Any) -> List[Node]:
    if not isinstance(raw_nodes, list):
        raise DocumentParseError("liste attendue", "nodes")
    nodes, seen = [], set()
    for k, raw in enumerate(raw_nodes):
        location = f"nodes[{k}]"
        node_id = _require(raw, "id", location)
        if not isinstance(node_id, int) or isinstance(node_id, bool):
            raise DocumentParseError("identifiant entier attendu", f"{location}.id")
        if node_id in seen:
            raise DocumentParseError(f"identifiant {node_id} dupliqué", f"{location}.id")
        seen.add(node_id)
        try:
            node_type = NodeType.from_tag(_require(raw, "type", location))
        except ValueError as e:
            raise DocumentParseError(str(e), f"{location}.type") from None
        source = raw.get("source")
        nodes.append(Node(node_id, node_type, source))
    return nodes


def _parse_edges(raw_edges: Any, known: set) -> List[Tuple[int, int]]:
    if not isinstance(raw_edges, list):
        raise DocumentParseError("liste attendue", "edges")
    edges = []
    for k, raw in enumerate(raw_edges):
        if not isinstance(raw, list) or len(raw) != 2:
            raise DocumentParseError("paire [src, dst] attendue", f"edges[{k}]")
        src, dst = raw
        for end in (src, dst):
            if end not in known:
                raise DocumentParseError(f"noeud {end} inconnu", f"edges[{k}]")
        edges.append((src, dst))
    return edges


def deserialize(text: str, dtype: Optional[torch.dtype] = None) -> Tuple[Graph, ParamStore]:
    """
    Relit un document produit par serialize().

    Args:
        text: Contenu JSON
        dtype: dtype des tenseurs (défaut: celui du document)

    Raises:
        DocumentParseError: document mal formé (avec sa localisation)
    """
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise DocumentParseError(e.msg, f"ligne {e.lineno}, colonne {e.colno}") from None
    if not isinstance(doc, dict):
        raise DocumentParseError("objet JSON attendu", "document")
    if doc.get("format") != FORMAT:
        raise DocumentParseError(f"format {doc.get('format')!r} non supporté", "format")

    nodes = _parse_nodes(_require(doc, "nodes", "document"))
    edges = _parse_edges(_require(doc, "edges", "document"), {n.id for n in nodes})
    graph = Graph(tuple(nodes), tuple(edges))
    report = validate(graph)
    if not report.ok:
        raise DocumentParseError(report.summary(), "graph")

    sample_rate = _require(doc, "sample_rate", "document")
    if dtype is None:
        dtype = _DTYPES.get(doc.get("dtype", "float32"))
        if dtype is None:
            raise DocumentParseError(f"dtype {doc.get('dtype')!r} inconnu", "dtype")

    raw_params = _require(doc, "params", "document")
    raw_weights = _require(doc, "weights", "document")
    raw_seeds = doc.get("noise_seeds", {})

    node_index: Dict[NodeType, List[int]] = {}
    values: Dict[NodeType, Dict[str, List[np.ndarray]]] = {}
    logits: Dict[NodeType, List[float]] = {}
    for node in graph.processors():
        key = str(node.id)
        node_params = _require(raw_params, key, "params")
        node_index.setdefault(node.node_type, []).append(node.id)
        per_type = values.setdefault(node.node_type, {})
        for name, shape in PARAM_SHAPES[node.node_type].items():
            location = f"params.{key}.{name}"
            flat = np.asarray(_require(node_params, name, f"params.{key}"), dtype=np.float64)
            if flat.size != int(np.prod(shape)):
                raise DocumentParseError(f"{flat.size} valeurs, {int(np.prod(shape))} attendues", location)
            per_type.setdefault(name, []).append(flat.reshape(shape))
        weight = _require(raw_weights, key, "weights")
        if not isinstance(weight, (int, float)):
            raise DocumentParseError("nombre attendu", f"weights.{key}")
        logits.setdefault(node.node_type, []).append(float(weight))

    params = {
        t: {name: torch.tensor(np.stack(arrays), dtype=dtype).requires_grad_() for name, arrays in per.items()}
        for t, per in values.items()
    }
    logit_tensors = {t: torch.tensor(v, dtype=dtype).requires_grad_() for t, v in logits.items()}
    seeds = {int(k): int(v) for k, v in raw_seeds.items()}
    for node_id in node_index.get(NodeType.REVERB, []):
        if node_id not in seeds:
            raise DocumentParseError("graine de bruit manquante", f"noise_seeds.{node_id}")
    store = ParamStore(int(sample_rate), node_index, params, logit_tensors, seeds)
    return graph, store


def write_document(path: str, graph: Graph, store: ParamStore) -> None:
    """Écrit un document de graphe de manière atomique."""
    atomic_write_text(path, serialize(graph, store))


def read_document(path: str, dtype: Optional[torch.dtype] = None) -> Tuple[Graph, ParamStore]:
    if not os.path.exists(path):
        raise MissingFileError(f"Document introuvable: {path}")
    with open(path, "r", encoding="utf-8") as f:
        return deserialize(f.read(), dtype)
