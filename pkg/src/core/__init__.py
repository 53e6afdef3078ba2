"""Core module - Graphe de mixage différentiable, entraînement et élagage."""

from src.core.errors import MixGraphError
from src.core.executor import RenderOutput, SchedulePlan, execute, execute_reference, plan_schedule
from src.core.graph import apply_prune, build_mixing_console, metrics, topological_order, validate
from src.core.losses import Phase
from src.core.models import (
    FULL_CHAIN,
    Graph,
    GraphMetrics,
    LossWeights,
    Node,
    NodeType,
    PruneConfig,
    PruneMask,
    Sampler,
    SongSession,
    StftConfig,
    SubgroupSpec,
    TrainConfig,
)
from src.core.params import ParamStore
from src.core.pruning import PruningEngine, importance_correlation, importance_scan
from src.core.training import TrainingEngine

__all__ = [
    "MixGraphError",
    "FULL_CHAIN",
    "Graph",
    "GraphMetrics",
    "LossWeights",
    "Node",
    "NodeType",
    "ParamStore",
    "Phase",
    "PruneConfig",
    "PruneMask",
    "PruningEngine",
    "RenderOutput",
    "Sampler",
    "SchedulePlan",
    "SongSession",
    "StftConfig",
    "SubgroupSpec",
    "TrainConfig",
    "TrainingEngine",
    "apply_prune",
    "build_mixing_console",
    "execute",
    "execute_reference",
    "importance_correlation",
    "importance_scan",
    "metrics",
    "plan_schedule",
    "topological_order",
    "validate",
]
