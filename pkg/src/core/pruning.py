"""Recherche de graphe par élagage itératif."""

import logging
import math
import time
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional

import numpy as np
import pandas as pd

from .errors import SearchAbortedError, TrainingDivergedError
from .graph import apply_prune
from .losses import Phase
from .models import (
    PROCESSOR_TYPES,
    Graph,
    ImportanceRecord,
    LossBreakdown,
    NodeType,
    PruneConfig,
    PruneMask,
    Sampler,
)
from .params import ParamStore
from .training import TrainingEngine

logger = logging.getLogger(__name__)


@dataclass
class PruneState:
    """État d'un étage d'élagage."""
    graph: Graph
    mask: PruneMask
    threshold: float
    sampler: Sampler = Sampler.BRUTE_FORCE
    round_index: int = 0
    # brute force
    pool: List[int] = field(default_factory=list)
    # dry/wet
    type_pools: Dict[NodeType, List[int]] = field(default_factory=dict)
    type_counts: Dict[NodeType, int] = field(default_factory=dict)
    ratios: Dict[NodeType, float] = field(default_factory=dict)
    type_set: List[NodeType] = field(default_factory=list)
    current_type: Optional[NodeType] = None
    trials: List[Dict[str, Any]] = field(default_factory=list)

    @property
    def finished(self) -> bool:
        if self.sampler == Sampler.BRUTE_FORCE:
            return not self.pool
        return not self.type_set


@dataclass
class Checkpoint:
    """Dernier état valide (graphe et paramètres)."""
    graph: Graph
    store: ParamStore
    round_index: int


@dataclass
class SearchResult:
    """Résultat d'une recherche."""
    console: Graph
    graph: Graph
    store: ParamStore
    console_loss: LossBreakdown
    final_loss: LossBreakdown
    threshold: float
    trials: List[Dict[str, Any]] = field(default_factory=list)
    progress: List[Dict[str, Any]] = field(default_factory=list)
    loss_trace: List[Dict[str, Any]] = field(default_factory=list)
    timings: Dict[str, float] = field(default_factory=dict)


class PruningEngine:
    """
    Alterne étages d'élagage et fine-tuning.

    Usage:
        engine = PruningEngine(trainer, PruneConfig(sampler="hybrid"))
        result = engine.search(console, store)
    """

    def __init__(self, trainer: TrainingEngine, config: Optional[PruneConfig] = None):
        self.trainer = trainer
        self.config = config or PruneConfig()

    # Étages

    def round_sampler(self, round_index: int) -> Sampler:
        """Stratégie effective d'un tour (1-indexé)."""
        if self.config.sampler != Sampler.HYBRID:
            return self.config.sampler
        if round_index % self.config.hybrid_period == 0:
            return Sampler.BRUTE_FORCE
        return Sampler.DRY_WET

    def start_stage(
        self,
        graph: Graph,
        store: ParamStore,
        threshold: float,
        round_index: int,
        rng: np.random.Generator,
    ) -> PruneState:
        """Initialise les pools d'un étage sur le graphe courant."""
        sampler = self.round_sampler(round_index)
        state = PruneState(
            graph=graph,
            mask=PruneMask.ones(graph),
            threshold=threshold,
            sampler=sampler,
            round_index=round_index,
        )
        processors = [n.id for n in graph.processors()]
        if sampler == Sampler.BRUTE_FORCE:
            state.pool = [processors[i] for i in rng.permutation(len(processors))]
        else:
            for node_type in PROCESSOR_TYPES:
                ids = [n.id for n in graph.processors() if n.node_type == node_type]
                if not ids:
                    continue
                ids.sort(key=lambda i: (store.weight(i), i))
                state.type_pools[node_type] = ids
                state.type_counts[node_type] = len(ids)
                state.ratios[node_type] = self.config.r_init
                state.type_set.append(node_type)
        return state

    def sample_bruteforce(self, state: PruneState, rng: Optional[np.random.Generator] = None) -> List[int]:
        """Prochain processeur non visité (ordre tiré au début de l'étage)."""
        return [state.pool.pop(0)]

    def sample_drywet(self, state: PruneState, rng: np.random.Generator) -> List[int]:
        """Les ⌊r_t N_t⌋ (au moins 1) plus petits poids d'un type tiré uniformément."""
        node_type = state.type_set[int(rng.integers(len(state.type_set)))]
        state.current_type = node_type
        count = max(1, math.floor(state.ratios[node_type] * state.type_counts[node_type]))
        return list(state.type_pools[node_type][:count])

    def sample_hybrid(self, state: PruneState, round_index: int, rng: np.random.Generator) -> List[int]:
        """Brute force tous les hybrid_period tours, dry/wet sinon."""
        if self.round_sampler(round_index) == Sampler.BRUTE_FORCE:
            return self.sample_bruteforce(state, rng)
        return self.sample_drywet(state, rng)

    def sample(self, state: PruneState, rng: np.random.Generator) -> List[int]:
        if self.config.sampler == Sampler.HYBRID:
            return self.sample_hybrid(state, state.round_index, rng)
        if state.sampler == Sampler.BRUTE_FORCE:
            return self.sample_bruteforce(state, rng)
        return self.sample_drywet(state, rng)

    def trial(self, state: PruneState, store: ParamStore, candidates: List[int]) -> bool:
        """
        Évalue le masque m ⊙ m_cand et accepte si L_a < L_a^min + τ.

        Returns:
            True si les candidats sont élagués
        """
        trial_mask = state.mask * PruneMask.removing(candidates)
        loss = self.trainer.evaluate(state.graph, store, mask=trial_mask).audio
        threshold = state.threshold
        accepted = loss < threshold + self.config.tolerance
        if accepted:
            state.mask = trial_mask
            state.threshold = min(threshold, loss)

        if state.sampler == Sampler.DRY_WET:
            self._update_type_pool(state, candidates, accepted)

        record = {
            "round": state.round_index,
            "sampler": state.sampler.value,
            "candidates": list(candidates),
            "L_a": loss,
            "threshold": threshold,
            "accepted": bool(accepted),
        }
        state.trials.append(record)
        logger.debug(
            "Tour %d: %s candidats=%s L_a=%.5f seuil=%.5f → %s",
            state.round_index, state.sampler.value, candidates, loss, threshold,
            "accepté" if accepted else "rejeté",
        )
        return bool(accepted)

    @staticmethod
    def _update_type_pool(state: PruneState, candidates: List[int], accepted: bool) -> None:
        node_type = state.current_type
        if node_type is None:
            return
        pool = state.type_pools[node_type]
        if accepted:
            removed = set(candidates)
            state.type_pools[node_type] = [i for i in pool if i not in removed]
            if not state.type_pools[node_type]:
                state.type_set.remove(node_type)
        elif len(candidates) > 1:
            state.ratios[node_type] /= 2
        else:
            state.type_set.remove(node_type)

    def run_stage(
        self,
        graph: Graph,
        store: ParamStore,
        threshold: float,
        round_index: int,
        rng: np.random.Generator,
    ) -> PruneState:
        """Enchaîne les essais jusqu'à épuisement des pools."""
        state = self.start_stage(graph, store, threshold, round_index, rng)
        while not state.finished:
            candidates = self.sample(state, rng)
            self.trial(state, store, candidates)
        return state

    # Recherche complète

    def search(
        self,
        console: Graph,
        store: ParamStore,
        console_steps: Optional[int] = None,
        finetune_steps: Optional[int] = None,
    ) -> SearchResult:
        """
        Entraîne la console puis alterne élagage et fine-tuning.

        Args:
            console: Console initiale
            store: Paramètres initiaux (modifiés)
            console_steps: Pas d'entraînement de la console (défaut: config)
            finetune_steps: Pas de fine-tuning par tour (défaut: config)

        Returns:
            SearchResult

        Raises:
            SearchAbortedError: divergence de l'entraînement, avec le dernier checkpoint
        """
        train_cfg = self.trainer.config
        console_steps = train_cfg.console_steps_prune if console_steps is None else console_steps
        finetune_steps = train_cfg.finetune_steps if finetune_steps is None else finetune_steps
        train_rng = np.random.default_rng(train_cfg.seed)
        prune_rng = np.random.default_rng(self.config.seed)
        timings: Dict[str, float] = {}

        checkpoint = Checkpoint(console, store.clone(), 0)
        started = time.perf_counter()
        try:
            trace = self.trainer.train(console, store, Phase.CONSOLE, console_steps, rng=train_rng)
        except TrainingDivergedError as e:
            raise SearchAbortedError(f"Divergence pendant l'entraînement de la console: {e}", checkpoint) from e
        timings["console"] = time.perf_counter() - started

        console_loss = self.trainer.evaluate(console, store)
        threshold = console_loss.audio
        logger.info("Console entraînée: L_a^min = %.5f", threshold)

        graph = console
        trials: List[Dict[str, Any]] = []
        progress: List[Dict[str, Any]] = []
        timings["pruning"] = 0.0
        timings["finetune"] = 0.0
        console_count = len(console.processors())

        for round_index in range(1, self.config.rounds + 1):
            started = time.perf_counter()
            state = self.run_stage(graph, store, threshold, round_index, prune_rng)
            timings["pruning"] += time.perf_counter() - started
            trials.extend(state.trials)
            threshold = state.threshold

            graph = apply_prune(graph, state.mask)
            store = store.restricted_to(graph)
            checkpoint = Checkpoint(graph, store.clone(), round_index)

            started = time.perf_counter()
            try:
                trace += self.trainer.train(
                    graph, store, Phase.PRUNE, finetune_steps,
                    rng=train_rng, step_offset=(round_index - 1) * finetune_steps,
                )
            except TrainingDivergedError as e:
                raise SearchAbortedError(f"Divergence au tour {round_index}: {e}", checkpoint) from e
            timings["finetune"] += time.perf_counter() - started

            weights = list(store.weights().values())
            remaining = len(graph.processors())
            entry = {
                "round": round_index,
                "sampler": state.sampler.value,
                "processor_count": remaining,
                "pruning_ratio": (console_count - remaining) / console_count if console_count else 0.0,
                "mean_drywet_weight": float(np.mean(weights)) if weights else 0.0,
                "threshold": threshold,
                "trials": len(state.trials),
            }
            progress.append(entry)
            logger.info(
                "Tour %d/%d (%s): %d processeurs, ratio %.3f, %d essais",
                round_index, self.config.rounds, state.sampler.value,
                remaining, entry["pruning_ratio"], entry["trials"],
            )

        final_loss = self.trainer.evaluate(graph, store)
        logger.info("L_a final = %.5f (seuil %.5f)", final_loss.audio, threshold)
        return SearchResult(
            console=console,
            graph=graph,
            store=store,
            console_loss=console_loss,
            final_loss=final_loss,
            threshold=threshold,
            trials=trials,
            progress=progress,
            loss_trace=trace,
            timings=timings,
        )


def importance_scan(trainer: TrainingEngine, graph: Graph, store: ParamStore) -> List[ImportanceRecord]:
    """
    Augmentation de loss Δ_i quand seul le processeur i est court-circuité.

    Returns:
        Une entrée par processeur, par identifiant croissant
    """
    baseline = trainer.evaluate(graph, store).audio
    records = []
    for node in graph.processors():
        loss = trainer.evaluate(graph, store, mask=PruneMask.removing([node.id])).audio
        records.append(ImportanceRecord(
            node_id=node.id,
            node_type=node.node_type.value,
            weight=store.weight(node.id),
            delta=loss - baseline,
        ))
    logger.info("Importance mesurée pour %d processeurs", len(records))
    return records


def importance_frame(records: List[ImportanceRecord]) -> pd.DataFrame:
    """Convertit les enregistrements en DataFrame (node_id, node_type, weight, delta)."""
    return pd.DataFrame(
        [
            {"node_id": r.node_id, "node_type": r.node_type, "weight": r.weight, "delta": r.delta}
            for r in records
        ],
        columns=["node_id", "node_type", "weight", "delta"],
    )


def importance_correlation(records: List[ImportanceRecord]) -> Dict[str, float]:
    """
    Corrélation de Spearman entre w_i et Δ_i, par type et globale ("all").

    Un type avec moins de deux noeuds ou des valeurs constantes donne NaN.
    """
    return frame_correlation(importance_frame(records))


def frame_correlation(df: pd.DataFrame) -> Dict[str, float]:
    """Même calcul à partir d'un DataFrame (node_type, weight, delta)."""
    result: Dict[str, float] = {}
    for node_type, group in df.groupby("node_type", sort=True):
        result[str(node_type)] = _spearman(group)
    result["all"] = _spearman(df)
    return result


def _spearman(df: pd.DataFrame) -> float:
    if len(df) < 2:
        return float("nan")
    return float(df[["weight", "delta"]].corr(method="spearman").iloc[0, 1])
