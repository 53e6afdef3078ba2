"""Boucle d'optimisation et évaluation déterministe sur la chanson entière."""

import logging
import math
from dataclasses import dataclass
from typing import Any, Dict, List, Optional

import numpy as np
import torch

from .errors import GraphValidationError, TrainingDivergedError
from .executor import RenderOutput, SchedulePlan, execute, plan_schedule
from .graph import validate
from .losses import Phase, audio_loss, gain_stage_set, gain_staging_loss, sparsity_loss, total_loss
from .models import Graph, LossBreakdown, LossWeights, PruneMask, SongSession, StftConfig, TrainConfig
from .params import ParamStore

logger = logging.getLogger(__name__)


@dataclass
class Segment:
    """Extrait aligné des pistes et du mix."""
    sources: torch.Tensor  # (K, 2, S)
    target: torch.Tensor  # (2, S)
    start: int
    loss_start: int


def loop_to_length(audio: np.ndarray, length: int) -> np.ndarray:
    """Répète le signal sur la dernière dimension jusqu'à `length` échantillons."""
    n = audio.shape[-1]
    if n >= length:
        return audio
    return audio[..., np.arange(length) % n]


class TrainingEngine:
    """
    Ajuste les paramètres d'un graphe sur une session.

    Usage:
        engine = TrainingEngine(session, config)
        trace = engine.train(graph, store, Phase.CONSOLE, steps=12000, rng=rng)
        breakdown = engine.evaluate(graph, store)
    """

    def __init__(
        self,
        session: SongSession,
        config: Optional[TrainConfig] = None,
        loss_weights: Optional[LossWeights] = None,
        stft: Optional[StftConfig] = None,
        dtype: torch.dtype = torch.float32,
    ):
        self.session = session
        self.config = config or TrainConfig()
        self.loss_weights = loss_weights or LossWeights()
        self.stft = stft or StftConfig()
        self.dtype = dtype
        self.sample_rate = session.sample_rate

        self.segment_length = int(round(self.config.segment_seconds * self.sample_rate))
        self.warmup_length = int(round(self.config.warmup_seconds * self.sample_rate))
        self.tail_length = self.segment_length - self.warmup_length

        tracks = loop_to_length(session.tracks, self.segment_length)
        mix = loop_to_length(session.mix, self.segment_length)
        self._tracks = torch.tensor(tracks, dtype=dtype)
        self._mix = torch.tensor(mix, dtype=dtype)

    def rng(self, seed: Optional[int] = None) -> np.random.Generator:
        return np.random.default_rng(self.config.seed if seed is None else seed)

    def sample_segment(self, rng: np.random.Generator) -> Segment:
        """
        Tire un extrait aligné de segment_seconds ; la loss porte sur la fin.

        Args:
            rng: Générateur numpy (seul état aléatoire consommé)
        """
        n = self._tracks.shape[-1]
        start = int(rng.integers(0, n - self.segment_length + 1))
        stop = start + self.segment_length
        return Segment(
            sources=self._tracks[..., start:stop],
            target=self._mix[..., start:stop],
            start=start,
            loss_start=self.warmup_length,
        )

    def compute_loss(
        self,
        graph: Graph,
        store: ParamStore,
        render: RenderOutput,
        target: torch.Tensor,
        phase: Phase,
        step: int,
        loss_start: int = 0,
    ) -> LossBreakdown:
        """Loss totale d'un rendu, sur la région [loss_start:] uniquement."""
        audio = audio_loss(
            target[..., loss_start:], render.mix[..., loss_start:], self.stft, self.sample_rate, self.loss_weights
        )
        l_g = gain_staging_loss(render.stage_norms, gain_stage_set(graph))
        l_p = sparsity_loss(store.weight_vector())
        return total_loss(audio, l_g, l_p, phase, step, self.loss_weights)

    def train(
        self,
        graph: Graph,
        store: ParamStore,
        phase: Phase,
        steps: int,
        rng: Optional[np.random.Generator] = None,
        step_offset: int = 0,
    ) -> List[Dict[str, Any]]:
        """
        Optimise les paramètres et logits de `store` en place.

        Args:
            graph: Graphe à ajuster
            store: Paramètres (modifiés en place)
            phase: CONSOLE ou PRUNE
            steps: Nombre de pas
            rng: Générateur des segments
            step_offset: Pas cumulé de la phase (rampe de parcimonie)

        Returns:
            Trace de loss : une entrée (step, phase, L_a, L_g, L_p, total) par pas
        """
        report = validate(graph)
        if not report.ok:
            raise GraphValidationError(report.summary())
        store.check_covers(graph)
        phase = Phase(phase)
        rng = rng if rng is not None else self.rng()
        trace: List[Dict[str, Any]] = []
        if steps <= 0:
            return trace
        if not graph.processors():
            logger.info("Aucun processeur à entraîner, %d pas ignorés", steps)
            return trace

        plan = plan_schedule(graph)
        optimizer = torch.optim.AdamW(
            store.parameters(),
            lr=self.config.learning_rate,
            betas=tuple(self.config.betas),
            eps=self.config.adam_eps,
            weight_decay=self.config.weight_decay,
        )

        for local_step in range(steps):
            step = step_offset + local_step
            segment = self.sample_segment(rng)
            render = execute(graph, store, segment.sources, plan=plan)
            loss = self.compute_loss(graph, store, render, segment.target, phase, step, segment.loss_start)

            if not torch.isfinite(loss.total):
                node_id = self._find_diverging_node(graph, store, segment, plan)
                raise TrainingDivergedError(
                    f"Loss non finie au pas {step} (noeud {node_id})", step=step, node_id=node_id
                )

            optimizer.zero_grad()
            loss.total.backward()
            grad_norm = torch.nn.utils.clip_grad_norm_(store.parameters(), self.config.grad_clip)
            if float(grad_norm) > self.config.grad_clip:
                logger.debug("Pas %d: gradient écrêté (norme %.3g)", step, float(grad_norm))
            optimizer.step()

            values = loss.item()
            trace.append({
                "step": step,
                "phase": phase.value,
                "L_a": values.audio,
                "L_g": values.gain_staging,
                "L_p": values.sparsity,
                "total": values.total,
            })
            if self.config.log_every and (local_step + 1) % self.config.log_every == 0:
                logger.info(
                    "[%s] pas %d/%d  L_a=%.4f  total=%.4f",
                    phase.value, local_step + 1, steps, values.audio, values.total,
                )
        return trace

    def _find_diverging_node(
        self, graph: Graph, store: ParamStore, segment: Segment, plan: SchedulePlan
    ) -> Optional[int]:
        with torch.no_grad():
            render = execute(graph, store, segment.sources, plan=plan, keep_intermediates=True)
        for node_id in render.plan.node_order():
            if not torch.isfinite(render.node_outputs[node_id]).all():
                return node_id
        return None

    def evaluation_windows(self) -> List[Segment]:
        """
        Fenêtres d'évaluation : fins de loss_tail_seconds consécutives, chacune
        précédée de warmup_seconds de contexte (zéros avant le début).
        """
        n = self.session.length
        tracks = loop_to_length(self.session.tracks, self.tail_length)
        mix = loop_to_length(self.session.mix, self.tail_length)
        n = max(n, self.tail_length)
        pad = [(0, 0)] * (tracks.ndim - 1) + [(self.warmup_length, 0)]
        tracks = torch.tensor(np.pad(tracks, pad), dtype=self.dtype)
        mix = torch.tensor(np.pad(mix, pad[1:]), dtype=self.dtype)

        windows = []
        for k in range(n // self.tail_length):
            start = k * self.tail_length
            stop = start + self.segment_length
            windows.append(Segment(tracks[..., start:stop], mix[..., start:stop], start, self.warmup_length))
        return windows

    def evaluate(self, graph: Graph, store: ParamStore, mask: Optional[PruneMask] = None) -> LossBreakdown:
        """
        Loss moyenne sur toute la chanson, sans aléa.

        Args:
            graph: Graphe à évaluer
            store: Paramètres
            mask: Masque d'élagage appliqué aux poids dry/wet

        Returns:
            LossBreakdown en floats (moyennes par fenêtre)
        """
        plan = plan_schedule(graph)
        sums: Dict[str, float] = {}
        windows = self.evaluation_windows()
        with torch.no_grad():
            weights = store.weight_vector()
            if mask is not None:
                weights = torch.tensor(
                    [store.weight(i) * mask.value(i) for i in store.node_ids], dtype=weights.dtype
                )
            l_p = float(sparsity_loss(weights))
            for window in windows:
                render = execute(graph, store, window.sources, mask=mask, plan=plan)
                audio = audio_loss(
                    window.target[..., window.loss_start:],
                    render.mix[..., window.loss_start:],
                    self.stft,
                    self.sample_rate,
                    self.loss_weights,
                )
                l_g = gain_staging_loss(render.stage_norms, gain_stage_set(graph))
                for key, value in (
                    ("audio", audio.audio),
                    ("left_right", audio.left_right),
                    ("mid", audio.mid),
                    ("side", audio.side),
                    ("gain_staging", l_g),
                ):
                    sums[key] = sums.get(key, 0.0) + float(value)

        count = len(windows)
        means = {k: v / count for k, v in sums.items()}
        total = means["audio"] + self.loss_weights.gain_staging * means["gain_staging"]
        if not math.isfinite(total):
            logger.warning("Évaluation non finie (L_a=%s)", means["audio"])
        return LossBreakdown(sparsity=l_p, total=total, **means)
