# tests/test_training.py
import math
import os
import sys

import numpy as np
import pytest
import torch

# Ajouter le répertoire parent au path
sys.path.insert(0, os.path.dirname(os.path.dirname(__file__)))

from src.core.errors import GraphValidationError, TrainingDivergedError
from src.core.losses import Phase, audio_loss
from src.core.models import Graph, Node, NodeType, PruneMask, TrainConfig
from src.core.params import ParamStore
from src.core.training import TrainingEngine, loop_to_length
from tests.conftest import make_session


def snapshot(store):
    return {name: t.detach().clone() for name, t in store.named_parameters()}


class TestTrainConfig:
    def test_defaults(self):
        config = TrainConfig()
        assert config.learning_rate == 0.01
        assert config.console_steps == 12000
        assert config.console_steps_prune == 6000
        assert config.finetune_steps == 500

    def test_inconsistent_durations(self):
        with pytest.raises(ValueError):
            TrainConfig(segment_seconds=3.8, loss_tail_seconds=2.0, warmup_seconds=1.0)


class TestSegments:
    def test_sizes_at_30khz(self):
        """3.8 s a 30 kHz : 114000 echantillons dont 84000 de loss."""
        session = make_session(track_count=1, seconds=5.0, sample_rate=30000)
        engine = TrainingEngine(session)
        segment = engine.sample_segment(engine.rng(0))
        assert segment.sources.shape[-1] == 114000
        assert segment.sources.shape[-1] - segment.loss_start == 84000

    def test_deterministic(self, trainer):
        first = [trainer.sample_segment(trainer.rng(7)).start for _ in range(1)]
        rng_a, rng_b = trainer.rng(7), trainer.rng(7)
        starts_a = [trainer.sample_segment(rng_a).start for _ in range(5)]
        starts_b = [trainer.sample_segment(rng_b).start for _ in range(5)]
        assert starts_a == starts_b
        assert starts_a[0] == first[0]

    def test_within_bounds(self, trainer, session):
        rng = trainer.rng(1)
        for _ in range(20):
            segment = trainer.sample_segment(rng)
            assert 0 <= segment.start
            assert segment.start + trainer.segment_length <= session.length
            assert segment.target.shape == (2, trainer.segment_length)

    def test_aligned_crop(self, trainer, session):
        segment = trainer.sample_segment(trainer.rng(3))
        stop = segment.start + trainer.segment_length
        expected = torch.tensor(session.tracks[..., segment.start:stop])
        assert torch.equal(segment.sources, expected)

    def test_short_song_loops(self, small_train_config, small_stft):
        """Chanson plus courte qu'un segment : bouclee."""
        session = make_session(seconds=0.3)
        engine = TrainingEngine(session, small_train_config, stft=small_stft, dtype=torch.float64)
        segment = engine.sample_segment(engine.rng(0))
        assert segment.sources.shape[-1] == engine.segment_length

    def test_loop_to_length(self):
        audio = np.arange(3.0)[None]
        assert loop_to_length(audio, 7).tolist() == [[0, 1, 2, 0, 1, 2, 0]]


class TestTrain:
    def test_zero_steps_unchanged(self, trainer, console, store):
        before = snapshot(store)
        trace = trainer.train(console, store, Phase.CONSOLE, 0)
        assert trace == []
        after = snapshot(store)
        assert all(torch.equal(before[k], after[k]) for k in before)

    def test_steps_update_parameters(self, trainer, console, store):
        before = snapshot(store)
        trace = trainer.train(console, store, Phase.CONSOLE, 2, rng=trainer.rng(0))
        assert [entry["step"] for entry in trace] == [0, 1]
        assert all(entry["phase"] == "console" for entry in trace)
        assert all(math.isfinite(entry["total"]) for entry in trace)
        after = snapshot(store)
        assert any(not torch.equal(before[k], after[k]) for k in before)

    def test_prune_phase_step_offset(self, trainer, console, store):
        trace = trainer.train(console, store, Phase.PRUNE, 1, rng=trainer.rng(0), step_offset=500)
        assert trace[0]["step"] == 500
        assert trace[0]["phase"] == "prune"
        assert trace[0]["L_p"] == pytest.approx(0.5 * len(console.processors()), rel=0.05)

    def test_same_seed_same_trace(self, trainer, console):
        traces = []
        for _ in range(2):
            store = ParamStore.for_graph(console, trainer.sample_rate, dtype=torch.float64)
            traces.append(trainer.train(console, store, Phase.CONSOLE, 2, rng=trainer.rng(0)))
        assert traces[0] == traces[1]

    def test_divergence_names_node(self, trainer, console, store):
        """Parametre NaN : erreur qui designe le premier noeud non fini."""
        gain = console.nodes_of_type(NodeType.GAIN_PAN)[0].id
        store.set_node_params(gain, {"log_gain": [float("nan"), 0.0]})
        with pytest.raises(TrainingDivergedError) as info:
            trainer.train(console, store, Phase.CONSOLE, 3, rng=trainer.rng(0))
        assert info.value.step == 0
        assert info.value.node_id == gain

    def test_invalid_graph(self, trainer, store):
        graph = Graph((Node(0, NodeType.INPUT, 0), Node(1, NodeType.OUTPUT), Node(2, NodeType.OUTPUT)), ((0, 1),))
        with pytest.raises(GraphValidationError):
            trainer.train(graph, store, Phase.CONSOLE, 1)


class TestEvaluate:
    def test_window_layout(self, trainer, session):
        """1 s a 8 kHz, fins de 0.3 s : 3 fenetres, la premiere precedee de zeros."""
        windows = trainer.evaluation_windows()
        assert len(windows) == session.length // trainer.tail_length == 3
        first = windows[0]
        assert torch.count_nonzero(first.sources[..., :trainer.warmup_length]) == 0
        assert torch.equal(
            first.target[..., trainer.warmup_length:],
            torch.tensor(session.mix[..., :trainer.tail_length]),
        )

    def test_deterministic(self, trainer, console, store):
        first = trainer.evaluate(console, store)
        second = trainer.evaluate(console, store)
        assert first.as_dict() == second.as_dict()

    def test_matches_window_average(self, trainer, console, store):
        """L_a egale la moyenne des losses par fenetre."""
        from src.core.executor import execute

        losses = []
        with torch.no_grad():
            for window in trainer.evaluation_windows():
                mix = execute(console, store, window.sources).mix
                loss = audio_loss(
                    window.target[..., window.loss_start:],
                    mix[..., window.loss_start:],
                    trainer.stft,
                    trainer.sample_rate,
                )
                losses.append(float(loss.audio))
        assert trainer.evaluate(console, store).audio == pytest.approx(np.mean(losses), rel=1e-9)

    def test_bypassed_console_matches_dry_sum(self, trainer, console, store):
        """Mix cible = somme des pistes : tout court-circuiter donne L_a = 0."""
        mask = PruneMask.removing([n.id for n in console.processors()])
        result = trainer.evaluate(console, store, mask=mask)
        assert result.audio == 0.0
        assert result.sparsity == 0.0

    def test_short_song(self, small_train_config, small_stft, console, store):
        session = make_session(seconds=0.1)
        engine = TrainingEngine(session, small_train_config, stft=small_stft, dtype=torch.float64)
        assert len(engine.evaluation_windows()) == 1
        assert math.isfinite(engine.evaluate(console, store).audio)
