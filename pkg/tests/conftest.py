# tests/conftest.py
import os
import sys

import numpy as np
import pytest
import torch

# Ajouter le répertoire parent au path
sys.path.insert(0, os.path.dirname(os.path.dirname(__file__)))

from src.core.graph import build_mixing_console
from src.core.models import SongSession, StftConfig, SubgroupSpec, TrainConfig
from src.core.params import ParamStore
from src.core.training import TrainingEngine

SAMPLE_RATE = 8000
FD_STEPS = (1e-3, 1e-4, 1e-5)


def check_gradients(fn, tensors, coords=4, seed=0, rtol=2e-3, atol=1e-7):
    """
    Compare le gradient autograd de fn(**tensors) à des differences centrees.

    Pour chaque coordonnee tiree, le pas donnant l'ecart minimal est retenu.
    Retourne la liste des (nom, index, analytique, numerique).
    """
    leaves = {name: t.detach().clone().double().requires_grad_() for name, t in tensors.items()}
    value = fn(**leaves)
    grads = torch.autograd.grad(value, list(leaves.values()), allow_unused=True)
    analytic = {
        name: (torch.zeros_like(t) if g is None else g)
        for (name, t), g in zip(leaves.items(), grads)
    }

    rng = np.random.default_rng(seed)
    failures = []
    for name, leaf in leaves.items():
        flat = leaf.detach().flatten()
        picks = rng.choice(flat.numel(), size=min(coords, flat.numel()), replace=False)
        for index in picks:
            expected = float(analytic[name].flatten()[index])
            best = None
            for step in FD_STEPS:
                estimates = []
                for sign in (1.0, -1.0):
                    shifted_leaves = {k: v.detach().clone() for k, v in leaves.items()}
                    shifted = shifted_leaves[name].flatten()
                    shifted[index] += sign * step
                    shifted_leaves[name] = shifted.reshape(leaf.shape)
                    with torch.no_grad():
                        estimates.append(float(fn(**shifted_leaves)))
                numeric = (estimates[0] - estimates[1]) / (2 * step)
                if best is None or abs(numeric - expected) < abs(best - expected):
                    best = numeric
            if abs(best - expected) > atol + rtol * abs(expected):
                failures.append((name, int(index), expected, best))
    return failures


@pytest.fixture
def gradcheck():
    """Verificateur de gradients par differences finies (float64)."""
    return check_gradients


@pytest.fixture
def sample_rate():
    return SAMPLE_RATE


@pytest.fixture
def small_stft():
    """STFT reduit pour des signaux courts a 8 kHz."""
    return StftConfig(fft_sizes=(64, 128, 256), mel_bins=16, a_weighting_taps=63)


@pytest.fixture
def small_train_config():
    """Segments de 0.5 s dont 0.3 s de loss."""
    return TrainConfig(
        segment_seconds=0.5,
        loss_tail_seconds=0.3,
        warmup_seconds=0.2,
        console_steps=3,
        console_steps_prune=2,
        finetune_steps=1,
        log_every=0,
    )


def make_session(track_count=2, seconds=1.0, labels=None, seed=0, sample_rate=SAMPLE_RATE):
    """Session aleatoire : pistes de bruit, mix = somme des pistes."""
    rng = np.random.default_rng(seed)
    n = int(seconds * sample_rate)
    tracks = 0.1 * rng.standard_normal((track_count, 2, n))
    labels = labels if labels is not None else [0] * track_count
    return SongSession(
        tracks=tracks,
        subgroups=SubgroupSpec.from_labels(labels),
        mix=tracks.sum(axis=0),
        sample_rate=sample_rate,
    )


@pytest.fixture
def session():
    """Deux pistes d'une seconde, un seul groupe."""
    return make_session()


@pytest.fixture
def console(session):
    return build_mixing_console(session.track_count, session.subgroups)


@pytest.fixture
def store(console):
    return ParamStore.for_graph(console, SAMPLE_RATE, seed=0, dtype=torch.float64)


@pytest.fixture
def trainer(session, small_train_config, small_stft):
    return TrainingEngine(session, small_train_config, stft=small_stft, dtype=torch.float64)
