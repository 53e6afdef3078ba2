"""Losses : STFT mel multi-résolution, régularisation de gain et parcimonie."""

import logging
from enum import Enum
from functools import lru_cache
from typing import Iterable, Mapping, Optional, Tuple

import librosa
import numpy as np
import torch

from .dsp import safe_norm, same_convolve, to_mid_side, zero_phase_fir
from .errors import ShapeMismatchError, SignalTooShortError
from .models import GAIN_STAGE_TYPES, Graph, LossBreakdown, LossWeights, StftConfig

logger = logging.getLogger(__name__)

# Plancher de puissance avant la racine (gradient nul au lieu de NaN en zéro)
POWER_FLOOR = 1e-30


class Phase(str, Enum):
    """Phase d'optimisation."""
    CONSOLE = "console"
    PRUNE = "prune"


@lru_cache(maxsize=32)
def mel_filterbank(sample_rate: int, n_fft: int, n_mels: int) -> np.ndarray:
    """
    Banc de filtres mel HTK (triangles de 0 Hz à Nyquist, sans normalisation).

    Une ligne vide (triangle plus étroit qu'un bin FFT) reçoit un poids
    unitaire sur le bin le plus proche de son centre.
    """
    basis = librosa.filters.mel(
        sr=sample_rate, n_fft=n_fft, n_mels=n_mels, fmin=0.0, fmax=sample_rate / 2, htk=True, norm=None
    ).astype(np.float64)
    centers = librosa.mel_frequencies(n_mels=n_mels + 2, fmin=0.0, fmax=sample_rate / 2, htk=True)[1:-1]
    bin_hz = sample_rate / n_fft
    for row in np.flatnonzero(basis.sum(axis=1) <= 0):
        nearest = int(np.clip(np.round(centers[row] / bin_hz), 0, basis.shape[1] - 1))
        basis[row, nearest] = 1.0
    return basis


@lru_cache(maxsize=8)
def a_weighting_log_magnitude(sample_rate: int, taps: int) -> np.ndarray:
    """Log-amplitude de la courbe A sur taps // 2 + 1 fréquences (plancher -80 dB)."""
    freqs = np.linspace(0.0, sample_rate / 2, taps // 2 + 1)
    db = librosa.A_weighting(freqs, min_db=-80.0)
    return db * np.log(10.0) / 20.0


def a_weighting_fir(sample_rate: int, taps: int, dtype: torch.dtype) -> torch.Tensor:
    """FIR à phase nulle de pondération A."""
    log_mag = torch.tensor(a_weighting_log_magnitude(sample_rate, taps), dtype=dtype)
    return zero_phase_fir(log_mag, taps)


def mel_stft(signal: torch.Tensor, cfg: StftConfig, resolution: int, sample_rate: int) -> torch.Tensor:
    """
    Magnitude mel (..., M, T) d'un signal (..., N) pour une résolution.

    Raises:
        SignalTooShortError: si N est inférieur à la taille de FFT
    """
    n_fft = cfg.fft_sizes[resolution]
    hop = n_fft // cfg.hop_divisor
    n = signal.shape[-1]
    if n < n_fft:
        raise SignalTooShortError(f"Signal de {n} échantillons < FFT de {n_fft}")

    x = signal
    if cfg.a_weighting:
        x = same_convolve(x, a_weighting_fir(sample_rate, cfg.a_weighting_taps, x.dtype))
    flat = x.reshape(-1, n)
    window = torch.hann_window(n_fft, dtype=x.dtype, device=x.device)
    spec = torch.stft(flat, n_fft, hop_length=hop, window=window, center=False, return_complex=True)
    power = spec.real.pow(2) + spec.imag.pow(2)
    magnitude = torch.sqrt(torch.clamp(power, min=POWER_FLOOR))
    basis = torch.tensor(mel_filterbank(sample_rate, n_fft, cfg.mel_bins), dtype=x.dtype, device=x.device)
    mel = torch.matmul(basis, magnitude)
    return mel.reshape(*signal.shape[:-1], *mel.shape[-2:])


def mel_log_stft(signal: torch.Tensor, cfg: StftConfig, resolution: int, sample_rate: int) -> torch.Tensor:
    """Log-magnitude mel avec plancher ε."""
    return torch.log(torch.clamp(mel_stft(signal, cfg, resolution, sample_rate), min=cfg.eps))


def spectral_terms(
    target: torch.Tensor,
    prediction: torch.Tensor,
    cfg: StftConfig,
    sample_rate: int,
) -> torch.Tensor:
    """
    Somme sur les résolutions du terme log-L1 et du terme de convergence spectrale.

    Args:
        target: Signaux cibles (C, N)
        prediction: Signaux prédits (C, N)

    Returns:
        Tenseur (C,) par canal
    """
    if target.shape != prediction.shape:
        raise ShapeMismatchError(f"Cible {tuple(target.shape)} != prédiction {tuple(prediction.shape)}")
    total = torch.zeros(target.shape[0], dtype=prediction.dtype, device=prediction.device)
    for resolution in range(len(cfg.fft_sizes)):
        y = mel_stft(target, cfg, resolution, sample_rate)
        y_hat = mel_stft(prediction, cfg, resolution, sample_rate)
        log_y = torch.log(torch.clamp(y, min=cfg.eps))
        log_y_hat = torch.log(torch.clamp(y_hat, min=cfg.eps))
        entries = y.shape[-2] * y.shape[-1]
        log_term = (log_y - log_y_hat).abs().sum(dim=(-2, -1)) / entries

        diff_norm = safe_norm(y_hat - y, dim=(-2, -1))
        ref_norm = safe_norm(y, dim=(-2, -1)).detach()
        silent = ref_norm < cfg.eps
        guarded = torch.where(diff_norm < cfg.eps, torch.zeros_like(diff_norm), diff_norm / cfg.eps)
        convergence = torch.where(silent, guarded, diff_norm / torch.where(silent, torch.ones_like(ref_norm), ref_norm))
        total = total + log_term + convergence
    return total


def stft_term(target: torch.Tensor, prediction: torch.Tensor, cfg: StftConfig, sample_rate: int) -> torch.Tensor:
    """Terme STFT d'un seul canal (N,)."""
    return spectral_terms(target[None], prediction[None], cfg, sample_rate)[0]


def audio_loss(
    target: torch.Tensor,
    prediction: torch.Tensor,
    cfg: StftConfig,
    sample_rate: int,
    weights: Optional[LossWeights] = None,
) -> LossBreakdown:
    """
    L_a = 0.5·L_lr + 0.25·L_m + 0.25·L_s sur des mix stéréo (2, N).

    L_lr est la moyenne des termes gauche et droite.
    """
    weights = weights or LossWeights()
    if target.dim() != 2 or target.shape[0] != 2:
        raise ShapeMismatchError(f"Mix stéréo (2, N) attendu, reçu {tuple(target.shape)}")
    channels_t = torch.cat((target, to_mid_side(target)), dim=0)
    channels_p = torch.cat((prediction, to_mid_side(prediction)), dim=0)
    terms = spectral_terms(channels_t, channels_p, cfg, sample_rate)
    left_right = 0.5 * (terms[0] + terms[1])
    mid, side = terms[2], terms[3]
    audio = weights.left_right * left_right + weights.mid * mid + weights.side * side
    return LossBreakdown(audio=audio, left_right=left_right, mid=mid, side=side, total=audio)


def gain_stage_set(graph: Graph) -> frozenset:
    """Identifiants des processeurs régularisés en gain (égaliseurs, réverbes, délais)."""
    return frozenset(n.id for n in graph.processors() if n.node_type in GAIN_STAGE_TYPES)


def gain_staging_loss(
    stage_norms: Mapping[int, Tuple[torch.Tensor, torch.Tensor]],
    node_ids: Iterable[int],
    eps: float = 1e-8,
) -> torch.Tensor:
    """
    Σ |log ‖wet_mid‖ - log ‖u_mid‖| sur les noeuds donnés.

    Args:
        stage_norms: Normes (entrée, wet) enregistrées par le rendu
        node_ids: Ensemble de noeuds régularisés
    """
    total = None
    for node_id in sorted(node_ids):
        if node_id not in stage_norms:
            continue
        in_norm, wet_norm = stage_norms[node_id]
        term = (torch.log(torch.clamp(wet_norm, min=eps)) - torch.log(torch.clamp(in_norm, min=eps))).abs()
        total = term if total is None else total + term
    if total is None:
        return torch.zeros(())
    return total


def sparsity_loss(weights: torch.Tensor) -> torch.Tensor:
    """L1 des poids dry/wet (tous positifs)."""
    return weights.sum()


def sparsity_coefficient(step: int, weights: Optional[LossWeights] = None) -> float:
    """Rampe linéaire de 0 à sparsity_max sur les premiers pas de la phase d'élagage."""
    weights = weights or LossWeights()
    if weights.sparsity_ramp_steps <= 0:
        return weights.sparsity_max
    return weights.sparsity_max * min(max(step, 0) / weights.sparsity_ramp_steps, 1.0)


def total_loss(
    audio: LossBreakdown,
    gain_staging: torch.Tensor,
    sparsity: torch.Tensor,
    phase: Phase,
    step: int,
    weights: Optional[LossWeights] = None,
) -> LossBreakdown:
    """
    Loss totale d'une phase.

    Console : L_a + α_g·L_g. Élagage : L_a + α_g·L_g + α_p(step)·L_p.
    """
    weights = weights or LossWeights()
    total = audio.audio + weights.gain_staging * gain_staging
    if Phase(phase) == Phase.PRUNE:
        total = total + sparsity_coefficient(step, weights) * sparsity
    return LossBreakdown(
        audio=audio.audio,
        left_right=audio.left_right,
        mid=audio.mid,
        side=audio.side,
        gain_staging=gain_staging,
        sparsity=sparsity,
        total=total,
    )
