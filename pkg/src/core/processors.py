"""
Processeurs différentiables.

Chaque forward travaille sur un batch de noeuds du même type :
entrée (B, 2, N), paramètres (B, *forme). Les gradients sont ceux de
torch.autograd.
"""

import logging
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Dict, Mapping, Optional, Sequence, Union

import torch
import torch.nn.functional as F

from .dsp import fft_convolve, from_mid_side, one_pole_smooth, same_convolve, to_mid_side, zero_phase_fir
from .errors import CacheMissingError, ShapeMismatchError
from .models import NodeType
from .params import DELAY_TAPS, EQ_BINS, REVERB_FFT

logger = logging.getLogger(__name__)

EQ_FIR_LENGTH = 2 * EQ_BINS - 1
DELAY_FIR_LENGTH = 39
IR_SECONDS = 2.0
TAP_SPACING_SECONDS = 0.1
ENVELOPE_FLOOR = 1e-10
MAX_RATIO = 20.0


def drywet_apply(u: torch.Tensor, wet: torch.Tensor, w: Union[torch.Tensor, float]) -> torch.Tensor:
    """
    Mélange dry/wet y = w · wet + (1 - w) · u.

    Args:
        u: Entrée (B, 2, N) ou (2, N)
        wet: Sortie du processeur, même forme que u
        w: Poids par noeud (B,) ou scalaire
    """
    if u.shape != wet.shape:
        raise ShapeMismatchError(f"Entrée {tuple(u.shape)} et sortie {tuple(wet.shape)} incompatibles")
    if isinstance(w, torch.Tensor) and w.dim() > 0:
        w = w.reshape(w.shape + (1,) * (u.dim() - w.dim()))
    return w * wet + (1 - w) * u


def gain_pan_forward(u: torch.Tensor, params: Mapping[str, torch.Tensor], **_) -> torch.Tensor:
    """Gain par canal : y_c = exp(log_gain_c) · u_c."""
    return u * torch.exp(params["log_gain"])[:, :, None]


def stereo_imager_forward(u: torch.Tensor, params: Mapping[str, torch.Tensor], **_) -> torch.Tensor:
    """Gain sur le canal side."""
    ms = to_mid_side(u)
    side_gain = torch.exp(params["log_side_gain"])[:, :, None]
    ms = torch.cat((ms[:, :1], ms[:, 1:] * side_gain), dim=1)
    return from_mid_side(ms)


def equalizer_forward(u: torch.Tensor, params: Mapping[str, torch.Tensor], **_) -> torch.Tensor:
    """FIR à phase nulle de longueur 2047, appliqué identiquement aux deux canaux."""
    fir = zero_phase_fir(params["log_magnitude"], EQ_FIR_LENGTH)
    return same_convolve(u, fir[:, None, :])


def _dynamics_controls(params: Mapping[str, torch.Tensor]):
    threshold = -60.0 * torch.sigmoid(params["raw_threshold"])
    ratio = 1.0 + (MAX_RATIO - 1.0) * torch.sigmoid(params["raw_ratio"])
    alpha = torch.sigmoid(params["raw_alpha"])
    return threshold, ratio, alpha


def _envelope_db(u: torch.Tensor, alpha: torch.Tensor) -> torch.Tensor:
    power = u.pow(2).mean(dim=1)
    envelope = one_pole_smooth(power, alpha)
    return 10.0 * torch.log10(torch.clamp(envelope, min=0.0) + ENVELOPE_FLOOR)


def compressor_forward(u: torch.Tensor, params: Mapping[str, torch.Tensor], **_) -> torch.Tensor:
    """Compresseur à genou dur, gain commun aux deux canaux."""
    threshold, ratio, alpha = _dynamics_controls(params)
    level = _envelope_db(u, alpha)
    gain_db = (1.0 / ratio - 1.0) * F.relu(level - threshold)
    return u * torch.pow(10.0, gain_db / 20.0)[:, None, :]


def noisegate_forward(u: torch.Tensor, params: Mapping[str, torch.Tensor], **_) -> torch.Tensor:
    """Noise gate (expandeur vers le bas) à genou dur."""
    threshold, ratio, alpha = _dynamics_controls(params)
    level = _envelope_db(u, alpha)
    gain_db = (1.0 - ratio) * F.relu(threshold - level)
    return u * torch.pow(10.0, gain_db / 20.0)[:, None, :]


@lru_cache(maxsize=512)
def _noise_spectrum(seed: int, n_ir: int, dtype: torch.dtype) -> torch.Tensor:
    generator = torch.Generator().manual_seed(int(seed))
    noise = torch.rand(2, n_ir, generator=generator, dtype=torch.float64) * 2.0 - 1.0
    window = torch.hann_window(REVERB_FFT, dtype=torch.float64)
    spectrum = torch.stft(
        noise, REVERB_FFT, hop_length=REVERB_FFT // 2, window=window, center=True, return_complex=True
    )
    return spectrum.to(torch.complex64 if dtype == torch.float32 else torch.complex128)


def reverb_noise_spectrum(seeds: Sequence[int], n_ir: int, dtype: torch.dtype) -> torch.Tensor:
    """STFT (B, 2, 193, T) des bruits mid/side des noeuds."""
    return torch.stack([_noise_spectrum(int(s), n_ir, dtype) for s in seeds])


def reverb_forward(
    u: torch.Tensor,
    params: Mapping[str, torch.Tensor],
    sample_rate: int,
    seeds: Optional[Sequence[Optional[int]]] = None,
    **_,
) -> torch.Tensor:
    """Réverbération par bruit filtré à décroissance exponentielle par bande."""
    batch = u.shape[0]
    if seeds is None or any(s is None for s in seeds):
        raise CacheMissingError("Graines de bruit de réverbération manquantes")
    n_ir = int(round(IR_SECONDS * sample_rate))
    noise = reverb_noise_spectrum(seeds, n_ir, u.dtype)
    frames = torch.arange(noise.shape[-1], dtype=u.dtype, device=u.device)

    decay = -F.softplus(params["raw_decay"])
    log_mask = params["init_log_magnitude"][..., None] + frames * decay[..., None]
    shaped = noise * torch.exp(log_mask)

    window = torch.hann_window(REVERB_FFT, dtype=u.dtype, device=u.device)
    ir_ms = torch.istft(
        shaped.reshape(batch * 2, *shaped.shape[-2:]),
        REVERB_FFT,
        hop_length=REVERB_FFT // 2,
        window=window,
        center=True,
        length=n_ir,
    ).reshape(batch, 2, n_ir)
    ir = from_mid_side(ir_ms)
    return fft_convolve(u, ir, length=u.shape[-1])


def multitap_delay_forward(
    u: torch.Tensor,
    params: Mapping[str, torch.Tensor],
    sample_rate: int,
    damping: Optional[float] = None,
    **_,
) -> torch.Tensor:
    """
    Délai multi-taps : 20 taps par canal, un tous les 100 ms.

    Chaque tap est un retard fractionnaire (phase linéaire) amorti par ρᵏ,
    filtré par un FIR de longueur 39 appliqué circulairement autour de 0.

    Args:
        damping: ρ (défaut 1 - 8 / n_ir)
    """
    n_ir = int(round(IR_SECONDS * sample_rate))
    rho = 1.0 - 8.0 / n_ir if damping is None else damping
    dtype, device = u.dtype, u.device

    taps = torch.arange(DELAY_TAPS, dtype=dtype, device=device)
    delays = (taps + torch.sigmoid(params["raw_delay"])) * (TAP_SPACING_SECONDS * sample_rate)

    bins = torch.arange(n_ir // 2 + 1, dtype=dtype, device=device)
    phase = -2.0 * math.pi * delays[..., None] * bins / n_ir
    decay = bins * math.log(rho)
    shift = torch.exp(torch.complex(decay.expand_as(phase), phase))

    fir = zero_phase_fir(params["log_magnitude"], DELAY_FIR_LENGTH)
    fir = F.pad(fir, (0, n_ir - DELAY_FIR_LENGTH))
    fir = torch.roll(fir, shifts=-(DELAY_FIR_LENGTH // 2), dims=-1)
    tap_spectra = shift * torch.fft.rfft(fir)

    ir = torch.fft.irfft(tap_spectra.sum(dim=2), n=n_ir)
    return fft_convolve(u, ir, length=u.shape[-1])


PROCESSOR_FORWARDS: Dict[NodeType, Callable[..., torch.Tensor]] = {
    NodeType.EQUALIZER: equalizer_forward,
    NodeType.COMPRESSOR: compressor_forward,
    NodeType.NOISEGATE: noisegate_forward,
    NodeType.STEREO_IMAGER: stereo_imager_forward,
    NodeType.GAIN_PAN: gain_pan_forward,
    NodeType.MULTITAP_DELAY: multitap_delay_forward,
    NodeType.REVERB: reverb_forward,
}


def processor_forward(
    node_type: NodeType,
    u: torch.Tensor,
    params: Mapping[str, torch.Tensor],
    sample_rate: int,
    seeds: Optional[Sequence[Optional[int]]] = None,
) -> torch.Tensor:
    """Sortie "wet" d'un batch de noeuds de type `node_type`."""
    if u.dim() != 3 or u.shape[1] != 2:
        raise ShapeMismatchError(f"Entrée attendue (B, 2, N), reçue {tuple(u.shape)}")
    return PROCESSOR_FORWARDS[node_type](u, params, sample_rate=sample_rate, seeds=seeds)


@dataclass
class ForwardCache:
    """Valeurs enregistrées par forward_with_cache."""
    node_type: NodeType
    inputs: torch.Tensor
    params: Dict[str, torch.Tensor]
    logit: torch.Tensor
    mask: float
    wet: torch.Tensor
    output: torch.Tensor


@dataclass
class ProcessorGradients:
    """Gradients d'un processeur par rapport à son entrée, ses paramètres et son logit."""
    inputs: torch.Tensor
    params: Dict[str, torch.Tensor] = field(default_factory=dict)
    logit: Optional[torch.Tensor] = None


def forward_with_cache(
    node_type: NodeType,
    u: torch.Tensor,
    params: Mapping[str, torch.Tensor],
    logit: torch.Tensor,
    sample_rate: int,
    mask: float = 1.0,
    seeds: Optional[Sequence[Optional[int]]] = None,
) -> ForwardCache:
    """Forward complet (processeur + dry/wet) qui enregistre le graphe de calcul."""
    with torch.enable_grad():
        inputs = u.detach().clone().requires_grad_()
        leaves = {name: p.detach().clone().requires_grad_() for name, p in params.items()}
        logit_leaf = logit.detach().clone().requires_grad_()
        wet = processor_forward(node_type, inputs, leaves, sample_rate, seeds)
        w = torch.sigmoid(logit_leaf) * mask
        output = drywet_apply(inputs, wet, w)
    return ForwardCache(node_type, inputs, leaves, logit_leaf, mask, wet, output)


def backward(cache: Optional[ForwardCache], upstream: torch.Tensor) -> ProcessorGradients:
    """
    Gradients adjoints d'un forward enregistré.

    Args:
        cache: Résultat de forward_with_cache
        upstream: Gradient de la loss par rapport à la sortie

    Returns:
        ProcessorGradients (zéros pour les entrées sans influence)
    """
    if cache is None or cache.output.grad_fn is None:
        raise CacheMissingError("Aucun forward enregistré pour ce noeud")
    if upstream.shape != cache.output.shape:
        raise ShapeMismatchError(
            f"Gradient amont {tuple(upstream.shape)} != sortie {tuple(cache.output.shape)}"
        )
    names = list(cache.params)
    targets = [cache.inputs] + [cache.params[n] for n in names] + [cache.logit]
    grads = torch.autograd.grad(cache.output, targets, grad_outputs=upstream, retain_graph=True, allow_unused=True)
    grads = [torch.zeros_like(t) if g is None else g for t, g in zip(targets, grads)]
    return ProcessorGradients(
        inputs=grads[0],
        params={name: g for name, g in zip(names, grads[1:-1])},
        logit=grads[-1],
    )
