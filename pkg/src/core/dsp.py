"""Primitives de traitement du signal partagées par les processeurs et les losses."""

from typing import Optional

import torch
from scipy.fft import next_fast_len


def fft_convolve(signal: torch.Tensor, kernel: torch.Tensor, length: Optional[int] = None) -> torch.Tensor:
    """
    Convolution linéaire par FFT sur la dernière dimension.

    Args:
        signal: Tenseur (..., N)
        kernel: Tenseur (..., L), diffusable avec signal
        length: Nombre d'échantillons conservés (défaut: N + L - 1)

    Returns:
        Convolution (..., length)
    """
    n_full = signal.shape[-1] + kernel.shape[-1] - 1
    n_fft = next_fast_len(n_full, real=True)
    spectrum = torch.fft.rfft(signal, n=n_fft) * torch.fft.rfft(kernel, n=n_fft)
    out = torch.fft.irfft(spectrum, n=n_fft)
    return out[..., : n_full if length is None else length]


def zero_phase_fir(log_magnitude: torch.Tensor, length: int) -> torch.Tensor:
    """
    FIR à phase nulle centré, fenêtré par Hann.

    Args:
        log_magnitude: Log-amplitudes (..., length // 2 + 1)
        length: Longueur impaire du filtre

    Returns:
        Filtre (..., length) centré en (length - 1) / 2
    """
    ir = torch.fft.irfft(torch.exp(log_magnitude), n=length)
    ir = torch.roll(ir, shifts=length // 2, dims=-1)
    window = torch.hann_window(length, periodic=False, dtype=ir.dtype, device=ir.device)
    return ir * window


def same_convolve(signal: torch.Tensor, fir: torch.Tensor) -> torch.Tensor:
    """Convolution alignée "same" avec un FIR centré de longueur impaire."""
    delay = (fir.shape[-1] - 1) // 2
    n = signal.shape[-1]
    full = fft_convolve(signal, fir, length=delay + n)
    return full[..., delay:]


def to_mid_side(x: torch.Tensor) -> torch.Tensor:
    """(..., 2, N) gauche/droite → (..., 2, N) mid/side."""
    left, right = x[..., 0, :], x[..., 1, :]
    return torch.stack(((left + right) / 2, (left - right) / 2), dim=-2)


def from_mid_side(ms: torch.Tensor) -> torch.Tensor:
    """(..., 2, N) mid/side → (..., 2, N) gauche/droite."""
    mid, side = ms[..., 0, :], ms[..., 1, :]
    return torch.stack((mid + side, mid - side), dim=-2)


def one_pole_smooth(x: torch.Tensor, alpha: torch.Tensor) -> torch.Tensor:
    """
    Lissage e[n] = α e[n-1] + (1 - α) x[n] avec e[-1] = 0.

    Calculé comme convolution causale exacte de x par h[n] = (1 - α) αⁿ.

    Args:
        x: Signal (B, N)
        alpha: Coefficients (B,) ou (B, 1) dans (0, 1)
    """
    n = x.shape[-1]
    alpha = alpha.reshape(-1, 1)
    steps = torch.arange(n, dtype=x.dtype, device=x.device)
    h = (1 - alpha) * torch.exp(steps * torch.log(alpha))
    return fft_convolve(x, h, length=n)


def safe_norm(x: torch.Tensor, dim=None) -> torch.Tensor:
    """Norme L2 dont le gradient en zéro vaut zéro."""
    squared = (x * x).sum() if dim is None else (x * x).sum(dim=dim)
    positive = squared > 0
    safe = torch.where(positive, squared, torch.ones_like(squared))
    return torch.where(positive, torch.sqrt(safe), torch.zeros_like(squared))
