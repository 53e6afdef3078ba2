"""Transformateurs de signaux audio."""

from math import gcd

import numpy as np
from scipy.signal import resample_poly


class AudioTransformer:
    """Transformations communes sur les tableaux audio (canaux, temps)."""

    @staticmethod
    def to_stereo(audio: np.ndarray) -> np.ndarray:
        """
        Convertit en stéréo (2, N).

        Args:
            audio: (N,), (1, N) ou (2, N)
        """
        audio = np.atleast_2d(audio)
        if audio.shape[0] == 1:
            return np.repeat(audio, 2, axis=0)
        if audio.shape[0] == 2:
            return audio
        raise ValueError(f"Nombre de canaux non supporté: {audio.shape[0]}")

    @staticmethod
    def resample(audio: np.ndarray, orig_rate: int, target_rate: int) -> np.ndarray:
        """Rééchantillonnage polyphase (FIR sinc fenêtré) sur la dernière dimension."""
        if orig_rate == target_rate:
            return audio
        factor = gcd(int(orig_rate), int(target_rate))
        return resample_poly(audio, int(target_rate) // factor, int(orig_rate) // factor, axis=-1)

    @staticmethod
    def pad_to_length(audio: np.ndarray, length: int) -> np.ndarray:
        """Complète par des zéros à la fin."""
        missing = length - audio.shape[-1]
        if missing <= 0:
            return audio
        pad = [(0, 0)] * (audio.ndim - 1) + [(0, missing)]
        return np.pad(audio, pad)

    @staticmethod
    def normalize_rms(audio: np.ndarray, target_db: float = -20.0) -> np.ndarray:
        """Met le signal à un niveau RMS donné (dBFS)."""
        rms = np.sqrt(np.mean(audio ** 2))
        if rms == 0:
            return audio
        return audio * (10 ** (target_db / 20) / rms)
