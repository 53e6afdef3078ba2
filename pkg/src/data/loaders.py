"""Chargeurs de sessions (manifest JSON + fichiers WAV)."""

import json
import logging
import os
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Tuple

import numpy as np
import soundfile as sf

from src.core.errors import (
    EmptyAudioError,
    InvalidSubgroupError,
    MissingFileError,
    SessionError,
    UnsupportedEncodingError,
)
from src.core.models import SongSession, SubgroupSpec
from src.data.transformers import AudioTransformer

logger = logging.getLogger(__name__)

SUPPORTED_SUBTYPES = {"PCM_16", "PCM_24", "FLOAT"}


@dataclass
class TrackEntry:
    """Piste d'un manifest."""
    path: str
    subgroup: Any
    name: str = ""


@dataclass
class SessionManifest:
    """Description d'une session : pistes, sous-groupes et mix."""
    tracks: List[TrackEntry]
    mix: str
    sample_rate: int = 30000
    base_dir: str = "."

    @classmethod
    def from_dict(cls, data: Dict[str, Any], base_dir: str = ".") -> "SessionManifest":
        if not isinstance(data, dict) or "tracks" not in data or "mix" not in data:
            raise SessionError("Manifest invalide: champs 'tracks' et 'mix' requis")
        tracks = []
        for k, raw in enumerate(data["tracks"]):
            if not isinstance(raw, dict) or "path" not in raw:
                raise SessionError(f"Manifest invalide: tracks[{k}] sans 'path'")
            if raw.get("subgroup") is None:
                raise InvalidSubgroupError(f"Manifest invalide: tracks[{k}] sans 'subgroup'")
            tracks.append(TrackEntry(
                path=raw["path"],
                name=raw.get("name") or os.path.splitext(os.path.basename(raw["path"]))[0],
                subgroup=raw["subgroup"],
            ))
        if not tracks:
            raise SessionError("Manifest sans piste")
        return cls(tracks, data["mix"], int(data.get("sample_rate", 30000)), base_dir)

    @classmethod
    def from_file(cls, path: str) -> "SessionManifest":
        """Lit un manifest JSON ; les chemins sont relatifs à son dossier."""
        if not os.path.exists(path):
            raise MissingFileError(f"Manifest introuvable: {path}")
        with open(path, "r", encoding="utf-8") as f:
            try:
                data = json.load(f)
            except json.JSONDecodeError as e:
                raise SessionError(f"Manifest {path}: JSON invalide ({e})") from e
        return cls.from_dict(data, base_dir=os.path.dirname(os.path.abspath(path)))

    def to_dict(self) -> Dict[str, Any]:
        return {
            "tracks": [{"path": t.path, "name": t.name, "subgroup": t.subgroup} for t in self.tracks],
            "mix": self.mix,
            "sample_rate": self.sample_rate,
        }

    def resolve(self, path: str) -> str:
        return path if os.path.isabs(path) else os.path.join(self.base_dir, path)

    @property
    def subgroups(self) -> SubgroupSpec:
        return SubgroupSpec.from_labels([t.subgroup for t in self.tracks])


class AudioLoader(ABC):
    """Classe de base pour les chargeurs audio."""

    @abstractmethod
    def load(self) -> Any:
        """Charge les données."""
        pass


class WavLoader(AudioLoader):
    """Décodeur WAV (PCM 16/24 bits, flottant 32 bits)."""

    def __init__(self, path: str):
        self.path = path

    def load(self) -> Tuple[np.ndarray, int]:
        """
        Returns:
            (audio stéréo (2, N) en float64, fréquence d'échantillonnage)
        """
        if not os.path.exists(self.path):
            raise MissingFileError(f"Fichier introuvable: {self.path}")
        try:
            info = sf.info(self.path)
        except RuntimeError as e:
            raise UnsupportedEncodingError(f"{self.path}: {e}") from e
        if info.subtype not in SUPPORTED_SUBTYPES:
            raise UnsupportedEncodingError(f"{self.path}: encodage {info.subtype} non supporté")
        if info.channels not in (1, 2):
            raise UnsupportedEncodingError(f"{self.path}: {info.channels} canaux non supportés")
        if info.frames == 0:
            raise EmptyAudioError(f"{self.path}: fichier vide")

        data, rate = sf.read(self.path, dtype="float64", always_2d=True)
        if data.shape[0] == 0:
            raise EmptyAudioError(f"{self.path}: fichier vide")
        return AudioTransformer.to_stereo(data.T), int(rate)


class SessionLoader(AudioLoader):
    """
    Charge une session complète.

    Usage:
        session = SessionLoader(SessionManifest.from_file("song/manifest.json")).load()
    """

    def __init__(self, manifest: SessionManifest, sample_rate: Optional[int] = None):
        self.manifest = manifest
        self.sample_rate = int(sample_rate or manifest.sample_rate)

    def _load_audio(self, path: str) -> np.ndarray:
        audio, rate = WavLoader(self.manifest.resolve(path)).load()
        if rate != self.sample_rate:
            logger.debug("Rééchantillonnage %s: %d → %d Hz", path, rate, self.sample_rate)
        return AudioTransformer.resample(audio, rate, self.sample_rate)

    def load(self) -> SongSession:
        """Décode, rééchantillonne et aligne toutes les pistes et le mix."""
        subgroups = self.manifest.subgroups
        tracks = [self._load_audio(t.path) for t in self.manifest.tracks]
        mix = self._load_audio(self.manifest.mix)

        length = max([mix.shape[-1]] + [t.shape[-1] for t in tracks])
        tracks = np.stack([AudioTransformer.pad_to_length(t, length) for t in tracks])
        mix = AudioTransformer.pad_to_length(mix, length)
        logger.info(
            "Session chargée: %d pistes, %d groupes, %.1f s à %d Hz",
            len(tracks), len(subgroups.groups), length / self.sample_rate, self.sample_rate,
        )
        return SongSession(
            tracks=tracks,
            subgroups=subgroups,
            mix=mix,
            sample_rate=self.sample_rate,
            names=[t.name for t in self.manifest.tracks],
        )


def load_session(manifest_path: str, sample_rate: Optional[int] = None) -> SongSession:
    """Raccourci : manifest JSON → SongSession."""
    return SessionLoader(SessionManifest.from_file(manifest_path), sample_rate).load()


def write_wav(path: str, audio: np.ndarray, sample_rate: int) -> None:
    """Écrit un WAV flottant 32 bits (2, N) de manière atomique."""
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    tmp_path = os.path.join(directory, f".tmp-{os.path.basename(path)}")
    try:
        sf.write(tmp_path, np.asarray(audio, dtype=np.float32).T, sample_rate, subtype="FLOAT", format="WAV")
        os.replace(tmp_path, path)
    except BaseException:
        if os.path.exists(tmp_path):
            os.remove(tmp_path)
        raise
