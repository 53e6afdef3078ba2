"""Chargement de la configuration YAML."""

import logging
import os
from dataclasses import dataclass, field, fields, replace
from typing import Any, Dict, Optional

import yaml

from .errors import ConfigError
from .models import LossWeights, PruneConfig, StftConfig, TrainConfig

logger = logging.getLogger(__name__)

DEFAULT_CONFIG_PATH = os.path.join(os.path.dirname(__file__), "..", "..", "config", "defaults.yaml")
CONFIG_ENV = "MIXGRAPH_CONFIG"
LOG_LEVEL_ENV = "MIXGRAPH_LOG_LEVEL"
RUNS_DIR_ENV = "MIXGRAPH_RUNS_DIR"


@dataclass
class Settings:
    """Configuration complète d'une exécution."""
    train: TrainConfig = field(default_factory=TrainConfig)
    prune: PruneConfig = field(default_factory=PruneConfig)
    loss: LossWeights = field(default_factory=LossWeights)
    stft: StftConfig = field(default_factory=StftConfig)
    sample_rate: int = 30000
    log_level: str = "INFO"

    def as_dict(self) -> Dict[str, Any]:
        """Vue sérialisable (pour les rapports)."""
        def section(obj):
            out = {}
            for f in fields(obj):
                value = getattr(obj, f.name)
                out[f.name] = value.value if hasattr(value, "value") else (list(value) if isinstance(value, tuple) else value)
            return out

        return {
            "train": section(self.train),
            "prune": section(self.prune),
            "loss": section(self.loss),
            "stft": section(self.stft),
            "sample_rate": self.sample_rate,
        }


def _apply_section(default, section: Optional[Dict[str, Any]], name: str):
    if not section:
        return default
    if not isinstance(section, dict):
        raise ConfigError(f"Section {name!r} invalide")
    known = {f.name for f in fields(default)}
    unknown = sorted(set(section) - known)
    if unknown:
        raise ConfigError(f"Clés inconnues dans {name!r}: {unknown}")
    try:
        return replace(default, **section)
    except (TypeError, ValueError) as e:
        raise ConfigError(f"Section {name!r}: {e}") from e


def load_config(path: Optional[str] = None) -> Settings:
    """
    Charge la configuration.

    Args:
        path: Fichier YAML (défaut: $MIXGRAPH_CONFIG puis config/defaults.yaml)

    Returns:
        Settings ; valeurs par défaut des dataclasses si le fichier est absent
    """
    path = path or os.getenv(CONFIG_ENV) or DEFAULT_CONFIG_PATH
    try:
        with open(path, "r", encoding="utf-8") as f:
            raw = yaml.safe_load(f) or {}
    except FileNotFoundError:
        # Fallback si le fichier n'existe pas
        logger.warning("Configuration %s introuvable, valeurs par défaut utilisées", path)
        raw = {}
    except yaml.YAMLError as e:
        raise ConfigError(f"YAML invalide dans {path}: {e}") from e

    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: un dictionnaire est attendu")

    settings = Settings(
        train=_apply_section(TrainConfig(), raw.get("train"), "train"),
        prune=_apply_section(PruneConfig(), raw.get("prune"), "prune"),
        loss=_apply_section(LossWeights(), raw.get("loss"), "loss"),
        stft=_apply_section(StftConfig(), raw.get("stft"), "stft"),
    )
    session = raw.get("session") or {}
    settings.sample_rate = int(session.get("sample_rate", settings.sample_rate))
    logging_section = raw.get("logging") or {}
    settings.log_level = os.getenv(LOG_LEVEL_ENV) or logging_section.get("level", settings.log_level)
    return settings
