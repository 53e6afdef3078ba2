"""Hiérarchie d'exceptions du projet."""

from typing import Any, Optional


class MixGraphError(Exception):
    """Exception de base pour toutes les erreurs du projet."""
    pass


class ConfigError(MixGraphError):
    """Fichier de configuration invalide."""
    pass


class InvalidSubgroupError(MixGraphError):
    """Sous-groupes vides, qui se chevauchent ou qui n'affectent pas toutes les pistes."""
    pass


class GraphValidationError(MixGraphError):
    """Graphe qui ne respecte pas les invariants (ou ensembles de noeuds non imbriqués)."""
    pass


class UnknownNodeError(MixGraphError):
    """Masque ou requête qui référence un noeud absent ou non processeur."""
    pass


class CycleError(MixGraphError):
    """Le graphe contient un cycle."""
    pass


class ShapeMismatchError(MixGraphError):
    """Signaux de formes incompatibles."""
    pass


class MissingParameterError(MixGraphError):
    """Paramètres ou poids dry/wet absents pour un noeud."""
    pass


class CacheMissingError(MixGraphError):
    """Backward demandé sans forward enregistré."""
    pass


class SignalTooShortError(MixGraphError):
    """Signal plus court que la taille de FFT."""
    pass


class TrainingDivergedError(MixGraphError):
    """Loss non finie pendant l'entraînement."""

    def __init__(self, message: str, step: int, node_id: Optional[int] = None):
        super().__init__(message)
        self.step = step
        self.node_id = node_id


class SearchAbortedError(MixGraphError):
    """Recherche interrompue ; conserve le dernier checkpoint valide."""

    def __init__(self, message: str, checkpoint: Any = None):
        super().__init__(message)
        self.checkpoint = checkpoint


class DocumentParseError(MixGraphError):
    """Document de graphe mal formé."""

    def __init__(self, message: str, location: str = ""):
        super().__init__(f"{location}: {message}" if location else message)
        self.location = location


class SessionError(MixGraphError):
    """Erreur de chargement de session."""
    pass


class MissingFileError(SessionError):
    """Fichier référencé introuvable."""
    pass


class UnsupportedEncodingError(SessionError):
    """Encodage WAV non supporté."""
    pass


class EmptyAudioError(SessionError):
    """Fichier audio de longueur nulle."""
    pass
