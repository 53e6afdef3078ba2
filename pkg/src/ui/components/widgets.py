"""Widgets réutilisables pour l'interface."""

import math
from typing import Optional

import streamlit as st


def format_loss(value: Optional[float]) -> str:
    if value is None or (isinstance(value, float) and math.isnan(value)):
        return "–"
    return f"{value:.4f}"


def format_ratio(value: Optional[float]) -> str:
    if value is None:
        return "–"
    return f"{100 * value:.1f}%"


class MetricCard:
    """Carte de métrique avec valeur et description."""

    def __init__(
        self,
        label: str,
        value: str,
        delta: Optional[str] = None,
        help_text: Optional[str] = None
    ):
        self.label = label
        self.value = value
        self.delta = delta
        self.help_text = help_text

    def render(self):
        st.metric(
            label=self.label,
            value=self.value,
            delta=self.delta,
            delta_color="inverse",
            help=self.help_text
        )


class RatioBadge:
    """Badge de ratio d'élagage par type."""

    LEVELS = (
        (0.75, "🟢"),
        (0.4, "🟡"),
        (0.0, "⚪"),
    )

    def __init__(self, node_type: str, ratio: float):
        self.node_type = node_type
        self.ratio = ratio

    def render(self) -> str:
        icon = next(icon for floor, icon in self.LEVELS if self.ratio >= floor)
        return f"{icon} {self.node_type}: {format_ratio(self.ratio)}"
