"""Composants graphiques avec Plotly."""

from abc import ABC, abstractmethod
from typing import Optional

import pandas as pd
import plotly.express as px
import plotly.graph_objects as go
import streamlit as st


class ChartComponent(ABC):
    """Classe de base pour les graphiques."""

    @abstractmethod
    def figure(self) -> go.Figure:
        pass

    def render(self):
        st.plotly_chart(self.figure(), use_container_width=True)


class LossTraceChart(ChartComponent):
    """Trace de loss par pas, une couleur par phase, avec moyenne glissante."""

    def __init__(self, trace: pd.DataFrame, column: str = "L_a", window: int = 100, title: str = ""):
        self.trace = trace
        self.column = column
        self.window = window
        self.title = title

    def figure(self) -> go.Figure:
        fig = go.Figure()
        for phase, group in self.trace.groupby("phase", sort=False):
            fig.add_trace(go.Scatter(
                x=group.index,
                y=group[self.column],
                mode="lines",
                name=f"{self.column} ({phase})",
                opacity=0.35,
            ))
        if not self.trace.empty:
            smooth = self.trace[self.column].rolling(self.window, min_periods=1).mean()
            fig.add_trace(go.Scatter(
                x=self.trace.index,
                y=smooth,
                mode="lines",
                name=f"moyenne glissante ({self.window})",
                line=dict(color="#4C8BF5", width=3),
            ))
        fig.update_layout(
            title=self.title,
            xaxis_title="Pas d'optimisation",
            yaxis_title=self.column,
            hovermode="x unified",
        )
        return fig


class ProgressChart(ChartComponent):
    """Ratio d'élagage et poids dry/wet moyen par tour."""

    def __init__(self, progress: pd.DataFrame, title: str = ""):
        self.progress = progress
        self.title = title

    def figure(self) -> go.Figure:
        fig = go.Figure()
        fig.add_trace(go.Scatter(
            x=self.progress["round"],
            y=self.progress["pruning_ratio"],
            mode="lines+markers",
            name="Ratio d'élagage",
            line=dict(color="#4C8BF5", width=3),
        ))
        fig.add_trace(go.Scatter(
            x=self.progress["round"],
            y=self.progress["mean_drywet_weight"],
            mode="lines+markers",
            name="Poids dry/wet moyen",
            line=dict(color="#F5A34C", width=2, dash="dot"),
        ))
        fig.update_layout(
            title=self.title,
            xaxis_title="Tour",
            yaxis=dict(range=[0, 1.05]),
            hovermode="x unified",
        )
        return fig


class BarChart(ChartComponent):
    """Graphique en barres."""

    def __init__(
        self,
        data: pd.Series,
        title: str = "",
        x_label: str = "",
        y_label: str = "",
        color: str = "#4C8BF5",
        y_range: Optional[tuple] = None,
    ):
        self.data = data
        self.title = title
        self.x_label = x_label
        self.y_label = y_label
        self.color = color
        self.y_range = y_range

    def figure(self) -> go.Figure:
        fig = px.bar(
            x=self.data.index,
            y=self.data.values,
            title=self.title,
            labels={"x": self.x_label, "y": self.y_label},
        )
        fig.update_traces(marker_color=self.color)
        if self.y_range:
            fig.update_yaxes(range=list(self.y_range))
        return fig


class ImportanceScatter(ChartComponent):
    """Poids dry/wet w_i contre augmentation de loss Δ_i, coloré par type."""

    def __init__(self, data: pd.DataFrame, title: str = "", log_delta: bool = True):
        self.data = data
        self.title = title
        self.log_delta = log_delta

    def figure(self) -> go.Figure:
        fig = px.scatter(
            self.data,
            x="weight",
            y="delta",
            color="node_type",
            hover_data=["node_id"],
            title=self.title,
            labels={"weight": "Poids dry/wet w", "delta": "Δ L_a"},
        )
        if self.log_delta and (self.data["delta"] > 0).all():
            fig.update_yaxes(type="log")
        return fig
