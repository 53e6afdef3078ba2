"""Page d'importance des processeurs."""

import math
from typing import Optional

import pandas as pd
import streamlit as st

from src.core.pruning import frame_correlation
from src.ui.components.charts import ImportanceScatter
from src.ui.components.tables import DataTable


class ImportancePage:
    """Poids dry/wet contre augmentation de loss (sortie de `mixgraph scan`)."""

    def __init__(self, importance: Optional[pd.DataFrame]):
        self.importance = importance

    def render(self):
        st.subheader("🔬 Importance des processeurs")

        if self.importance is None or self.importance.empty:
            st.info("Pas de importance.csv ; lancer `mixgraph scan --out <run>/importance.csv`")
            return

        ImportanceScatter(self.importance, title="w contre Δ L_a").render()

        correlation = frame_correlation(self.importance)
        cols = st.columns(len(correlation))
        for col, (node_type, rho) in zip(cols, correlation.items()):
            with col:
                st.metric(f"ρ {node_type}", "–" if math.isnan(rho) else f"{rho:.2f}")

        DataTable(self.importance.sort_values("delta", ascending=False), title="Détail").render()
