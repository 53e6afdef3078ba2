"""Page d'entraînement : traces de loss."""

import pandas as pd
import streamlit as st

from src.data.reports import RunReport
from src.ui.components.charts import LossTraceChart
from src.ui.components.widgets import MetricCard, format_loss


class TrainingPage:
    """Courbes de loss des phases console et prune."""

    LOSS_TERMS = ["L_a", "L_lr", "L_m", "L_s", "L_g", "L_p", "total"]

    def __init__(self, report: RunReport, trace: pd.DataFrame):
        self.report = report
        self.trace = trace

    def loss_table(self) -> pd.DataFrame:
        """Termes de loss de la console et du graphe final côte à côte."""
        return pd.DataFrame(
            {
                "Console": [self.report.console_loss.get(k) for k in self.LOSS_TERMS],
                "Final": [self.report.final_loss.get(k) for k in self.LOSS_TERMS],
            },
            index=self.LOSS_TERMS,
        )

    def render(self):
        st.subheader("📉 Entraînement")

        if self.trace.empty:
            st.info("Aucune trace de loss dans ce dossier")
        else:
            column = st.selectbox("Terme", ["L_a", "L_g", "L_p", "total"], index=0)
            window = st.slider("Fenêtre de lissage", 1, 500, 100)
            LossTraceChart(self.trace, column=column, window=window).render()

        st.divider()
        col1, col2 = st.columns(2)
        with col1:
            MetricCard("L_a console", format_loss(self.report.console_loss.get("L_a"))).render()
        with col2:
            MetricCard("L_a final", format_loss(self.report.final_loss.get("L_a"))).render()
        st.dataframe(self.loss_table(), use_container_width=True)
