"""Page d'élagage : progression par tour et journal des essais."""

import pandas as pd
import streamlit as st

from src.data.reports import RunReport
from src.ui.components.charts import BarChart, ProgressChart
from src.ui.components.tables import TrialTable
from src.ui.components.widgets import RatioBadge


class PruningPage:
    """Progression de la recherche et ratios par type."""

    def __init__(self, report: RunReport, progress: pd.DataFrame, trials: pd.DataFrame):
        self.report = report
        self.progress = progress
        self.trials = trials

    def type_ratios(self) -> pd.Series:
        ratios = self.report.metrics.get("per_type_ratio", {})
        return pd.Series(ratios, dtype=float)

    def render(self):
        st.subheader("✂️ Élagage")

        if self.progress.empty:
            st.info("Exécution sans élagage (commande fit)")
        else:
            ProgressChart(self.progress, title="Progression par tour").render()

        ratios = self.type_ratios()
        if not ratios.empty:
            BarChart(
                ratios,
                title="Ratio d'élagage par type",
                x_label="Type",
                y_label="Ratio",
                y_range=(0, 1),
            ).render()
            st.markdown(" · ".join(RatioBadge(t, r).render() for t, r in ratios.items()))

        st.divider()
        TrialTable(self.trials).render()
