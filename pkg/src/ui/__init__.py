"""UI module - Dashboard Streamlit de lecture des exécutions."""

from src.ui.components.charts import BarChart, ImportanceScatter, LossTraceChart, ProgressChart
from src.ui.components.tables import DataTable, TrialTable
from src.ui.components.widgets import MetricCard, RatioBadge

__all__ = [
    "BarChart",
    "DataTable",
    "ImportanceScatter",
    "LossTraceChart",
    "MetricCard",
    "ProgressChart",
    "RatioBadge",
    "TrialTable",
]
