"""Application principale Streamlit : visualisation des exécutions mixgraph."""

import os
import sys
from typing import Optional

import streamlit as st
from dotenv import load_dotenv

# Ajouter le répertoire racine au path
sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.dirname(__file__))))

from src.core.config import RUNS_DIR_ENV
from src.data.reports import RunDirectory, list_runs
from src.ui.components.widgets import MetricCard, format_loss, format_ratio

load_dotenv()

DEFAULT_RUNS_DIR = os.getenv(RUNS_DIR_ENV, "runs")


def sidebar() -> Optional[RunDirectory]:
    """Affiche la sidebar et retourne le dossier d'exécution choisi."""
    st.sidebar.title("🎛️ mixgraph")
    st.sidebar.divider()

    st.sidebar.subheader("Exécutions")
    runs_dir = st.sidebar.text_input("Dossier des exécutions", value=DEFAULT_RUNS_DIR)
    runs = list_runs(runs_dir)
    if not runs:
        st.sidebar.info("ℹ️ Aucun report.json trouvé")
        return None

    st.sidebar.caption(f"📁 {len(runs)} exécution(s)")
    name = st.sidebar.selectbox("Exécution", options=runs, index=len(runs) - 1)
    if st.sidebar.button("🔄 Recharger", type="secondary"):
        st.rerun()
    return RunDirectory(os.path.join(runs_dir, name))


def render_kpis(report):
    """Indicateurs principaux de l'exécution."""
    metrics = report.metrics
    col1, col2, col3, col4 = st.columns(4)
    with col1:
        MetricCard("Commande", report.command).render()
    with col2:
        MetricCard(
            "Processeurs",
            f"{metrics['processor_count']} / {metrics['console_processor_count']}",
        ).render()
    with col3:
        MetricCard("Ratio d'élagage", format_ratio(metrics["total_ratio"])).render()
    with col4:
        MetricCard(
            "L_a final",
            format_loss(report.final_loss.get("L_a")),
            help_text=f"Console: {format_loss(report.console_loss.get('L_a'))}",
        ).render()


def main():
    """Point d'entrée du dashboard."""
    st.set_page_config(
        page_title="mixgraph",
        page_icon="🎛️",
        layout="wide"
    )

    from src.ui.pages.importance import ImportancePage
    from src.ui.pages.pruning import PruningPage
    from src.ui.pages.training import TrainingPage

    run = sidebar()
    if run is None:
        st.title("🎛️ mixgraph")
        st.info("Lancer `mixgraph fit` ou `mixgraph prune` avec --out-dir dans le dossier des exécutions.")
        return

    report = run.report()
    st.title(f"🎛️ {os.path.basename(run.path)}")
    render_kpis(report)

    if report.timings:
        st.caption(" · ".join(f"{k}: {v:.1f} s" for k, v in report.timings.items()))

    st.divider()
    tab1, tab2, tab3 = st.tabs(["📉 Entraînement", "✂️ Élagage", "🔬 Importance"])
    with tab1:
        TrainingPage(report, run.loss_trace()).render()
    with tab2:
        PruningPage(report, run.progress(), run.trials()).render()
    with tab3:
        ImportancePage(run.importance()).render()
