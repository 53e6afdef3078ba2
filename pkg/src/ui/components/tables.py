"""Composants de tableaux de données."""

from typing import Optional

import pandas as pd
import streamlit as st


class DataTable:
    """Tableau de données configurable."""

    def __init__(
        self,
        data: pd.DataFrame,
        title: Optional[str] = None,
        height: int = 400,
        use_container_width: bool = True
    ):
        self.data = data
        self.title = title
        self.height = height
        self.use_container_width = use_container_width

    def render(self):
        if self.title:
            st.subheader(self.title)

        st.dataframe(
            self.data,
            use_container_width=self.use_container_width,
            height=self.height
        )


class TrialTable:
    """Journal des essais d'élagage, acceptés en vert."""

    def __init__(self, data: pd.DataFrame, title: str = "Essais d'élagage"):
        self.data = data
        self.title = title

    def display_frame(self) -> pd.DataFrame:
        """Colonnes renommées, candidats sous forme de texte."""
        df = self.data.copy()
        if "candidates" in df:
            df["candidates"] = df["candidates"].apply(lambda ids: ", ".join(str(i) for i in ids))
        return df.rename(columns={
            "round": "Tour",
            "sampler": "Stratégie",
            "candidates": "Candidats",
            "threshold": "Seuil",
            "accepted": "Accepté",
        })

    def render(self):
        if self.data.empty:
            st.info("Aucun essai enregistré")
            return

        st.subheader(self.title)

        def color_row(row):
            color = "background-color: #ccffcc" if row["Accepté"] else ""
            return [color] * len(row)

        styled = self.display_frame().style.apply(color_row, axis=1)
        st.dataframe(styled, use_container_width=True)
