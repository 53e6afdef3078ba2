# Composants du visualiseur de runs
