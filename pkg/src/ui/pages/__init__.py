# Pages du visualiseur de runs (entraînement, élagage, importance)
