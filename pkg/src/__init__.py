"""mixgraph - Console de mixage différentiable et recherche de graphes élagués."""

__version__ = "0.1.0"
