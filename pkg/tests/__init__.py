# Tests de mixgraph
