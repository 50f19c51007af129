"""Desk-scale thermal operations: states, coherent modes, catalytic coherence,
resource random walks, and correlated-catalyst conversion protocols."""

__version__ = "0.1.0"
