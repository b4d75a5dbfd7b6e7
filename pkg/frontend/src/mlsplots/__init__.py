"""mlsplots: turn mlsim run outputs into figures.

This package talks to the simulator only through its emitted files: the
trajectory/stability/atlas/jacobian CSV schemas, the JSON reports, and the
binary field snapshots.  It never imports the simulator.
"""

__version__ = "0.1.0"

from .render import FigureSpec, render, load_spec

__all__ = ["FigureSpec", "render", "load_spec"]
