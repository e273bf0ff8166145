"""Regenerates the simulator's reference figures from its CSV outputs."""

from .render import FIGURE_IDS, FigureSpec, SchemaError, build_figure, render

__all__ = ["FIGURE_IDS", "FigureSpec", "SchemaError", "build_figure", "render"]

__version__ = "0.1.0"
