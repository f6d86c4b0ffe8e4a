"""Publication-style figures from qzeno run directories.

Reads only the documented run outputs (``timeseries.csv``,
``histogram.json``) and writes static PNG + SVG images.
"""

__version__ = "0.1.0"

from .figures import FigureSpec, render_fig1_style, render_fig2_style

__all__ = ["FigureSpec", "render_fig1_style", "render_fig2_style"]
