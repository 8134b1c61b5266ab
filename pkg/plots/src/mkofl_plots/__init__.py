"""Figure rendering for simulation CSV artifacts."""

__version__ = "0.1.0"

from .figures import (FigureSpec, SchemaError, Table, build_figure,
                      plot_fraction, plot_mse_compare, read_table, render)

__all__ = [
    "__version__",
    "FigureSpec", "SchemaError", "Table",
    "read_table", "build_figure", "render",
    "plot_fraction", "plot_mse_compare",
]
