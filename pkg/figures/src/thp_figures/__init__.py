"""Figure rendering for transceiver-design experiment outputs."""

from .data import EmptyDataError, MissingColumnError, ResultData, read_result_csv
from .plots import FIGURE_KINDS, build_figure, plotted_series, required_columns
from .render import FigureSpec, render

__version__ = "0.1.0"

__all__ = [
    "EmptyDataError",
    "FIGURE_KINDS",
    "FigureSpec",
    "MissingColumnError",
    "ResultData",
    "build_figure",
    "plotted_series",
    "read_result_csv",
    "render",
    "required_columns",
    "__version__",
]
