"""Figure rendering for decoder benchmark report CSVs."""
from .render import (PlotSpec, SchemaError, Series, build_series,
                     read_report, render)

__all__ = ["PlotSpec", "SchemaError", "Series", "build_series",
           "read_report", "render"]
__version__ = "0.1.0"
