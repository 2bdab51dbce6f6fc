"""Plotting companion for the SPDE solver harness.

Consumes the harness CSV (the only contract with the solver package) and
renders log-log strong-convergence figures with error bars, reference-slope
guides, and the fitted orders the harness wrote into its comment lines.
"""

from .figure import PlotJob, build_figure, render
from .report import Report, Row, SchemaError, parse_report

__all__ = ["PlotJob", "Report", "Row", "SchemaError", "build_figure",
           "parse_report", "render"]
