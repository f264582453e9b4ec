"""Experiment sweeps, report encoding and the command line interface."""

from .report import emit_report
from .sweep import KINDS, ResultTable, SweepSpec, run_sweep, selection_grid

__all__ = ["emit_report", "KINDS", "ResultTable", "SweepSpec", "run_sweep", "selection_grid"]
