"""Experiment drivers: sweeps, observation, outputs, smoke checks, CLI."""

from .observe import ObservationReport, run_observation
from .outputs import emit_outputs, manifest_text, series_csv_text
from .selfcheck import CheckResult, self_check
from .sweeps import BoundReport, run_double_limit_sweep, run_single_limit_sweep

__all__ = [
    "BoundReport", "ObservationReport", "CheckResult",
    "run_single_limit_sweep", "run_double_limit_sweep", "run_observation",
    "emit_outputs", "manifest_text", "series_csv_text", "self_check",
]
