"""Experiment runner: configs, sweeps, exponent fits and reports."""
from .config import ExperimentConfig, Target, build_quotient, load_config
from .fitting import ScalingFit, critical_exponents, fit_exponent, leave_one_out_spread
from .report import emit_report, read_csv, write_csv
from .sweep import COLUMNS, SCHEMA, SweepResult, run_sweep

__all__ = [
    "COLUMNS",
    "ExperimentConfig",
    "SCHEMA",
    "ScalingFit",
    "SweepResult",
    "Target",
    "build_quotient",
    "critical_exponents",
    "emit_report",
    "fit_exponent",
    "leave_one_out_spread",
    "load_config",
    "read_csv",
    "run_sweep",
    "write_csv",
]
