"""Experiment orchestration, fitting, self-test and report emission."""
from .config import ExperimentConfig, defaults, load
from .experiments import (DecayReport, ExperimentResult, fit_exponential, run, run_decay,
                          run_dominate, run_kappa, run_lerner, run_sharp_check)
from .report import write_report
from .selftest import run_selftest

__all__ = [
    "DecayReport", "ExperimentConfig", "ExperimentResult", "defaults", "fit_exponential", "load",
    "run", "run_decay", "run_dominate", "run_kappa", "run_lerner", "run_selftest",
    "run_sharp_check", "write_report",
]
