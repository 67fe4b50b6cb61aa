"""Discrete sparse domination for maximally modulated singular integrals on the circle."""
from . import dyadic, operators, signal, sparse
from ._accel import backend, set_workers
from .dyadic import DyadicCube, Interval, SparseFamily, shifted_cover, sparseness_check
from .operators import (ModulatedMaximalSup, ModulatedSup, OperatorProfile, grand_sharp_field,
                        kappa_estimate, make_profile)
from .signal import Signal
from .sparse import lerner_decompose, sparse_dominate, verify_domination

__version__ = "0.1.0"

__all__ = [
    "DyadicCube", "Interval", "ModulatedMaximalSup", "ModulatedSup", "OperatorProfile", "Signal",
    "SparseFamily", "backend", "dyadic", "grand_sharp_field", "kappa_estimate", "lerner_decompose",
    "make_profile", "operators", "set_workers", "shifted_cover", "signal", "sparse",
    "sparse_dominate", "sparseness_check", "verify_domination",
]
