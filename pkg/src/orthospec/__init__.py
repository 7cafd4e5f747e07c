"""Asymptotic theory and simulation of trimmed spectral initialization for
phase retrieval with sub-sampled Haar sensing matrices."""

from __future__ import annotations

__version__ = "0.1.0"

from .errors import (
    DimensionError,
    DomainError,
    IntegrandError,
    NoMinimum,
    NoTransition,
    SolverError,
    UnboundedTrimmer,
)
from .model import Model, QuadratureSettings, expect, sample_trimmed
from .trimmers import TrimmingFunction, make_trimmer, normalize_trimmer
from .theory import Regime, TheoryPrediction, predict, rho_opt, vartheta_star
from .freeconv import bulk_density, bulk_support

__all__ = [
    "DimensionError",
    "DomainError",
    "IntegrandError",
    "Model",
    "NoMinimum",
    "NoTransition",
    "QuadratureSettings",
    "Regime",
    "SolverError",
    "TheoryPrediction",
    "TrimmingFunction",
    "UnboundedTrimmer",
    "__version__",
    "bulk_density",
    "bulk_support",
    "expect",
    "make_trimmer",
    "normalize_trimmer",
    "predict",
    "rho_opt",
    "sample_trimmed",
    "vartheta_star",
]
