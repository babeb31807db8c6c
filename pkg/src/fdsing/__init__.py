"""Numerical verification lab for persistent singular solutions of u_t = Δu^m."""
from __future__ import annotations

from .regimes import ProblemParams, check_assumption_A2, classify_singularity_regime, critical_exponents

__all__ = ["ProblemParams", "check_assumption_A2", "classify_singularity_regime", "critical_exponents"]
__version__ = "0.1.0"
