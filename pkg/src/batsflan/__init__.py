"""Finite-length analysis of BATS codes (and LT/Raptor codes as M = 1)."""

from .model import (
    BatsModel,
    CodeParams,
    DegreeDistribution,
    ModelError,
    RankDistribution,
    Solvability,
    binom_pmf,
    hyge,
    solvability_from_rank,
    zeta,
)

__version__ = "0.1.0"
