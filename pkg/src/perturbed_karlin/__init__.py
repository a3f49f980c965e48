"""Perturbed Karlin model: simulation, limit sup-measures and verification."""

__version__ = "0.1.0"

from .analytic import Regime, regime_classify, solve_normalizer  # noqa: E402
from .karlin_process import ModelParams, simulate_path  # noqa: E402
from .rng import RngStream  # noqa: E402

__all__ = ["ModelParams", "Regime", "RngStream", "__version__", "regime_classify", "simulate_path", "solve_normalizer"]
