"""Stochastic Schroedinger equations with engineered noise hierarchies."""
from .noise import (
    ConfigurationError,
    NoiseIncrement,
    RngStream,
    TrajectoryState,
    ito_step,
    sample_second_order,
    sample_third_order,
)
from .ensemble import EnsembleStats, ObservableStats, SDEModel, run_ensemble

__version__ = "0.1.0"
