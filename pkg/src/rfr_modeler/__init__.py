"""
rfr_modeler: ODE models of chaotic systems from scalar time series.

Features:
- Reference simulators (Kuramoto-Sivashinsky Galerkin, Mackey-Glass, GOY shell model, coupled Rossler)
- Delay-coordinate embedding with autocorrelation-based delay selection
- Noise-robust central-difference derivatives with a stride scan
- Gaussian radial-function regression on lattice centers with ridge regularization
- Model evaluation: delay-structure error, density overlap, forecast valid times, laminar statistics
- Stagger-and-step trajectories on model chaotic saddles
- Deterministic, seeded end-to-end pipeline with manifest and run report
"""

__version__ = "0.1.0"

from .config import ExperimentConfig, apply_preset, system_defaults
from .model import RfrModel, load, predict, save
from .pipeline import Pipeline, run_pipeline

__all__ = [
    "ExperimentConfig",
    "Pipeline",
    "RfrModel",
    "apply_preset",
    "load",
    "predict",
    "run_pipeline",
    "save",
    "system_defaults",
    "__version__",
]
