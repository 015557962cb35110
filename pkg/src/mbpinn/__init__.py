"""Bayesian PINN experiment engine: HMC and Adam over sine MLPs and Fourier-feature networks."""

from .bench import GridReport, RunResult, posterior_predict, rel, run_experiment, run_grid
from .config import ExperimentConfig, GridConfig
from .problems import make_problem

__version__ = "0.1.0"

__all__ = ["ExperimentConfig", "GridConfig", "GridReport", "RunResult", "make_problem",
           "posterior_predict", "rel", "run_experiment", "run_grid", "__version__"]
