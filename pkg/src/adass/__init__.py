"""Sparse Bayesian factor analysis with an adaptive spike-and-slab prior."""

__version__ = "0.1.0"

from .diagnostics import align_loadings, posterior_mode, scaled_spectral_loss, summarize
from .estimators import run_estimators
from .gibbs import ChainSettings, ChainTrace, FactorState, gibbs_sweep, initial_state, run_chain
from .prior import ModelConfig
from .rand_dists import RngHandle, sample_gig
from .synth import Dataset, SyntheticTruth, generate_truth, load_dataset, sample_data, save_dataset

__all__ = [
    "ChainSettings", "ChainTrace", "Dataset", "FactorState", "ModelConfig", "RngHandle",
    "SyntheticTruth", "align_loadings", "generate_truth", "gibbs_sweep", "initial_state",
    "load_dataset", "posterior_mode", "run_chain", "run_estimators", "sample_data",
    "sample_gig", "save_dataset", "scaled_spectral_loss", "summarize",
]
