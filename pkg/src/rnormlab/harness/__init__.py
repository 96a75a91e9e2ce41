"""Datasets, error metrics and reproducible experiment sweeps."""

from .datasets import (
    Dataset,
    cosine_rho,
    cosine_target,
    gen_cosine_dataset,
    gen_full_parity,
    gen_sampled_parity,
)
from .experiments import CSV_HEADER, EXPERIMENTS, ExperimentRecord, records_to_csv, run_experiment
from .metrics import l2_error, mse_clip, neuron_parity_correlation, sup_error

__all__ = [
    "CSV_HEADER",
    "EXPERIMENTS",
    "Dataset",
    "ExperimentRecord",
    "cosine_rho",
    "cosine_target",
    "gen_cosine_dataset",
    "gen_full_parity",
    "gen_sampled_parity",
    "l2_error",
    "mse_clip",
    "neuron_parity_correlation",
    "records_to_csv",
    "run_experiment",
    "sup_error",
]
