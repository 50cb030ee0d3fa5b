"""Partial linear additive models with selected interactions, plus the
baselines, evaluation tools and Monte Carlo harness used to study them."""

from .data import Dataset, ingest_csv
from .errors import PlamError
from .evaluation import auc, auc_test, gauge, kfold_cv, mcs, mse, potency
from .gam import AdditiveModel, fit_gam
from .gamla import fit_gama, fit_gamla, fit_partial_linear, marginal_effects
from .models import ModelSpec, fit_spec
from .simulation import DgpConfig, gen_dgp, run_monte_carlo

__version__ = "0.1.0"

__all__ = [
    "AdditiveModel", "Dataset", "DgpConfig", "ModelSpec", "PlamError", "auc", "auc_test",
    "fit_gam", "fit_gama", "fit_gamla", "fit_partial_linear", "fit_spec", "gauge", "gen_dgp",
    "ingest_csv", "kfold_cv", "marginal_effects", "mcs", "mse", "potency", "run_monte_carlo",
]
