"""Bayesian oblique regression tree with support-gated Gaussian-process leaves."""
from .datasets import Dataset, load_bundled, read_csv
from .exceptions import InvalidInput, NumericalError
from .gating import SupportRegion, calibrate_tau, fit_support, gate_weight, gated_predict, mahalanobis
from .gp import GpLeafModel, KernelParams, fit_gp, gp_log_marginal_likelihood, gp_predict, kernel_eval
from .persistence import load_model, save_model
from .predictor import PredictiveDistribution, predict, predict_baseline, predict_batch
from .tree import SplitParams, SplitPosterior, Tree, TreeConfig, fit_split, fit_tree, route, sample_split

__version__ = "0.1.0"
