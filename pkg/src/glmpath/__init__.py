"""Sparse elastic-net GLM paths with a mini-batch SAGA solver, and tools for
debugging the resulting linear decision layers."""
from .core import ElasticNetParams, objective, prox_elastic_net, residuals, smooth_loss
from .data import (GlmModel, Standardizer, TargetVector, load_matrix, load_model, save_matrix,
                   save_model, standardize)
from .errors import DivergenceError, FormatError, GlmPathError, PreconditionError
from .path import (RegularizationPath, feature_ordering, fit_path, lambda_max, lambda_schedule,
                   select_model)
from .saga import (SolverConfig, check_stop_gradient, check_stop_lookbehind, fit_fixed_lambda,
                   saga_step)

__version__ = "0.1.0"
