"""Regularization paths: lambda_max, log-spaced schedules, warm starts, selection."""
import csv
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from . import core
from .data import GlmModel
from .errors import DivergenceError, PreconditionError
from .saga import SolverConfig, fit_fixed_lambda

log = logging.getLogger(__name__)

NEVER = math.inf

SUMMARY_COLUMNS = ("lambda", "train_loss", "val_metric", "nnz_total", "nnz_per_class", "converged")


def lambda_max(X, y, alpha, family="gaussian", k=None):
    """Smallest lambda at which the zero coefficient matrix is optimal.

    Uses the bias-only residuals in place of the raw targets, which for
    gaussian targets amounts to centering ``y``.
    """
    if not alpha > 0:
        raise PreconditionError("lambda_max is undefined for alpha = 0 (pure ridge)")
    X = np.asarray(X, dtype=np.float64)
    Y = core.target_matrix(y, family, k)
    A = Y - core.mean_response(np.broadcast_to(core.bias_only_intercept(Y, family), Y.shape),
                               family)
    lam = float(np.max(np.abs(X.T @ A))) / (X.shape[0] * alpha)
    if lam == 0.0:
        raise PreconditionError(
            "lambda_max is 0: targets carry no signal beyond the intercept (degenerate problem)")
    return lam


def lambda_schedule(lam_max, K=100, epsilon=1e-3):
    """K log-spaced values from lam_max down to epsilon * lam_max."""
    if not lam_max > 0:
        raise PreconditionError(f"lam_max must be positive, got {lam_max}")
    if int(K) != K or K < 2:
        raise PreconditionError(f"K must be an integer >= 2, got {K}")
    if not 0 < epsilon < 1:
        raise PreconditionError(f"epsilon must lie in (0, 1), got {epsilon}")
    lams = [lam_max * epsilon ** (t / (K - 1)) for t in range(K)]
    lams[0], lams[-1] = lam_max, lam_max * epsilon
    return lams


@dataclass
class PathEntry:
    lam: float
    model: GlmModel
    train_loss: float
    val_metric: float
    nnz_total: int
    converged: bool = True


@dataclass
class RegularizationPath:
    entries: list
    alpha: float
    K: int
    epsilon: float
    family: str = "gaussian"
    error: str = None  # set when the path was cut short by divergence
    extra: dict = field(default_factory=dict)

    @property
    def higher_is_better(self):
        return self.family != "gaussian"

    @property
    def lambdas(self):
        return [e.lam for e in self.entries]

    def __len__(self):
        return len(self.entries)

    def __getitem__(self, i):
        return self.entries[i]


def validation_metric(X, y, model):
    """Accuracy for classifiers, mean squared error for regression."""
    pred = core.predict(X, model)
    if model.family == "gaussian":
        yv = y.values if hasattr(y, "values") else np.asarray(y, dtype=np.float64)
        return float(np.mean((pred - yv) ** 2))
    yv = y.values if hasattr(y, "values") else np.asarray(y)
    return float(np.mean(pred == yv))


def fit_path(X_train, y_train, X_val, y_val, family, alpha, K=100, epsilon=1e-3,
             solver_config=None, k=None, on_entry=None):
    """Fit the warm-started path from lambda_max down to epsilon * lambda_max.

    Each lambda gets a fresh gradient table. If the solver diverges, the
    prefix fitted so far is returned with ``error`` set.
    """
    solver_config = solver_config or SolverConfig()
    X_train = np.asarray(X_train, dtype=np.float64)
    if k is None and hasattr(y_train, "k") and family == "multinomial":
        k = y_train.k
    Y = core.target_matrix(y_train, family, k)
    lam_max = lambda_max(X_train, y_train, alpha, family, Y.shape[1])
    lams = lambda_schedule(lam_max, K, epsilon)
    model = GlmModel.zeros(X_train.shape[1], Y.shape[1], family)
    path = RegularizationPath([], alpha, K, epsilon, family)
    for t, lam in enumerate(lams):
        params = core.ElasticNetParams(lam, alpha)
        try:
            model = fit_fixed_lambda(X_train, y_train, family, params, init=model,
                                     config=solver_config, k=Y.shape[1])
        except DivergenceError as exc:
            path.error = f"entry {t} (lambda={lam:.6g}): {exc}"
            log.error("path aborted at %s", path.error)
            break
        Z = X_train @ model.beta + model.beta0
        entry = PathEntry(lam, model, core.loss_from_linear(Z, Y, family),
                          validation_metric(X_val, y_val, model), model.nnz_total,
                          bool(model.meta.get("converged", True)))
        path.entries.append(entry)
        log.info("[%d/%d] lambda=%.4g nnz=%d val=%.4f epochs=%s", t + 1, K, lam,
                 entry.nnz_total, entry.val_metric, model.meta.get("epochs"))
        if on_entry is not None:
            on_entry(t, entry)
    return path


def select_model(path, tolerance=0.05, min_nnz=1):
    """Index of the sparsest entry whose validation metric is within ``tolerance`` of the best.

    ``tolerance`` is absolute (0.05 = 5 accuracy points). For regression
    paths the metric is MSE, so "within" means at most best + tolerance.
    Entries with fewer than ``min_nnz`` nonzeros are skipped unless none
    remain. Ties go to the larger lambda.
    """
    if not path.entries:
        raise PreconditionError("cannot select from an empty path")
    pool = [i for i, e in enumerate(path.entries) if e.nnz_total >= min_nnz]
    if not pool:
        pool = list(range(len(path.entries)))
    sign = 1.0 if path.higher_is_better else -1.0
    best = max(sign * path.entries[i].val_metric for i in pool)
    ok = [i for i in pool if sign * path.entries[i].val_metric >= best - tolerance]
    return min(ok, key=lambda i: (path.entries[i].nnz_total, -path.entries[i].lam, i))


@dataclass
class FeatureOrdering:
    entry_index: np.ndarray  # float array; NEVER (inf) for features that never enter

    @property
    def order(self):
        """Feature indices sorted by entry point, ties by lower index."""
        return np.argsort(self.entry_index, kind="stable")


def feature_ordering(path):
    """First path index at which each feature has a nonzero coefficient in any class."""
    if not path.entries:
        raise PreconditionError("cannot order features on an empty path")
    d = path.entries[0].model.d
    entry = np.full(d, NEVER)
    for t, e in enumerate(path.entries):
        active = np.any(e.model.beta != 0, axis=1)
        fresh = active & np.isinf(entry)
        entry[fresh] = t
    return FeatureOrdering(entry)


def write_summary_csv(path, fh, extra_columns=None):
    """Write one row per entry; ``extra_columns`` maps name -> per-entry values."""
    extra_columns = extra_columns or {}
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(list(SUMMARY_COLUMNS) + list(extra_columns))
    for i, e in enumerate(path.entries):
        row = [repr(float(e.lam)), repr(float(e.train_loss)), repr(float(e.val_metric)),
               e.nnz_total, ";".join(str(int(c)) for c in e.model.nnz_per_class),
               int(e.converged)]
        row += [repr(float(v[i])) for v in extra_columns.values()]
        w.writerow(row)


def read_summary_csv(fh):
    rows = []
    for row in csv.DictReader(fh):
        rows.append({
            "lambda": float(row["lambda"]),
            "train_loss": float(row["train_loss"]),
            "val_metric": float(row["val_metric"]),
            "nnz_total": int(row["nnz_total"]),
            "nnz_per_class": [int(c) for c in row["nnz_per_class"].split(";") if c],
            "converged": bool(int(row["converged"])),
            **{k: float(v) for k, v in row.items() if k not in SUMMARY_COLUMNS},
        })
    return rows
