"""Mini-batch SAGA for elastic-net regularized GLMs at a fixed lambda.

The gradient table keeps one residual vector per example (n x k floats)
instead of a full d x k gradient, since each example's gradient is
``outer(x_i, a_i)``. For that to hold, the l2 part of the penalty must be
handled by the proximal step rather than by the smooth gradient.
"""
import logging
from dataclasses import dataclass

import numpy as np

from . import core
from .data import GlmModel
from .errors import DivergenceError, PreconditionError
from .oracle import kkt_violation

log = logging.getLogger(__name__)

STOP_RULES = ("gradient", "lookbehind")


@dataclass(frozen=True)
class SolverConfig:
    batch_size: int = 512
    learning_rate: float = 0.1
    stop_rule: str = "gradient"
    eps_tol: float = 1e-4
    lookbehind_T: int = 5
    max_epochs: int = 500
    rng_seed: int = 0
    record_loss: bool = False

    def __post_init__(self):
        if self.batch_size < 1:
            raise PreconditionError(f"batch_size must be positive, got {self.batch_size}")
        if not self.learning_rate > 0:
            raise PreconditionError(f"learning rate must be positive, got {self.learning_rate}")
        if self.stop_rule not in STOP_RULES:
            raise PreconditionError(f"stop_rule must be one of {STOP_RULES}, got {self.stop_rule!r}")
        if not self.eps_tol > 0:
            raise PreconditionError(f"eps_tol must be positive, got {self.eps_tol}")
        if self.lookbehind_T < 1:
            raise PreconditionError(f"lookbehind_T must be >= 1, got {self.lookbehind_T}")
        if self.max_epochs < 1:
            raise PreconditionError(f"max_epochs must be >= 1, got {self.max_epochs}")


class GradientTable:
    """Stored residuals plus the running averages of their gradients."""

    def __init__(self, n, d, k):
        self.stored = np.zeros((n, k))
        self.g_avg = np.zeros((d, k))
        self.g0_avg = np.zeros(k)

    def copy(self):
        new = GradientTable.__new__(GradientTable)
        new.stored = self.stored.copy()
        new.g_avg = self.g_avg.copy()
        new.g0_avg = self.g0_avg.copy()
        return new

    def recompute(self, X):
        """Averages rebuilt from scratch out of the stored residuals."""
        n = self.stored.shape[0]
        return X.T @ self.stored / n, self.stored.mean(axis=0)


def _update(beta, beta0, table, Xb, Yb, idx, n, family, lr, l1, l2):
    # One mini-batch step; mutates table in place and returns new coefficients.
    a = core.residual_from_linear(Xb @ beta + beta0, Yb, family)
    diff = a - table.stored[idx]
    b = len(idx)
    g_diff = Xb.T @ diff / b
    g0_diff = diff.mean(axis=0)
    beta = core.prox_elastic_net(beta - lr * (g_diff + table.g_avg), lr * l1, lr * l2)
    beta0 = beta0 - lr * (g0_diff + table.g0_avg)
    table.stored[idx] = a
    table.g_avg += (b / n) * g_diff
    table.g0_avg += (b / n) * g0_diff
    return beta, beta0


def saga_step(model, table, X, y, batch, lr, lam, alpha):
    """One SAGA iteration over ``batch``; returns a new model and table."""
    X = np.asarray(X, dtype=np.float64)
    Y = core.target_matrix(y, model.family, model.k)
    idx = np.asarray(batch, dtype=np.int64)
    if idx.size == 0 or idx.min() < 0 or idx.max() >= X.shape[0]:
        raise PreconditionError("batch indices out of range")
    if table.stored.shape != (X.shape[0], model.k) or table.g_avg.shape != model.beta.shape:
        raise PreconditionError("gradient table dimensions do not match data/model")
    table = table.copy()
    with np.errstate(over="ignore", invalid="ignore"):
        beta, beta0 = _update(model.beta, model.beta0, table, X[idx], Y[idx], idx,
                              X.shape[0], model.family, lr, lam * alpha, lam * (1.0 - alpha))
    if not (np.isfinite(beta).all() and np.isfinite(beta0).all()):
        raise DivergenceError("non-finite coefficients after SAGA step; try a smaller learning rate")
    return model.copy(beta=beta, beta0=beta0, lam=lam, alpha=alpha), table


def check_stop_gradient(prev_model, cur_model, eps_tol):
    """Coefficient change (beta and beta0 jointly) is at most ``eps_tol``."""
    change = (np.sum((cur_model.beta - prev_model.beta) ** 2)
              + np.sum((cur_model.beta0 - prev_model.beta0) ** 2))
    return bool(np.sqrt(change) <= eps_tol)


def check_stop_lookbehind(loss_history, eps_tol, T):
    """No epoch in the last ``T`` improved on the earlier best by more than ``eps_tol``."""
    if len(loss_history) <= T:
        return False
    best_before = min(loss_history[:-T])
    return min(loss_history[-T:]) > best_before - eps_tol


def _bias_only_if_optimal(X, Y, family, params, n):
    # Exact screen: beta = 0 with the bias-only intercept is optimal iff every
    # |gradient| <= lambda * alpha. The slack only absorbs rounding in lambda_max.
    if params.l1 <= 0:
        return None
    b0 = core.bias_only_intercept(Y, family)
    A = core.residual_from_linear(np.broadcast_to(b0, Y.shape), Y, family)
    G = X.T @ A / n
    if np.max(np.abs(G)) <= params.l1 * (1.0 + 1e-9):
        return b0
    return None


def fit_fixed_lambda(X, y, family, params, init=None, config=None, k=None):
    """Fit an elastic-net GLM at one (lambda, alpha) with mini-batch SAGA.

    The returned model's ``meta`` holds ``converged``, ``epochs``,
    ``kkt_violation`` and, when requested, ``loss_history``. Hitting
    ``max_epochs`` is not an error; it only clears ``converged``.
    """
    config = config or SolverConfig()
    X = np.asarray(X, dtype=np.float64)
    n, d = X.shape
    Y = core.target_matrix(y, family, k if init is None else init.k)
    if Y.shape[0] != n:
        raise PreconditionError(f"{Y.shape[0]} targets for {n} examples")
    kk = Y.shape[1]
    if init is None:
        init = GlmModel.zeros(d, kk, family)
    if init.beta.shape != (d, kk) or init.family != family:
        raise PreconditionError(
            f"initial model {init.family} {init.beta.shape} does not match data ({d}, {kk})")

    b0 = _bias_only_if_optimal(X, Y, family, params, n)
    if b0 is not None:
        beta, beta0 = np.zeros((d, kk)), b0
        converged, epoch, losses = True, 0, []
    else:
        beta, beta0, converged, epoch, losses = _run_epochs(
            X, Y, family, params, init, config)

    A = core.residual_from_linear(X @ beta + beta0, Y, family)
    meta = {"converged": converged, "epochs": epoch,
            "kkt_violation": kkt_violation(X.T @ A / n, A.mean(axis=0), beta, params)}
    if losses:
        meta["loss_history"] = losses
    return GlmModel(beta, beta0, family, params.lam, params.alpha, meta=meta)


def _run_epochs(X, Y, family, params, init, config):
    n, d = X.shape
    kk = Y.shape[1]
    l1, l2 = params.l1, params.l2
    lr = config.learning_rate
    beta, beta0 = init.beta.copy(), init.beta0.copy()
    table = GradientTable(n, d, kk)
    rng = np.random.default_rng(config.rng_seed)
    bs = min(config.batch_size, n)
    losses = []
    converged = False
    epoch = 0
    for epoch in range(1, config.max_epochs + 1):
        prev_beta, prev_beta0 = beta.copy(), beta0.copy()
        perm = rng.permutation(n)
        with np.errstate(over="ignore", invalid="ignore"):
            for start in range(0, n, bs):
                idx = perm[start:start + bs]
                beta, beta0 = _update(beta, beta0, table, X[idx], Y[idx], idx, n, family,
                                      lr, l1, l2)
        if not (np.isfinite(beta).all() and np.isfinite(beta0).all()):
            raise DivergenceError(
                f"solver diverged at epoch {epoch} (lambda={params.lam:.6g}); "
                f"try a learning rate smaller than {lr}", epoch=epoch)
        if config.stop_rule == "lookbehind" or config.record_loss:
            Z = X @ beta + beta0
            losses.append(core.loss_from_linear(Z, Y, family) + core.penalty(beta, params))
        if config.stop_rule == "gradient":
            with np.errstate(over="ignore"):
                change = np.sqrt(np.sum((beta - prev_beta) ** 2)
                                 + np.sum((beta0 - prev_beta0) ** 2))
            if change <= config.eps_tol:
                converged = True
                break
        elif check_stop_lookbehind(losses, config.eps_tol, config.lookbehind_T):
            converged = True
            break
    if not converged:
        log.warning("lambda=%.6g: max_epochs=%d reached without meeting the stop rule",
                    params.lam, config.max_epochs)
    return beta, beta0, converged, epoch, losses
