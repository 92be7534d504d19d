"""Slow reference solver and optimality checks, intended for verification only.

``ista_fit`` is a full-batch proximal gradient method with Armijo
backtracking. It shares only the loss/residual/prox primitives with the
SAGA solver, so agreement between the two is meaningful.
"""
from dataclasses import dataclass

import numpy as np

from . import core
from .data import GlmModel


@dataclass
class OracleReport:
    max_kkt_violation: float
    coordinate_gap: float = 0.0
    objective_gap: float = 0.0


def kkt_violation(G, g0, beta, params):
    """Largest subgradient-condition violation given the smooth-loss gradient."""
    l1, l2 = params.l1, params.l2
    nonzero = beta != 0
    stationarity = np.abs(G + l2 * beta + l1 * np.sign(beta))
    excess = np.maximum(np.abs(G) - l1, 0.0)
    per_coef = np.where(nonzero, stationarity, excess)
    worst = float(per_coef.max()) if per_coef.size else 0.0
    return max(worst, float(np.max(np.abs(g0))))


def kkt_check(X, y, model, params=None, reference=None):
    """Report KKT violation of ``model``; with ``reference``, also its gaps to it."""
    if params is None:
        params = core.ElasticNetParams(model.lam, model.alpha)
    G, g0 = core.gradient(X, y, model)
    report = OracleReport(kkt_violation(G, g0, model.beta, params))
    if reference is not None:
        report.coordinate_gap = float(np.max(np.abs(model.beta - reference.beta)))
        report.objective_gap = (core.objective(X, y, model, params)
                                - core.objective(X, y, reference, params))
    return report


def ista_fit(X, y, family, params, max_iters=200_000, tol=1e-10, init=None, k=None):
    """Full-batch proximal gradient descent with backtracking line search.

    Stops when the joint (beta, beta0) step has Euclidean norm <= tol.
    The returned model's ``meta`` records ``converged`` and ``iterations``.
    """
    X = np.asarray(X, dtype=np.float64)
    if init is None:
        Y = core.target_matrix(y, family, k)
        init = GlmModel.zeros(X.shape[1], Y.shape[1], family, params.lam, params.alpha)
    else:
        Y = core.target_matrix(y, family, init.k)
    beta, beta0 = init.beta.copy(), init.beta0.copy()
    n = X.shape[0]
    l1, l2 = params.l1, params.l2

    def smooth(b, b0):
        return core.loss_from_linear(X @ b + b0, Y, family)

    step = 1.0
    converged = False
    it = 0
    for it in range(1, max_iters + 1):
        A = core.residual_from_linear(X @ beta + beta0, Y, family)
        G, g0 = X.T @ A / n, A.mean(axis=0)
        f0 = smooth(beta, beta0)
        while True:
            nb = core.prox_elastic_net(beta - step * G, step * l1, step * l2)
            nb0 = beta0 - step * g0
            db, db0 = nb - beta, nb0 - beta0
            quad = (f0 + np.sum(G * db) + np.sum(g0 * db0)
                    + (np.sum(db ** 2) + np.sum(db0 ** 2)) / (2 * step))
            if smooth(nb, nb0) <= quad + 1e-15 * max(1.0, abs(f0)):
                break
            step *= 0.5
        move = np.sqrt(np.sum(db ** 2) + np.sum(db0 ** 2))
        beta, beta0 = nb, nb0
        if move <= tol:
            converged = True
            break
    return GlmModel(beta, beta0, family, params.lam, params.alpha,
                    meta={"converged": converged, "iterations": it})
