"""GLM families, the elastic-net proximal operator, and objective evaluation.

Shapes: ``X`` is (n, d), coefficients ``beta`` are (d, k) and intercepts
``beta0`` are (k,). Gaussian and binomial models have k = 1; multinomial
models have one column per class.
"""
from dataclasses import dataclass

import numpy as np
from scipy.special import expit, logsumexp, softmax

from .data import TargetVector
from .errors import FormatError, PreconditionError


@dataclass(frozen=True)
class ElasticNetParams:
    lam: float
    alpha: float

    def __post_init__(self):
        if not self.lam >= 0:
            raise PreconditionError(f"lambda must be nonnegative, got {self.lam}")
        if not 0.0 <= self.alpha <= 1.0:
            raise PreconditionError(f"alpha must lie in [0, 1], got {self.alpha}")

    @property
    def l1(self):
        return self.lam * self.alpha

    @property
    def l2(self):
        return self.lam * (1.0 - self.alpha)


def prox_elastic_net(beta, lam1, lam2):
    """Elementwise minimizer of 0.5*(z - beta)**2 + lam1*|z| + 0.5*lam2*z**2."""
    beta = np.asarray(beta, dtype=np.float64)
    out = np.sign(beta) * np.maximum(np.abs(beta) - lam1, 0.0) / (1.0 + lam2)
    return out if out.ndim else float(out)


def target_matrix(y, family, k=None):
    """Encode targets as the (n, k) matrix the residuals subtract.

    Multinomial labels are one-hot encoded; ``k`` defaults to the
    TargetVector's class count, else to ``max(label) + 1``.
    """
    if isinstance(y, TargetVector):
        if k is None and family == "multinomial":
            k = y.k
        y = y.values
    y = np.asarray(y)
    if y.ndim != 1:
        raise FormatError(f"targets must be 1-D, got shape {y.shape}")
    if family == "multinomial":
        labels = y.astype(np.int64)
        if k is None:
            k = int(labels.max()) + 1
        if labels.size and (labels.min() < 0 or labels.max() >= k):
            raise FormatError(f"class labels must lie in [0, {k})")
        Y = np.zeros((len(labels), k))
        Y[np.arange(len(labels)), labels] = 1.0
        return Y
    return y.astype(np.float64)[:, None]


def _check_shapes(X, Y, beta):
    if X.shape[0] != Y.shape[0]:
        raise FormatError(f"{Y.shape[0]} targets for {X.shape[0]} examples")
    if X.shape[1] != beta.shape[0]:
        raise FormatError(f"model has {beta.shape[0]} features, data has {X.shape[1]}")
    if Y.shape[1] != beta.shape[1]:
        raise FormatError(f"model has {beta.shape[1]} outputs, targets have {Y.shape[1]}")


def mean_response(Z, family):
    if family == "gaussian":
        return Z
    if family == "binomial":
        return expit(Z)
    return softmax(Z, axis=1)


def residual_from_linear(Z, Y, family):
    """Per-example residual a_i; the example's beta-gradient is outer(x_i, a_i)."""
    return mean_response(Z, family) - Y


def loss_from_linear(Z, Y, family):
    if family == "gaussian":
        return 0.5 * float(np.mean(np.sum((Z - Y) ** 2, axis=1)))
    if family == "binomial":
        return float(np.mean(np.logaddexp(0.0, Z) - Y * Z))
    return float(np.mean(logsumexp(Z, axis=1) - np.sum(Y * Z, axis=1)))


def _linear(X, model):
    return X @ model.beta + model.beta0


def _prepare(X, y, model):
    X = np.asarray(X, dtype=np.float64)
    Y = target_matrix(y, model.family, model.k)
    _check_shapes(X, Y, model.beta)
    return X, Y


def smooth_loss(X, y, model):
    X, Y = _prepare(X, y, model)
    return loss_from_linear(_linear(X, model), Y, model.family)


def penalty(beta, params):
    beta = np.asarray(beta)
    return params.lam * ((1.0 - params.alpha) * 0.5 * float(np.sum(beta ** 2))
                         + params.alpha * float(np.sum(np.abs(beta))))


def objective(X, y, model, params=None):
    if params is None:
        params = ElasticNetParams(model.lam, model.alpha)
    return smooth_loss(X, y, model) + penalty(model.beta, params)


def residuals(X, y, model):
    """(n, k) residual matrix of the smooth loss at ``model``."""
    X, Y = _prepare(X, y, model)
    return residual_from_linear(_linear(X, model), Y, model.family)


def gradient(X, y, model):
    """Gradient of the smooth loss: (d, k) for beta and (k,) for beta0."""
    X, Y = _prepare(X, y, model)
    A = residual_from_linear(_linear(X, model), Y, model.family)
    n = X.shape[0]
    return X.T @ A / n, A.mean(axis=0)


def bias_only_intercept(Y, family):
    """Intercept minimizing the smooth loss when beta = 0."""
    p = Y.mean(axis=0)
    if family == "gaussian":
        return p
    p = np.clip(p, 1e-12, 1.0 - 1e-12)
    if family == "binomial":
        return np.log(p) - np.log1p(-p)
    logp = np.log(p)
    return logp - logp.mean()


def predict(X, model):
    """Predicted value (gaussian) or class label (binomial/multinomial)."""
    Z = np.asarray(X, dtype=np.float64) @ model.beta + model.beta0
    if model.family == "gaussian":
        return Z[:, 0]
    if model.family == "binomial":
        return (Z[:, 0] > 0).astype(np.int64)
    return np.argmax(Z, axis=1)
