import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from glmpath import core
from glmpath.core import ElasticNetParams, prox_elastic_net
from glmpath.data import GlmModel
from conftest import make_problem

finite = st.floats(-50, 50, allow_nan=False)
nonneg = st.floats(0, 10, allow_nan=False)


def test_prox_examples():
    assert prox_elastic_net(0.5, 1.0, 0.0) == 0.0
    assert prox_elastic_net(2.0, 1.0, 0.0) == 1.0
    # argmin of 0.5(z+3)^2 + |z| + 0.5 z^2: on z < 0, 2z + 2 = 0
    assert prox_elastic_net(-3.0, 1.0, 1.0) == -1.0


@given(finite, nonneg, nonneg)
def test_prox_contracts_and_is_odd(b, l1, l2):
    p = prox_elastic_net(b, l1, l2)
    assert abs(p) <= abs(b)
    assert prox_elastic_net(-b, l1, l2) == -p


@given(finite)
def test_prox_identity_without_penalty(b):
    assert prox_elastic_net(b, 0.0, 0.0) == b


@settings(max_examples=60)
@given(st.floats(-5, 5), st.floats(0, 3), st.floats(0, 3))
def test_prox_is_grid_minimizer(b, l1, l2):
    grid = np.linspace(-6, 6, 240_001)
    h = grid[1] - grid[0]
    f = 0.5 * (grid - b) ** 2 + l1 * np.abs(grid) + 0.5 * l2 * grid ** 2
    assert abs(prox_elastic_net(b, l1, l2) - grid[np.argmin(f)]) <= h


def test_prox_elementwise_matrix():
    B = np.array([[2.0, -0.5], [-3.0, 1.5]])
    np.testing.assert_allclose(prox_elastic_net(B, 1.0, 0.0), [[1.0, 0.0], [-2.0, 0.5]])


def test_smooth_loss_trivial_values():
    X = np.ones((4, 2))
    assert core.smooth_loss(X, np.zeros(4), GlmModel.zeros(2, 1, "gaussian")) == 0.0
    y = np.array([0, 1, 1, 0])
    assert math.isclose(core.smooth_loss(X, y, GlmModel.zeros(2, 1, "binomial")), math.log(2))
    y3 = np.array([0, 1, 2, 2])
    assert math.isclose(core.smooth_loss(X, y3, GlmModel.zeros(2, 3, "multinomial")), math.log(3))


def test_shape_mismatch():
    from glmpath.errors import FormatError
    with pytest.raises(FormatError):
        core.smooth_loss(np.ones((3, 2)), np.zeros(4), GlmModel.zeros(2, 1, "gaussian"))
    with pytest.raises(FormatError):
        core.residuals(np.ones((3, 3)), np.zeros(3), GlmModel.zeros(2, 1, "gaussian"))


def test_objective_trivial(rng):
    X, y = make_problem(rng, "gaussian", 20, 4)
    m0 = GlmModel.zeros(4, 1, "gaussian")
    assert core.objective(X, y, m0, ElasticNetParams(0.7, 0.5)) == core.smooth_loss(X, y, m0)
    m = GlmModel(rng.normal(size=(4, 1)), [0.3], "gaussian")
    assert core.objective(X, y, m, ElasticNetParams(0.0, 0.5)) == core.smooth_loss(X, y, m)


@pytest.mark.parametrize("family", ["gaussian", "binomial", "multinomial"])
def test_objective_term_by_term(rng, family):
    X, y = make_problem(rng, family, 15, 3)
    k = 3 if family == "multinomial" else 1
    m = GlmModel(rng.normal(size=(3, k)), rng.normal(size=k), family)
    lam, alpha = 0.4, 0.3
    total = 0.0
    for i in range(15):
        z = [sum(X[i, j] * m.beta[j, c] for j in range(3)) + m.beta0[c] for c in range(k)]
        if family == "gaussian":
            total += 0.5 * (z[0] - y[i]) ** 2
        elif family == "binomial":
            p = 1 / (1 + math.exp(-z[0]))
            total += -(y[i] * math.log(p) + (1 - y[i]) * math.log(1 - p))
        else:
            total += -z[y[i]] + math.log(sum(math.exp(v) for v in z))
    pen = sum((1 - alpha) * 0.5 * v * v + alpha * abs(v) for v in m.beta.ravel())
    expected = total / 15 + lam * pen
    assert math.isclose(core.objective(X, y, m, ElasticNetParams(lam, alpha)), expected,
                        rel_tol=1e-12)


def test_residual_examples():
    X = np.array([[1.0, 2.0], [3.0, 4.0]])
    y = np.array([1.5, -2.0])
    np.testing.assert_array_equal(core.residuals(X, y, GlmModel.zeros(2, 1, "gaussian"))[:, 0], -y)
    a = core.residuals(X[:1], np.array([0]), GlmModel.zeros(2, 2, "multinomial"))
    np.testing.assert_allclose(a, [[-0.5, 0.5]])


@pytest.mark.parametrize("family", ["gaussian", "binomial", "multinomial"])
def test_gradient_matches_finite_differences(rng, family):
    X, y = make_problem(rng, family, 40, 5)
    k = 3 if family == "multinomial" else 1
    m = GlmModel(0.3 * rng.normal(size=(5, k)), 0.1 * rng.normal(size=k), family)
    G, g0 = core.gradient(X, y, m)
    h = 1e-6

    def fd(perturb):
        plus, minus = m.copy(), m.copy()
        perturb(plus, h)
        perturb(minus, -h)
        return (core.smooth_loss(X, y, plus) - core.smooth_loss(X, y, minus)) / (2 * h)

    for j in range(5):
        for c in range(k):
            def pert(mm, e, j=j, c=c):
                mm.beta[j, c] += e
            assert fd(pert) == pytest.approx(G[j, c], rel=1e-6, abs=1e-9)
    for c in range(k):
        def pert0(mm, e, c=c):
            mm.beta0[c] += e
        assert fd(pert0) == pytest.approx(g0[c], rel=1e-6, abs=1e-9)


def test_gradient_is_mean_outer_product(rng):
    X, y = make_problem(rng, "multinomial", 12, 4)
    m = GlmModel(rng.normal(size=(4, 3)), np.zeros(3), "multinomial")
    A = core.residuals(X, y, m)
    G, _ = core.gradient(X, y, m)
    np.testing.assert_allclose(G, sum(np.outer(X[i], A[i]) for i in range(12)) / 12)


@settings(max_examples=30, deadline=None)
@given(st.sampled_from(["gaussian", "binomial", "multinomial"]), st.integers(0, 10_000),
       st.floats(0, 2), st.floats(0, 1))
def test_objective_convex_along_segments(family, seed, lam, alpha):
    r = np.random.default_rng(seed)
    X, y = make_problem(r, family, 25, 4)
    k = 3 if family == "multinomial" else 1
    p = ElasticNetParams(lam, alpha)
    a = GlmModel(r.normal(size=(4, k)), r.normal(size=k), family)
    b = GlmModel(r.normal(size=(4, k)), r.normal(size=k), family)
    mid = GlmModel((a.beta + b.beta) / 2, (a.beta0 + b.beta0) / 2, family)
    ends = (core.objective(X, y, a, p) + core.objective(X, y, b, p)) / 2
    assert core.objective(X, y, mid, p) <= ends + 1e-12


def test_elastic_net_params_validation():
    from glmpath.errors import PreconditionError
    p = ElasticNetParams(2.0, 0.25)
    assert (p.l1, p.l2) == (0.5, 1.5)
    with pytest.raises(PreconditionError):
        ElasticNetParams(-1.0, 0.5)
    with pytest.raises(PreconditionError):
        ElasticNetParams(1.0, 1.5)
