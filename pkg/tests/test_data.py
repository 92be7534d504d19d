import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from glmpath.data import (GlmModel, Standardizer, TargetVector, load_matrix, load_model,
                          save_matrix, save_model, standardize)
from glmpath.errors import FormatError


def test_standardize_two_points():
    Xs, s = standardize(np.array([[1.0], [3.0]]))
    np.testing.assert_array_equal(Xs, [[-1.0], [1.0]])
    assert s.mean[0] == 2.0 and s.scale[0] == 1.0


def test_standardize_constant_column():
    Xs, s = standardize(np.array([[5.0], [5.0], [5.0]]))
    np.testing.assert_array_equal(Xs, np.zeros((3, 1)))
    assert s.constant_mask.tolist() == [True]


def test_standardize_moments(rng):
    Xs, _ = standardize(rng.normal(3.0, 2.0, size=(4, 3)))
    # recompute the moments directly, population convention
    for j in range(3):
        col = Xs[:, j]
        m = sum(col) / 4
        assert abs(m) < 1e-10
        assert abs(np.sqrt(sum((c - m) ** 2 for c in col) / 4) - 1) < 1e-8


def test_standardizer_reused_on_new_data(rng):
    X = rng.normal(size=(20, 4))
    _, s = standardize(X)
    Xnew = rng.normal(size=(5, 4))
    np.testing.assert_allclose(s.transform(Xnew), (Xnew - X.mean(0)) / X.std(0))


def test_non_finite_rejected_with_position():
    X = np.ones((3, 3))
    X[1, 2] = np.nan
    with pytest.raises(FormatError, match=r"row=1, col=2"):
        standardize(X)


@settings(max_examples=50, deadline=None)
@given(arrays(np.float64, st.tuples(st.integers(2, 8), st.integers(1, 5)),
              elements=st.floats(-1e3, 1e3, allow_nan=False)))
def test_standardize_idempotent(X):
    once, _ = standardize(X)
    twice, _ = standardize(once)
    np.testing.assert_allclose(twice, once, atol=1e-10)


def test_binary_header_layout(tmp_path):
    import struct
    p = tmp_path / "m.glmx"
    p.write_bytes(b"GLMX" + struct.pack("<IQQ", 1, 2, 2) + struct.pack("<4d", 1, 2, 3, 4))
    np.testing.assert_array_equal(load_matrix(p), [[1, 2], [3, 4]])


def test_csv_load(tmp_path):
    p = tmp_path / "m.csv"
    p.write_text("1.0,2.0\n3.0,4.0")
    np.testing.assert_array_equal(load_matrix(p, "csv"), [[1, 2], [3, 4]])


def test_binary_round_trip_exact(tmp_path, rng):
    X = rng.normal(size=(100, 50))
    save_matrix(tmp_path / "x.glmx", X)
    Y = load_matrix(tmp_path / "x.glmx")
    assert Y.tobytes() == X.tobytes()


def test_csv_round_trip(tmp_path, rng):
    X = rng.normal(size=(30, 7)) * 1e3
    save_matrix(tmp_path / "x.csv", X, "csv")
    np.testing.assert_allclose(load_matrix(tmp_path / "x.csv"), X, rtol=0, atol=1e-12)


@pytest.mark.parametrize("mutate, message", [
    (lambda raw: raw[:-8], "payload"),
    (lambda raw: raw[:10], "truncated"),
    (lambda raw: raw[:4] + b"\x07" + raw[5:], "version"),
])
def test_binary_corruption(tmp_path, rng, mutate, message):
    p = tmp_path / "x.glmx"
    save_matrix(p, rng.normal(size=(3, 2)))
    p.write_bytes(mutate(p.read_bytes()))
    with pytest.raises(FormatError, match=message):
        load_matrix(p, "binary")


def test_csv_errors(tmp_path):
    p = tmp_path / "bad.csv"
    p.write_text("1,2\n3,x\n")
    with pytest.raises(FormatError, match="non-numeric"):
        load_matrix(p)
    p.write_text("1,2\n3\n")
    with pytest.raises(FormatError, match="ragged"):
        load_matrix(p)


def test_targets_validation():
    t = TargetVector("classification", [0, 2, 1], k=3)
    assert t.values.dtype == np.int64
    with pytest.raises(FormatError):
        TargetVector("classification", [0, 3], k=3)
    with pytest.raises(FormatError):
        TargetVector("classification", [0.5], k=2)


def test_model_round_trip_zero(tmp_path):
    m = GlmModel.zeros(4, 3, "multinomial", lam=0.5, alpha=0.99)
    save_model(tmp_path / "m.glmm", m)
    assert load_model(tmp_path / "m.glmm") == m


def test_model_round_trip_fitted(tmp_path, rng):
    from glmpath.core import ElasticNetParams
    from glmpath.saga import fit_fixed_lambda
    X, _ = standardize(rng.normal(size=(60, 8)))
    y = (X[:, 0] + 0.3 * rng.normal(size=60) > 0).astype(int)
    m = fit_fixed_lambda(X, y, "binomial", ElasticNetParams(0.02, 0.9))
    save_model(tmp_path / "m.glmm", m)
    back = load_model(tmp_path / "m.glmm")
    assert back == m
    assert back.nnz_per_class.tolist() == m.nnz_per_class.tolist()


def test_model_wrong_magic(tmp_path):
    p = tmp_path / "m.glmm"
    save_model(p, GlmModel.zeros(2, 1, "gaussian"))
    p.write_bytes(b"XXXX" + p.read_bytes()[4:])
    with pytest.raises(FormatError, match="magic"):
        load_model(p)


def test_model_corrupted_payload(tmp_path):
    p = tmp_path / "m.glmm"
    save_model(p, GlmModel(np.ones((2, 1)), np.zeros(1), "gaussian"))
    raw = bytearray(p.read_bytes())
    raw[50] ^= 0xFF
    p.write_bytes(bytes(raw))
    with pytest.raises(FormatError, match="corrupted"):
        load_model(p)


def test_nnz_per_class_matches_recount(rng):
    beta = rng.normal(size=(6, 3)) * (rng.random((6, 3)) < 0.5)
    m = GlmModel(beta, np.zeros(3), "multinomial")
    assert m.nnz_per_class.tolist() == [sum(beta[j, c] != 0 for j in range(6)) for c in range(3)]


def test_standardizer_matrix_round_trip(rng):
    _, s = standardize(np.c_[rng.normal(size=(5, 2)), np.ones(5)])
    s2 = Standardizer.from_matrix(s.to_matrix())
    np.testing.assert_array_equal(s2.mean, s.mean)
    assert s2.constant_mask.tolist() == [False, False, True]
