import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gaitdetect.scaling import (LeakageError, ScalerKind, ScalerParams, ScalingError, fit_scaler,
                                inverse_transform, transform)


def test_standard_example():
    p = fit_scaler("standard", np.array([[1.0], [2.0], [3.0]]))
    assert p.center[0] == 2.0
    assert abs(p.scale[0] - math.sqrt(2 / 3)) < 1e-12
    np.testing.assert_allclose(transform(np.array([[1.0], [2.0], [3.0]]), p).ravel(),
                               [-1.224745, 0, 1.224745], atol=1e-6)


def test_robust_example():
    p = fit_scaler(ScalerKind.ROBUST, np.arange(5.0)[:, None])
    assert p.center[0] == 2.0 and p.scale[0] == 2.0


def test_robust_quantile_ranks():
    # q at rank q*(n-1): n=4 -> Q1 at rank .75, Q3 at rank 2.25
    p = fit_scaler("robust", np.array([[0.0], [10.0], [20.0], [40.0]]))
    assert p.center[0] == 15.0
    assert p.scale[0] == (20 + 0.25 * 20) - 7.5


def test_constant_column_flagged_and_centered():
    X = np.array([[5.0, 1.0], [5.0, 2.0], [5.0, 4.0]])
    p = fit_scaler("standard", X)
    assert p.center[0] == 5 and p.scale[0] == 0
    assert p.zero_scale.tolist() == [True, False]
    Z = transform(X, p)
    np.testing.assert_array_equal(Z[:, 0], 0.0)
    np.testing.assert_allclose(inverse_transform(Z, p), X, atol=1e-12)


def test_fitted_data_is_standardised(rng):
    X = rng.normal(3, 7, size=(40, 9))
    X[:, 4] = 1.5
    p = fit_scaler("standard", X)
    Z = transform(X, p)
    keep = ~p.zero_scale
    np.testing.assert_allclose(Z[:, keep].mean(axis=0), 0, atol=1e-9)
    np.testing.assert_allclose(Z[:, keep].std(axis=0), 1, atol=1e-9)


@pytest.mark.parametrize("kind", ["standard", "robust"])
def test_inverse_round_trip(kind, rng):
    X = rng.normal(size=(25, 7)) * 100
    p = fit_scaler(kind, X)
    np.testing.assert_allclose(inverse_transform(transform(X, p), p), X, atol=1e-9)


def test_errors():
    with pytest.raises(ScalingError):
        fit_scaler("standard", np.empty((0, 3)))
    p = fit_scaler("standard", np.ones((3, 2)))
    with pytest.raises(ScalingError, match="expected 2 columns"):
        transform(np.ones((3, 3)), p)
    with pytest.raises(ValueError):
        fit_scaler("minmax", np.ones((3, 2)))
    with pytest.raises(ScalingError):
        ScalerParams("standard", np.zeros(2), np.array([1.0, -1.0]))


def test_leakage_guard():
    p = fit_scaler("standard", np.ones((3, 2)), fitted_on="fold0-test")
    with pytest.raises(LeakageError):
        transform(np.ones((1, 2)), p, expect_fitted_on="fold0-train")
    transform(np.ones((1, 2)), p, expect_fitted_on="fold0-test")


def test_serialization_round_trip(rng):
    p = fit_scaler("robust", rng.normal(size=(10, 4)), fitted_on="tag")
    q = ScalerParams.from_dict(p.to_dict())
    assert q.kind is ScalerKind.ROBUST and q.fitted_on == "tag"
    np.testing.assert_array_equal(q.center, p.center)
    np.testing.assert_array_equal(q.scale, p.scale)


@given(seed=st.integers(0, 10 ** 6), alpha=st.floats(-2, 2))
@settings(max_examples=30, deadline=None)
def test_transform_affine(seed, alpha):
    rng = np.random.default_rng(seed)
    p = fit_scaler("standard", rng.normal(size=(6, 3)))
    x, y = rng.normal(size=(2, 1, 3))
    lhs = transform(alpha * x + (1 - alpha) * y, p)
    rhs = alpha * transform(x, p) + (1 - alpha) * transform(y, p)
    np.testing.assert_allclose(lhs, rhs, atol=1e-9)


@given(seed=st.integers(0, 10 ** 6), n=st.integers(5, 30), bump=st.floats(0, 1e6))
@settings(max_examples=50, deadline=None)
def test_robust_ignores_outlier_magnitude(seed, n, bump):
    X = np.random.default_rng(seed).normal(size=(n, 3))
    p = fit_scaler("robust", X)
    i = int(np.argmax(X[:, 0]))
    Y = X.copy()
    Y[i, 0] += bump
    q = fit_scaler("robust", Y)
    assert q.center[0] == p.center[0]
    assert q.scale[0] == p.scale[0]
