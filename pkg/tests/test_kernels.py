import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from wkbo.errors import InvalidInputError, InvalidParameterError
from wkbo.kernels import (
    FiniteFeature,
    SquaredExponential,
    gram_matrix,
    kernel_eval,
    kernel_vector,
    rkhs_norm_of_expansion,
)

affine = FiniteFeature(lambda p: np.array([1.0, p[0]]), 2)


def test_se_at_coincident_points(se_default):
    assert kernel_eval(se_default, 1.3, 1.3) == pytest.approx(17.7241, abs=1e-10)


def test_se_at_one_lengthscale(se_default):
    assert kernel_eval(se_default, 0.0, 3.59) == pytest.approx(17.7241 * np.exp(-0.5), rel=1e-14)
    assert kernel_eval(se_default, 0.0, 3.59) == pytest.approx(10.7500, abs=1e-3)


def test_se_decays_far_away(se_default):
    assert kernel_eval(se_default, 0.0, 1e3) == 0.0


def test_finite_feature_inner_product():
    assert kernel_eval(affine, 2.0, 3.0) == 7.0


def test_dimension_mismatch(se_default):
    with pytest.raises(InvalidInputError):
        kernel_eval(se_default, [1.0, 2.0], 1.0)
    with pytest.raises(InvalidInputError):
        kernel_vector(se_default, np.zeros((3, 2)), 1.0)


def test_invalid_hyperparameters():
    with pytest.raises(InvalidParameterError):
        SquaredExponential(0.0, 1.0)
    with pytest.raises(InvalidParameterError):
        SquaredExponential(1.0, -2.0)


def test_gram_shapes(se_default):
    assert gram_matrix(se_default, []).shape == (0, 0)
    K = gram_matrix(se_default, [0.7])
    assert K.shape == (1, 1) and K[0, 0] == kernel_eval(se_default, 0.7, 0.7)


def test_gram_two_points(se_default):
    K = gram_matrix(se_default, [0.0, 3.59])
    np.testing.assert_allclose(np.diag(K), 17.7241, rtol=1e-14)
    assert K[0, 1] == pytest.approx(10.750210065812686, rel=1e-13)


def test_kernel_vector(se_default):
    assert kernel_vector(se_default, [], 1.0).shape == (0,)
    v = kernel_vector(se_default, [0.0], 3.59)
    assert v[0] == pytest.approx(10.7502, abs=1e-4)
    v = kernel_vector(se_default, [2.0, -1.0], 2.0)
    assert v[0] == kernel_eval(se_default, 2.0, 2.0)


def test_rkhs_norm(se_default):
    assert rkhs_norm_of_expansion(se_default, [1.0, 2.0], [0.0, 0.0]) == 0.0
    assert rkhs_norm_of_expansion(se_default, [1.0], [1.0]) == pytest.approx(4.21)
    z, c = [0.5, -1.5], [0.7, -1.3]
    k11, k22 = kernel_eval(se_default, z[0], z[0]), kernel_eval(se_default, z[1], z[1])
    k12 = kernel_eval(se_default, z[0], z[1])
    quad = c[0] ** 2 * k11 + 2 * c[0] * c[1] * k12 + c[1] ** 2 * k22
    assert rkhs_norm_of_expansion(se_default, z, c) == pytest.approx(np.sqrt(quad), rel=1e-14)
    with pytest.raises(InvalidInputError):
        rkhs_norm_of_expansion(se_default, [1.0], [1.0, 2.0])


se_kernels = st.builds(
    SquaredExponential,
    st.floats(0.1, 10.0),
    st.floats(0.05, 10.0),
)
coords = st.floats(-10, 10, allow_nan=False)


@given(se_kernels, coords, coords)
def test_symmetry(kern, a, b):
    assert kernel_eval(kern, a, b) == kernel_eval(kern, b, a)


@settings(max_examples=1000, deadline=None)
@given(se_kernels, st.lists(coords, min_size=1, max_size=50))
def test_gram_symmetric_psd(kern, xs):
    K = gram_matrix(kern, xs)
    assert np.array_equal(K, K.T)
    assert np.linalg.eigvalsh(K).min() >= -1e-10 * np.trace(K)


@given(st.lists(coords, min_size=1, max_size=20))
def test_finite_feature_gram_is_phi_t_phi(xs):
    kern = FiniteFeature(lambda p: np.array([1.0, np.sin(p[0]), 0.3 * p[0] ** 2]), 3)
    Phi = np.array([[1.0, np.sin(x), 0.3 * x ** 2] for x in xs]).T
    ref = Phi.T @ Phi
    np.testing.assert_allclose(gram_matrix(kern, xs), ref, rtol=1e-12, atol=1e-12 * np.abs(ref).max())


def test_feature_map_dimension_checked():
    bad = FiniteFeature(lambda p: np.ones(3), 2)
    with pytest.raises(InvalidInputError):
        gram_matrix(bad, [1.0])
