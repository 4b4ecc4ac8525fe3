import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from genericmech import tensor_core as tc
from genericmech.errors import DimensionMismatch, SingularTensor

finite = st.floats(-3, 3, allow_nan=False, allow_infinity=False)


def mats(d, batch=()):
    return arrays(np.float64, tuple(batch) + (d, d), elements=finite)


@pytest.mark.parametrize("d", [1, 2, 3])
@given(data=st.data())
def test_cofactor_identity(d, data):
    A = data.draw(mats(d, (4,)))
    lhs = tc.matmul(A, tc.transpose(tc.cof(A)))
    rhs = tc.det(A)[..., None, None] * np.eye(d)
    scale = 1 + np.max(np.abs(A)) ** d
    assert np.max(np.abs(lhs - rhs)) <= 1e-12 * scale


@pytest.mark.parametrize("d", [1, 2, 3])
@given(data=st.data())
def test_det_matches_numpy(d, data):
    A = data.draw(mats(d, (3,)))
    assert np.allclose(tc.det(A), np.linalg.det(A), atol=1e-11 * (1 + np.max(np.abs(A)) ** d))


@pytest.mark.parametrize("d", [1, 2, 3])
@given(data=st.data())
def test_det_multiplicative(d, data):
    A, B = data.draw(mats(d)), data.draw(mats(d))
    scale = (1 + np.max(np.abs(A))) ** d * (1 + np.max(np.abs(B))) ** d
    assert abs(tc.det(A @ B) - tc.det(A) * tc.det(B)) <= 1e-12 * scale


@pytest.mark.parametrize("d", [1, 2, 3])
def test_inverse_and_inverse_transpose(d, rng):
    A = np.eye(d) + 0.3 * rng.standard_normal((10, d, d))
    assert np.allclose(tc.matmul(A, tc.inv(A)), np.eye(d), atol=1e-12)
    assert np.allclose(tc.inv_transpose(A), np.swapaxes(np.linalg.inv(A), -1, -2))


def test_singular_raises():
    with pytest.raises(SingularTensor):
        tc.inv(np.array([[1.0, 2.0], [2.0, 4.0]]))


def test_dimension_checks():
    with pytest.raises(DimensionMismatch):
        tc.det(np.zeros((4, 4)))
    with pytest.raises(DimensionMismatch):
        tc.det(np.zeros((2, 3)))


@pytest.mark.parametrize("d", [1, 2, 3])
@given(data=st.data())
def test_sym_skw_dev_split(d, data):
    A = data.draw(mats(d))
    assert np.allclose(tc.sym(A) + tc.skw(A), A)
    assert np.allclose(tc.sym(A), tc.transpose(tc.sym(A)))
    assert abs(tc.trace(tc.dev(A))) <= 1e-12 * (1 + np.abs(A).max())
    assert abs(tc.ddot(tc.sym(A), tc.skw(A))) <= 1e-12 * (1 + np.abs(A).max() ** 2)


@pytest.mark.parametrize("d", [2, 3])
def test_rotation_is_proper_orthogonal(d, rng):
    R = tc.rotation(rng.uniform(-3, 3, (7, d * (d - 1) // 2)), d)
    assert np.allclose(tc.matmul(R, tc.transpose(R)), np.eye(d), atol=1e-13)
    assert np.allclose(tc.det(R), 1.0, atol=1e-13)


def test_products_and_norm(rng):
    u, v = rng.standard_normal((2, 5, 3))
    A = rng.standard_normal((5, 3, 3))
    assert np.allclose(tc.dot(u, v), np.einsum("ni,ni->n", u, v))
    assert np.allclose(tc.outer(u, v), np.einsum("ni,nj->nij", u, v))
    assert np.allclose(tc.matvec(A, u), np.einsum("nij,nj->ni", A, u))
    assert np.allclose(tc.norm(A), np.linalg.norm(A, axis=(1, 2)))
    assert np.allclose(tc.ddot(A, A), tc.norm(A) ** 2)
    assert tc.eye(2, (3,)).shape == (3, 2, 2)
