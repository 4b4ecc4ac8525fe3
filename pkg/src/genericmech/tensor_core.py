"""Dense d x d tensor algebra for d in {1, 2, 3}.

Every function accepts stacks of tensors: the last two axes hold the
matrix, any leading axes are batch (grid) axes.  Vectors carry their
component in the last axis.  Closed-form determinants and cofactors are
used so that field evaluations stay vectorized and exact in the small
dimensions we need.
"""

import numpy as np

from .errors import DimensionMismatch, SingularTensor

SINGULAR_RTOL = 1e-12


def _dim(A):
    A = np.asarray(A)
    if A.ndim < 2 or A.shape[-1] != A.shape[-2]:
        raise DimensionMismatch(f"expected (..., d, d) array, got shape {A.shape}")
    d = A.shape[-1]
    if d not in (1, 2, 3):
        raise DimensionMismatch(f"d must be 1, 2 or 3, got {d}")
    return d


def eye(d, batch_shape=()):
    return np.broadcast_to(np.eye(d), tuple(batch_shape) + (d, d)).copy()


def det(A):
    A = np.asarray(A, dtype=float)
    d = _dim(A)
    if d == 1:
        return A[..., 0, 0].copy()
    if d == 2:
        return A[..., 0, 0] * A[..., 1, 1] - A[..., 0, 1] * A[..., 1, 0]
    return (A[..., 0, 0] * (A[..., 1, 1] * A[..., 2, 2] - A[..., 1, 2] * A[..., 2, 1])
            - A[..., 0, 1] * (A[..., 1, 0] * A[..., 2, 2] - A[..., 1, 2] * A[..., 2, 0])
            + A[..., 0, 2] * (A[..., 1, 0] * A[..., 2, 1] - A[..., 1, 1] * A[..., 2, 0]))


def cof(A):
    """Cofactor matrix, the derivative of det: A cof(A)^T = det(A) I."""
    A = np.asarray(A, dtype=float)
    d = _dim(A)
    C = np.empty_like(A)
    if d == 1:
        C[..., 0, 0] = 1.0
    elif d == 2:
        C[..., 0, 0] = A[..., 1, 1]
        C[..., 0, 1] = -A[..., 1, 0]
        C[..., 1, 0] = -A[..., 0, 1]
        C[..., 1, 1] = A[..., 0, 0]
    else:
        # rows of the cofactor are cross products of the other two rows
        for i in range(3):
            j, k = (i + 1) % 3, (i + 2) % 3
            C[..., i, :] = np.cross(A[..., j, :], A[..., k, :])
    return C


def inv(A, check=True):
    A = np.asarray(A, dtype=float)
    d = _dim(A)
    J = det(A)
    if check:
        scale = np.sqrt(np.sum(A * A, axis=(-2, -1))) ** d
        if np.any(np.abs(J) <= SINGULAR_RTOL * scale):
            raise SingularTensor("matrix is singular to working tolerance")
    return transpose(cof(A)) / J[..., None, None]


def inv_transpose(A, check=True):
    """A^{-T} = cof(A)/det(A)."""
    return transpose(inv(A, check=check))


def transpose(A):
    return np.swapaxes(A, -1, -2)


def trace(A):
    return np.trace(A, axis1=-2, axis2=-1)


def sym(A):
    return 0.5 * (A + transpose(A))


def skw(A):
    return 0.5 * (A - transpose(A))


def dev(A):
    A = np.asarray(A, dtype=float)
    d = _dim(A)
    return A - (trace(A) / d)[..., None, None] * np.eye(d)


def ddot(A, B):
    return np.sum(A * B, axis=(-2, -1))


def matmul(A, B):
    return np.einsum("...ij,...jk->...ik", A, B)


def matvec(A, v):
    return np.einsum("...ij,...j->...i", A, v)


def dot(u, v):
    return np.sum(u * v, axis=-1)


def outer(u, v):
    return u[..., :, None] * v[..., None, :]


def norm(A):
    """Frobenius norm over the trailing tensor axes (vector or matrix)."""
    A = np.asarray(A)
    if A.ndim >= 2 and A.shape[-1] == A.shape[-2]:
        return np.sqrt(np.sum(A * A, axis=(-2, -1)))
    return np.sqrt(np.sum(A * A, axis=-1))


def rotation(angles, d):
    """Proper rotation from d(d-1)/2 angles (batch in leading axes)."""
    angles = np.asarray(angles, dtype=float)
    if d == 1:
        return np.ones(angles.shape[:-1] + (1, 1))
    if d == 2:
        c, s = np.cos(angles[..., 0]), np.sin(angles[..., 0])
        R = np.empty(angles.shape[:-1] + (2, 2))
        R[..., 0, 0], R[..., 0, 1], R[..., 1, 0], R[..., 1, 1] = c, -s, s, c
        return R
    # exponential of a skew matrix (Rodrigues)
    w = angles
    th = np.sqrt(np.sum(w * w, axis=-1))
    K = np.zeros(w.shape[:-1] + (3, 3))
    K[..., 0, 1], K[..., 0, 2], K[..., 1, 2] = -w[..., 2], w[..., 1], -w[..., 0]
    K = K - transpose(K)
    safe = np.where(th > 0, th, 1.0)
    a = np.where(th > 0, np.sin(th) / safe, 1.0)[..., None, None]
    b = np.where(th > 0, (1 - np.cos(th)) / safe**2, 0.5)[..., None, None]
    return np.eye(3) + a * K + b * matmul(K, K)
