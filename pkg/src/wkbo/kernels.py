"""Kernel functions, Gram matrices and kernel vectors.

Two kernel families are provided: the squared-exponential kernel used by the
benchmark, and a finite-feature kernel ``k(x, x') = phi(x) . phi(x')`` whose
explicit feature map makes weight-space identities checkable.

Input points are fixed-dimension real vectors. A scalar is a 1-D point; a 1-D
array passed where a *list* of points is expected is read as that many scalar
points.
"""

from dataclasses import dataclass
from typing import Callable, Union

import numpy as np

from .errors import InvalidInputError, InvalidParameterError

__all__ = [
    "SquaredExponential",
    "FiniteFeature",
    "KernelSpec",
    "as_point",
    "as_points",
    "kernel_eval",
    "gram_matrix",
    "kernel_vector",
    "cross_kernel",
    "kernel_diag",
    "rkhs_norm_of_expansion",
    "PSD_EPS",
]

#: Relative (to the trace) tolerance on negative Gram eigenvalues.
PSD_EPS = 1e-10


def as_point(x):
    """Return ``x`` as a 1-D float array of shape ``(n_x,)``."""
    p = np.atleast_1d(np.asarray(x, dtype=float))
    if p.ndim != 1:
        raise InvalidInputError(f"a point must be a scalar or 1-D vector, got shape {p.shape}")
    return p


def as_points(xs, dim=None):
    """Return a list of points as a 2-D float array of shape ``(D, n_x)``.

    Parameters
    ----------
    xs : array_like
        Scalars (1-D array) or points (2-D array, one per row).
    dim : int, optional
        Expected point dimension; also fixes the shape of an empty list.
    """
    a = np.asarray(xs, dtype=float)
    if a.ndim == 0:
        a = a.reshape(1, 1)
    elif a.ndim == 1:
        if a.size == 0:
            a = a.reshape(0, dim or 1)
        else:
            a = a.reshape(-1, 1)
    elif a.ndim != 2:
        raise InvalidInputError(f"points must be given as a 1-D or 2-D array, got shape {a.shape}")
    if dim is not None and a.shape[0] > 0 and a.shape[1] != dim:
        raise InvalidInputError(f"points have dimension {a.shape[1]}, expected {dim}")
    if a.shape[0] == 0 and dim is not None:
        a = a.reshape(0, dim)
    return a


@dataclass(frozen=True)
class SquaredExponential:
    """``sigma**2 * exp(-|x - x'|**2 / (2 * lengthscale**2))``."""

    sigma: float
    lengthscale: float

    def __post_init__(self):
        if not (np.isfinite(self.sigma) and self.sigma > 0):
            raise InvalidParameterError(f"sigma must be positive, got {self.sigma}")
        if not (np.isfinite(self.lengthscale) and self.lengthscale > 0):
            raise InvalidParameterError(f"lengthscale must be positive, got {self.lengthscale}")

    def cross(self, a, b):
        # |a-b|^2 by explicit differences: the expanded form loses precision near the diagonal
        sq = np.sum((a[:, None, :] - b[None, :, :]) ** 2, axis=-1)
        return self.sigma ** 2 * np.exp(-0.5 * sq / self.lengthscale ** 2)

    def diag(self, a):
        return np.full(a.shape[0], self.sigma ** 2)


@dataclass(frozen=True)
class FiniteFeature:
    """Inner-product kernel of an explicit feature map.

    Parameters
    ----------
    feature_map : callable
        Maps a 1-D point to a real vector of length ``n_features``.
    n_features : int
        Feature dimension, checked on every evaluation.
    """

    feature_map: Callable[[np.ndarray], np.ndarray]
    n_features: int

    def __post_init__(self):
        if int(self.n_features) < 1:
            raise InvalidParameterError("n_features must be at least 1")

    def features(self, a):
        """Stack feature vectors of the rows of ``a`` into ``(len(a), n_features)``."""
        out = np.empty((a.shape[0], self.n_features))
        for i, p in enumerate(a):
            v = np.asarray(self.feature_map(p), dtype=float).ravel()
            if v.shape != (self.n_features,):
                raise InvalidInputError(
                    f"feature map returned length {v.size}, expected {self.n_features}"
                )
            out[i] = v
        return out

    def cross(self, a, b):
        return self.features(a) @ self.features(b).T

    def diag(self, a):
        phi = self.features(a)
        return np.einsum("ij,ij->i", phi, phi)


KernelSpec = Union[SquaredExponential, FiniteFeature]


def _check_dims(a, b):
    if a.shape[0] and b.shape[0] and a.shape[1] != b.shape[1]:
        raise InvalidInputError(f"dimension mismatch: {a.shape[1]} vs {b.shape[1]}")


def kernel_eval(spec, x, x_prime):
    """Evaluate ``k(x, x')`` for two single points."""
    a, b = as_point(x), as_point(x_prime)
    if a.shape != b.shape:
        raise InvalidInputError(f"dimension mismatch: {a.size} vs {b.size}")
    if isinstance(spec, SquaredExponential):
        d = a - b
        return float(spec.sigma ** 2 * np.exp(-0.5 * float(d @ d) / spec.lengthscale ** 2))
    return float(spec.cross(a[None, :], b[None, :])[0, 0])


def cross_kernel(spec, xs, ys):
    """Matrix ``[k(x_i, y_j)]`` for two lists of points."""
    a, b = as_points(xs), as_points(ys)
    _check_dims(a, b)
    if a.shape[0] == 0 or b.shape[0] == 0:
        return np.zeros((a.shape[0], b.shape[0]))
    return spec.cross(a, b)


def kernel_diag(spec, xs):
    """Vector ``[k(x_i, x_i)]``."""
    a = as_points(xs)
    if a.shape[0] == 0:
        return np.zeros(0)
    return spec.diag(a)


def gram_matrix(spec, xs):
    """Symmetric Gram matrix of ``xs``.

    The upper triangle is computed and mirrored, so ``K == K.T`` holds
    bit-for-bit.
    """
    a = as_points(xs)
    if a.shape[0] == 0:
        return np.zeros((0, 0))
    k = np.triu(spec.cross(a, a))
    return k + np.triu(k, 1).T


def kernel_vector(spec, xs, x):
    """Vector ``[k(x, x_1), ..., k(x, x_D)]``."""
    a = as_points(xs)
    p = as_point(x)
    if a.shape[0] == 0:
        return np.zeros(0)
    if a.shape[1] != p.size:
        raise InvalidInputError(f"dimension mismatch: {a.shape[1]} vs {p.size}")
    return spec.cross(a, p[None, :])[:, 0]


def rkhs_norm_of_expansion(spec, centers, coeffs):
    """RKHS norm of ``f = sum_i c_i k(., z_i)``, i.e. ``sqrt(c' K_z c)``."""
    z = as_points(centers)
    c = np.asarray(coeffs, dtype=float).ravel()
    if z.shape[0] != c.size:
        raise InvalidInputError(f"{z.shape[0]} centers but {c.size} coefficients")
    if c.size == 0:
        return 0.0
    q = float(c @ gram_matrix(spec, z) @ c)
    return float(np.sqrt(max(q, 0.0)))
