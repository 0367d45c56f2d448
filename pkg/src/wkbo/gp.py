"""Exact GP regression with the Wiener-kernel variance.

For ``K_M = K + sigma_m**2 I`` the model serves

* posterior mean      ``mu(x)      = k(x)' K_M^{-1} y``
* posterior variance  ``var_gp(x)  = k(x, x) - k(x)' K_M^{-1} k(x)``
* Wiener variance     ``var_wk(x)  = sigma_m**2 |K_M^{-1} k(x)|**2``

``var_wk`` is the share of the predictive variance induced by measurement
noise in the labels; ``var_gp - var_wk`` is what remains when the labels are
noise free.  All three come from one cached Cholesky factor.
"""

import logging
from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_solve, solve_triangular
from scipy.linalg.lapack import dpotrf

from .errors import (
    ConditioningError,
    InvalidInputError,
    InvalidParameterError,
    UnsupportedKernelError,
)
from .kernels import FiniteFeature, as_point, as_points, cross_kernel, gram_matrix, kernel_diag

__all__ = [
    "Dataset",
    "GpModel",
    "Posterior",
    "PosteriorQuery",
    "cholesky_lower",
    "fit",
    "refit_labels",
    "predict",
    "predict_shared",
    "query",
    "posterior_mean",
    "posterior_variance",
    "wiener_variance",
    "epistemic_gap",
    "feature_space_gap",
    "clamp_count",
    "reset_clamp_count",
]

logger = logging.getLogger(__name__)

_clamps = 0


def clamp_count():
    """Number of negative posterior variances clamped to zero in this process."""
    return _clamps


def reset_clamp_count():
    global _clamps
    _clamps = 0


@dataclass(frozen=True, eq=False)
class Dataset:
    """Ordered input/label pairs.

    ``inputs`` has shape ``(D, n_x)``; ``labels`` has shape ``(D,)``.
    """

    inputs: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        x = as_points(self.inputs)
        y = np.asarray(self.labels, dtype=float).ravel()
        if x.shape[0] != y.size:
            raise InvalidInputError(f"{x.shape[0]} inputs but {y.size} labels")
        if not np.all(np.isfinite(y)):
            raise InvalidInputError("labels must be finite")
        x.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "inputs", x)
        object.__setattr__(self, "labels", y)

    @classmethod
    def empty(cls, dim=1):
        return cls(np.zeros((0, dim)), np.zeros(0))

    def __len__(self):
        return self.labels.size

    @property
    def dim(self):
        return self.inputs.shape[1]

    def append(self, x, y):
        """Return a new dataset with ``(x, y)`` added at the end."""
        p = as_point(x)
        if len(self) and p.size != self.dim:
            raise InvalidInputError(f"point has dimension {p.size}, dataset has {self.dim}")
        inputs = np.vstack([self.inputs.reshape(-1, p.size), p[None, :]])
        return Dataset(inputs, np.append(self.labels, float(y)))

    def with_labels(self, labels):
        return Dataset(self.inputs, labels)


def cholesky_lower(a):
    """Lower Cholesky factor of a symmetric positive-definite matrix.

    Raises
    ------
    ConditioningError
        If the factorization breaks down; the message names the zero-based
        row and value of the first non-positive pivot.
    """
    n = a.shape[0]
    if n == 0:
        return np.zeros((0, 0))
    c, info = dpotrf(a, lower=1, clean=1)
    if info == 0:
        return c
    if info < 0:
        raise InvalidInputError(f"dpotrf rejected argument {-info}")
    i = info - 1
    lead = cholesky_lower(a[:i, :i]) if i else np.zeros((0, 0))
    row = solve_triangular(lead, a[:i, i], lower=True) if i else np.zeros(0)
    pivot = float(a[i, i] - row @ row)
    raise ConditioningError(
        f"matrix is not numerically positive definite: pivot {i} is {pivot:.3e}",
        index=i,
        pivot=pivot,
    )


@dataclass(frozen=True, eq=False)
class GpModel:
    """A fitted GP. Immutable; refitting builds a new model."""

    kernel: object
    data: Dataset
    sigma_m: float
    jitter: float
    factor: np.ndarray
    alpha: np.ndarray

    @property
    def noise_var(self):
        """Diagonal shift actually added to ``K`` before factorization."""
        return self.sigma_m ** 2 + self.jitter

    def __len__(self):
        return len(self.data)


def fit(kernel, data, sigma_m, jitter=0.0):
    """Factorize ``K + (sigma_m**2 + jitter) I`` and cache ``K_M^{-1} y``.

    ``sigma_m`` is the noise standard deviation, or the square root of the
    variance proxy for sub-Gaussian noise.
    """
    if not (np.isfinite(sigma_m) and sigma_m >= 0):
        raise InvalidParameterError(f"sigma_m must be non-negative, got {sigma_m}")
    if not (np.isfinite(jitter) and jitter >= 0):
        raise InvalidParameterError(f"jitter must be non-negative, got {jitter}")
    K = gram_matrix(kernel, data.inputs)
    K[np.diag_indices_from(K)] += sigma_m ** 2 + jitter
    L = cholesky_lower(K)
    alpha = cho_solve((L, True), data.labels) if len(data) else np.zeros(0)
    L.setflags(write=False)
    alpha.setflags(write=False)
    return GpModel(kernel, data, float(sigma_m), float(jitter), L, alpha)


def refit_labels(model, labels):
    """Same inputs, kernel and noise level, new labels; reuses the factor."""
    data = model.data.with_labels(labels)
    alpha = cho_solve((model.factor, True), data.labels) if len(data) else np.zeros(0)
    alpha.setflags(write=False)
    return GpModel(model.kernel, data, model.sigma_m, model.jitter, model.factor, alpha)


@dataclass(frozen=True)
class PosteriorQuery:
    mean: float
    var_gp: float
    var_wk: float


@dataclass(frozen=True, eq=False)
class Posterior:
    """Vectorized posterior over a batch of query points."""

    mean: np.ndarray
    var_gp: np.ndarray
    var_wk: np.ndarray
    prior_var: np.ndarray

    @property
    def std_gp(self):
        return np.sqrt(self.var_gp)

    @property
    def std_wk(self):
        return np.sqrt(self.var_wk)

    @property
    def gap(self):
        """``sqrt(var_gp - var_wk)``, guarded at zero."""
        return np.sqrt(np.maximum(self.var_gp - self.var_wk, 0.0))


def predict(model, xs):
    """Posterior mean, GP variance and Wiener variance at every point of ``xs``."""
    return predict_shared([model], xs)[0]


def predict_shared(models, xs):
    """:func:`predict` for several models that share one factorization.

    The models must come from :func:`refit_labels` on a common model (same
    inputs, kernel, noise and factor); the variances are computed once.
    """
    global _clamps
    base = models[0]
    if any(m.factor is not base.factor for m in models[1:]):
        raise InvalidInputError("predict_shared needs models with a common factor")
    pts = as_points(xs, dim=base.data.dim if len(base.data) else None)
    prior = kernel_diag(base.kernel, pts)
    if len(base.data) == 0:
        n = pts.shape[0]
        return [Posterior(np.zeros(n), prior.copy(), np.zeros(n), prior) for _ in models]
    kx = cross_kernel(base.kernel, base.data.inputs, pts)
    v = solve_triangular(base.factor, kx, lower=True, check_finite=False)
    q = solve_triangular(base.factor, v, lower=True, trans="T", check_finite=False)
    var_gp = prior - np.einsum("ij,ij->j", v, v)
    neg = var_gp < 0
    if np.any(neg):
        _clamps += int(neg.sum())
        logger.debug("clamped %d negative posterior variances (min %.3e)", neg.sum(), var_gp.min())
        var_gp = np.where(neg, 0.0, var_gp)
    var_wk = base.sigma_m ** 2 * np.einsum("ij,ij->j", q, q)
    return [Posterior(kx.T @ m.alpha, var_gp, var_wk, prior) for m in models]


def query(model, x):
    """Posterior at a single point."""
    p = predict(model, as_point(x)[None, :])
    return PosteriorQuery(float(p.mean[0]), float(p.var_gp[0]), float(p.var_wk[0]))


def posterior_mean(model, x):
    return query(model, x).mean


def posterior_variance(model, x):
    return query(model, x).var_gp


def wiener_variance(model, x):
    return query(model, x).var_wk


def epistemic_gap(model, x):
    """``sqrt(max(var_gp - var_wk, 0))``: the error scale for noise-free labels."""
    p = predict(model, as_point(x)[None, :])
    return float(p.gap[0])


def feature_space_gap(kernel, xs, sigma_m, x):
    """``var_gp - var_wk`` evaluated in weight space.

    Computes ``sigma_m**4 phi(x)' (sigma_m**2 I + Phi Phi')^{-2} phi(x)``
    with ``Phi`` the ``n_phi x D`` matrix of training features.  Independent
    of the kernel-space route; only defined for :class:`FiniteFeature`.
    """
    if not isinstance(kernel, FiniteFeature):
        raise UnsupportedKernelError("feature_space_gap needs a FiniteFeature kernel")
    pts = as_points(xs)
    phi_x = kernel.features(as_point(x)[None, :])[0]
    Phi = kernel.features(pts).T if pts.shape[0] else np.zeros((kernel.n_features, 0))
    s2 = float(sigma_m) ** 2
    M = s2 * np.eye(kernel.n_features) + Phi @ Phi.T
    w = np.linalg.solve(M, phi_x)
    return float(s2 * s2 * (w @ w))
