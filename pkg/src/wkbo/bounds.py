"""Probabilistic uniform error bounds for GP regression under Gaussian noise.

Three bounds ``eta(x)`` on ``|mu(x) - g(x)|`` (each holding with probability
at least ``1 - delta`` given ``B >= |g|_H``):

=============  ======================================================
``wk``         ``B sqrt(var_gp - var_wk) + beta_wk(delta) std_wk``
``ay``         ``(B + beta_1(delta)) std_gp``  (Abbasi-Yadkori)
``fiedler``    ``B std_gp + beta_2(delta) std_wk``  (Fiedler et al.)
=============  ======================================================

``sigma_m |K_M^{-1} k(x)|`` equals ``std_wk``, which is how the Fiedler row
is evaluated.
"""

import enum
import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidParameterError
from .gp import Posterior, cholesky_lower, predict
from .kernels import as_point, gram_matrix

__all__ = [
    "BoundKind",
    "BoundSpec",
    "BoundValue",
    "BoundGrid",
    "beta_wk",
    "beta_1",
    "beta_2",
    "log_gamma",
    "gamma_condition",
    "bound_beta",
    "error_bound",
    "error_bound_grid",
    "ucb",
    "ucb_grid",
    "tightness_margin",
]


class BoundKind(str, enum.Enum):
    WIENER_KERNEL = "wk"
    ABBASI_YADKORI = "ay"
    FIEDLER = "fiedler"


def _check_delta(delta):
    if not (0.0 < delta < 1.0):
        raise InvalidParameterError(f"delta must lie in (0, 1), got {delta}")


@dataclass(frozen=True)
class BoundSpec:
    kind: BoundKind
    B: float
    delta: float

    def __post_init__(self):
        object.__setattr__(self, "kind", BoundKind(self.kind))
        if not (np.isfinite(self.B) and self.B > 0):
            raise InvalidParameterError(f"B must be positive, got {self.B}")
        _check_delta(self.delta)


@dataclass(frozen=True)
class BoundValue:
    eta: float
    beta: float
    rkhs_term: float
    noise_term: float


@dataclass(frozen=True, eq=False)
class BoundGrid:
    """Vectorized bound over a batch of points, with the posterior it used."""

    eta: np.ndarray
    beta: float
    rkhs_term: np.ndarray
    noise_term: np.ndarray
    posterior: Posterior


def beta_wk(delta):
    """``sqrt(2 ln(2 / delta))``; does not depend on the data."""
    _check_delta(delta)
    return math.sqrt(2.0 * math.log(2.0 / delta))


def log_gamma(gram, sigma_m):
    """``ln det(K / sigma_m**2 + I)`` from the Cholesky log-diagonal."""
    if not sigma_m > 0:
        raise InvalidParameterError(f"sigma_m must be positive, got {sigma_m}")
    K = np.asarray(gram, dtype=float)
    if K.size == 0:
        return 0.0
    A = K / sigma_m ** 2
    A[np.diag_indices_from(A)] += 1.0
    L = cholesky_lower(A)
    return float(2.0 * np.sum(np.log(np.diag(L))))


def beta_1(delta, gram, sigma_m):
    """``sqrt(ln det(K / sigma_m**2 + I) + 2 ln(1 / delta))``."""
    _check_delta(delta)
    return math.sqrt(log_gamma(gram, sigma_m) + 2.0 * math.log(1.0 / delta))


def beta_2(delta, d):
    """``sqrt(D + 2 sqrt(D) sqrt(ln(1/delta)) + 2 ln(1/delta))``."""
    _check_delta(delta)
    if d < 0:
        raise InvalidParameterError(f"D must be non-negative, got {d}")
    l = math.log(1.0 / delta)
    return math.sqrt(d + 2.0 * math.sqrt(d) * math.sqrt(l) + 2.0 * l)


def gamma_condition(gram, sigma_m):
    """Return ``(gamma, gamma > 4)`` with ``gamma = det(K / sigma_m**2 + I)``.

    The predicate is decided on the log scale, so it stays correct when
    ``gamma`` itself overflows to ``inf``.
    """
    lg = log_gamma(gram, sigma_m)
    gamma = math.exp(lg) if lg < 709.0 else math.inf
    return gamma, lg > math.log(4.0)


def bound_beta(model, spec):
    """The confidence parameter the bound uses for this model's data."""
    if spec.kind is BoundKind.WIENER_KERNEL:
        return beta_wk(spec.delta)
    if spec.kind is BoundKind.ABBASI_YADKORI:
        return beta_1(spec.delta, gram_matrix(model.kernel, model.data.inputs), model.sigma_m)
    return beta_2(spec.delta, len(model.data))


def error_bound_grid(model, spec, xs, posterior=None):
    """Evaluate ``eta`` at every point of ``xs``.

    ``posterior`` may be passed to reuse an existing :func:`predict` result
    for the same points.
    """
    post = predict(model, xs) if posterior is None else posterior
    beta = bound_beta(model, spec)
    if spec.kind is BoundKind.WIENER_KERNEL:
        rkhs = spec.B * post.gap
        noise = beta * post.std_wk
    elif spec.kind is BoundKind.ABBASI_YADKORI:
        rkhs = spec.B * post.std_gp
        noise = beta * post.std_gp
    else:
        rkhs = spec.B * post.std_gp
        noise = beta * post.std_wk
    return BoundGrid(rkhs + noise, beta, rkhs, noise, post)


def error_bound(model, spec, x):
    g = error_bound_grid(model, spec, as_point(x)[None, :])
    return BoundValue(float(g.eta[0]), g.beta, float(g.rkhs_term[0]), float(g.noise_term[0]))


def ucb_grid(model, spec, xs, posterior=None):
    """Upper confidence bound ``mu + eta`` at every point of ``xs``."""
    g = error_bound_grid(model, spec, xs, posterior)
    return g.posterior.mean + g.eta


def ucb(model, spec, x):
    return float(ucb_grid(model, spec, as_point(x)[None, :])[0])


def tightness_margin(model, kind, B, delta, xs, posterior=None):
    """``eta_kind(x) - eta_wk(x)`` evaluated without cancellation.

    Subtracting two rounded bounds loses the difference wherever ``std_wk``
    is tiny next to ``std_gp``.  Here the difference is assembled from
    non-negative pieces, using ``std_gp - gap = var_wk / (std_gp + gap)``.
    """
    kind = BoundKind(kind)
    post = predict(model, xs) if posterior is None else posterior
    std_gp, gap = post.std_gp, post.gap
    denom = std_gp + gap
    rkhs = np.divide(B * post.var_wk, denom, out=np.zeros_like(denom), where=denom > 0)
    b_wk = beta_wk(delta)
    if kind is BoundKind.ABBASI_YADKORI:
        beta = bound_beta(model, BoundSpec(kind, B, delta))
        return rkhs + (beta * std_gp - b_wk * post.std_wk)
    if kind is BoundKind.FIEDLER:
        return rkhs + (beta_2(delta, len(model.data)) - b_wk) * post.std_wk
    return np.zeros_like(std_gp)
