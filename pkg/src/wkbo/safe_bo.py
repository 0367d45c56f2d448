"""Interior-point safe Bayesian optimization.

At each step the action maximizes ``ucb_f(x) + tau * ln(-ucb_g(x))`` over a
uniform grid of the domain, restricted to points with ``ucb_g(x) < 0``.  If no
grid point qualifies, the known safe action is applied instead.  Both
surrogates are refitted from scratch after every observation.
"""

from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Optional, Tuple

import numpy as np

from .bounds import BoundGrid, BoundSpec, error_bound_grid, ucb_grid
from .errors import InvalidObservationError, InvalidParameterError
from .gp import Dataset, GpModel, fit, predict, predict_shared, refit_labels
from .kernels import as_point

__all__ = [
    "SafeBoConfig",
    "Observation",
    "BoState",
    "StepRecord",
    "initial_state",
    "acquisition_score",
    "acquisition_grid",
    "select_action",
    "observe",
    "safe_region",
    "run",
]


@dataclass(frozen=True, eq=False)
class SafeBoConfig:
    """Problem and algorithm settings.

    Parameters
    ----------
    domain : sequence of (low, high)
        One closed interval per input dimension.
    grid_points : int
        Grid points per dimension used for the acquisition and the safe region.
    tau : float
        Log-barrier weight.
    x_safe : float or array_like
        Action known to satisfy the constraint.
    bound_f, bound_g : BoundSpec
        Error bounds for the objective and constraint surrogates.
    sigma_m : float
        Measurement noise standard deviation.
    kernel : KernelSpec
    jitter : float
        Extra diagonal added when factorizing, 0 by default.
    """

    domain: Tuple[Tuple[float, float], ...]
    grid_points: int
    tau: float
    x_safe: object
    bound_f: BoundSpec
    bound_g: BoundSpec
    sigma_m: float
    kernel: object
    jitter: float = 0.0

    def __post_init__(self):
        dom = tuple((float(lo), float(hi)) for lo, hi in np.atleast_2d(np.asarray(self.domain, dtype=float)))
        object.__setattr__(self, "domain", dom)
        for lo, hi in dom:
            if not hi > lo:
                raise InvalidParameterError(f"empty domain interval [{lo}, {hi}]")
        if int(self.grid_points) < 2:
            raise InvalidParameterError("grid_points must be at least 2")
        if not self.tau > 0:
            raise InvalidParameterError(f"tau must be positive, got {self.tau}")
        if not self.sigma_m > 0:
            raise InvalidParameterError(f"sigma_m must be positive, got {self.sigma_m}")
        xs = as_point(self.x_safe)
        if xs.size != len(dom) or not self.contains(xs):
            raise InvalidParameterError(f"x_safe {self.x_safe} lies outside the domain")
        object.__setattr__(self, "x_safe", xs)

    @property
    def dim(self):
        return len(self.domain)

    def contains(self, x):
        p = as_point(x)
        return p.size == len(self.domain) and all(lo <= v <= hi for v, (lo, hi) in zip(p, self.domain))

    @cached_property
    def grid(self):
        """Tensor grid, shape ``(grid_points**dim, dim)``, in lexicographic order."""
        axes = [np.linspace(lo, hi, int(self.grid_points)) for lo, hi in self.domain]
        mesh = np.meshgrid(*axes, indexing="ij")
        g = np.stack([m.ravel() for m in mesh], axis=1)
        g.setflags(write=False)
        return g

    @property
    def volume(self):
        return float(np.prod([hi - lo for lo, hi in self.domain]))


@dataclass(frozen=True)
class Observation:
    x: np.ndarray
    y_f: float
    y_g: float
    feasible: Optional[bool]


@dataclass(frozen=True, eq=False)
class BoState:
    """Surrogates fitted on exactly the first ``t`` observations."""

    model_f: GpModel
    model_g: GpModel
    t: int = 0
    history: Tuple[Observation, ...] = field(default_factory=tuple)


@dataclass(frozen=True)
class StepRecord:
    """One loop iteration; measure and beta refer to the state after the update."""

    t: int
    x: np.ndarray
    y_f: float
    y_g: float
    feasible: bool
    safe_measure: float
    beta_f: float
    beta_g: float


def initial_state(cfg):
    empty = Dataset.empty(cfg.dim)
    m = fit(cfg.kernel, empty, cfg.sigma_m, cfg.jitter)
    return BoState(m, m, 0, ())


def _scores(ucb_f, ucb_g, tau):
    feasible = ucb_g < 0
    out = np.full(ucb_g.shape, -np.inf)
    out[feasible] = ucb_f[feasible] + tau * np.log(-ucb_g[feasible])
    return out


def acquisition_grid(state, cfg, xs):
    """Log-barrier scores at ``xs``; ``-inf`` where ``ucb_g >= 0``.

    Returns
    -------
    scores, ucb_g : ndarray
    """
    uf = ucb_grid(state.model_f, cfg.bound_f, xs)
    ug = ucb_grid(state.model_g, cfg.bound_g, xs)
    return _scores(uf, ug, cfg.tau), ug


def acquisition_score(state, cfg, x):
    scores, _ = acquisition_grid(state, cfg, as_point(x)[None, :])
    return float(scores[0])


def _pick(scores, cfg):
    if not np.any(np.isfinite(scores)):
        return cfg.x_safe.copy(), False
    # np.argmax returns the first maximizer; the grid is sorted, so ties go left
    return cfg.grid[int(np.argmax(scores))].copy(), True


def select_action(state, cfg):
    """Grid maximizer of the barrier acquisition, or ``(x_safe, False)``."""
    scores, _ = acquisition_grid(state, cfg, cfg.grid)
    return _pick(scores, cfg)


def observe(state, cfg, x_t, y_f, y_g, feasible=None):
    """Return a new state with ``(x_t, y_f, y_g)`` appended and both models refitted."""
    x = as_point(x_t)
    if not cfg.contains(x):
        raise InvalidObservationError(f"action {x} lies outside the domain")
    if not (np.isfinite(y_f) and np.isfinite(y_g)):
        raise InvalidObservationError(f"non-finite observation y_f={y_f}, y_g={y_g}")
    data_f = state.model_f.data.append(x, y_f)
    model_f = fit(cfg.kernel, data_f, cfg.sigma_m, cfg.jitter)
    labels_g = np.append(state.model_g.data.labels, float(y_g))
    model_g = refit_labels(model_f, labels_g)
    obs = Observation(x, float(y_f), float(y_g), feasible)
    return BoState(model_f, model_g, state.t + 1, state.history + (obs,))


def _measure(mask, cfg):
    return float(np.count_nonzero(mask)) / mask.size * cfg.volume


def safe_region(state, cfg):
    """``(measure, mask)`` of ``{x on grid : ucb_g(x) <= 0}``."""
    ug = ucb_grid(state.model_g, cfg.bound_g, cfg.grid)
    mask = ug <= 0
    return _measure(mask, cfg), mask


def run(
    cfg: SafeBoConfig,
    oracle_f: Callable,
    oracle_g: Callable,
    noise_source: Callable,
    T: int,
    state: Optional[BoState] = None,
):
    """Run ``T`` steps of safe BO.

    Parameters
    ----------
    oracle_f, oracle_g : callable
        True objective and constraint, ``x -> float``.
    noise_source : callable
        ``t -> (noise_f, noise_g)`` for the 1-based step ``t``.

    Returns
    -------
    records : list of StepRecord
    state : BoState
        State after the last step.
    """
    if T < 1:
        raise InvalidParameterError(f"T must be at least 1, got {T}")
    state = initial_state(cfg) if state is None else state
    uf, ug, _, _ = _grid_ucbs(state, cfg)
    records = []
    for t in range(1, T + 1):
        x, feasible = _pick(_scores(uf, ug, cfg.tau), cfg)
        xv = x[0] if x.size == 1 else x
        m_f, m_g = noise_source(t)
        y_f = float(oracle_f(xv)) + m_f
        y_g = float(oracle_g(xv)) + m_g
        state = observe(state, cfg, x, y_f, y_g, feasible)
        uf, ug, beta_f, beta_g = _grid_ucbs(state, cfg)
        records.append(
            StepRecord(
                t=t,
                x=x,
                y_f=y_f,
                y_g=y_g,
                feasible=feasible,
                safe_measure=_measure(ug <= 0, cfg),
                beta_f=beta_f,
                beta_g=beta_g,
            )
        )
    return records, state


def _grid_ucbs(state, cfg):
    """Both UCBs on the grid and their betas, from one shared posterior solve."""
    if state.model_g.factor is state.model_f.factor:
        post_f, post_g = predict_shared([state.model_f, state.model_g], cfg.grid)
    else:
        post_f, post_g = predict(state.model_f, cfg.grid), predict(state.model_g, cfg.grid)
    bf = error_bound_grid(state.model_f, cfg.bound_f, cfg.grid, post_f)
    if cfg.bound_g == cfg.bound_f:
        bg = BoundGrid(bf.eta, bf.beta, bf.rkhs_term, bf.noise_term, post_g)
    else:
        bg = error_bound_grid(state.model_g, cfg.bound_g, cfg.grid, post_g)
    return post_f.mean + bf.eta, post_g.mean + bg.eta, bf.beta, bg.beta
