"""Randomized property suites for the GP variances and the error bounds.

Each suite draws its own instances from a seeded generator, counts
violations of one property and returns a :class:`SuiteResult`.  The CLI's
``verify-invariants`` command and the acceptance tests both run these.
"""

import time
from dataclasses import dataclass

import numpy as np

from . import gp
from .bounds import BoundKind, BoundSpec, beta_wk, error_bound_grid, log_gamma, tightness_margin
from .kernels import FiniteFeature, SquaredExponential, cross_kernel, gram_matrix, rkhs_norm_of_expansion

__all__ = ["SuiteResult", "SUITES", "run_suite"]


@dataclass
class SuiteResult:
    name: str
    trials: int
    checks: int
    violations: int
    worst: float
    seconds: float
    note: str = ""

    @property
    def passed(self):
        return self.violations == 0

    def line(self):
        status = "PASS" if self.passed else "FAIL"
        return (f"{status} {self.name}: trials={self.trials} checks={self.checks} "
                f"violations={self.violations} worst={self.worst:.3e} "
                f"time={self.seconds:.2f}s{(' ' + self.note) if self.note else ''}")


def _random_se(rng, sigma=(0.5, 5.0), ell=(0.2, 5.0)):
    return SquaredExponential(rng.uniform(*sigma), rng.uniform(*ell))


def _random_features(rng, n_phi):
    freq = rng.uniform(0.2, 2.0, n_phi)
    phase = rng.uniform(0, 2 * np.pi, n_phi)
    amp = rng.uniform(0.2, 2.0, n_phi)
    return FiniteFeature(lambda p: amp * np.cos(freq * p[0] + phase), n_phi)


def lemma4(trials=10_000, seed=0):
    """``var_wk <= var_gp + 1e-9 k(x, x)`` for random SE models."""
    rng = np.random.default_rng(seed)
    viol, worst = 0, -np.inf
    gp.reset_clamp_count()
    for _ in range(trials):
        kern = _random_se(rng)
        D = int(rng.integers(0, 51))
        data = gp.Dataset(rng.uniform(-5, 5, D), rng.normal(size=D))
        model = gp.fit(kern, data, rng.uniform(0.1, 3.0))
        post = gp.predict(model, rng.uniform(-6, 6, 1))
        excess = float((post.var_wk - post.var_gp)[0] / post.prior_var[0])
        worst = max(worst, excess)
        viol += excess > 1e-9
    note = f"clamps={gp.clamp_count()}"
    return viol, worst, trials, note


def eq12(trials=1_000, seed=1):
    """``sigma_m |K_M^{-1} k(x)| == std_wk`` via an independent dense solve."""
    rng = np.random.default_rng(seed)
    viol, worst = 0, 0.0
    for _ in range(trials):
        kern = _random_se(rng)
        D = int(rng.integers(1, 51))
        xs = rng.uniform(-5, 5, D)
        s = rng.uniform(0.1, 3.0)
        model = gp.fit(kern, gp.Dataset(xs, np.zeros(D)), s)
        x = rng.uniform(-6, 6)
        K = gram_matrix(kern, xs) + s ** 2 * np.eye(D)
        kx = cross_kernel(kern, xs, [x])[:, 0]
        lhs = s * np.linalg.norm(np.linalg.solve(K, kx))
        rhs = np.sqrt(gp.wiener_variance(model, x))
        err = abs(lhs - rhs)
        if rhs < 1e-6:
            bad = err > 1e-12
            worst = max(worst, err / 1e-12 * 1e-10)
        else:
            bad = err > 1e-10 * rhs
            worst = max(worst, err / rhs)
        viol += bad
    return viol, worst, trials, "worst is relative error"


def appendix_a(trials=1_000, seed=2):
    """Kernel-space ``var_gp - var_wk`` equals the weight-space expression."""
    rng = np.random.default_rng(seed)
    viol, worst = 0, 0.0
    for _ in range(trials):
        kern = _random_features(rng, int(rng.integers(1, 7)))
        D = int(rng.integers(0, 21))
        xs = rng.uniform(-5, 5, D)
        s = rng.uniform(0.1, 3.0)
        model = gp.fit(kern, gp.Dataset(xs, rng.normal(size=D)), s)
        x = rng.uniform(-6, 6)
        gap2 = gp.epistemic_gap(model, x) ** 2
        ref = gp.feature_space_gap(kern, xs, s, x)
        kxx = float(kern.diag(np.array([[x]]))[0])
        err = abs(gap2 - ref) / kxx
        worst = max(worst, err)
        viol += err > 1e-8
    return viol, worst, trials, "worst is error / k(x,x)"


def strictness(trials=1_000, seed=3):
    """``var_wk < var_gp`` strictly for finite-feature kernels with ``phi(x) != 0``."""
    rng = np.random.default_rng(seed)
    viol, worst = 0, np.inf
    for _ in range(trials):
        kern = _random_features(rng, int(rng.integers(1, 7)))
        D = int(rng.integers(0, 21))
        xs = rng.uniform(-5, 5, D)
        model = gp.fit(kern, gp.Dataset(xs, np.zeros(D)), rng.uniform(0.1, 3.0))
        post = gp.predict(model, rng.uniform(-6, 6, 1))
        kxx = post.prior_var[0]
        if kxx == 0:
            continue
        # the exact margin is the weight-space gap, which is > 0
        margin = (post.var_gp[0] - post.var_wk[0]) / kxx
        worst = min(worst, margin)
        viol += not margin > -1e-12
    return viol, worst, trials, "worst is smallest margin / k(x,x)"


def _rkhs_function(rng, kern, m):
    z = rng.uniform(-5, 5, m)
    c = rng.normal(size=m)
    norm = rkhs_norm_of_expansion(kern, z, c)
    return z, c, norm


def lemma2(trials=100, seed=4, grid_size=1_000):
    """``|f - mu| <= |f|_H sqrt(var_gp - var_wk)`` for noise-free labels and any ``sigma_m``."""
    rng = np.random.default_rng(seed)
    grid = np.linspace(-6, 6, grid_size)
    viol, worst = 0, -np.inf
    for _ in range(trials):
        kern = _random_se(rng, ell=(0.3, 3.0))
        m = int(rng.integers(1, 16))
        z, c, norm = _rkhs_function(rng, kern, m)
        idx = rng.choice(m, size=int(rng.integers(0, m + 1)), replace=False)
        xs = z[idx]
        fx = cross_kernel(kern, xs, z) @ c if xs.size else np.zeros(0)
        model = gp.fit(kern, gp.Dataset(xs, fx), rng.uniform(0.01, 2.0))
        post = gp.predict(model, grid)
        f_grid = cross_kernel(kern, grid, z) @ c
        excess = np.abs(f_grid - post.mean) - norm * post.gap
        worst = max(worst, float(excess.max()))
        viol += int(np.count_nonzero(excess > 1e-8))
    return viol, worst, trials * grid_size, "worst is max(|f-mu| - bound)"


def lemma1(trials=100, seed=5, grid_size=1_000):
    """Noise-free special case: ``|f - mu| <= |f|_H std_gp`` with ``sigma_m = 0``."""
    rng = np.random.default_rng(seed)
    grid = np.linspace(-6, 6, grid_size)
    viol, worst = 0, -np.inf
    for _ in range(trials):
        kern = _random_se(rng, ell=(0.3, 2.0))
        m = int(rng.integers(1, 11))
        z, c, norm = _rkhs_function(rng, kern, m)
        idx = rng.choice(m, size=int(rng.integers(0, m + 1)), replace=False)
        xs = z[idx]
        fx = cross_kernel(kern, xs, z) @ c if xs.size else np.zeros(0)
        model = gp.fit(kern, gp.Dataset(xs, fx), 0.0, jitter=1e-10)
        post = gp.predict(model, grid)
        f_grid = cross_kernel(kern, grid, z) @ c
        excess = np.abs(f_grid - post.mean) - norm * post.std_gp
        worst = max(worst, float(excess.max()))
        viol += int(np.count_nonzero(excess > 1e-8))
    return viol, worst, trials * grid_size, "worst is max(|f-mu| - bound)"


def monotone(trials=200, seed=6, steps=20):
    """Adding a data point never increases ``var_gp`` at a fixed query set."""
    rng = np.random.default_rng(seed)
    viol, worst, checks = 0, -np.inf, 0
    grid = np.linspace(-6, 6, 25)
    for _ in range(trials):
        kern = _random_se(rng)
        s = rng.uniform(0.1, 3.0)
        data = gp.Dataset.empty()
        prev = gp.predict(gp.fit(kern, data, s), grid).var_gp
        for _ in range(steps):
            data = data.append(rng.uniform(-5, 5), rng.normal())
            cur = gp.predict(gp.fit(kern, data, s), grid).var_gp
            inc = cur - prev
            worst = max(worst, float(inc.max()))
            viol += int(np.count_nonzero(inc > 1e-9))
            checks += grid.size
            prev = cur
    return viol, worst, checks, "worst is largest increase"


def theorem1(trials=10_000, seed=7, deltas=(0.05, 0.01)):
    """Coverage of ``|k(x)' K_M^{-1} m| <= beta_wk std_wk`` over Gaussian noise draws.

    Fixed design of 10 points, SE(4.21, 3.59), ``sigma_m = 1``, 21 query
    points; a violation is a query point whose empirical coverage is below
    ``1 - delta``.
    """
    rng = np.random.default_rng(seed)
    kern = SquaredExponential(4.21, 3.59)
    xs = np.linspace(-5, 5, 10)
    grid = np.linspace(-5, 5, 21)
    model = gp.fit(kern, gp.Dataset(xs, np.zeros(10)), 1.0)
    std_wk = gp.predict(model, grid).std_wk
    noise = rng.standard_normal((10, trials))
    # rows: query points, columns: noise draws
    proj = cross_kernel(kern, grid, xs) @ np.linalg.solve(
        gram_matrix(kern, xs) + np.eye(10), noise)
    viol, worst, notes = 0, np.inf, []
    for d in deltas:
        cov = np.mean(np.abs(proj) <= beta_wk(d) * std_wk[:, None], axis=1)
        viol += int(np.count_nonzero(cov < 1 - d))
        worst = min(worst, float(cov.min() - (1 - d)))
        notes.append(f"min coverage at delta={d}: {cov.min():.4f}")
    return viol, worst, len(deltas) * grid.size, "; ".join(notes)


def coverage(trials=2_000, seed=8, delta=0.05):
    """Uniform-over-grid coverage of the full Wiener-kernel bound.

    ``g = sum c_i k(., z_i)`` with ``B = |g|_H``, 10 noisy observations;
    the event is ``max_x (|mu(x) - g(x)| - eta_wk(x)) <= 0``.
    """
    rng = np.random.default_rng(seed)
    kern = SquaredExponential(4.21, 3.59)
    z, c, norm = _rkhs_function(rng, kern, 8)
    xs = np.linspace(-5, 5, 10)
    grid = np.linspace(-5, 5, 101)
    g_xs = cross_kernel(kern, xs, z) @ c
    g_grid = cross_kernel(kern, grid, z) @ c
    model = gp.fit(kern, gp.Dataset(xs, g_xs), 1.0)
    eta = error_bound_grid(model, BoundSpec(BoundKind.WIENER_KERNEL, norm, delta), grid).eta
    Y = g_xs[:, None] + rng.standard_normal((10, trials))
    mu = cross_kernel(kern, grid, xs) @ np.linalg.solve(gram_matrix(kern, xs) + np.eye(10), Y)
    sup = np.max(np.abs(mu - g_grid[:, None]) - eta[:, None], axis=0)
    freq = float(np.mean(sup <= 0))
    return int(freq < 1 - delta), freq, trials, f"coverage={freq:.4f} target={1 - delta}"


def lemma5(trials=1_000, seed=9, grid_size=101):
    """Pointwise dominance of ``eta_wk`` over ``eta_1`` and ``eta_2``, and the safe-set inclusion.

    (a) wherever ``gamma(K) > 4``: ``eta_wk < eta_1`` at every grid point;
    (b) wherever ``D >= 2`` (or ``D == 1`` and ``delta < 0.5``): ``eta_wk < eta_2``;
    and, with a shared mean, ``{ucb_i <= 0}`` is contained in ``{ucb_wk <= 0}``.

    Strictness is judged on :func:`tightness_margin`.  Lengthscales stay at or
    above 0.5 so that kernel sections over the grid do not underflow to zero,
    where both bounds coincide in floating point.
    """
    rng = np.random.default_rng(seed)
    grid = np.linspace(-6, 6, grid_size)
    deltas = (0.5, 0.1, 0.01, 0.001)
    viol, checks, worst = 0, 0, np.inf
    n_a = n_b = 0
    for i in range(trials):
        kern = _random_se(rng, ell=(0.5, 5.0))
        D = int(rng.integers(0, 31))
        s = rng.uniform(0.1, 3.0)
        delta = deltas[i % len(deltas)] if i % 5 else float(rng.uniform(1e-4, 0.9))
        B = rng.uniform(0.1, 5.0)
        data = gp.Dataset(rng.uniform(-5, 5, D), rng.normal(scale=3.0, size=D))
        model = gp.fit(kern, data, s)
        post = gp.predict(model, grid)
        wk = error_bound_grid(model, BoundSpec(BoundKind.WIENER_KERNEL, B, delta), grid, post).eta
        checks_here = (
            (BoundKind.ABBASI_YADKORI, log_gamma(gram_matrix(kern, data.inputs), s) > np.log(4.0)),
            (BoundKind.FIEDLER, D >= 2 or (D == 1 and delta < 0.5)),
        )
        for kind, applies in checks_here:
            if not applies:
                continue
            if kind is BoundKind.ABBASI_YADKORI:
                n_a += 1
            else:
                n_b += 1
            other = error_bound_grid(model, BoundSpec(kind, B, delta), grid, post).eta
            margin = tightness_margin(model, kind, B, delta, grid, post)
            checks += 2 * grid_size
            viol += int(np.count_nonzero(~(margin > 0)))
            viol += int(np.count_nonzero((post.mean + other <= 0) & ~(post.mean + wk <= 0)))
            worst = min(worst, float(np.min(margin / np.maximum(post.std_gp, 1e-300))))
    return viol, worst, checks, f"gamma>4 in {n_a}, D-condition in {n_b} datasets; worst is min margin / std_gp"


SUITES = {
    "lemma4": lemma4,
    "eq12": eq12,
    "appendix_a": appendix_a,
    "strictness": strictness,
    "lemma2": lemma2,
    "lemma1": lemma1,
    "monotone": monotone,
    "theorem1": theorem1,
    "coverage": coverage,
    "lemma5": lemma5,
}


def run_suite(name, trials=None, seed=None):
    """Run one suite by name; ``trials``/``seed`` override the suite defaults."""
    fn = SUITES[name]
    kw = {}
    if trials is not None:
        kw["trials"] = trials
    if seed is not None:
        kw["seed"] = seed
    t0 = time.perf_counter()
    viol, worst, checks, note = fn(**kw)
    n = kw.get("trials", fn.__defaults__[0])
    return SuiteResult(name, n, int(checks), int(viol), float(worst), time.perf_counter() - t0, note)
