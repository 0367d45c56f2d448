"""Cubic benchmark for safe BO and its Monte Carlo harness.

The objective is ``f(x) = 0.01 x**3 - 0.2 x**2 + 0.2 x`` on ``[-5, 5]`` with
constraint ``g(x) = -f(x) + f_min <= 0``.  Every method replays the same noise
sequence for a given run index, so methods are compared on paired samples.
"""

import csv
import io
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import MISSING, asdict, dataclass, field, fields
from importlib import resources
from typing import Dict, Tuple

import numpy as np
from scipy.optimize import minimize_scalar

from ._io import atomic_write_text
from .bounds import BoundKind, BoundSpec
from .errors import ConfigError, InvalidInputError, SchemaError
from .kernels import SquaredExponential
from .safe_bo import SafeBoConfig, run

__all__ = [
    "BenchmarkSpec",
    "RunRecord",
    "MethodSummary",
    "Summary",
    "load_config",
    "default_spec",
    "benchmark_f",
    "benchmark_g",
    "maximize_objective",
    "oracle_safe_measure",
    "noise_streams",
    "make_safe_bo_config",
    "run_single",
    "run_monte_carlo",
    "cumulative_regret",
    "summarize",
    "persist",
    "load",
    "persist_summary",
    "RESULT_HEADER",
    "SUMMARY_HEADER",
    "SCHEMA_VERSION",
    "ENV_PREFIX",
]

SCHEMA_VERSION = 1
ENV_PREFIX = "WKBO_"
RESULT_HEADER = ["method", "run", "step", "x", "y_f", "y_g", "feasible", "regret",
                 "cum_regret", "safe_measure", "beta"]
SUMMARY_HEADER = ["method", "step", "mean_regret", "lo_band", "hi_band", "mean_safe_measure"]

METHOD_NAMES = {k.value for k in BoundKind}


def _fmt(v):
    return format(float(v), ".17g")


@dataclass(frozen=True)
class BenchmarkSpec:
    coefficients: Tuple[float, ...]
    f_min: float
    domain: Tuple[float, float]
    x_safe: float
    f_opt: float
    sigma_noise: float
    sigma_se: float
    l_se: float
    B: float
    delta: float
    tau: float
    T: int
    n_runs: int
    grid_points: int = 1001
    methods: Tuple[str, ...] = ("wk", "ay", "fiedler")
    independent_g_noise: bool = False
    jitter: float = 0.0
    schema_version: int = SCHEMA_VERSION
    # derived in __post_init__, not read from config
    f_opt_computed: float = field(default=float("nan"), compare=False)

    def __post_init__(self):
        self._validate()
        x_star, f_star = maximize_objective(self.coefficients, self.domain)
        grid = np.linspace(self.domain[0], self.domain[1], self.grid_points)
        f_star = max(f_star, float(np.max(np.polyval(self.coefficients, grid))))
        if abs(f_star - self.f_opt) > 1e-3:
            raise ConfigError(
                f"f_opt={self.f_opt} does not match the maximum {f_star:.6f} of the objective",
                "f_opt",
            )
        object.__setattr__(self, "f_opt_computed", f_star)

    def _validate(self):
        def bad(name, why):
            raise ConfigError(f"{name}: {why}", name)

        if self.schema_version != SCHEMA_VERSION:
            bad("schema_version", f"expected {SCHEMA_VERSION}, got {self.schema_version}")
        if len(self.coefficients) < 1 or not all(map(math.isfinite, self.coefficients)):
            bad("coefficients", "need a non-empty list of finite numbers")
        lo, hi = self.domain
        if not hi > lo:
            bad("domain", "need [low, high] with low < high")
        if not lo <= self.x_safe <= hi:
            bad("x_safe", "must lie in the domain")
        if benchmark_f(self.x_safe, self.coefficients) < self.f_min:
            bad("x_safe", "violates the constraint f(x_safe) >= f_min")
        for name in ("sigma_noise", "sigma_se", "l_se", "B", "tau"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0):
                bad(name, "must be a positive number")
        if not 0 < self.delta < 1:
            bad("delta", "must lie in (0, 1)")
        for name in ("T", "n_runs"):
            if getattr(self, name) < 1:
                bad(name, "must be at least 1")
        if self.grid_points < 2:
            bad("grid_points", "must be at least 2")
        if not self.methods or any(m not in METHOD_NAMES for m in self.methods):
            bad("methods", f"each entry must be one of {sorted(METHOD_NAMES)}")
        if not self.jitter >= 0:
            bad("jitter", "must be non-negative")

    @property
    def domain_length(self):
        return self.domain[1] - self.domain[0]

    def f(self, x):
        return benchmark_f(x, self.coefficients)

    def g(self, x):
        return benchmark_g(x, self.coefficients, self.f_min)

    def replace(self, **changes):
        d = self.to_mapping()
        d.update(changes)
        return BenchmarkSpec.from_mapping(d)

    def to_mapping(self):
        d = asdict(self)
        d.pop("f_opt_computed")
        d["coefficients"] = list(self.coefficients)
        d["domain"] = list(self.domain)
        d["methods"] = list(self.methods)
        return d

    @classmethod
    def from_mapping(cls, m):
        """Build a spec from a config mapping, checking every field.

        All benchmark constants are required; ``grid_points``, ``methods``,
        ``independent_g_noise``, ``jitter`` and ``schema_version`` fall back
        to their defaults.
        """
        known = {f.name: f for f in fields(cls) if f.name != "f_opt_computed"}
        unknown = sorted(set(m) - set(known))
        if unknown:
            raise ConfigError(f"unknown config key {unknown[0]!r}", unknown[0])
        kw = {}
        for name, f in known.items():
            if name not in m:
                if f.default is not MISSING:
                    continue
                raise ConfigError(f"missing required config key {name!r}", name)
            kw[name] = _coerce(name, m[name])
        return cls(**kw)


def _coerce(name, v):
    try:
        if name in ("coefficients", "domain"):
            out = tuple(float(a) for a in v)
            if name == "domain" and len(out) != 2:
                raise ValueError("expected two numbers")
            return out
        if name == "methods":
            if isinstance(v, str):
                v = [s.strip() for s in v.split(",") if s.strip()]
            return tuple(str(a) for a in v)
        if name == "independent_g_noise":
            if isinstance(v, str):
                if v.lower() not in ("true", "false", "1", "0"):
                    raise ValueError("expected a boolean")
                return v.lower() in ("true", "1")
            if not isinstance(v, bool):
                raise ValueError("expected a boolean")
            return v
        if name in ("T", "n_runs", "grid_points", "schema_version"):
            if isinstance(v, bool) or float(v) != int(float(v)):
                raise ValueError("expected an integer")
            return int(float(v))
        if isinstance(v, bool):
            raise ValueError("expected a number")
        return float(v)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{name}: invalid value {v!r} ({exc})", name) from None


def _env_overrides(environ):
    out = {}
    for key, raw in environ.items():
        if not key.startswith(ENV_PREFIX):
            continue
        name = key[len(ENV_PREFIX):]
        match = [f.name for f in fields(BenchmarkSpec) if f.name.lower() == name.lower()]
        if not match or match[0] == "f_opt_computed":
            raise ConfigError(f"environment variable {key} names no config key", name.lower())
        try:
            out[match[0]] = json.loads(raw)
        except json.JSONDecodeError:
            out[match[0]] = raw
    return out


def default_mapping():
    text = resources.files("wkbo").joinpath("default_config.json").read_text()
    return json.loads(text)


def load_config(path=None, overrides=None, environ=None):
    """Read a JSON config, apply ``WKBO_*`` environment overrides, then ``overrides``.

    ``path=None`` loads the shipped defaults.
    """
    if path is None:
        m = default_mapping()
    else:
        try:
            with open(path) as fh:
                m = json.load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config {path} is not valid JSON: {exc}") from None
        if not isinstance(m, dict):
            raise ConfigError(f"config {path} must hold a JSON object")
    m.update(_env_overrides(os.environ if environ is None else environ))
    m.update({k: v for k, v in (overrides or {}).items() if v is not None})
    return BenchmarkSpec.from_mapping(m)


def default_spec(**changes):
    m = default_mapping()
    m.update(changes)
    return BenchmarkSpec.from_mapping(m)


def benchmark_f(x, coefficients=(0.01, -0.2, 0.2, 0.0)):
    return np.polyval(coefficients, x)


def benchmark_g(x, coefficients=(0.01, -0.2, 0.2, 0.0), f_min=-5.168):
    return -benchmark_f(x, coefficients) + f_min


def maximize_objective(coefficients, domain):
    """``(x*, f(x*))`` for the maximum of the polynomial on the domain.

    Bounded Brent search on each stretch between real critical points, plus
    both endpoints.
    """
    lo, hi = domain
    deriv = np.polyder(np.asarray(coefficients, dtype=float))
    crit = [r.real for r in np.roots(deriv) if abs(r.imag) < 1e-12 and lo < r.real < hi] if deriv.size > 1 else []
    edges = sorted([lo, hi, *crit])
    cands = [(lo, float(benchmark_f(lo, coefficients))), (hi, float(benchmark_f(hi, coefficients)))]
    for a, b in zip(edges[:-1], edges[1:]):
        res = minimize_scalar(lambda x: -benchmark_f(x, coefficients), bounds=(a, b),
                              method="bounded", options={"xatol": 1e-10})
        cands.append((float(res.x), float(-res.fun)))
    return max(cands, key=lambda c: c[1])


def oracle_safe_measure(spec):
    """Length of the true safe set ``{x in domain : g(x) <= 0}``."""
    lo, hi = spec.domain
    poly = np.polysub(np.asarray(spec.coefficients, dtype=float), [spec.f_min])
    roots = sorted(r.real for r in np.roots(poly) if abs(r.imag) < 1e-12 and lo < r.real < hi)
    edges = [lo, *roots, hi]
    total = 0.0
    for a, b in zip(edges[:-1], edges[1:]):
        if spec.g(0.5 * (a + b)) <= 0:
            total += b - a
    return total


def noise_streams(base_seed, run_index, T, sigma):
    """Noise for one run: ``(noise_f, noise_g)``, each of length ``T``.

    A Philox counter-based stream keyed by ``base_seed + run_index``; step
    ``t`` reads entry ``t - 1``.  ``noise_g`` is only used when the
    constraint is observed with independent noise.
    """
    rng = np.random.Generator(np.random.Philox(base_seed + run_index))
    z = rng.standard_normal((2, T))
    return sigma * z[0], sigma * z[1]


def make_safe_bo_config(spec, method):
    bound = BoundSpec(BoundKind(method), spec.B, spec.delta)
    return SafeBoConfig(
        domain=(spec.domain,),
        grid_points=spec.grid_points,
        tau=spec.tau,
        x_safe=spec.x_safe,
        bound_f=bound,
        bound_g=bound,
        sigma_m=spec.sigma_noise,
        kernel=SquaredExponential(spec.sigma_se, spec.l_se),
        jitter=spec.jitter,
    )


@dataclass(frozen=True, eq=False)
class RunRecord:
    """Trajectory of one method on one run; arrays have length ``T``.

    ``safe_measure`` and ``beta`` are taken after the step's update.
    """

    method: str
    run: int
    x: np.ndarray
    y_f: np.ndarray
    y_g: np.ndarray
    feasible: np.ndarray
    regret: np.ndarray
    cum_regret: np.ndarray
    safe_measure: np.ndarray
    beta: np.ndarray

    def __eq__(self, other):
        if not isinstance(other, RunRecord):
            return NotImplemented
        if (self.method, self.run) != (other.method, other.run):
            return False
        return all(np.array_equal(getattr(self, n), getattr(other, n))
                   for n in ("x", "y_f", "y_g", "feasible", "regret", "cum_regret",
                             "safe_measure", "beta"))

    @property
    def T(self):
        return self.x.size


def cumulative_regret(xs, f_opt, coefficients=(0.01, -0.2, 0.2, 0.0)):
    """Prefix sums of ``f_opt - f(x_t)``."""
    xs = np.asarray(xs, dtype=float)
    return np.cumsum(f_opt - benchmark_f(xs, coefficients))


def run_single(spec, method, run_index, base_seed=0):
    cfg = make_safe_bo_config(spec, method)
    nf, ng = noise_streams(base_seed, run_index, spec.T, spec.sigma_noise)
    if spec.independent_g_noise:
        noise = lambda t: (nf[t - 1], ng[t - 1])
    else:
        # y_g = -y_f + f_min: the same realization enters with flipped sign
        noise = lambda t: (nf[t - 1], -nf[t - 1])
    records, _ = run(cfg, spec.f, spec.g, noise, spec.T)
    x = np.array([float(r.x[0]) for r in records])
    regret = spec.f_opt_computed - spec.f(x)
    return RunRecord(
        method=method,
        run=run_index,
        x=x,
        y_f=np.array([r.y_f for r in records]),
        y_g=np.array([r.y_g for r in records]),
        feasible=np.array([r.feasible for r in records], dtype=bool),
        regret=regret,
        cum_regret=np.cumsum(regret),
        safe_measure=np.array([r.safe_measure for r in records]),
        beta=np.array([r.beta_g for r in records]),
    )


def _task(args):
    spec, method, r, base_seed = args
    return run_single(spec, method, r, base_seed)


def run_monte_carlo(spec, methods=None, base_seed=0, parallelism=1):
    """Run every method on ``spec.n_runs`` paired noise realizations.

    Run ``r`` uses seed ``base_seed + r`` for every method.  The output does
    not depend on ``parallelism``.

    Returns
    -------
    dict
        method name -> list of RunRecord ordered by run index.
    """
    methods = tuple(spec.methods if methods is None else methods)
    for m in methods:
        BoundKind(m)
    tasks = [(spec, m, r, base_seed) for m in methods for r in range(spec.n_runs)]
    if parallelism <= 1:
        out = [_task(t) for t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=parallelism) as ex:
            out = list(ex.map(_task, tasks, chunksize=max(1, len(tasks) // (4 * parallelism))))
    results = {m: [] for m in methods}
    for rec in out:
        results[rec.method].append(rec)
    return results


@dataclass(frozen=True, eq=False)
class MethodSummary:
    mean_regret: np.ndarray
    lo_band: np.ndarray
    hi_band: np.ndarray
    mean_safe_measure: np.ndarray

    @property
    def final_mean_regret(self):
        return float(self.mean_regret[-1])


@dataclass(frozen=True, eq=False)
class Summary:
    methods: Dict[str, MethodSummary]
    reference: str
    relative_increase: Dict[str, float]


def summarize(results, reference="wk", band=75.0):
    """Mean cumulative regret, central ``band``% percentile band, mean safe measure.

    ``relative_increase[m]`` is ``100 (R_m - R_ref) / R_ref`` on the final
    mean cumulative regret; absent when ``reference`` was not run.
    """
    if not results or any(len(v) == 0 for v in results.values()):
        raise InvalidInputError("summarize needs at least one run per method")
    lo_q, hi_q = 50.0 - band / 2, 50.0 + band / 2
    methods = {}
    for m, recs in results.items():
        R = np.vstack([r.cum_regret for r in recs])
        S = np.vstack([r.safe_measure for r in recs])
        methods[m] = MethodSummary(
            mean_regret=R.mean(axis=0),
            lo_band=np.percentile(R, lo_q, axis=0),
            hi_band=np.percentile(R, hi_q, axis=0),
            mean_safe_measure=S.mean(axis=0),
        )
    rel = {}
    if reference in methods:
        ref = methods[reference].final_mean_regret
        rel = {m: 100.0 * (s.final_mean_regret - ref) / ref for m, s in methods.items()}
    return Summary(methods, reference, rel)


def results_to_csv(results):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(RESULT_HEADER)
    for m, recs in results.items():
        for rec in recs:
            for i in range(rec.T):
                w.writerow([m, rec.run, i + 1, _fmt(rec.x[i]), _fmt(rec.y_f[i]), _fmt(rec.y_g[i]),
                            int(rec.feasible[i]), _fmt(rec.regret[i]), _fmt(rec.cum_regret[i]),
                            _fmt(rec.safe_measure[i]), _fmt(rec.beta[i])])
    return buf.getvalue()


def persist(results, path):
    """Write one CSV row per (method, run, step); written atomically."""
    atomic_write_text(path, results_to_csv(results))


def load(path):
    """Inverse of :func:`persist`."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != RESULT_HEADER:
            raise SchemaError(f"{path}: unexpected header {header}")
        rows = {}
        for line in reader:
            if len(line) != len(RESULT_HEADER):
                raise SchemaError(f"{path}: malformed row {line}")
            rows.setdefault(line[0], {}).setdefault(int(line[1]), []).append(line)
    results = {}
    for m, runs in rows.items():
        results[m] = []
        for r, lines in runs.items():
            steps = [int(l[2]) for l in lines]
            if steps != list(range(1, len(lines) + 1)):
                raise SchemaError(f"{path}: steps of {m}/{r} are not 1..T in order")
            col = lambda j: np.array([float(l[j]) for l in lines])
            results[m].append(RunRecord(
                method=m, run=r, x=col(3), y_f=col(4), y_g=col(5),
                feasible=np.array([l[6] == "1" for l in lines], dtype=bool),
                regret=col(7), cum_regret=col(8), safe_measure=col(9), beta=col(10),
            ))
    return results


def summary_to_csv(summary):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SUMMARY_HEADER)
    for m, s in summary.methods.items():
        for i in range(s.mean_regret.size):
            w.writerow([m, i + 1, _fmt(s.mean_regret[i]), _fmt(s.lo_band[i]), _fmt(s.hi_band[i]),
                        _fmt(s.mean_safe_measure[i])])
    return buf.getvalue()


def persist_summary(summary, path):
    atomic_write_text(path, summary_to_csv(summary))
