import json
import math

import numpy as np
import pytest
from scipy.optimize import brentq

from wkbo import experiment as ex
from wkbo.errors import ConfigError, InvalidInputError, SchemaError


def test_benchmark_values():
    assert ex.benchmark_f(0.0) == 0.0
    assert ex.benchmark_f(5.0) == pytest.approx(-2.75)
    assert ex.benchmark_f(-5.0) == pytest.approx(-7.25)
    assert ex.benchmark_g(5.0) == pytest.approx(-2.418)
    assert ex.benchmark_g(-5.0) == pytest.approx(2.082)


def test_f_opt():
    x, v = ex.maximize_objective((0.01, -0.2, 0.2, 0.0), (-5, 5))
    assert x == pytest.approx(0.5204, abs=1e-3)
    assert v == pytest.approx(0.0513, abs=1e-3)
    grid = np.linspace(-5, 5, 100_001)
    assert v >= ex.benchmark_f(grid).max()
    assert ex.default_spec().f_opt_computed == v


def test_oracle_safe_measure_by_bisection():
    spec = ex.default_spec()
    root = brentq(lambda x: spec.g(x), -5, 0, xtol=1e-14)
    assert root == pytest.approx(-4.224458259333608, abs=1e-9)
    assert ex.oracle_safe_measure(spec) == pytest.approx(5 - root, abs=1e-9)
    assert ex.oracle_safe_measure(spec) == pytest.approx(9.224, abs=1e-3)


def test_cumulative_regret():
    f_opt = 0.0513
    np.testing.assert_allclose(ex.cumulative_regret([5.0], f_opt), [2.8013])
    np.testing.assert_allclose(ex.cumulative_regret([5.0, 5.0], f_opt), [2.8013, 5.6026])
    x_star, v = ex.maximize_objective((0.01, -0.2, 0.2, 0.0), (-5, 5))
    np.testing.assert_allclose(ex.cumulative_regret([x_star] * 3, v), 0.0, atol=1e-15)


def record(run, cum):
    cum = np.asarray(cum, dtype=float)
    T = cum.size
    return ex.RunRecord("wk", run, np.full(T, 5.0), np.zeros(T), np.zeros(T), np.zeros(T, bool),
                        np.diff(cum, prepend=0.0), cum, np.arange(T, dtype=float), np.full(T, 3.9))


def test_summarize():
    s = ex.summarize({"wk": [record(0, [1, 2]), record(1, [1, 4])]})
    assert s.methods["wk"].final_mean_regret == 3.0
    same = ex.summarize({"wk": [record(i, [1.5, 2.5]) for i in range(4)]}).methods["wk"]
    np.testing.assert_array_equal(same.lo_band, same.mean_regret)
    np.testing.assert_array_equal(same.hi_band, same.mean_regret)
    with pytest.raises(InvalidInputError):
        ex.summarize({})
    with pytest.raises(InvalidInputError):
        ex.summarize({"wk": []})


def test_relative_increase():
    rec_ay = record(0, [4.0])
    object.__setattr__(rec_ay, "method", "ay")
    s = ex.summarize({"wk": [record(0, [2.0])], "ay": [rec_ay]})
    assert s.relative_increase["ay"] == pytest.approx(100.0)


def test_persist_round_trip(tmp_path):
    spec = ex.default_spec(T=3, n_runs=2)
    res = ex.run_monte_carlo(spec, methods=["wk"])
    p = tmp_path / "r.csv"
    ex.persist(res, p)
    back = ex.load(p)
    assert back.keys() == res.keys()
    assert all(a == b for a, b in zip(res["wk"], back["wk"]))
    assert len(p.read_text().splitlines()) == 1 + 2 * 3


def test_persist_empty(tmp_path):
    p = tmp_path / "e.csv"
    ex.persist({}, p)
    assert p.read_text().strip() == ",".join(ex.RESULT_HEADER)
    assert ex.load(p) == {}


def test_load_rejects_other_schema(tmp_path):
    p = tmp_path / "bad.csv"
    p.write_text("method,run,step,x\nwk,0,1,5\n")
    with pytest.raises(SchemaError):
        ex.load(p)


def test_single_step_runs():
    spec = ex.default_spec(T=1, n_runs=1)
    res = ex.run_monte_carlo(spec)
    for m in ("wk", "ay", "fiedler"):
        (rec,) = res[m]
        assert rec.x.tolist() == [5.0] and rec.feasible.tolist() == [False]


def test_seeded_determinism_and_isolation():
    spec = ex.default_spec(T=6, n_runs=3)
    a = ex.run_single(spec, "ay", 2, base_seed=7)
    b = ex.run_monte_carlo(spec, base_seed=7)["ay"][2]
    assert a == b
    assert a == ex.run_single(spec, "ay", 2, base_seed=7)
    assert a != ex.run_single(spec, "ay", 2, base_seed=8)


def test_paired_noise():
    spec = ex.default_spec(T=8, n_runs=1)
    recs = [ex.run_single(spec, m, 0, base_seed=3) for m in ("wk", "ay", "fiedler")]
    nf, _ = ex.noise_streams(3, 0, 8, 1.0)
    for r in recs:
        np.testing.assert_allclose(r.y_f - spec.f(r.x), nf, atol=1e-12)
        np.testing.assert_allclose(r.y_g, -r.y_f + spec.f_min, atol=1e-12)


def test_independent_g_noise():
    spec = ex.default_spec(T=5, n_runs=1, independent_g_noise=True)
    r = ex.run_single(spec, "wk", 0, base_seed=3)
    nf, ng = ex.noise_streams(3, 0, 5, 1.0)
    np.testing.assert_allclose(r.y_g - spec.g(r.x), ng, atol=1e-12)


def test_config_defaults():
    spec = ex.load_config(environ={})
    assert (spec.T, spec.n_runs, spec.B, spec.delta, spec.tau) == (100, 100, 2.5, 0.001, 1e-6)
    assert (spec.sigma_se, spec.l_se, spec.sigma_noise, spec.f_min) == (4.21, 3.59, 1.0, -5.168)


def test_config_missing_field(tmp_path):
    m = ex.default_mapping()
    del m["f_min"]
    p = tmp_path / "c.json"
    p.write_text(json.dumps(m))
    with pytest.raises(ConfigError) as err:
        ex.load_config(p, environ={})
    assert err.value.field == "f_min"


def test_config_bad_values():
    with pytest.raises(ConfigError) as err:
        ex.load_config(overrides={"delta": 1.5}, environ={})
    assert err.value.field == "delta"
    with pytest.raises(ConfigError):
        ex.load_config(overrides={"methods": ["ucb"]}, environ={})
    with pytest.raises(ConfigError):
        ex.load_config(overrides={"f_opt": 0.2}, environ={})


def test_env_override():
    spec = ex.load_config(environ={"WKBO_DELTA": "0.01", "WKBO_T": "7"})
    assert spec.delta == 0.01 and spec.T == 7
    flag_wins = ex.load_config(overrides={"T": 9}, environ={"WKBO_T": "7"})
    assert flag_wins.T == 9


# properties of the full default experiment ----------------------------------------

@pytest.mark.slow
def test_regret_non_negative(default_mc):
    _, res, _ = default_mc
    assert all(np.all(r.regret >= 0) for recs in res.values() for r in recs)


@pytest.mark.slow
def test_row_count(default_mc, tmp_path):
    spec, res, _ = default_mc
    p = tmp_path / "r.csv"
    ex.persist(res, p)
    assert len(p.read_text().splitlines()) - 1 == 3 * spec.n_runs * spec.T


@pytest.mark.slow
def test_wk_beta_constant(default_mc):
    _, res, _ = default_mc
    b = np.vstack([r.beta for r in res["wk"]])
    assert np.all(b == b[0, 0]) and b[0, 0] == pytest.approx(math.sqrt(2 * math.log(2000)))


@pytest.mark.slow
def test_wk_safe_measure_monotone_every_run(default_mc):
    """Hard invariant for the WK method: safe-region measure never shrinks."""
    _, res, _ = default_mc
    bad = [r.run for r in res["wk"] if np.any(np.diff(r.safe_measure) < 0)]
    assert not bad, f"{len(bad)} of {len(res['wk'])} WK runs have a shrinking safe region"


@pytest.mark.slow
def test_safe_measure_mostly_monotone_report(default_mc):
    _, res, _ = default_mc
    for m, recs in res.items():
        frac = np.mean([np.mean(np.diff(r.safe_measure) >= 0) for r in recs])
        print(f"{m}: fraction of non-decreasing safe-measure steps {frac:.3f}")
