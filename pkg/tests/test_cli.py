import csv
import json

import pytest

from wkbo.cli import COMPARE_HEADER, main
from wkbo.experiment import RESULT_HEADER, SUMMARY_HEADER, default_mapping


@pytest.fixture(autouse=True)
def clean_env(monkeypatch):
    for k in list(__import__("os").environ):
        if k.startswith("WKBO_"):
            monkeypatch.delenv(k)


def small_run(out, *extra):
    return main(["run-experiment", "--seed", "42", "--runs", "2", "--steps", "4", "--out", str(out), *extra])


def test_run_experiment_files(tmp_path):
    assert small_run(tmp_path / "a") == 0
    rows = (tmp_path / "a" / "results.csv").read_text().splitlines()
    assert rows[0] == ",".join(RESULT_HEADER) and len(rows) == 1 + 3 * 2 * 4
    summ = (tmp_path / "a" / "summary.csv").read_text().splitlines()
    assert summ[0] == ",".join(SUMMARY_HEADER) and len(summ) == 1 + 3 * 4
    man = json.loads((tmp_path / "a" / "manifest.json").read_text())
    assert man["seed"] == 42 and len(man["config_sha256"]) == 64 and man["rows"] == 24


def test_run_experiment_byte_identical(tmp_path):
    assert small_run(tmp_path / "a") == 0
    assert small_run(tmp_path / "b", "--parallelism", "2") == 0
    for name in ("results.csv", "summary.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_missing_field_exit_2(tmp_path, capsys):
    m = default_mapping()
    del m["f_min"]
    p = tmp_path / "c.json"
    p.write_text(json.dumps(m))
    assert small_run(tmp_path / "o", "--config", str(p)) == 2
    assert "f_min" in capsys.readouterr().err
    assert not (tmp_path / "o").exists()


def test_bad_flag_value_exit_2(tmp_path, capsys):
    assert small_run(tmp_path / "o", "--delta", "3") == 2
    assert "delta" in capsys.readouterr().err


def test_unknown_suite_exit_2(capsys):
    assert main(["verify-invariants", "--suite", "foo"]) == 2


def test_usage_error_exit_2():
    assert main(["no-such-command"]) == 2


def test_verify_invariants_small(capsys):
    assert main(["verify-invariants", "--suite", "eq12", "--trials", "50"]) == 0
    assert "eq12" in capsys.readouterr().out


def test_compare_bounds_empty_data(tmp_path):
    data = tmp_path / "d.csv"
    data.write_text("x,y\n")
    out = tmp_path / "cmp.csv"
    assert main(["compare-bounds", "--data", str(data), "--grid", "11", "--out", str(out)]) == 0
    rows = list(csv.reader(out.open()))
    assert rows[0] == COMPARE_HEADER and len(rows) == 12
    for r in rows[1:]:
        assert float(r[1]) == pytest.approx(2.5 * 4.21)
        assert float(r[4]) == 1.0 and r[5] == "0" and r[6] == "0"


def test_compare_bounds_synthetic(capsys):
    assert main(["compare-bounds", "--synthetic", "25", "--grid", "21"]) == 0
    rows = list(csv.reader(capsys.readouterr().out.splitlines()))
    assert rows[0] == COMPARE_HEADER and len(rows) == 22
    assert all(r[5] == "25" and r[6] == "1" and r[7] == "1" for r in rows[1:])
    assert all(float(r[1]) < float(r[2]) and float(r[1]) < float(r[3]) for r in rows[1:])


def test_summarize_command(tmp_path, capsys):
    assert small_run(tmp_path / "a") == 0
    capsys.readouterr()
    assert main(["summarize", str(tmp_path / "a" / "results.csv"), "--out", str(tmp_path / "s.csv")]) == 0
    assert (tmp_path / "s.csv").read_bytes() == (tmp_path / "a" / "summary.csv").read_bytes()
    assert "wk:" in capsys.readouterr().out


def test_summarize_bad_schema(tmp_path):
    p = tmp_path / "x.csv"
    p.write_text("a,b\n1,2\n")
    assert main(["summarize", str(p)]) == 2
