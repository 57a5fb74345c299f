import csv
import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from qanneal import cli
from qanneal.harness import config, experiments, fitting, rng

_key = st.text("abcdefghijklmnopqrstuvwxyz_.0123456789", min_size=1, max_size=12).filter(lambda k: k[0].isalpha())
_val = st.text("abcdefghijklmnopqrstuvwxyz0123456789:,.-_ ", min_size=1, max_size=20).map(str.strip).filter(bool)


@settings(max_examples=50)
@given(st.dictionaries(_key.filter(lambda k: k != "experiment"), st.dictionaries(_key, _val, max_size=4), max_size=3),
       st.integers(0, 2**31), _key)
def test_config_roundtrip(sections, seed, exp_id):
    spec = config.ExperimentSpec(exp_id, "out/dir", seed, sections)
    assert config.loads(config.dumps(spec)) == spec


def test_config_errors_name_the_field():
    with pytest.raises(config.SpecError, match="experiment"):
        config.loads("[run]\nx = 1\n")
    spec = config.loads("[experiment]\nid = lz_sweep\n[run]\nn = abc\n")
    with pytest.raises(config.SpecError, match="run.n"):
        spec.get_int("run", "n")
    with pytest.raises(config.SpecError, match="model.h"):
        spec.get("model", "h")


def test_parse_grid():
    np.testing.assert_allclose(config.parse_grid("1:100:3"), [1, 10, 100])
    np.testing.assert_allclose(config.parse_grid("3, 1.5"), [3, 1.5])
    with pytest.raises(config.SpecError):
        config.parse_grid("1:x:3")


def test_save_load(tmp_path):
    spec = config.ExperimentSpec("bounds_suite", "o", 3, {"run": {"suites": "hopf"}})
    assert config.load(config.save(spec, tmp_path / "s.ini")) == spec


def test_rng_streams():
    a = rng.substream(1, "walkers").random(3)
    np.testing.assert_array_equal(a, rng.substream(1, "walkers").random(3))
    assert not np.array_equal(a, rng.substream(1, "other").random(3))
    assert not np.array_equal(a, rng.substream(2, "walkers").random(3))
    assert rng.stream_key("a") == 3904355907
    assert rng.child_seed(1, "a") == rng.child_seed(1, "a") < 2**63
    with pytest.raises(ValueError):
        rng.stream_key(-1)


def test_fit_slope_exact_power_law():
    x = np.geomspace(10, 1000, 9)
    f = fitting.fit_slope(x, 3.0 * x**-4)
    assert f.slope == pytest.approx(-4.0) and f.stderr == pytest.approx(0.0, abs=1e-10)
    assert f.n_points == 9


def test_fit_window_filters_metric():
    x = np.geomspace(10, 1000, 9)
    y = np.where(x < 50, 1.0, x**-2.0)
    f = fitting.fit_slope(x, y, (1e-7, 1e-3))
    assert f.slope == pytest.approx(-2.0)
    with pytest.raises(fitting.InsufficientPointsError, match="window"):
        fitting.fit_slope(x, y, (1e-20, 1e-19))


def _sweep_csv(path):
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["tau", "schedule", "mode", "E_res"])
        for t in (10, 20, 40, 80):
            w.writerow([t, "f1", "RT", t**-2.0])
            w.writerow([t, "f2", "RT", t**-4.0])
    return path


def test_fit_csv_groups(tmp_path):
    fits = fitting.fit_csv(_sweep_csv(tmp_path / "s.csv"))
    assert fits["f1-RT"].slope == pytest.approx(-2)
    assert fits["f2-RT"].slope == pytest.approx(-4)


def test_cli_fit(tmp_path, capsys):
    assert cli.main(["fit", str(_sweep_csv(tmp_path / "s.csv")), "--window", "1e-8:1"]) == 0
    out = capsys.readouterr().out
    assert "f1-RT\tslope=-2.0000" in out


def test_cli_list(capsys):
    assert cli.main(["list-experiments"]) == 0
    out = capsys.readouterr().out
    for name in experiments.EXPERIMENTS:
        assert name in out


@pytest.mark.parametrize("suite", ["hopf", "ergodicity", "gfmc-stationarity", "sa-map"])
def test_cli_verify(suite, capsys):
    assert cli.main(["verify", suite]) == 0
    assert json.loads(capsys.readouterr().out)["passed"] is True


def test_cli_unknown_schedule_fails(tmp_path, capsys):
    spec = tmp_path / "bad.ini"
    spec.write_text("[experiment]\nid = sg_res_energy\noutput = %s\n[run]\nschedules = f1,f9\n" % tmp_path)
    assert cli.main(["run", str(spec)]) != 0
    assert "f9" in capsys.readouterr().err


def test_cli_unknown_experiment_fails(tmp_path, capsys):
    spec = tmp_path / "bad.ini"
    spec.write_text("[experiment]\nid = nope\n")
    assert cli.main(["run", str(spec)]) != 0
    assert "nope" in capsys.readouterr().err


def test_small_experiments_run(tmp_path):
    base = {"output": str(tmp_path)}
    sg = config.ExperimentSpec("sg_res_energy", base["output"], 1, {
        "problem": {"width": "2", "height": "2", "seed": "1"},
        "run": {"schedules": "f1", "tau": "5:40:4", "window": "1e-12:1"}})
    res = experiments.run(sg)
    assert res.summary["f1:RT"]["slope"] < 0
    assert {p.suffix for p in res.files} == {".csv", ".gp", ".json"}
    summary = json.loads((tmp_path / "sg_res_energy_summary.json").read_text())
    assert summary["meta"]["seed"] == 1

    gf = config.ExperimentSpec("gfmc_convergence", str(tmp_path), 2, {
        "problem": {"source": "ferromagnet", "width": "2", "height": "1"},
        "run": {"steps": "50", "walkers": "1000", "batches": "5", "c": "0.5"}})
    assert experiments.run(gf).summary["overlap"] > 0.95


def test_database_checks():
    assert experiments.db_adiabaticity_residual(64) <= 1e-6
    gap, f = experiments.database_min_gap(64)
    assert gap == pytest.approx(0.125) and f == pytest.approx(0.5)


def test_fit_constant_and_noisy():
    x = np.geomspace(10, 1000, 12)
    assert fitting.fit_slope(x, np.full(12, 0.3)).slope == pytest.approx(0.0, abs=1e-12)
    g = np.random.default_rng(4)
    f = fitting.fit_slope(x, x**-3.0 * np.exp(0.05 * g.normal(size=12)))
    assert abs(f.slope + 3.0) <= 3 * f.stderr


def _tiny_sweep(out, workers):
    return config.ExperimentSpec("sg_res_energy", str(out), 1, {
        "problem": {"width": "2", "height": "2", "seed": "1"},
        "run": {"schedules": "f1,f2", "tau": "5:40:4", "window": "1e-12:1", "workers": str(workers)}})


def test_reruns_are_byte_identical_across_worker_counts(tmp_path):
    files = []
    for k, workers in enumerate((1, 1, 2)):
        experiments.run(_tiny_sweep(tmp_path / str(k), workers))
        files.append((tmp_path / str(k) / "sg_res_energy.csv").read_bytes())
    assert files[0] == files[1] == files[2]


def test_results_file_is_append_only(tmp_path):
    spec = _tiny_sweep(tmp_path, 1)
    experiments.run(spec)
    first = (tmp_path / "results.csv").read_text().splitlines()
    experiments.run(spec)
    second = (tmp_path / "results.csv").read_text().splitlines()
    assert second[: len(first)] == first
    assert len(second) == 2 * len(first) - 1
    assert first[0] == ",".join(experiments.RESULT_FIELDS)
    slope_rows = [r for r in first if ",f1:RT.slope," in r]
    assert len(slope_rows) == 1 and slope_rows[0].split(",")[-3] != ""
