import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from swnoon import cli
from swnoon.config import ConfigError, ExperimentConfig, from_dict, load
from swnoon.detection import DetectorModel, acquire_fringe, prepare_heralds, readout_distribution
from swnoon.dynamics import period_from_velocity
from swnoon.fock import loads
from swnoon.io import read_dataset, read_table, write_dataset

FAST = ["--set", "trials_per_point=300", "--set", "dt_grid.count=13"]

# one invalid value per field
BAD_VALUES = {
    "chi": 1.0,
    "cutoff": 0,
    "lambda_m": -1.0,
    "theta_rad": 2.0,
    "v0_mps": -0.1,
    "pump_power_mw": -1.0,
    "tau_s": 0.0,
    "gamma0": 0.0,
    "gamma_b": 1.5,
    "trials_per_point": 0,
    "order": 3,
    "noon_N": 0,
    "seed": -5,
    "detector_mode": "photographic",
    "max_attempts": 0,
    "fit_restarts": 0,
    "fit_tau": "yes",
}


def run(tmp_path, *argv):
    return cli.main([*argv, "--out", str(tmp_path)])


# -- configuration ----------------------------------------------------------------------------


def test_defaults_are_valid():
    cfg = load(env={})
    assert cfg == ExperimentConfig()
    assert cfg.v_c == pytest.approx(0.03 + 0.09 * (1 - math.exp(-6 / 1.88)))


@given(st.sampled_from(sorted(BAD_VALUES)))
def test_invalid_field_is_named(name):
    with pytest.raises(ConfigError) as err:
        from_dict({name: BAD_VALUES[name]})
    assert any(p.startswith(name) for p in err.value.problems)


def test_every_problem_reported_at_once():
    with pytest.raises(ConfigError) as err:
        from_dict({"chi": 2.0, "tau_s": -1.0, "gamma_b": 3.0})
    named = {p.split(":")[0] for p in err.value.problems}
    assert {"chi", "tau_s", "gamma_b"} <= named


def test_grid_and_cutoff_rules():
    with pytest.raises(ConfigError, match="dt_grid.stop"):
        from_dict({"dt_grid": {"start": 1e-4, "stop": 1e-5, "count": 5}})
    with pytest.raises(ConfigError, match="noon_N"):
        from_dict({"cutoff": 3, "noon_N": 2})
    with pytest.raises(ConfigError, match="unknown"):
        from_dict({"colour": "blue"})


def test_json_error_has_line_and_column(tmp_path, capsys):
    path = tmp_path / "cfg.json"
    path.write_text('{\n  "chi": 0.01,\n  "tau_s": oops\n}\n')
    assert cli.main(["ghz-table", "--config", str(path), "--out", str(tmp_path)]) == cli.EXIT_CONFIG
    assert f"{path}:3:" in capsys.readouterr().err


def test_missing_config_file(tmp_path):
    assert cli.main(["ghz-table", "--config", str(tmp_path / "nope.json"), "--out", str(tmp_path)]) == 2


def test_overrides_and_dotted_keys(tmp_path):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps({"chi": 0.02, "dt_grid": {"start": 0, "stop": 3e-4, "count": 7}}))
    cfg = load(str(path), ["chi=0.005", "dt_grid.count=11", "pump_model.p_sat=2.5", "detector_mode=number-resolving"], env={})
    assert cfg.chi == 0.005
    assert cfg.dt_grid == (0.0, 3e-4, 11)
    assert cfg.pump_model == (0.09, 2.5)
    assert cfg.number_resolving


def test_seed_from_environment():
    assert load(env={"SWNOON_SEED": "42"}).seed == 42
    assert load(None, ["seed=7"], env={"SWNOON_SEED": "42"}).seed == 42
    with pytest.raises(ConfigError, match="seed"):
        load(env={"SWNOON_SEED": "many"})


def test_bad_override_syntax():
    with pytest.raises(ConfigError):
        load(None, ["chi"], env={})


# -- commands -------------------------------------------------------------------------------


def test_herald_stats(tmp_path, capsys):
    assert run(tmp_path, "herald-stats") == cli.EXIT_OK
    rows = read_table(tmp_path / "herald_stats.csv")
    assert [r["N"] for r in rows] == [1, 2, 3, 4]
    probs = [r["probability"] for r in rows]
    assert all(a > b for a, b in zip(probs, probs[1:]))
    slope = np.polyfit([1, 2, 3, 4], np.log(probs), 1)[0]
    assert slope == pytest.approx(math.log(0.01), rel=0.1)
    assert "slope" in capsys.readouterr().out


def test_herald_stats_chi_zero(tmp_path):
    assert run(tmp_path, "herald-stats", "--set", "chi=0") == cli.EXIT_OK
    rows = read_table(tmp_path / "herald_stats.csv")
    assert all(r["probability"] == 0 for r in rows)
    assert all(r["mean_attempts"] == math.inf for r in rows)


def test_fringe_outputs_and_determinism(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for out in (a, b):
        assert cli.main(["fringe", *FAST, "--out", str(out)]) == cli.EXIT_OK
    names = sorted(p.name for p in a.iterdir())
    assert names == sorted(
        [
            "fringe_order1.csv",
            "fringe_order1.csv.meta",
            "fringe_order1_fit.txt",
            "fringe_order1_fit.csv",
            "fringe_order1_residuals.csv",
        ]
    )
    for name in names:
        assert (a / name).read_bytes() == (b / name).read_bytes()


def test_seed_changes_output(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    cli.main(["fringe", *FAST, "--out", str(a)])
    cli.main(["fringe", *FAST, "--set", "seed=1", "--out", str(b)])
    assert (a / "fringe_order1.csv").read_bytes() != (b / "fringe_order1.csv").read_bytes()


def test_dataset_roundtrip(tmp_path):
    assert run(tmp_path, "fringe", *FAST, "--set", "order=2") == cli.EXIT_OK
    path = tmp_path / "fringe_order2.csv"
    ds = read_dataset(path)
    cfg = load(None, ["trials_per_point=300", "dt_grid.count=13", "order=2"], env={})
    fresh = acquire_fringe(cfg)
    assert np.allclose(ds.dt, fresh.dt, rtol=0, atol=1e-15)
    for k in fresh.channels:
        assert np.array_equal(ds.channels[k], fresh.channels[k])
    assert ds.metadata["order"] == 2 and ds.metadata["seed"] == cfg.seed
    again = tmp_path / "again.csv"
    write_dataset(again, ds)
    assert again.read_bytes() == path.read_bytes()
    assert (tmp_path / "again.csv.meta").read_bytes() == (tmp_path / "fringe_order2.csv.meta").read_bytes()


def test_fit_tables_readable(tmp_path):
    run(tmp_path, "fringe", *FAST)
    fit = read_table(tmp_path / "fringe_order1_fit.csv")
    assert fit[0]["kind"] == "joint-first-order" and fit[0]["T"] > 0
    res = read_table(tmp_path / "fringe_order1_residuals.csv")
    assert {r["series"] for r in res} == {"plus", "minus"}
    for r in res:
        assert r["residual"] == pytest.approx(r["observed"] - r["model"], abs=1e-15)


def test_timeout_abort_exit_code(tmp_path, capsys):
    code = run(tmp_path, "fringe", *FAST, "--set", "order=2", "--set", "chi=1e-4", "--set", "max_attempts=1")
    assert code == cli.EXIT_RUNTIME
    assert "timeout" in capsys.readouterr().err


def test_pump_sweep(tmp_path):
    assert run(tmp_path, "pump-sweep", *FAST, "--powers", "0,8") == cli.EXIT_OK
    rows = read_table(tmp_path / "pump_sweep.csv")
    assert [r["power_mw"] for r in rows] == [0, 8]
    assert all(r["status"] == "ok" for r in rows)
    assert rows[0]["v_hat_mps"] < rows[1]["v_hat_mps"]


def test_pump_sweep_bad_powers(tmp_path):
    assert run(tmp_path, "pump-sweep", "--powers", "1,x") == cli.EXIT_CONFIG
    assert run(tmp_path, "pump-sweep", "--powers", "-1") == cli.EXIT_CONFIG


def test_ghz_table(tmp_path):
    assert run(tmp_path, "ghz-table", "--n-max", "5") == cli.EXIT_OK
    rows = read_table(tmp_path / "ghz_table.csv")
    for r in rows:
        assert r["period_ratio"] == pytest.approx(1 / r["N"], rel=1e-15)
    cfg = ExperimentConfig()
    assert rows[0]["period_s"] == pytest.approx(period_from_velocity(cfg.v_c, cfg.motion()), rel=1e-15)
    assert run(tmp_path, "ghz-table", "--n-max", "0") == cli.EXIT_CONFIG


def _maxima(t, y):
    idx = np.flatnonzero((y[1:-1] > y[:-2]) & (y[1:-1] >= y[2:])) + 1
    out = []
    for i in idx:
        y0, y1, y2 = y[i - 1], y[i], y[i + 1]
        out.append(t[i] + 0.5 * (y0 - y2) / (y0 - 2 * y1 + y2) * (t[1] - t[0]))
    return np.array(out)


def test_ghz_n2_row_matches_simulated_noon(tmp_path):
    run(tmp_path, "ghz-table", "--n-max", "2")
    ratio = read_table(tmp_path / "ghz_table.csv")[1]["period_ratio"]
    cfg = ExperimentConfig(chi=1e-3, tau_s=1.0)
    p, det = cfg.motion(), DetectorModel(1.0, 0.0)
    plus = prepare_heralds(cfg, 1)["plus"].state
    noon = prepare_heralds(cfg, 2)["noon"].state
    t = np.linspace(0, 1.5e-3, 401)
    y1 = np.array([readout_distribution(plus, dt, det, p)[1, 0] for dt in t])
    y2 = np.array([readout_distribution(noon, dt, det, p)[1, 1] for dt in t])
    simulated = np.mean(np.diff(_maxima(t, y2))) / np.mean(np.diff(_maxima(t, y1)))
    assert simulated == pytest.approx(ratio, rel=2e-3)


def test_dump_state_readable(tmp_path):
    assert run(tmp_path, "dump-state", "--set", "cutoff=3", "--set", "noon_N=1") == cli.EXIT_OK
    write = loads((tmp_path / "state_write.txt").read_text())
    assert write.layout.modes == ("SWa", "S_V", "SWb", "S_H")
    heralded = sorted(tmp_path.glob("state_herald_*.txt"))
    assert heralded
    for path in heralded:
        s = loads(path.read_text())
        assert s.norm() == pytest.approx(1)
        assert "probability=" in path.read_text().splitlines()[0]


def test_dump_network(tmp_path):
    assert run(tmp_path, "dump-network", "--set", "noon_N=3", "--set", "cutoff=5") == cli.EXIT_OK
    assert (tmp_path / "network_analyzer.txt").exists()
    text = (tmp_path / "network_noon3.txt").read_text()
    assert text.count("[BS") == 2 and text.count("[PS") == 3


def test_main_rejects_unknown_command():
    with pytest.raises(SystemExit):
        cli.main(["paint"])
