"""Scenario runners, artifact determinism, and CLI contract tests."""

import json

import numpy as np
import pytest

from vibrecoil.cli import main
from vibrecoil.config import WAVELENGTH
from vibrecoil.errors import ConfigError
from vibrecoil.scenarios import (SCENARIO_NAMES, apply_sweep_param,
                                 center_atom, default_config, grid_positions,
                                 line_positions, parse_terms, run_scenario,
                                 run_sweep, scenario_config, square_positions)

FAST_DECAY = ["scenario.directions=z", "basis.n_vib=3",
              "scenario.sample_every=100"]


# -- geometry builders --------------------------------------------------------

def test_line_positions_centered():
    pos = line_positions(3, 0.4, axis="x")
    assert pos.shape == (3, 3)
    assert np.allclose(pos.sum(axis=0), 0.0)
    assert np.allclose(pos[2, 0] - pos[1, 0], 0.4 * WAVELENGTH)
    assert not np.any(pos[:, 1:])


def test_square_positions():
    pos = square_positions(0.2)
    d = np.linalg.norm(pos[0] - pos[1])
    assert d == pytest.approx(0.2 * WAVELENGTH)
    assert np.allclose(pos.sum(axis=0), 0.0)


def test_grid_positions_row_major_centered():
    pos = grid_positions(3, 3, 0.8)
    assert pos.shape == (9, 3)
    assert np.allclose(pos.sum(axis=0), 0.0)
    # row-major: second entry is one column step along +x
    assert pos[1, 0] - pos[0, 0] == pytest.approx(0.8 * WAVELENGTH)
    assert pos[1, 1] == pos[0, 1]
    # the 1-based center index lands on the origin
    assert np.allclose(pos[center_atom(3, 3) - 1], 0.0)


def test_center_atom_requires_odd_grid():
    with pytest.raises(ConfigError):
        center_atom(2, 3)


def test_all_scenarios_have_default_configs():
    for name in SCENARIO_NAMES:
        cfg = scenario_config(name)
        assert cfg.n_atoms >= 1
    with pytest.raises(ConfigError, match="unknown scenario"):
        default_config("bogus")


def test_parse_terms():
    assert parse_terms(None) is None
    assert parse_terms("trap,jumpd") == ("trap", "jump_diagonal")
    with pytest.raises(ConfigError, match="unknown term"):
        parse_terms("trap,bogus")
    with pytest.raises(ConfigError, match="empty"):
        parse_terms(",")


def test_apply_sweep_param():
    cfg = scenario_config("two-atom-hop")
    assert apply_sweep_param(cfg, "omega_t", 3.0).omega_t == 3.0
    moved = apply_sweep_param(cfg, "d", 0.05)
    assert moved.min_separation == pytest.approx(0.05 * WAVELENGTH)
    with pytest.raises(ConfigError, match="laser"):
        apply_sweep_param(cfg, "omega", 0.1)
    with pytest.raises(ConfigError, match="unknown sweep"):
        apply_sweep_param(cfg, "bogus", 1.0)


# -- scenario artifacts -------------------------------------------------------

def test_modes_scenario_artifacts(tmp_path):
    res = run_scenario("modes", out_dir=str(tmp_path))
    text = res.csv_path.read_text()
    assert "# schema: vibrecoil-csv/1" in text
    header = [ln for ln in text.splitlines() if not ln.startswith("#")][0]
    assert header == "mode_index,re_lambda,im_lambda,decay_rate_over_gamma"
    assert "collective_rate_symmetric_mode" in text
    summary = json.loads(res.summary_path.read_text())
    assert summary["results"]["sum_decay_rates_over_gamma"] == \
        pytest.approx(3.0, rel=1e-12)


def test_summary_schema_is_enforced(tmp_path):
    import jsonschema

    from vibrecoil.scenarios import _summary_schema, write_summary

    res = run_scenario("modes", out_dir=str(tmp_path))
    payload = json.loads(res.summary_path.read_text())
    jsonschema.validate(payload, _summary_schema())  # round-trips
    del payload["monitors"]
    with pytest.raises(jsonschema.ValidationError):
        write_summary(tmp_path / "bad.json", payload)


def test_single_decay_run_deterministic(tmp_path):
    a = run_scenario("single-decay", overrides=FAST_DECAY,
                     out_dir=str(tmp_path / "a"))
    b = run_scenario("single-decay", overrides=FAST_DECAY,
                     out_dir=str(tmp_path / "b"))
    assert a.csv_path.read_bytes() == b.csv_path.read_bytes()
    sa = json.loads(a.summary_path.read_text())
    sb = json.loads(b.summary_path.read_text())
    sa.pop("wall_time_s"), sb.pop("wall_time_s")
    assert sa == sb
    assert sa["monitors"]["max_trace_dev"] < 1e-8


def test_sweep_parallelism_does_not_change_bytes(tmp_path):
    kw = dict(config_text=None, overrides=FAST_DECAY)
    a = run_sweep("single-decay", "omega_t", [0.5, 2.0],
                  out_dir=str(tmp_path / "w1"), max_workers=1, **kw)
    b = run_sweep("single-decay", "omega_t", [2.0, 0.5],
                  out_dir=str(tmp_path / "w2"), max_workers=2, **kw)
    assert a.csv_path.read_bytes() == b.csv_path.read_bytes()
    assert [r["omega_t"] for r in b.rows] == [0.5, 2.0]  # sorted output


def test_sweep_input_validation():
    with pytest.raises(ConfigError, match="non-empty"):
        run_sweep("single-decay", "omega_t", [])
    with pytest.raises(ConfigError, match="finite"):
        run_sweep("single-decay", "omega_t", [float("nan")])
    with pytest.raises(ConfigError, match="not sweepable"):
        run_sweep("modes", "omega_t", [1.0])


def test_array_steady_refuses_full_basis(tmp_path):
    pos = grid_positions(3, 3, 0.8) / WAVELENGTH
    pos_text = "; ".join(" ".join(repr(float(x)) for x in row) for row in pos)
    cfg = f"""
[system]
n_atoms = 9
positions_lambda = {pos_text}
kappa = 0.01
[trap]
omega_t = 0.01
[laser]
rabi = 0.01
[basis]
n_vib = 3
quantized_atoms = all
"""
    with pytest.raises(ConfigError, match="quantize a subset"):
        run_scenario("array-steady", config_text=cfg, out_dir=str(tmp_path))


# -- CLI ----------------------------------------------------------------------

def test_cli_run_and_set_overrides(tmp_path, capsys):
    rc = main(["run", "single-decay", "--out", str(tmp_path)]
              + [f"--set={ov}" for ov in FAST_DECAY]
              + ["--set", "trap.omega_t=2.0"])
    assert rc == 0
    out = capsys.readouterr().out
    assert "single-decay.csv" in out
    summary = json.loads((tmp_path / "single-decay.summary.json").read_text())
    assert "omega_t = 2.0" in summary["config_ini"]


def test_cli_dump_basis(capsys):
    rc = main(["run", "single-decay", "--dump-basis",
               "--set", "basis.n_vib=2"])
    assert rc == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert lines[0] == "flat,internal_j,occupations"
    assert len(lines) == 1 + 2 * 2  # (N+1) * n_vib rows


def test_cli_modes_stdout(capsys):
    rc = main(["modes"])
    assert rc == 0
    out = capsys.readouterr().out
    assert "mode_index,re_lambda,im_lambda,decay_rate_over_gamma" in out
    assert "# collective_rate_symmetric_mode:" in out


def test_cli_exit_code_2_on_config_errors(tmp_path, capsys):
    rc = main(["run", "single-decay", "--config",
               str(tmp_path / "missing.ini")])
    assert rc == 2
    err = json.loads(capsys.readouterr().err)
    assert err["error"] == "ConfigError" and err["exit_code"] == 2
    rc = main(["run", "single-decay", "--set", "system.kappa=-1",
               "--out", str(tmp_path)])
    assert rc == 2


def test_cli_exit_code_3_on_numerics_failure(tmp_path, capsys):
    rc = main(["run", "two-atom-hop", "--set", "integrator.dt=10",
               "--out", str(tmp_path)])
    assert rc == 3
    err = json.loads(capsys.readouterr().err)
    assert err["error"] == "NumericsError"


def test_cli_exit_code_4_on_capacity(tmp_path, capsys):
    rc = main(["run", "single-decay", "--set", "basis.memory_cap_mb=0.001",
               "--out", str(tmp_path)])
    assert rc == 4
    err = json.loads(capsys.readouterr().err)
    assert err["error"] == "CapacityError"


def test_cli_sweep_usage_errors(tmp_path, capsys):
    rc = main(["sweep", "single-decay", "--param", "omega_t",
               "--out", str(tmp_path)])
    assert rc == 2  # neither --values nor --log-range
    capsys.readouterr()
    rc = main(["sweep", "single-decay", "--param", "omega_t",
               "--values", "1.0", "--log-range", "0.1:1:3",
               "--out", str(tmp_path)])
    assert rc == 2  # both given
    capsys.readouterr()
    rc = main(["sweep", "single-decay", "--param", "omega_t",
               "--log-range", "1:0.1", "--out", str(tmp_path)])
    assert rc == 2  # malformed range


def test_cli_sweep_log_range_runs(tmp_path, capsys):
    rc = main(["sweep", "single-decay", "--param", "omega_t",
               "--log-range", "0.5:2:2", "--out", str(tmp_path)]
              + [f"--set={ov}" for ov in FAST_DECAY])
    assert rc == 0
    csv_path = tmp_path / "single-decay.sweep-omega_t.csv"
    assert csv_path.exists()
    body = [ln for ln in csv_path.read_text().splitlines()
            if not ln.startswith("#")]
    assert body[0].startswith("omega_t,")
    assert len(body) == 3
