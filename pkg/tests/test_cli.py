"""End-to-end checks of the command-line front end on small grids."""

import csv
import json

import pytest

from rtlab import cli


def write_config(tmp_path, name="config.json", **overrides):
    cfg = {
        "grid": {"n": [10, 10], "L": [1.0, 1.0]},
        "profile": {"kind": "linear"},
        "physics": {"mu": 0.01, "g": 1.0},
        "seed": 12345,
        "out": str(tmp_path / "out"),
    }
    cfg.update(overrides)
    path = tmp_path / name
    path.write_text(json.dumps(cfg))
    return path


def read_csv(path):
    with open(path, newline="") as f:
        rows = list(csv.reader(f))
    return rows[0], rows[1:]


def test_config_errors_are_collected(tmp_path):
    path = write_config(
        tmp_path,
        grid={"n": [3, 10], "L": [1.0, 1.0]},
        physics={"mu": -1.0},
        bogus_section={"x": 1},
    )
    with pytest.raises(cli.ConfigError) as exc:
        cli.parse_config(path)
    msgs = "\n".join(exc.value.violations)
    assert len(exc.value.violations) >= 3
    assert "bogus_section" in msgs
    assert "grid.n" in msgs
    assert "physics.mu" in msgs


def test_config_missing_file_and_bad_json(tmp_path):
    with pytest.raises(cli.ConfigError, match="not found"):
        cli.parse_config(tmp_path / "missing.json")
    bad = tmp_path / "bad.json"
    bad.write_text("{ nope")
    with pytest.raises(cli.ConfigError, match="JSON"):
        cli.parse_config(bad)


def test_usage_failures_exit_1(tmp_path, capsys):
    assert cli.main([]) == 1
    assert cli.main(["no-such-command", "--config", "x"]) == 1
    assert cli.main(["growth-rate"]) == 1  # --config is required
    path = write_config(tmp_path, grid={"n": [3, 3], "L": [1.0, 1.0]})
    assert cli.main(["growth-rate", "--config", str(path)]) == 1
    capsys.readouterr()


def test_growth_rate_outputs_and_manifest(tmp_path):
    path = write_config(tmp_path)
    out = tmp_path / "out"
    code = cli.main(["growth-rate", "--config", str(path), "--oracle"])
    assert code == 0

    report = json.loads((out / "growth_rate.json").read_text())
    assert report["lambda"] > 0
    assert not report["stable"]
    for cmp_row in report["oracle"]:
        assert cmp_row["abs_diff"] <= 1e-6 * (1.0 + abs(cmp_row["alpha"]))

    for fname in ("eigen_v0.rtfld", "eigen_v1.rtfld", "eigen_pressure.rtfld"):
        assert (out / fname).is_file()

    manifest = json.loads((out / "manifest.json").read_text())
    assert "growth_rate.json" in manifest["outputs"]
    assert "eigen_pressure.rtfld" in manifest["outputs"]
    assert "growth_rate" in manifest["stages"]
    assert len(manifest["config_sha256"]) == 64


def test_growth_rate_is_deterministic(tmp_path):
    path = write_config(tmp_path)
    out_a = tmp_path / "a"
    out_b = tmp_path / "b"
    assert cli.main(["growth-rate", "--config", str(path),
                     "--out", str(out_a)]) == 0
    assert cli.main(["growth-rate", "--config", str(path),
                     "--out", str(out_b)]) == 0
    assert (out_a / "growth_rate.json").read_bytes() == \
        (out_b / "growth_rate.json").read_bytes()
    assert (out_a / "eigen_v1.rtfld").read_bytes() == \
        (out_b / "eigen_v1.rtfld").read_bytes()


def test_oracle_check_passes(tmp_path):
    path = write_config(tmp_path)
    assert cli.main(["oracle-check", "--config", str(path)]) == 0
    report = json.loads((tmp_path / "out" / "oracle_check.json").read_text())
    assert report["pass"]
    assert len(report["checks"]) == 3


def test_linear_evolve_csv(tmp_path):
    path = write_config(tmp_path)
    code = cli.main(["linear-evolve", "--config", str(path), "--tmax", "0.5"])
    assert code == 0
    header, rows = read_csv(tmp_path / "out" / "linear_evolve.csv")
    assert header == ["t", "norm_rho_l2", "norm_u_l2", "norm_u3_l2",
                      "deviation_from_analytic"]
    assert len(rows) >= 3
    assert float(rows[-1][0]) == pytest.approx(0.5)
    # mode grows and stays close to the closed-form trajectory
    assert float(rows[-1][1]) > float(rows[0][1])
    # deviation from the closed form is dominated by the O(dt) splitting
    assert float(rows[1][4]) < float(rows[-1][4]) < 1e-2


def test_linear_evolve_rejects_large_dt(tmp_path, capsys):
    path = write_config(tmp_path)
    code = cli.main(["linear-evolve", "--config", str(path), "--dt", "10.0"])
    assert code == 1
    assert "guard" in capsys.readouterr().err


def test_nonlinear_evolve_csv_and_snapshots(tmp_path):
    path = write_config(tmp_path)
    out = tmp_path / "out"
    code = cli.main([
        "nonlinear-evolve", "--config", str(path),
        "--delta", "1e-3", "--tmax", "1.0", "--snapshot-every", "2",
    ])
    assert code == 0
    header, rows = read_csv(out / "nonlinear_evolve.csv")
    assert header == ["t", "rho_l2", "ud_l2", "uh_l2", "E", "rho_min",
                      "rho_max", "energy_residual", "dt"]
    assert len(rows) >= 4
    snaps = sorted(out.glob("snap_*_rho.rtfld"))
    assert snaps
    manifest = json.loads((out / "manifest.json").read_text())
    assert snaps[0].name in manifest["outputs"]
    assert not (out / "failure.json").exists()


def test_sweep_error_scaling(tmp_path):
    path = write_config(
        tmp_path,
        experiment={"deltas": [3e-4, 1e-3], "n_samples": 4},
    )
    out = tmp_path / "out"
    assert cli.main(["sweep", "--config", str(path),
                     "--experiment", "error-scaling"]) == 0
    summary = json.loads((out / "sweep_summary.json").read_text())
    assert summary["lambda"] > 0
    assert summary["fitted_exponent"] > 1.0
    header, rows = read_csv(out / "error_scaling.csv")
    assert header == ["delta", "t", "err", "bound_ratio", "failed"]
    assert rows


def test_sweep_escape_time_stable_profile(tmp_path):
    path = write_config(
        tmp_path,
        profile={"kind": "stable"},
    )
    out = tmp_path / "out"
    assert cli.main(["sweep", "--config", str(path),
                     "--experiment", "escape-time"]) == 0
    summary = json.loads((out / "sweep_summary.json").read_text())
    assert summary["stable"]
    assert summary["lambda"] == 0.0
