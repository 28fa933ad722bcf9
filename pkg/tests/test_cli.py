"""Scenario parsing, CLI commands, manifests and output determinism."""
import json
import math
from pathlib import Path

import numpy as np
import pytest

from fso_irs_lab import cli
from fso_irs_lab.errors import ScenarioError
from fso_irs_lab.experiments import regime_map
from fso_irs_lab.scenario import Sweep, parse_scenario

GML_SCENARIO = """
experiment = "gml_vs_size"
name = "sizes"

[irs]
profile = "QP"
focal = 250.0

[sweep]
variable = "side"
start = 1e-3
stop = 1.0
points = 4
scale = "log"
"""

POSITION_SCENARIO = """
experiment = "outage_vs_position"
name = "positions"

[irs]
side = 0.03

[oracle]
model = "analytical"

[sweep]
variable = "x"
start = -300
stop = 300
points = 7
"""


def _body(path: Path) -> str:
    return "".join(line for line in open(path) if not line.startswith("#"))


def _write(tmp_path, text, name="s.toml"):
    p = tmp_path / name
    p.write_text(text)
    return p


class TestScenario:
    def test_defaults_and_conversion(self):
        sc = parse_scenario('experiment = "oracle_validation"\n[channel]\nthreshold_db = 10\n'
                            '[geometry]\nd1 = 660\n')
        assert sc.channel.threshold_snr == pytest.approx(10.0)
        assert sc.geometry.x_o == pytest.approx(200.0)
        assert sc.beam.waist == 2.5e-3 and sc.lens.radius == 0.1
        flat = sc.resolved()
        assert flat["geometry.d1"] == pytest.approx(660.0)
        assert flat["irs.profile"] == "LP"

    def test_sweep_values(self):
        sc = parse_scenario(GML_SCENARIO)
        assert sc.sweeps["sweep"].values() == pytest.approx(np.logspace(-3, 0, 4))
        assert sc.irs.focal == 250.0

    @pytest.mark.parametrize("start, stop, points", [(1.0, 0.5, 5), (0.0, 1.0, 0)])
    def test_empty_sweep(self, start, stop, points):
        with pytest.raises(ScenarioError, match="empty"):
            Sweep("side", start, stop, points)

    @pytest.mark.parametrize("text, match", [
        ('experiment = "nope"', "experiment must be one of"),
        ('experiment = "regime_map"', r"\[sweep_lens\]"),
        ('experiment = "oracle_validation"\n[beam]\ncolour = 1', "unknown key beam.colour"),
        ('experiment = "oracle_validation"\n[geometry]\nx = 1\nd1 = 600', "either x or d1"),
        ('experiment = "oracle_validation"\n[irs]\nprofile = "QP"', "focal"),
        ('experiment = "oracle_validation"\n[beam]\nwaist = -1', "waist"),
        ('experiment = "oracle_validation"\nbogus = 1', "unknown top-level"),
        ('experiment = = 3', "line 1"),
    ])
    def test_validation_errors(self, text, match):
        with pytest.raises(ScenarioError, match=match):
            parse_scenario(text)


class TestCommands:
    def test_run_is_deterministic(self, tmp_path):
        scen = _write(tmp_path, GML_SCENARIO)
        for out in ("a", "b"):
            assert cli.main(["run", str(scen), "--out", str(tmp_path / out)]) == 0
        fa, fb = tmp_path / "a/sizes/gml_vs_size.csv", tmp_path / "b/sizes/gml_vs_size.csv"
        assert _body(fa) == _body(fb)
        header = [l for l in open(fa) if l.startswith("#")]
        assert any(l.startswith("# seed: 0") for l in header)
        assert any(l.startswith("# irs.profile: QP") for l in header)
        assert _body(fa).splitlines()[0] == "L_m,profile,gml_numerical,gml_piecewise,regime,G1,G2,G3"

    def test_worker_count_does_not_change_results(self, tmp_path):
        scen = _write(tmp_path, POSITION_SCENARIO)
        assert cli.main(["run", str(scen), "--out", str(tmp_path / "j1")]) == 0
        assert cli.main(["run", str(scen), "--out", str(tmp_path / "j2"), "--jobs", "2"]) == 0
        for f in ("position_irs.csv", "position_relay.csv"):
            assert _body(tmp_path / "j1/positions" / f) == _body(tmp_path / "j2/positions" / f)
        summary = json.loads((tmp_path / "j1/positions/manifest.json").read_text())["summary"]
        assert summary["relay"]["x_opt"] == pytest.approx(0.0)

    def test_empty_sweep_exit_code(self, tmp_path, capsys):
        scen = _write(tmp_path, GML_SCENARIO.replace("points = 4", "points = 0"))
        assert cli.main(["run", str(scen), "--out", str(tmp_path)]) == 2
        assert "empty" in capsys.readouterr().err

    def test_missing_file(self, tmp_path):
        assert cli.main(["run", str(tmp_path / "missing.toml"), "--out", str(tmp_path)]) == 2

    def test_physics_error_names_invariant(self, tmp_path, capsys):
        text = ('experiment = "outage_vs_snr"\n[geometry]\nd1 = 100\n'
                '[sweep]\nvariable = "snr_db"\nstart = 0\nstop = 10\npoints = 2\n')
        assert cli.main(["run", str(_write(tmp_path, text)), "--out", str(tmp_path)]) == 1
        assert "DegenerateGeometryError" in capsys.readouterr().err

    def test_output_root_from_environment(self, tmp_path, monkeypatch):
        monkeypatch.setenv(cli.OUT_ENV, str(tmp_path / "env"))
        assert cli.main(["repro", "fig4", "--fast"]) == 0
        out = tmp_path / "env/fig4_fast"
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["files"] == ["gml_vs_size.csv"]
        assert set(manifest["summary"]["G3"]) == {"LP", "QP", "FP", "mir"}

    def test_validate_oracle_single_cell(self, tmp_path):
        assert cli.main(["validate-oracle", "--grid", "1", "--points", "4",
                         "--out", str(tmp_path)]) == 0
        manifest = json.loads((tmp_path / "validate_oracle/manifest.json").read_text())
        s = manifest["summary"]
        assert s["ordered"] is True and s["oracle_failures"] == 0
        assert sum(s["components"].values()) == 1
        assert all(v < 0.01 for v in s["oracle_rms"].values())
        rows = _body(tmp_path / "validate_oracle/regime_map.csv").splitlines()
        assert rows[0] == "Sigma_lens,Sigma_irs,E1,E2,E3,best_regime" and len(rows) == 2

    def test_bad_grid(self, tmp_path):
        assert cli.main(["validate-oracle", "--grid", "0", "--out", str(tmp_path)]) == 2


def test_cell_deep_in_linear_regime():
    m = regime_map([1e-1], [1e-3])
    assert m.best[0, 0] == 1
    assert m.errors[0, 0, 1] <= 0.05
