import json
import subprocess
import sys

import numpy as np
import pytest

from epmodes import cli, dynamics, spectral
from epmodes.environment import exponents_for, lorentzian
from epmodes.pseudomode import spin_boson_model

SWEEP_CONFIG = """\
[model]
kind = "spin-boson"
mapping = "pmeom"

[model.spectral_density]
variant = "lorentzian"
coupling = 0.5
width = 1.0

[action]
name = "sweep"
parameter = "coupling"
start = 0.1
stop = 0.9
count = 17

[output]
dir = "{out}"
formats = ["csv", "json", "svg"]
"""


def write_config(tmp_path, text, name="scenario.toml"):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


class TestSweepAction:
    def test_outputs_and_determinism(self, tmp_path):
        out = tmp_path / "out"
        config = write_config(tmp_path, SWEEP_CONFIG.format(out=out))
        assert cli.main(["sweep", "--config", config]) == 0
        first = (out / "sweep_pmeom.csv").read_bytes()
        assert (out / "manifest.json").exists()
        assert (out / "sweep_pmeom.svg").exists()
        assert cli.main(["sweep", "--config", config]) == 0
        assert (out / "sweep_pmeom.csv").read_bytes() == first

    def test_sweep_shows_coalescence_at_half_width(self, tmp_path):
        out = tmp_path / "out"
        config = write_config(tmp_path, SWEEP_CONFIG.format(out=out))
        cli.main(["sweep", "--config", config, "--jobs", "2"])
        payload = json.loads((out / "sweep_pmeom.json").read_text())
        grid = np.array(payload["grid"])
        tracks_im = np.array(payload["tracks_im"])
        onset = grid[np.flatnonzero(np.abs(tracks_im).max(axis=1) > 1e-6)[0]]
        assert abs(onset - 0.5) <= 0.05 + 1e-12

    def test_manifest_records_tolerances(self, tmp_path):
        out = tmp_path / "out"
        config = write_config(tmp_path, SWEEP_CONFIG.format(out=out))
        cli.main(["sweep", "--config", config])
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["tolerances"]["tol_cluster"] == 1e-6
        assert manifest["tolerances"]["rtol"] == 1e-10
        assert "numpy" in manifest and "version" in manifest
        assert "sweep_pmeom.csv" in manifest["outputs"]

    def test_out_flag_overrides_config(self, tmp_path):
        override = tmp_path / "elsewhere"
        config = write_config(tmp_path, SWEEP_CONFIG.format(out=tmp_path / "ignored"))
        cli.main(["sweep", "--config", config, "--out", str(override)])
        assert (override / "sweep_pmeom.csv").exists()


class TestConfigValidation:
    def test_missing_field_names_path(self, tmp_path, capsys):
        bad = """\
[model]
kind = "spin-boson"
[model.spectral_density]
variant = "lorentzian"
[action]
name = "sweep"
start = 0.1
stop = 0.9
"""
        config = write_config(tmp_path, bad)
        assert cli.main(["sweep", "--config", config]) == 2
        err = capsys.readouterr().err
        assert "model.spectral_density.coupling" in err

    def test_action_name_mismatch(self, tmp_path):
        config = write_config(tmp_path, SWEEP_CONFIG.format(out=tmp_path / "o"))
        assert cli.main(["dynamics", "--config", config]) == 2

    def test_invalid_toml(self, tmp_path):
        config = write_config(tmp_path, "not [valid ( toml")
        assert cli.main(["sweep", "--config", config]) == 2

    def test_missing_file_is_io_error(self, tmp_path):
        assert cli.main(["sweep", "--config", str(tmp_path / "nope.toml")]) == 4

    def test_bad_gap_fraction(self, tmp_path):
        bad = SWEEP_CONFIG.format(out=tmp_path / "o").replace(
            'variant = "lorentzian"', 'variant = "bandgap"\ngap_fraction = 1.0'
        )
        config = write_config(tmp_path, bad)
        assert cli.main(["sweep", "--config", config]) == 2


class TestEpFindAction:
    def test_locates_gapless_ep(self, tmp_path, capsys):
        text = """\
[model]
kind = "spin-boson"
mapping = "pmeom"
[model.spectral_density]
variant = "lorentzian"
coupling = 0.5
width = 1.0
[action]
name = "ep-find"
bracket = [0.3, 0.8]
tol = 1e-7
[output]
dir = "{out}"
formats = ["json"]
""".format(out=tmp_path / "out")
        config = write_config(tmp_path, text)
        assert cli.main(["ep-find", "--config", config]) == 0
        payload = json.loads((tmp_path / "out" / "ep_report.json").read_text())
        assert abs(payload["located"] - 0.5) < 1e-6
        orders = sorted(r["order"] for r in payload["reports"] if r["is_ep"])
        assert orders == [2, 3]

    def test_bad_bracket_is_numerical_failure(self, tmp_path):
        text = """\
[model]
kind = "spin-boson"
mapping = "pmeom"
[model.spectral_density]
variant = "lorentzian"
coupling = 0.5
width = 1.0
[action]
name = "ep-find"
bracket = [0.1, 0.3]
[output]
dir = "{out}"
""".format(out=tmp_path / "out")
        config = write_config(tmp_path, text)
        assert cli.main(["ep-find", "--config", config]) == 3


class TestDynamicsAction:
    def test_writes_all_trajectories(self, tmp_path):
        text = """\
[model]
kind = "spin-boson"
mapping = "both"
[model.spectral_density]
variant = "lorentzian"
coupling = 0.5
width = 1.0
[action]
name = "dynamics"
t_max = 5.0
t_count = 60
rho0 = [0.5, 0.3, 0.0]
[output]
dir = "{out}"
formats = ["csv", "svg"]
""".format(out=tmp_path / "out")
        config = write_config(tmp_path, text)
        assert cli.main(["dynamics", "--config", config]) == 0
        for name in ("trajectory_pmeom", "trajectory_heom", "trajectory_analytic"):
            assert (tmp_path / "out" / f"{name}.csv").exists()
            assert (tmp_path / "out" / f"{name}.svg").exists()
        header = (tmp_path / "out" / "trajectory_pmeom.csv").read_text().splitlines()[0]
        assert header.endswith("abs_G")

    def test_nonpositive_rho0_rejected(self, tmp_path):
        text = """\
[model]
kind = "spin-boson"
mapping = "pmeom"
[model.spectral_density]
variant = "lorentzian"
coupling = 0.5
width = 1.0
[action]
name = "dynamics"
rho0 = [0.9, 0.9, 0.0]
[output]
dir = "{out}"
""".format(out=tmp_path / "out")
        config = write_config(tmp_path, text)
        assert cli.main(["dynamics", "--config", config]) == 2


class TestSensitivityAction:
    def test_ep3_splitting_exponent(self, tmp_path):
        text = """\
[model]
kind = "bosonic-network"
[model.spectral_density]
variant = "lorentzian"
coupling = 0.5925925925925926
width = 1.0
[model.network]
chi = 0.19245008972987526
[action]
name = "sensitivity"
target = "splitting"
[output]
dir = "{out}"
formats = ["json"]
""".format(out=tmp_path / "out")
        config = write_config(tmp_path, text)
        assert cli.main(["sensitivity", "--config", config]) == 0
        payload = json.loads((tmp_path / "out" / "scaling.json").read_text())
        assert abs(payload["exponent"] - 1.0 / 3.0) < 0.02

    def test_vanishing_time_slope(self, tmp_path):
        text = """\
[model]
kind = "spin-boson"
[model.spectral_density]
variant = "lorentzian"
coupling = 0.5
width = 1.0
[action]
name = "sensitivity"
target = "vanishing-time"
eps_start = 1e-4
eps_stop = 1e-2
eps_count = 7
[output]
dir = "{out}"
formats = ["json"]
""".format(out=tmp_path / "out")
        config = write_config(tmp_path, text)
        assert cli.main(["sensitivity", "--config", config]) == 0
        payload = json.loads((tmp_path / "out" / "vanishing_time.json").read_text())
        assert abs(payload["fit_exponent"] - 0.5) < 0.02


class TestValidateAction:
    def test_cross_checks_pass(self, tmp_path):
        text = """\
[model]
kind = "spin-boson"
mapping = "both"
[model.spectral_density]
variant = "lorentzian"
coupling = 0.5
width = 1.0
[action]
name = "validate"
[output]
dir = "{out}"
formats = ["json"]
""".format(out=tmp_path / "out")
        config = write_config(tmp_path, text)
        assert cli.main(["validate", "--config", config]) == 0
        payload = json.loads((tmp_path / "out" / "validation.json").read_text())
        assert payload["passed"]
        assert max(payload["max_deviations"].values()) < 1e-8

    def test_unachievable_tolerance_exits_nonzero(self, tmp_path):
        text = """\
[model]
kind = "spin-boson"
mapping = "both"
[model.spectral_density]
variant = "lorentzian"
coupling = 0.5
width = 1.0
[action]
name = "validate"
tolerance = 1e-16
[output]
dir = "{out}"
""".format(out=tmp_path / "out")
        config = write_config(tmp_path, text)
        assert cli.main(["validate", "--config", config]) == 3


class TestRenderSvg:
    def test_sweep_has_two_panels(self):
        from epmodes.pseudomode import restrict_single_excitation

        table = spectral.sweep_spectrum(
            lambda g: restrict_single_excitation(
                spin_boson_model(exponents_for(lorentzian(g, 1.0)))
            ),
            np.linspace(0.2, 0.8, 5),
        )
        doc = cli.render_svg(table)
        assert doc.count("<g transform=") == 2
        assert "polyline" in doc

    def test_trajectory_single_panel(self):
        model = spin_boson_model(exponents_for(lorentzian(0.5, 1.0)))
        rho0 = np.array([[0.5, 0.3], [0.3, 0.5]], dtype=complex)
        traj = dynamics.evolve_reduced(model, rho0, np.linspace(0.0, 5.0, 21))
        doc = cli.render_svg(traj)
        assert doc.count("<g transform=") == 1
        assert "polyline" in doc

    def test_decoherence_record_panel(self):
        record = dynamics.decoherence_record(0.8, 1.0, 0.0)
        doc = cli.render_svg(record)
        assert doc.count("<g transform=") == 1

    def test_empty_data_raises(self):
        table = spectral.SweepTable(
            parameter="x", grid=np.array([]), tracks=np.zeros((0, 0), dtype=complex)
        )
        with pytest.raises(ValueError):
            cli.render_svg(table)


class TestGapFractionSweep:
    def test_sweep_over_gap_width(self, tmp_path):
        # Widening the gap at fixed coupling crosses the transition when
        # gap_fraction passes 1 - 2*coupling/width.
        text = """\
[model]
kind = "spin-boson"
mapping = "pmeom"
[model.spectral_density]
variant = "bandgap"
coupling = 0.4
width = 1.0
gap_fraction = 0.1
[action]
name = "sweep"
parameter = "gap_fraction"
start = 0.05
stop = 0.4
count = 36
[output]
dir = "{out}"
formats = ["json"]
""".format(out=tmp_path / "out")
        config = write_config(tmp_path, text)
        assert cli.main(["sweep", "--config", config]) == 0
        payload = json.loads((tmp_path / "out" / "sweep_pmeom.json").read_text())
        grid = np.array(payload["grid"])
        tracks_im = np.abs(np.array(payload["tracks_im"])).max(axis=1)
        onset = grid[np.flatnonzero(tracks_im > 1e-6)[0]]
        assert abs(onset - 0.2) <= 0.02  # q* = 1 - 2*0.4 = 0.2


def test_console_entry_point(tmp_path):
    out = tmp_path / "out"
    config = tmp_path / "s.toml"
    config.write_text(SWEEP_CONFIG.format(out=out))
    proc = subprocess.run(
        [sys.executable, "-m", "epmodes.cli", "sweep", "--config", str(config)],
        capture_output=True,
        text=True,
    )
    assert proc.returncode == 0, proc.stderr
    assert (out / "sweep_pmeom.csv").exists()
