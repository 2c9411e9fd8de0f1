import json

import numpy as np
import pytest

from synthlat import save_lattice
from synthlat.cli import main

from conftest import FOUR_PHASES


@pytest.fixture
def device_config(tmp_path, device_lattice):
    path = tmp_path / "lattice.json"
    save_lattice(device_lattice, path)
    return str(path)


def read_csv(path, skip_comments=True):
    lines = [
        line
        for line in open(path, encoding="utf-8").read().splitlines()
        if line and not (skip_comments and line.startswith("#"))
    ]
    header = lines[0].split(",")
    rows = [line.split(",") for line in lines[1:]]
    return header, rows


class TestBandsCommand:
    def test_flat_bands(self, tmp_path):
        out = tmp_path / "bands.csv"
        code = main(
            [
                "bands", "--td", "1", "--tv", "0", "--th", "1",
                "--phi", "3.141592653589793", "--k", "1001",
                "--out", str(out), "--no-timestamp",
            ]
        )
        assert code == 0
        header, rows = read_csv(out)
        assert header == ["k_rad", "e_lower", "e_upper"]
        assert len(rows) == 1001
        lower = np.array([float(r[1]) for r in rows])
        upper = np.array([float(r[2]) for r in rows])
        assert np.max(np.abs(lower + 2.0)) <= 1e-12
        assert np.max(np.abs(upper - 2.0)) <= 1e-12


class TestEvolveCommand:
    def test_time_average_column(self, tmp_path):
        out = tmp_path / "m.csv"
        code = main(
            [
                "evolve", "--state", "chi", "--tmax", "3.14159",
                "--steps", "1000", "--out", str(out), "--no-timestamp",
            ]
        )
        assert code == 0
        header, rows = read_csv(out)
        assert header == ["t", "m_expect", "m_timeavg"]
        avg = {float(r[2]) for r in rows}
        assert len(avg) == 1
        assert abs(avg.pop() - 1.5) <= 1e-6

    def test_pointwise_values(self, tmp_path):
        out = tmp_path / "m.csv"
        main(["evolve", "--state", "chi", "--tmax", "1.5707963268", "--steps", "65",
              "--out", str(out), "--no-timestamp"])
        _, rows = read_csv(out)
        for r in rows:
            t, m = float(r[0]), float(r[1])
            assert abs(m - (3.0 - np.cos(4 * t)) / 2.0) <= 1e-9


class TestSymmetryCommand:
    def test_strong_coupling_point(self, tmp_path):
        out = tmp_path / "sym.csv"
        code = main(
            ["symmetry", "--td", "1", "--tv", "0", "--th", "1",
             "--phi", "3.141592653589793", "--out", str(out), "--no-timestamp"]
        )
        assert code == 0
        _, rows = read_csv(out)
        devs = {r[0]: float(r[1]) for r in rows}
        assert set(devs) == {"TR", "C", "S"}
        assert max(devs.values()) <= 1e-12


class TestPlaquetteCommand:
    def test_unit_eigenvalues(self, tmp_path):
        out = tmp_path / "plaq.csv"
        code = main(["plaquette", "--beta", "1.0", "--out", str(out), "--no-timestamp"])
        assert code == 0
        _, rows = read_csv(out)
        assert len(rows) == 4
        dist = [float(r[3]) for r in rows]
        assert dist[0] <= 1e-10 and dist[1] <= 1e-10


class TestSimulateCommand:
    def test_sweep_csv(self, tmp_path, device_config):
        out = tmp_path / "sweep.csv"
        code = main(
            ["simulate", "--config", device_config, "--dmin", "-5", "--dmax", "5",
             "--points", "21", "--phases", "0,1.5707963268",
             "--out", str(out), "--no-timestamp"]
        )
        assert code == 0
        header, rows = read_csv(out)
        assert header == ["delta_MHz", "phi_rad", "element", "re", "im", "mag", "mag_dB"]
        assert len(rows) == 2 * 21 * 16

    def test_missing_config_is_data_error(self, tmp_path):
        out = tmp_path / "sweep.csv"
        code = main(["simulate", "--config", str(tmp_path / "nope.json"), "--out", str(out)])
        assert code == 2


class TestSynthFitRoundTrip:
    def test_round_trip_report(self, tmp_path, device_config):
        traces = tmp_path / "traces.csv"
        phases = ",".join(repr(p) for p in FOUR_PHASES)
        code = main(
            ["synth", "--config", device_config, "--phases", phases,
             "--points", "201", "--seed", "7", "--out", str(traces), "--no-timestamp"]
        )
        assert code == 0
        report = tmp_path / "report.json"
        code = main(
            ["fit", "--config", device_config, "--traces", str(traces),
             "--out", str(report), "--no-timestamp"]
        )
        assert code == 0
        data = json.loads(report.read_text())
        assert set(data) >= {"stage1", "stage2", "stage1_frozen", "options"}
        assert len(data["stage2"]["parameters"]) == 29
        assert data["stage2"]["converged"] is True
        # config carried the generating values, so the fit stays at them
        assert data["stage2"]["parameters"]["nu_a"] == pytest.approx(4.1589, abs=1e-6)
        assert data["stage2"]["parameters"]["beta_ac"] == pytest.approx(0.8452, abs=1e-6)

    def test_fit_unconstrained_data_exits_3(self, tmp_path, device_lattice):
        # a lattice with no couplings leaves the scale factors and phase
        # offset unconstrained: the covariance is singular
        from synthlat import LatticeSpec

        bare = LatticeSpec(modes=device_lattice.modes)
        config = tmp_path / "bare.json"
        save_lattice(bare, config)
        traces = tmp_path / "traces.csv"
        assert main(
            ["synth", "--config", str(config), "--points", "51",
             "--out", str(traces), "--no-timestamp"]
        ) == 0
        code = main(
            ["fit", "--config", str(config), "--traces", str(traces),
             "--out", str(tmp_path / "r.json"), "--no-timestamp"]
        )
        assert code == 3


class TestCliPlumbing:
    def test_unknown_command_is_usage_error(self, capsys):
        assert main(["frobnicate"]) == 1
        assert "usage" in capsys.readouterr().err.lower()

    def test_bad_phases_is_usage_error(self, tmp_path, device_config):
        code = main(
            ["simulate", "--config", device_config, "--phases", "0,abc",
             "--out", str(tmp_path / "s.csv")]
        )
        assert code == 1

    def test_no_timestamp_reruns_identical(self, tmp_path, device_config):
        out1, out2 = tmp_path / "a.csv", tmp_path / "b.csv"
        args = ["synth", "--config", device_config, "--points", "11",
                "--seed", "3", "--no-timestamp"]
        assert main(args + ["--out", str(out1)]) == 0
        assert main(args + ["--out", str(out2)]) == 0
        assert out1.read_bytes() == out2.read_bytes()

    def test_timestamp_header_present_by_default(self, tmp_path, device_config):
        out = tmp_path / "a.csv"
        assert main(
            ["synth", "--config", device_config, "--points", "11", "--out", str(out)]
        ) == 0
        assert out.read_text().startswith("# generated=")

    def test_bad_trace_file_is_data_error(self, tmp_path, device_config):
        bad = tmp_path / "bad.csv"
        bad.write_text("not,a,trace\n")
        code = main(
            ["fit", "--config", device_config, "--traces", str(bad),
             "--out", str(tmp_path / "r.json")]
        )
        assert code == 2
