import json
import subprocess
import sys

import pytest

from timebin.cli import main
from timebin.config import load_config
from timebin.errors import ConfigurationError, ParseError


def run_cli(*args):
    return main(list(args))


class TestConfigFile:
    def test_parse_sections(self, tmp_path):
        path = tmp_path / "run.conf"
        path.write_text("""
# comment
[run]
experiment = "bell"
n_repetitions = 5000
master_seed = 9

[noise]
f_pi = 0.95
p_double = 0.01

[tbi]
theta0 = 0.2
""")
        cfg = load_config(path)
        assert cfg.experiment == "bell"
        assert cfg.n_repetitions == 5000
        assert cfg.noise.f_pi == 0.95
        assert cfg.noise.p_double == 0.01
        assert cfg.tbi.theta0 == 0.2

    def test_unknown_key_rejected(self, tmp_path):
        path = tmp_path / "bad.conf"
        path.write_text("[noise]\nnot_a_knob = 1\n")
        with pytest.raises(ConfigurationError):
            load_config(path)

    def test_malformed_line(self, tmp_path):
        path = tmp_path / "bad.conf"
        path.write_text("[run]\njust some words\n")
        with pytest.raises(ParseError):
            load_config(path)

    def test_key_outside_section(self, tmp_path):
        path = tmp_path / "bad.conf"
        path.write_text("x = 1\n")
        with pytest.raises(ParseError):
            load_config(path)


class TestExitCodes:
    def test_success(self, tmp_path):
        rc = run_cli("simulate", "bell", "--noise", "off", "--reps", "2000",
                     "--seed", "1", "--out", str(tmp_path / "r"), "--no-timetags")
        assert rc == 0

    def test_validation_error(self, tmp_path):
        bad = tmp_path / "bad.conf"
        bad.write_text("[noise]\nf_pi = 0.2\n")
        rc = run_cli("simulate", "bell", "--config", str(bad),
                     "--out", str(tmp_path / "r"))
        assert rc == 1

    def test_io_error(self, tmp_path):
        missing = tmp_path / "nope.csv"
        rc = run_cli("analyze", "--input", str(missing), "--mode", "g2",
                     "--out", str(tmp_path / "a"))
        assert rc == 2

    def test_undefined_estimate(self, tmp_path):
        empty = tmp_path / "empty.csv"
        empty.write_text("detector,time_ns,repetition\n")
        rc = run_cli("analyze", "--input", str(empty), "--mode", "g2",
                     "--out", str(tmp_path / "a"))
        assert rc == 3


class TestArtifacts:
    def test_bell_outputs(self, tmp_path):
        out = tmp_path / "bell"
        rc = run_cli("simulate", "bell", "--defaults", "paper", "--reps", "6000",
                     "--seed", "4", "--out", str(out))
        assert rc == 0
        for name in ("manifest.json", "report.json", "counts.csv",
                     "timetags.csv", "histogram.csv"):
            assert (out / name).exists(), name
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["config"]["master_seed"] == 4
        report = json.loads((out / "report.json").read_text())
        assert 0.0 <= report["fidelity"]["value"] <= 1.0
        assert report["separable_bound"] == 0.5

    def test_reports_deterministic_across_workers(self, tmp_path):
        blobs = []
        for w in ("1", "3"):
            out = tmp_path / f"w{w}"
            rc = run_cli("simulate", "bell", "--defaults", "paper",
                         "--reps", "6000", "--seed", "5", "--workers", w,
                         "--out", str(out), "--no-timetags")
            assert rc == 0
            blobs.append((out / "report.json").read_bytes())
        assert blobs[0] == blobs[1]

    def test_manifest_config_reruns_identically(self, tmp_path):
        out1 = tmp_path / "a"
        run_cli("simulate", "bell", "--defaults", "paper", "--reps", "4000",
                "--seed", "8", "--out", str(out1), "--no-timetags")
        manifest = json.loads((out1 / "manifest.json").read_text())
        cfg = manifest["config"]
        # re-express the echoed config as a config file and re-run
        conf = tmp_path / "echo.conf"
        lines = ["[run]",
                 f"experiment = \"{cfg['experiment']}\"",
                 f"n_repetitions = {cfg['n_repetitions']}",
                 f"master_seed = {cfg['master_seed']}"]
        for section in ("emitter", "noise", "tbi"):
            lines.append(f"[{section}]")
            for k, v in cfg[section].items():
                if isinstance(v, bool):
                    lines.append(f"{k} = {'true' if v else 'false'}")
                else:
                    lines.append(f"{k} = {v!r}" if isinstance(v, str)
                                 else f"{k} = {v}")
        conf.write_text("\n".join(lines) + "\n")
        out2 = tmp_path / "b"
        rc = run_cli("simulate", "bell", "--config", str(conf),
                     "--out", str(out2), "--no-timetags")
        assert rc == 0
        assert (out1 / "report.json").read_bytes() == (out2 / "report.json").read_bytes()

    def test_hom_outputs(self, tmp_path):
        out = tmp_path / "hom"
        rc = run_cli("simulate", "hom", "--defaults", "paper", "--reps", "20000",
                     "--seed", "6", "--out", str(out))
        assert rc == 0
        report = json.loads((out / "report.json").read_text())
        assert "g2_zero" in report and "v_raw" in report

    def test_analyze_roundtrip_matches_simulate(self, tmp_path):
        out = tmp_path / "sim"
        run_cli("simulate", "bell", "--defaults", "paper", "--reps", "12000",
                "--seed", "13", "--out", str(out))
        ana = tmp_path / "ana"
        rc = run_cli("analyze", "--input", str(out / "timetags.csv"),
                     "--mode", "witness", "--manifest", str(out / "manifest.json"),
                     "--out", str(ana))
        assert rc == 0
        sim_f = json.loads((out / "report.json").read_text())["fidelity"]["value"]
        ana_f = json.loads((ana / "analysis.json").read_text())["fidelity"]["value"]
        assert abs(sim_f - ana_f) < 1e-9

    def test_fringe_scan_outputs(self, tmp_path):
        out = tmp_path / "fr"
        rc = run_cli("fringe-scan", "--mode", "classical", "--reps", "40000",
                     "--seed", "2", "--out", str(out))
        assert rc == 0
        report = json.loads((out / "report.json").read_text())
        fit = report["fits"]["classical"]
        assert fit["amplitude"] == pytest.approx(0.989, abs=0.02)

    def test_rabi_outputs(self, tmp_path):
        out = tmp_path / "rabi"
        rc = run_cli("rabi-calibration", "--f-pi", "0.9", "--out", str(out))
        assert rc == 0
        report = json.loads((out / "report.json").read_text())
        assert report["pi_population"] == pytest.approx(0.9, abs=1e-6)
        assert report["matches_target"]

    def test_console_script_installed(self):
        proc = subprocess.run([sys.executable, "-m", "timebin.cli", "--help"],
                              capture_output=True, text=True)
        assert proc.returncode == 0
        assert "simulate" in proc.stdout
