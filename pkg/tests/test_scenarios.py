import json
import math
import os
import subprocess
import sys

import pytest

from qzeno import hilbert as hs
from qzeno.errors import ConfigError, InvalidCaseError, OutputDirError
from qzeno.models import build_model, schedule_value
from qzeno.scenarios import (
    config_to_mapping,
    make_initial_state,
    mapping_to_config,
    preset_fig1,
    preset_fig2,
    read_config,
    run_config,
    write_config,
)

pytestmark = pytest.mark.filterwarnings("ignore:top-Fock-level population")


def fast_fig1(tmp_path, **kw):
    """fig1 preset shrunk to test size via coarser dt/stride."""
    cfg = preset_fig1(out=str(tmp_path), **kw)
    integ = cfg.integrator
    from dataclasses import replace
    return replace(cfg, integrator=replace(integ, dt=0.02, snapshot_stride=100))


class TestPresetFig1:
    def test_caption_values(self):
        cfg = preset_fig1()
        sched = cfg.integrator.lambda_schedule
        assert schedule_value(sched, 49.0, None) == pytest.approx(0.05)
        assert schedule_value(sched, 51.0, None) == pytest.approx(7.5e-3)
        assert cfg.model.k == 1.0
        assert cfg.model.dims.factor_dims == (15, 15)
        assert cfg.integrator.t_final == 200.0
        assert cfg.evolution == "sse"
        assert cfg.observables == ("N_R", "N_P", "Var(N_R)")

    def test_initial_mean_occupations(self):
        cfg = preset_fig1()
        model = build_model(cfg.model)
        psi = make_initial_state(model, cfg.init, "sse")
        assert hs.expectation(model.observables["N_R"], psi) == pytest.approx(2.0, abs=1e-6)
        assert hs.expectation(model.observables["N_P"], psi) == pytest.approx(2.0, abs=1e-6)


class TestPresetFig2:
    def test_case_values(self):
        k = 2 * math.pi * 1e8 / 20.0
        a = preset_fig2("a")
        assert a.model.Gamma == 0.0 and a.model.T == 0.0 and a.model.gamma_CPB == 0.0
        b = preset_fig2("b")
        assert b.model.Gamma == pytest.approx(k / 500.0)
        assert b.model.T == pytest.approx(6e-3)
        assert b.model.gamma_CPB == pytest.approx(1e6)
        c = preset_fig2("c")
        assert c.model.Gamma == pytest.approx(k / 2500.0)
        assert c.model.T == pytest.approx(32e-3)
        assert c.model.dims.factor_dims == (30, 2)

    def test_measurement_strength_value(self):
        cfg = preset_fig2("a")
        assert cfg.model.k == pytest.approx(math.pi * 1e7, rel=1e-12)
        assert cfg.model.k == pytest.approx(3.14e7, rel=1e-3)
        assert cfg.model.lambda_ == pytest.approx(0.75 * cfg.model.k)

    def test_invalid_case(self):
        with pytest.raises(InvalidCaseError):
            preset_fig2("d")


class TestConfigRoundTrip:
    def test_fig1_roundtrip(self, tmp_path):
        cfg = preset_fig1(seed=17, out=str(tmp_path / "x"))
        path = tmp_path / "run.cfg"
        write_config(cfg, str(path))
        assert read_config(str(path)) == cfg

    def test_fig2_roundtrip(self, tmp_path):
        for case in ("a", "b", "c"):
            cfg = preset_fig2(case, seed=3, out=str(tmp_path / case))
            path = tmp_path / f"{case}.cfg"
            write_config(cfg, str(path))
            assert read_config(str(path)) == cfg

    def test_mapping_identity(self):
        cfg = preset_fig2("b", out="/tmp/nowhere")
        assert mapping_to_config(config_to_mapping(cfg)) == cfg

    def test_comments_and_blank_lines(self, tmp_path):
        cfg = preset_fig1(out=str(tmp_path))
        path = tmp_path / "c.cfg"
        write_config(cfg, str(path))
        text = "# header comment\n\n" + path.read_text()
        path.write_text(text)
        assert read_config(str(path)) == cfg

    def test_missing_key_rejected(self, tmp_path):
        cfg = preset_fig1(out=str(tmp_path))
        path = tmp_path / "c.cfg"
        write_config(cfg, str(path))
        lines = [l for l in path.read_text().splitlines() if not l.startswith("model.k")]
        path.write_text("\n".join(lines))
        with pytest.raises(ConfigError):
            read_config(str(path))

    def test_unknown_observable_rejected(self):
        cfg = preset_fig1(out="/tmp/x")
        from dataclasses import replace
        with pytest.raises(ConfigError):
            replace(cfg, observables=("N_R", "sigma_x"))


class TestRunConfig:
    def test_missing_directory_no_partial_files(self, tmp_path):
        cfg = fast_fig1(tmp_path / "does_not_exist")
        with pytest.raises(OutputDirError):
            run_config(cfg)
        assert not (tmp_path / "does_not_exist").exists()

    def test_outputs_and_checksums(self, tmp_path):
        cfg = fast_fig1(tmp_path, seed=4)
        manifest = run_config(cfg)
        import hashlib
        for name, digest in manifest.checksums.items():
            data = (tmp_path / name).read_bytes()
            assert hashlib.sha256(data).hexdigest() == digest
        on_disk = json.loads((tmp_path / "manifest.json").read_text())
        assert on_disk["checksums"] == manifest.checksums
        assert on_disk["seed"] == 4

    def test_deterministic_output_bytes(self, tmp_path):
        d1, d2 = tmp_path / "r1", tmp_path / "r2"
        d1.mkdir(), d2.mkdir()
        run_config(fast_fig1(d1, seed=7))
        run_config(fast_fig1(d2, seed=7))
        for name in ("timeseries.csv", "histogram.json", "jumps.json"):
            assert (d1 / name).read_bytes() == (d2 / name).read_bytes()

    def test_csv_roundtrip_exact(self, tmp_path):
        cfg = fast_fig1(tmp_path, seed=4)
        run_config(cfg)
        lines = (tmp_path / "timeseries.csv").read_text().splitlines()
        header = lines[0].split(",")
        assert header == ["t", "N_R", "N_P", "Var(N_R)"]
        # 17-significant-digit decimal floats round-trip exactly
        row1 = [float(x) for x in lines[1].split(",")]
        assert f"{row1[1]:.17g}" == lines[1].split(",")[1]

    def test_ensemble_outputs(self, tmp_path):
        from dataclasses import replace
        cfg = replace(fast_fig1(tmp_path, seed=4), ensemble_size=2)
        run_config(cfg)
        hist = json.loads((tmp_path / "histogram.json").read_text())
        # pooled histogram spans both trajectories
        n_snaps = sum(1 for _ in (tmp_path / "timeseries.csv").open()) - 1
        sample_dt = cfg.integrator.dt * cfg.integrator.snapshot_stride
        assert sum(hist["weights"]) == pytest.approx(2 * n_snaps * sample_dt, rel=1e-9)


class TestCli:
    def run_cli(self, *args, env=None):
        e = dict(os.environ)
        if env:
            e.update(env)
        return subprocess.run([sys.executable, "-m", "qzeno.cli", *args],
                              capture_output=True, text=True, env=e)

    def test_preset_writes_files(self, tmp_path):
        out = self.run_cli("preset", "fig1", "--seed", "7", "--dt", "0.02",
                           env={"QZENO_OUT": str(tmp_path)})
        assert out.returncode in (0, 1)
        assert (tmp_path / "fig1" / "manifest.json").exists()

    def test_run_missing_config(self):
        out = self.run_cli("run", "missing.cfg")
        assert out.returncode == 2

    def test_unknown_flag_usage(self):
        out = self.run_cli("preset", "fig1", "--bogus")
        assert out.returncode == 2

    def test_validate(self):
        out = self.run_cli("validate")
        assert out.returncode == 0
        assert "[PASS]" in out.stdout and "[FAIL]" not in out.stdout

    def test_design_subcommand(self, tmp_path):
        params = tmp_path / "device.cfg"
        params.write_text("device.n_photons = 2000\n")
        out = self.run_cli("design", str(params), "--json-out",
                           str(tmp_path / "report.json"))
        assert out.returncode == 0
        report = json.loads((tmp_path / "report.json").read_text())
        assert report["ratios"]["omega_S/Delta"] == pytest.approx(50.0)
        assert any("gamma*Delta/g^2" in n for n in report["notes"])
