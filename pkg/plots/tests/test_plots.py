import json
import os
import subprocess
import sys

import pytest

from qzeno_plots.cli import main as plot_main
from qzeno_plots.figures import (
    MissingColumnError,
    MissingFileError,
    render_fig1_style,
    render_fig2_style,
)


def write_run_dir(path, columns=("t", "N_R", "N_P", "Var(N_R)"), n=50):
    path.mkdir(parents=True, exist_ok=True)
    with open(path / "timeseries.csv", "w") as fh:
        fh.write(",".join(columns) + "\n")
        for i in range(n):
            t = 0.1 * i
            vals = [t] + [1.0 + (i % 7) * 0.1] * (len(columns) - 1)
            fh.write(",".join(f"{v:.17g}" for v in vals) + "\n")
    hist = {
        "observable": "N_R",
        "bin_width": 0.05,
        "band": 0.2,
        "bin_edges": [0.5 + 0.05 * j for j in range(21)],
        "weights": [0.1] * 20,
        "peak_score": 0.7,
    }
    with open(path / "histogram.json", "w") as fh:
        json.dump(hist, fh)
    return path


class TestFig1Style:
    def test_renders_three_panels(self, tmp_path):
        run = write_run_dir(tmp_path / "run")
        written = render_fig1_style(str(run))
        assert len(written) == 2  # png + svg
        for f in written:
            assert os.path.getsize(f) > 0

    def test_missing_column_is_clean(self, tmp_path):
        run = write_run_dir(tmp_path / "run", columns=("t", "N_R", "N_P"))
        with pytest.raises(MissingColumnError) as err:
            render_fig1_style(str(run))
        assert "Var(N_R)" in str(err.value)

    def test_rerender_is_byte_stable(self, tmp_path):
        run = write_run_dir(tmp_path / "run")
        first = render_fig1_style(str(run), out=str(tmp_path / "a.png"))
        second = render_fig1_style(str(run), out=str(tmp_path / "b.png"))
        for f1, f2 in zip(first, second):
            assert open(f1, "rb").read() == open(f2, "rb").read()


class TestFig2Style:
    def test_renders_trajectory_and_histogram(self, tmp_path):
        run = write_run_dir(tmp_path / "run")
        written = render_fig2_style(str(run))
        assert len(written) == 2
        for f in written:
            assert os.path.getsize(f) > 0

    def test_missing_histogram_file(self, tmp_path):
        run = write_run_dir(tmp_path / "run")
        os.remove(run / "histogram.json")
        with pytest.raises(MissingFileError):
            render_fig2_style(str(run))

    def test_missing_timeseries_file(self, tmp_path):
        run = write_run_dir(tmp_path / "run")
        os.remove(run / "timeseries.csv")
        with pytest.raises(MissingFileError):
            render_fig2_style(str(run))


class TestCli:
    def test_fig1_command(self, tmp_path):
        run = write_run_dir(tmp_path / "run")
        out = tmp_path / "fig.png"
        assert plot_main(["fig1", "--in", str(run), "--out", str(out)]) == 0
        assert out.exists() and (tmp_path / "fig.svg").exists()

    def test_missing_dir_exit_code(self, tmp_path, capsys):
        assert plot_main(["fig2", "--in", str(tmp_path / "nope")]) == 2
        assert "error:" in capsys.readouterr().err

    def test_unknown_flag(self):
        assert plot_main(["fig1", "--bogus"]) == 2


@pytest.mark.slow
class TestEndToEnd:
    def test_from_real_preset_run(self, tmp_path):
        # drive the simulator through its public CLI, then render
        env = dict(os.environ, QZENO_OUT=str(tmp_path))
        proc = subprocess.run(
            [sys.executable, "-m", "qzeno.cli", "preset", "fig1",
             "--seed", "3", "--dt", "0.02"],
            capture_output=True, text=True, env=env)
        assert proc.returncode in (0, 1), proc.stderr
        run_dir = tmp_path / "fig1"
        assert plot_main(["fig1", "--in", str(run_dir)]) == 0
        assert plot_main(["fig2", "--in", str(run_dir)]) == 0
        assert (run_dir / "fig1_style.png").exists()
        assert (run_dir / "fig2_style.svg").exists()
