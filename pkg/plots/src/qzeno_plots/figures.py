"""Render stacked time-series and trajectory+histogram figures.

Input contract (produced by the simulator CLI):

* ``timeseries.csv`` -- header ``t,<name>,...``, one row per snapshot,
  decimal floats;
* ``histogram.json`` -- ``bin_edges`` (length n+1), ``weights``
  (length n), ``observable``, ``peak_score``.

Rendering is read-only and timestamp-free, so re-rendering the same
inputs with the same library versions reproduces the output bytes.
"""

from __future__ import annotations

import csv
import json
import os
from dataclasses import dataclass, field

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

matplotlib.rcParams["svg.hashsalt"] = "qzeno-plots"


class MissingColumnError(KeyError):
    """A referenced column is absent from the CSV header."""


class MissingFileError(FileNotFoundError):
    """A required run output file is absent."""


@dataclass(frozen=True)
class FigureSpec:
    """Panel layout for one figure: rows of ('series', column) or
    ('histogram', observable), sharing the time axis for series rows."""

    input_files: tuple
    panels: tuple
    xlabel: str
    output_path: str
    vlines: tuple = field(default=())


def read_timeseries(path: str) -> dict:
    """CSV into {column name: float array}; raises MissingFileError."""
    if not os.path.isfile(path):
        raise MissingFileError(f"run output not found: {path}")
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = [[float(x) for x in row] for row in reader if row]
    data = np.asarray(rows)
    if data.size == 0:
        raise ValueError(f"{path} has no data rows")
    return {name: data[:, i] for i, name in enumerate(header)}


def read_histogram(path: str) -> dict:
    if not os.path.isfile(path):
        raise MissingFileError(f"run output not found: {path}")
    with open(path) as fh:
        return json.load(fh)


def require_columns(data: dict, names) -> None:
    missing = [n for n in names if n not in data]
    if missing:
        raise MissingColumnError(
            f"column(s) {missing} not in CSV header {sorted(data)}")


def _save(fig, output_path: str) -> list:
    """Write PNG and SVG siblings without embedded timestamps."""
    base, ext = os.path.splitext(output_path)
    if ext.lower() not in (".png", ".svg"):
        base = output_path
    written = []
    for fmt in ("png", "svg"):
        target = f"{base}.{fmt}"
        fig.savefig(target, format=fmt, metadata={"Date": None} if fmt == "svg"
                    else {"Software": "qzeno-plots"})
        written.append(target)
    plt.close(fig)
    return written


def render_series_panels(spec: FigureSpec) -> list:
    """Generic stacked-series renderer driven by a FigureSpec."""
    data = read_timeseries(spec.input_files[0])
    columns = [col for kind, col in spec.panels if kind == "series"]
    require_columns(data, ["t"] + columns)
    fig, axes = plt.subplots(len(columns), 1, sharex=True,
                             figsize=(7.0, 2.2 * len(columns)))
    if len(columns) == 1:
        axes = [axes]
    t = data["t"]
    for ax, col in zip(axes, columns):
        ax.plot(t, data[col], lw=0.7, color="#1f4e79")
        ax.set_ylabel(col)
        for x in spec.vlines:
            ax.axvline(x, color="#aa3333", lw=0.8, ls="--")
        ax.margins(x=0)
    axes[-1].set_xlabel(spec.xlabel)
    fig.tight_layout()
    return _save(fig, spec.output_path)


def render_fig1_style(run_dir: str, out: str | None = None) -> list:
    """Three stacked panels: <N_R>, <N_P> and Var(N_R) against t*k,
    with a marker at the coupling switch t*k = 50."""
    spec = FigureSpec(
        input_files=(os.path.join(run_dir, "timeseries.csv"),),
        panels=(("series", "N_R"), ("series", "N_P"), ("series", "Var(N_R)")),
        xlabel="t k",
        output_path=out or os.path.join(run_dir, "fig1_style.png"),
        vlines=(50.0,),
    )
    return render_series_panels(spec)


def render_fig2_style(run_dir: str, out: str | None = None) -> list:
    """Trajectory panel with integer gridlines plus a rotated dwell-time
    histogram sharing the occupation axis."""
    ts_path = os.path.join(run_dir, "timeseries.csv")
    hist_path = os.path.join(run_dir, "histogram.json")
    data = read_timeseries(ts_path)
    hist = read_histogram(hist_path)
    column = hist.get("observable", "N_R")
    require_columns(data, ["t", column])

    fig, (ax_t, ax_h) = plt.subplots(
        1, 2, sharey=True, figsize=(8.0, 3.2),
        gridspec_kw={"width_ratios": [3.2, 1.0]})
    t = data["t"]
    series = data[column]
    ax_t.plot(t, series, lw=0.7, color="#1f4e79")
    ax_t.set_xlabel("time")
    ax_t.set_ylabel(f"<{column}>")
    ax_t.margins(x=0)
    lo = int(np.floor(series.min()))
    hi = int(np.ceil(series.max()))
    for n in range(lo, hi + 1):
        ax_t.axhline(n, color="#999999", lw=0.5, ls=":")

    edges = np.asarray(hist["bin_edges"], dtype=float)
    weights = np.asarray(hist["weights"], dtype=float)
    centers = 0.5 * (edges[:-1] + edges[1:])
    ax_h.barh(centers, weights, height=edges[1] - edges[0],
              color="#1f4e79", edgecolor="none")
    ax_h.set_xlabel("dwell time")
    score = hist.get("peak_score")
    if score is not None:
        ax_h.set_title(f"peak score {score:.2f}", fontsize=9)
    fig.tight_layout()
    out_path = out or os.path.join(run_dir, "fig2_style.png")
    return _save(fig, out_path)
