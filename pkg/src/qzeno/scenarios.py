"""Config-driven experiment runner: presets, file formats, manifests.

Config files are flat ``key = value`` text with dotted namespaces
(grammar documented in the README; ``format_version = 1``).  A run
writes four files into its output directory:

* ``timeseries.csv``   -- header ``t,<obs>...``, one row per snapshot,
  17-significant-digit floats (exact round-trip for 64-bit values);
* ``histogram.json``   -- dt-weighted histogram of one observable with
  its integer-peak score;
* ``jumps.json``       -- detected integer-level transitions;
* ``manifest.json``    -- config echo, code version, seed, wall time,
  max leakage, flags, sha256 checksums of the other files.

For a fixed seed the first three files are byte-identical across
re-runs; only the manifest wall time differs.
"""

from __future__ import annotations

import hashlib
import json
import math
import os
import time
from dataclasses import dataclass

import numpy as np

from . import __version__
from . import hilbert as hs
from .dynamics import IntegratorConfig, Method, run_ensemble, run_trajectory
from .errors import (
    ConfigError,
    InvalidCaseError,
    NanDetectedError,
    OutputDirError,
)
from .hilbert import SpaceLayout
from .models import BuiltModel, Frame, ModelSpec, Scenario, build_model, probe_ground_state
from .observables import detect_jumps, histogram_of_series

FORMAT_VERSION = 1

# base observables each scenario can record
SCENARIO_OBSERVABLES = {
    Scenario.RWA_OSCILLATORS: ("N_R", "N_P"),
    Scenario.TLS_PROBE: ("N_R", "sigma_z"),
    Scenario.CPB_REDUCED: ("N_R", "sigma_x"),
}


@dataclass(frozen=True)
class RunConfig:
    """Complete description of one experiment run."""

    model: ModelSpec
    integrator: IntegratorConfig
    evolution: str  # "sse" | "sme"
    init: tuple
    observables: tuple
    outputs: str
    ensemble_size: int = 1
    histogram_observable: str = "N_R"
    histogram_bin_width: float = 0.05
    jumps_observable: str = "N_R"
    jumps_hysteresis: float = 0.3
    jumps_min_dwell_steps: int = 20

    def __post_init__(self):
        if self.evolution not in ("sse", "sme"):
            raise ConfigError(f"evolution must be 'sse' or 'sme', got {self.evolution!r}")
        if self.ensemble_size < 1:
            raise ConfigError(f"ensemble_size must be >= 1, got {self.ensemble_size}")
        allowed = set(SCENARIO_OBSERVABLES[self.model.scenario])
        for name in tuple(self.observables) + (self.histogram_observable, self.jumps_observable):
            base = name[4:-1] if name.startswith("Var(") and name.endswith(")") else name
            if base not in allowed:
                raise ConfigError(
                    f"observable {name!r} not available for scenario "
                    f"{self.model.scenario.value}; allowed: {sorted(allowed)}")
        if len(self.init) != len(self.model.dims.factor_dims):
            raise ConfigError(
                f"init has {len(self.init)} descriptors for "
                f"{len(self.model.dims.factor_dims)} subsystems")
        object.__setattr__(self, "init", tuple(self.init))
        object.__setattr__(self, "observables", tuple(self.observables))


@dataclass(frozen=True)
class RunManifest:
    config: dict
    code_version: str
    seed: int
    wall_time_s: float
    max_leakage: float
    flags: dict
    checksums: dict


# ---------------------------------------------------------------------------
# initial states


def make_initial_state(model: BuiltModel, descriptors, evolution: str):
    """Build the tensor-product initial state from per-factor descriptors
    ("coherent:<alpha>", "fock:<n>", "ground")."""
    factors = []
    for slot, desc in enumerate(descriptors):
        d = model.layout.factor_dims[slot]
        if desc.startswith("coherent:"):
            factors.append(hs.coherent_state(d, float(desc.split(":", 1)[1])))
        elif desc.startswith("fock:"):
            factors.append(hs.fock_state(d, int(desc.split(":", 1)[1])))
        elif desc == "ground":
            if d != 2:
                raise ConfigError("'ground' descriptor is only defined for the two-level probe")
            factors.append(probe_ground_state(model))
        else:
            raise ConfigError(f"unknown init descriptor {desc!r}")
    psi = hs.tensor_state(*factors) if len(factors) > 1 else factors[0]
    return psi.to_density_matrix() if evolution == "sme" else psi


# ---------------------------------------------------------------------------
# config file grammar


def _fmt(value) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


def config_to_mapping(cfg: RunConfig) -> dict:
    m = cfg.model
    it = cfg.integrator
    mapping = {
        "format_version": str(FORMAT_VERSION),
        "scenario": m.scenario.value,
        "frame": m.frame.value,
        "dims": ",".join(str(d) for d in m.dims.factor_dims),
        "evolution": cfg.evolution,
        "init": ",".join(cfg.init),
        "model.lambda": _fmt(m.lambda_),
        "model.k": _fmt(m.k),
        "model.omega_R": _fmt(m.omega_R),
        "model.E_J_over_hbar": _fmt(m.E_J_over_hbar),
        "model.delta": "auto" if m.delta is None else _fmt(m.delta),
        "model.Gamma": _fmt(m.Gamma),
        "model.T": _fmt(m.T),
        "model.gamma_CPB": _fmt(m.gamma_CPB),
        "integrator.method": "heun" if it.method is Method.HEUN_DRIFT_EULER_NOISE else "euler",
        "integrator.dt": _fmt(it.dt),
        "integrator.t_final": _fmt(it.t_final),
        "integrator.seed": str(it.seed),
        "integrator.snapshot_stride": str(it.snapshot_stride),
        "integrator.lambda_schedule": (
            "none" if it.lambda_schedule is None
            else ",".join(f"{_fmt(t)}:{_fmt(v)}" for t, v in it.lambda_schedule)),
        "observables": ",".join(cfg.observables),
        "outputs.dir": cfg.outputs,
        "ensemble.size": str(cfg.ensemble_size),
        "histogram.observable": cfg.histogram_observable,
        "histogram.bin_width": _fmt(cfg.histogram_bin_width),
        "jumps.observable": cfg.jumps_observable,
        "jumps.hysteresis": _fmt(cfg.jumps_hysteresis),
        "jumps.min_dwell_steps": str(cfg.jumps_min_dwell_steps),
    }
    return mapping


def mapping_to_config(mapping: dict) -> RunConfig:
    try:
        if int(mapping["format_version"]) != FORMAT_VERSION:
            raise ConfigError(f"unsupported format_version {mapping['format_version']}")
        dims = SpaceLayout(tuple(int(x) for x in mapping["dims"].split(",")))
        delta_raw = mapping["model.delta"]
        model = ModelSpec(
            scenario=Scenario(mapping["scenario"]),
            frame=Frame(mapping["frame"]),
            dims=dims,
            lambda_=float(mapping["model.lambda"]),
            k=float(mapping["model.k"]),
            omega_R=float(mapping["model.omega_R"]),
            E_J_over_hbar=float(mapping["model.E_J_over_hbar"]),
            delta=None if delta_raw == "auto" else float(delta_raw),
            Gamma=float(mapping["model.Gamma"]),
            T=float(mapping["model.T"]),
            gamma_CPB=float(mapping["model.gamma_CPB"]),
        )
        sched_raw = mapping["integrator.lambda_schedule"]
        schedule = None
        if sched_raw != "none":
            schedule = tuple(
                (float(p.split(":")[0]), float(p.split(":")[1]))
                for p in sched_raw.split(","))
        integrator = IntegratorConfig(
            dt=float(mapping["integrator.dt"]),
            t_final=float(mapping["integrator.t_final"]),
            seed=int(mapping["integrator.seed"]),
            method=(Method.HEUN_DRIFT_EULER_NOISE
                    if mapping["integrator.method"] == "heun" else Method.EULER_MARUYAMA),
            snapshot_stride=int(mapping["integrator.snapshot_stride"]),
            lambda_schedule=schedule,
        )
        return RunConfig(
            model=model,
            integrator=integrator,
            evolution=mapping["evolution"],
            init=tuple(mapping["init"].split(",")),
            observables=tuple(mapping["observables"].split(",")),
            outputs=mapping["outputs.dir"],
            ensemble_size=int(mapping["ensemble.size"]),
            histogram_observable=mapping["histogram.observable"],
            histogram_bin_width=float(mapping["histogram.bin_width"]),
            jumps_observable=mapping["jumps.observable"],
            jumps_hysteresis=float(mapping["jumps.hysteresis"]),
            jumps_min_dwell_steps=int(mapping["jumps.min_dwell_steps"]),
        )
    except KeyError as exc:
        raise ConfigError(f"missing config key {exc.args[0]!r}") from None
    except ValueError as exc:
        raise ConfigError(f"malformed config value: {exc}") from None


def write_config(cfg: RunConfig, path: str) -> None:
    mapping = config_to_mapping(cfg)
    with open(path, "w") as fh:
        for key, value in mapping.items():
            fh.write(f"{key} = {value}\n")


def read_config(path: str) -> RunConfig:
    mapping = {}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected 'key = value', got {line!r}")
            key, _, value = line.partition("=")
            mapping[key.strip()] = value.strip()
    return mapping_to_config(mapping)


# ---------------------------------------------------------------------------
# presets

SQRT2 = math.sqrt(2.0)


def preset_fig1(seed: int = 1, dt: float = 1e-3, out: str | None = None,
                ensemble: int = 1) -> RunConfig:
    """Coupled-oscillator run in units k = 1: coherent(sqrt 2) start in
    both modes, coupling k/20 switched down to 7.5e-3 k at t = 50/k,
    pure-state integrator, 200/k total."""
    model = ModelSpec(
        scenario=Scenario.RWA_OSCILLATORS,
        dims=SpaceLayout((15, 15)),
        lambda_=0.05,
        k=1.0,
    )
    integrator = IntegratorConfig(
        dt=dt,
        t_final=200.0,
        seed=seed,
        snapshot_stride=10,
        lambda_schedule=((0.0, 0.05), (50.0, 0.0075)),
    )
    return RunConfig(
        model=model,
        integrator=integrator,
        evolution="sse",
        init=(f"coherent:{SQRT2!r}", f"coherent:{SQRT2!r}"),
        observables=("N_R", "N_P", "Var(N_R)"),
        outputs=out if out is not None else default_output_dir("fig1"),
        ensemble_size=ensemble,
    )


FIG2_CASES = ("a", "b", "c")


def preset_fig2(case: str, seed: int = 1, dt: float | None = None,
                out: str | None = None, ensemble: int = 1) -> RunConfig:
    """Resonator + charge-qubit run (rotating frame) at
    omega_R = 2 pi x 1e8 rad/s, k = omega_R/20, lambda = 3k/4.

    Thermal settings: (a) no damping, T=0; (b) Gamma=k/500 at 6 mK;
    (c) Gamma=k/2500 at 32 mK with a deeper Fock truncation.
    """
    if case not in FIG2_CASES:
        raise InvalidCaseError(f"case must be one of {FIG2_CASES}, got {case!r}")
    omega_R = 2.0 * math.pi * 1e8
    k = omega_R / 20.0
    lam = 0.75 * k
    common = dict(
        scenario=Scenario.CPB_REDUCED,
        frame=Frame.RWA,
        omega_R=omega_R,
        k=k,
        lambda_=lam,
        E_J_over_hbar=2.0 * math.pi * 1e10 + 4.0 * math.pi * 1e8,
    )
    if case == "a":
        model = ModelSpec(dims=SpaceLayout((20, 2)), Gamma=0.0, T=0.0, gamma_CPB=0.0,
                          **common)
        # long enough for the excitation-number sector to resolve, which
        # is what sharpens the integer peaks
        t_final = 600.0 / k
    elif case == "b":
        model = ModelSpec(dims=SpaceLayout((20, 2)), Gamma=k / 500.0, T=6e-3,
                          gamma_CPB=1e6, **common)
        t_final = 300.0 / k
    else:
        model = ModelSpec(dims=SpaceLayout((30, 2)), Gamma=k / 2500.0, T=32e-3,
                          gamma_CPB=1e6, **common)
        t_final = 600.0 / k
    integrator = IntegratorConfig(
        dt=dt if dt is not None else 1e-3 / k,
        t_final=t_final,
        seed=seed,
        snapshot_stride=50,
    )
    return RunConfig(
        model=model,
        integrator=integrator,
        evolution="sme",
        init=(f"coherent:{SQRT2!r}", "ground"),
        observables=("N_R", "Var(N_R)", "sigma_x"),
        outputs=out if out is not None else default_output_dir(f"fig2{case}"),
        ensemble_size=ensemble,
    )


def default_output_dir(name: str) -> str:
    base = os.environ.get("QZENO_OUT", os.path.join(os.getcwd(), "qzeno_runs"))
    return os.path.join(base, name)


# ---------------------------------------------------------------------------
# execution + files


def _sha256(path: str) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            h.update(chunk)
    return h.hexdigest()


def _series_columns(cfg: RunConfig, result) -> list:
    cols = []
    for name in cfg.observables:
        if name.startswith("Var(") and name.endswith(")"):
            cols.append((name, result.var_series[name[4:-1]]))
        else:
            cols.append((name, result.exp_series[name]))
    return cols


def _write_timeseries(path: str, cfg: RunConfig, result) -> None:
    cols = _series_columns(cfg, result)
    with open(path, "w") as fh:
        fh.write("t," + ",".join(name for name, _ in cols) + "\n")
        for i, t in enumerate(result.times):
            row = [f"{t:.17g}"] + [f"{series[i]:.17g}" for _, series in cols]
            fh.write(",".join(row) + "\n")


def run_config(cfg: RunConfig) -> RunManifest:
    """Execute a RunConfig and write its output files.

    The output directory must already exist and be writable; nothing is
    written otherwise.  Returns the manifest (also written to disk).
    """
    outdir = cfg.outputs
    if not os.path.isdir(outdir):
        raise OutputDirError(f"output directory {outdir!r} does not exist")
    if not os.access(outdir, os.W_OK):
        raise OutputDirError(f"output directory {outdir!r} is not writable")

    model = build_model(cfg.model)
    init = make_initial_state(model, cfg.init, cfg.evolution)
    t_start = time.perf_counter()
    failure = None
    trajectories = []
    try:
        if cfg.ensemble_size == 1:
            result = run_trajectory(model, init, cfg.integrator,
                                    observables=cfg.observables)
            trajectories = [result]
        else:
            ens = run_ensemble(model, init, cfg.integrator, cfg.ensemble_size,
                               observables=cfg.observables, keep_trajectories=True)
            result = ens.mean
            trajectories = ens.trajectories
    except NanDetectedError as exc:
        failure = exc
        result = getattr(exc, "partial", None)
        trajectories = [result] if result is not None else []
    wall = time.perf_counter() - t_start

    sample_dt = cfg.integrator.dt * cfg.integrator.snapshot_stride
    files = {}
    if result is not None:
        ts_path = os.path.join(outdir, "timeseries.csv")
        _write_timeseries(ts_path, cfg, result)
        files["timeseries.csv"] = ts_path

        pooled = np.concatenate(
            [tr.exp_series[cfg.histogram_observable] for tr in trajectories])
        hist = histogram_of_series(pooled, sample_dt, cfg.histogram_bin_width)
        hist_path = os.path.join(outdir, "histogram.json")
        with open(hist_path, "w") as fh:
            json.dump({
                "observable": cfg.histogram_observable,
                "bin_width": cfg.histogram_bin_width,
                "band": hist.band,
                "bin_edges": [float(x) for x in hist.bin_edges],
                "weights": [float(x) for x in hist.weights],
                "peak_score": hist.peak_score,
            }, fh, indent=1)
        files["histogram.json"] = hist_path

        first = trajectories[0]
        events = detect_jumps(
            first.exp_series[cfg.jumps_observable], first.times,
            hysteresis=cfg.jumps_hysteresis,
            min_dwell=cfg.jumps_min_dwell_steps * sample_dt)
        jumps_path = os.path.join(outdir, "jumps.json")
        with open(jumps_path, "w") as fh:
            json.dump({
                "observable": cfg.jumps_observable,
                "hysteresis": cfg.jumps_hysteresis,
                "min_dwell": cfg.jumps_min_dwell_steps * sample_dt,
                "events": [
                    {"t": e.t, "from_level": e.from_level, "to_level": e.to_level}
                    for e in events],
            }, fh, indent=1)
        files["jumps.json"] = jumps_path

    flags = {
        "leakage_exceeded": bool(result.leakage_exceeded) if result is not None else False,
        "failed": failure is not None,
    }
    if failure is not None:
        flags["error"] = str(failure)
    manifest = RunManifest(
        config=config_to_mapping(cfg),
        code_version=__version__,
        seed=cfg.integrator.seed,
        wall_time_s=wall,
        max_leakage=float(result.max_leakage) if result is not None else float("nan"),
        flags=flags,
        checksums={name: _sha256(path) for name, path in files.items()},
    )
    with open(os.path.join(outdir, "manifest.json"), "w") as fh:
        json.dump({
            "config": manifest.config,
            "code_version": manifest.code_version,
            "seed": manifest.seed,
            "wall_time_s": manifest.wall_time_s,
            "max_leakage": manifest.max_leakage,
            "flags": manifest.flags,
            "checksums": manifest.checksums,
        }, fh, indent=1)
    if failure is not None:
        raise failure
    return manifest
