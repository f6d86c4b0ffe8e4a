"""Command-line interface.

Subcommands::

    qzeno run <config-file>
    qzeno preset fig1|fig2a|fig2b|fig2c [--seed S] [--dt X] [--out DIR] [--ensemble M]
    qzeno design <params-file>
    qzeno validate

Exit codes: 0 success, 1 physics flag raised (truncation leakage),
2 usage or runtime error.  QZENO_OUT overrides the default output base
directory for presets.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import design as dsg
from . import hilbert as hs
from .errors import QZenoError
from .scenarios import preset_fig1, preset_fig2, read_config, run_config

PRESETS = ("fig1", "fig2a", "fig2b", "fig2c")


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="qzeno",
        description="stochastic trajectories of a continuously measured nanoresonator")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="execute a run described by a config file")
    p_run.add_argument("config", help="path to a key=value config file")

    p_pre = sub.add_parser("preset", help="run a built-in configuration")
    p_pre.add_argument("name", choices=PRESETS)
    p_pre.add_argument("--seed", type=int, default=1)
    p_pre.add_argument("--dt", type=float, default=None)
    p_pre.add_argument("--out", default=None)
    p_pre.add_argument("--ensemble", type=int, default=1)

    p_des = sub.add_parser("design", help="device-parameter calculator")
    p_des.add_argument("params", help="path to a key=value device-parameter file")
    p_des.add_argument("--json-out", default=None, help="also write the report as JSON")

    sub.add_parser("validate", help="run the quick invariant suite")
    return parser


def _cmd_run(args) -> int:
    cfg = read_config(args.config)
    manifest = run_config(cfg)
    print(f"run complete: outputs in {cfg.outputs}")
    return 1 if manifest.flags.get("leakage_exceeded") else 0


def _cmd_preset(args) -> int:
    if args.name == "fig1":
        kwargs = {} if args.dt is None else {"dt": args.dt}
        cfg = preset_fig1(seed=args.seed, out=args.out, ensemble=args.ensemble, **kwargs)
    else:
        cfg = preset_fig2(args.name[-1], seed=args.seed, dt=args.dt,
                          out=args.out, ensemble=args.ensemble)
    os.makedirs(cfg.outputs, exist_ok=True)
    manifest = run_config(cfg)
    print(f"preset {args.name} complete: outputs in {cfg.outputs}")
    return 1 if manifest.flags.get("leakage_exceeded") else 0


def _read_params_file(path: str) -> dsg.DeviceParams:
    mapping = {}
    with open(path) as fh:
        for raw in fh:
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            key, _, value = line.partition("=")
            mapping[key.strip()] = value.strip()
    ref = dsg.reference_device_params()
    fields = ("g", "Delta", "gamma", "n_photons", "omega_S", "omega_R",
              "E_J_over_hbar", "Q", "T", "lambda_")
    values = {f: float(mapping.get(f"device.{f}", getattr(ref, f))) for f in fields}
    return dsg.DeviceParams(quoted_ratios=ref.quoted_ratios, **values)


def _cmd_design(args) -> int:
    params = _read_params_file(args.params)
    report = dsg.validity_report(params)
    print(dsg.report_as_table(report))
    payload = json.dumps(dsg.report_as_dict(report), indent=1)
    json_path = args.json_out or os.path.splitext(args.params)[0] + "_report.json"
    with open(json_path, "w") as fh:
        fh.write(payload)
    return 0


def _cmd_validate(_args) -> int:
    """Fast structural checks: operator identities, state normalization,
    one compiled step against the reference step."""
    from .dynamics import IntegratorConfig, run_trajectory, sme_step
    from .dynamics.noise import NoiseStream
    from .hilbert import SpaceLayout
    from .models import ModelSpec, build_model, hamiltonian_at, xi_factor

    checks = []

    def check(name, fn):
        try:
            ok = bool(fn())
            detail = ""
        except Exception as exc:  # surface, don't crash the suite
            ok, detail = False, f" ({exc})"
        checks.append(ok)
        print(f"[{'PASS' if ok else 'FAIL'}] {name}{detail}")

    a = hs.destroy(12)
    check("destroy^dag destroy equals number", lambda: np.abs(
        (hs.dagger(a) @ a).entries - hs.number(12).entries).max() < 1e-13)
    check("coherent state normalized", lambda: abs(
        hs.coherent_state(20, 1.3).norm() - 1.0) < 1e-12)
    check("kron associativity", lambda: np.abs(
        hs.kron(hs.kron(hs.pauli("x"), hs.pauli("y")), hs.number(3)).entries
        - hs.kron(hs.pauli("x"), hs.kron(hs.pauli("y"), hs.number(3))).entries).max() < 1e-13)
    check("thermal weighting at T=0", lambda: xi_factor(0.0, 2 * np.pi * 1e8) == 1.0)

    spec = ModelSpec(scenario="rwa_oscillators", dims=SpaceLayout((8, 8)),
                     lambda_=0.05, k=1.0)
    model = build_model(spec)
    dt = 1e-3
    dw = NoiseStream(0, 0).gaussian_increments(1, dt)[0]

    def kernel_matches_reference():
        psi = hs.tensor_state(hs.coherent_state(8, 0.7), hs.coherent_state(8, 0.7))
        rho = psi.to_density_matrix()
        ref = sme_step(rho, hamiltonian_at(model.h_terms, 0.0), model.measured_op,
                       1.0, model.dissipators, dt, dw)
        got = run_trajectory(model, rho, IntegratorConfig(dt=dt, t_final=dt, seed=0))
        return np.abs(got.final_state.entries - ref.entries).max() < 1e-12

    check("compiled step matches reference step", kernel_matches_reference)

    def fock_fixed_point():
        spec0 = ModelSpec(scenario="rwa_oscillators", dims=SpaceLayout((8, 8)),
                          lambda_=0.0, k=1.0)
        m0 = build_model(spec0)
        init = hs.tensor_state(hs.fock_state(8, 2), hs.fock_state(8, 3))
        r = run_trajectory(m0, init, IntegratorConfig(dt=dt, t_final=0.05, seed=3))
        return np.abs(r.exp_series["N_P"] - 3.0).max() == 0.0

    check("measurement eigenstates are fixed points", fock_fixed_point)
    return 0 if all(checks) else 1


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code not in (0, None) else 0
    handlers = {
        "run": _cmd_run,
        "preset": _cmd_preset,
        "design": _cmd_design,
        "validate": _cmd_validate,
    }
    try:
        return handlers[args.command](args)
    except (QZenoError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
