"""Trajectory and ensemble execution on top of the compiled kernels."""

from __future__ import annotations

import warnings
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from ..errors import EnsembleError, NanDetectedError
from ..hilbert import DensityMatrix, StateVector
from ..models import BuiltModel, ModelSpec, Scenario, Frame, build_model, schedule_value
from .compiled import _sme_kernel, _sme_kernel_large, _sse_kernel, compile_system

# above this dimension the Heun/diagonal-X density-matrix path uses the
# row-parallel kernel (same arithmetic, bit-identical for any thread count)
PARALLEL_DIM_THRESHOLD = 128
from .config import (
    LEAKAGE_THRESHOLD,
    EnsembleResult,
    IntegratorConfig,
    Method,
    TrajectoryResult,
    TrajectorySummary,
)
from .noise import NoiseStream


def default_dt(spec: ModelSpec) -> float:
    """Step size resolving the fastest frequency of the scenario."""
    if spec.scenario is Scenario.RWA_OSCILLATORS:
        return 1e-3 / spec.k
    if spec.scenario is Scenario.TLS_PROBE:
        return 1e-3 / spec.omega_R
    if spec.frame is Frame.LAB:
        return 1e-3 / spec.omega_R
    return 1e-3 / spec.k


def base_observable_name(name: str) -> str:
    if name.startswith("Var(") and name.endswith(")"):
        return name[4:-1]
    return name


def _resolve_observables(built: BuiltModel, observables, extra) -> list:
    registry = dict(built.observables)
    if extra:
        registry.update(extra)
    if observables is None:
        names = list(built.observables)
        if extra:
            names += list(extra)
    else:
        names, seen = [], set()
        for raw in observables:
            base = base_observable_name(raw)
            if base not in registry:
                raise KeyError(f"unknown observable {base!r}; have {sorted(registry)}")
            if base not in seen:
                seen.add(base)
                names.append(base)
    return [(n, registry[n]) for n in names]


def _coupling_values(built: BuiltModel, cfg: IntegratorConfig, n_steps: int) -> np.ndarray:
    default = 0.0
    for term in built.h_terms:
        if term.is_coupling:
            default = term.coefficient
            break
    if cfg.lambda_schedule is None:
        return np.full(n_steps + 1, default, dtype=np.float64)
    ts = np.arange(n_steps + 1) * cfg.dt
    return np.array(
        [schedule_value(cfg.lambda_schedule, float(t), default) for t in ts],
        dtype=np.float64,
    )


def run_trajectory(model, init, cfg: IntegratorConfig, observables=None,
                   extra_observables=None, trajectory_index: int = 0) -> TrajectoryResult:
    """Integrate one conditioned trajectory.

    ``init`` selects the state form: a StateVector runs the pure-state
    unraveling (dissipation-free models only), a DensityMatrix runs the
    density-matrix equation.  The result is a deterministic function of
    (model, init, cfg.seed, trajectory_index).
    """
    built = build_model(model) if isinstance(model, ModelSpec) else model
    if built.spec.k <= 0:
        raise ValueError("measurement strength k must be positive for conditioned runs")
    obs_ops = _resolve_observables(built, observables, extra_observables)
    system = compile_system(built, obs_ops, built.spec.k)

    n_steps = cfg.n_steps
    stride = cfg.snapshot_stride
    n_snap = n_steps // stride + 1
    dW = NoiseStream(cfg.seed, trajectory_index).gaussian_increments(n_steps, cfg.dt)
    lam_steps = _coupling_values(built, cfg, n_steps)
    heun = 1 if cfg.method is Method.HEUN_DRIFT_EULER_NOISE else 0

    out_exp = np.zeros((len(obs_ops), n_snap))
    out_var = np.zeros((len(obs_ops), n_snap))
    out_rec = np.zeros(n_steps)
    out_diag = np.zeros(3)

    if isinstance(init, StateVector):
        if built.dissipators:
            raise ValueError(
                "pure-state unraveling cannot include dissipators; "
                "use a DensityMatrix initial state"
            )
        if init.dim != built.dim:
            raise ValueError(f"init dim {init.dim} != model dim {built.dim}")
        state = init.amplitudes.copy()
        status = _sse_kernel(
            state, cfg.dt, n_steps, dW, lam_steps, heun,
            system.h_off, system.h_val, system.h_term, system.term_amp,
            system.term_cos, system.term_freq, system.term_coup,
            system.x_off, system.x_val, system.k,
            system.ob_off, system.ob_val, system.ob_op,
            system.ob2_off, system.ob2_val, system.ob2_op, len(obs_ops),
            system.leak_idx, system.leak_ptr, stride,
            out_exp, out_var, out_rec, out_diag)
        diagnostics = {
            "max_norm_drift": float(out_diag[0]),
            "max_leakage": float(out_diag[2]),
        }
        final = None if status >= 0 else StateVector(state)
    elif isinstance(init, DensityMatrix):
        if init.dim != built.dim:
            raise ValueError(f"init dim {init.dim} != model dim {built.dim}")
        state = init.entries.copy()
        if (system.x_is_diag == 1 and heun == 1
                and built.dim >= PARALLEL_DIM_THRESHOLD):
            status = _sme_kernel_large(
                state, cfg.dt, n_steps, dW, lam_steps,
                system.h_off, system.h_val, system.h_term, system.term_amp,
                system.term_cos, system.term_freq, system.term_coup,
                system.xd, system.k,
                system.cc_off, system.cc_val, system.cc_coef,
                system.sw_oa, system.sw_a, system.sw_ob, system.sw_b,
                system.sw_coef, system.c_val, system.cd_val,
                system.ob_off, system.ob_val, system.ob_op,
                system.ob2_off, system.ob2_val, system.ob2_op, len(obs_ops),
                system.leak_idx, system.leak_ptr, stride,
                out_exp, out_var, out_rec, out_diag)
        else:
            status = _sme_kernel(
                state, cfg.dt, n_steps, dW, lam_steps, heun,
                system.h_off, system.h_val, system.h_term, system.term_amp,
                system.term_cos, system.term_freq, system.term_coup,
                system.x_off, system.x_val, system.x2_off, system.x2_val,
                system.x_is_diag, system.xd, system.k,
                system.c_off, system.c_val, system.c_op,
                system.cd_off, system.cd_val, system.cd_op,
                system.cc_off, system.cc_val, system.cc_op, system.rates,
                system.ob_off, system.ob_val, system.ob_op,
                system.ob2_off, system.ob2_val, system.ob2_op, len(obs_ops),
                system.leak_idx, system.leak_ptr, stride,
                out_exp, out_var, out_rec, out_diag)
        diagnostics = {
            "max_trace_drift": float(out_diag[0]),
            "max_hermiticity_error": float(out_diag[1]),
            "max_leakage": float(out_diag[2]),
        }
        final = None if status >= 0 else DensityMatrix(state)
    else:
        raise TypeError(f"init must be StateVector or DensityMatrix, got {type(init)}")

    names = [n for n, _ in obs_ops]
    if status >= 0:
        exc = NanDetectedError(
            f"trajectory diverged at step {status} (seed={cfg.seed}, "
            f"index={trajectory_index})",
            step=status, seed=cfg.seed, trajectory_index=trajectory_index)
        # snapshots recorded before the failure are still valid
        n_ok = status // stride + 1
        exc.partial = TrajectoryResult(
            times=np.arange(n_ok) * (stride * cfg.dt),
            exp_series={n: out_exp[i, :n_ok] for i, n in enumerate(names)},
            var_series={n: out_var[i, :n_ok] for i, n in enumerate(names)},
            record=out_rec[:status],
            max_leakage=float(out_diag[2]),
            final_state=None,
            diagnostics=diagnostics,
            leakage_exceeded=False,
            seed=cfg.seed,
            trajectory_index=trajectory_index,
        )
        raise exc

    max_leak = float(out_diag[2])
    exceeded = max_leak > LEAKAGE_THRESHOLD
    if exceeded:
        warnings.warn(
            f"top-Fock-level population reached {max_leak:.3e} "
            f"(threshold {LEAKAGE_THRESHOLD:g}); results may be truncation-limited",
            stacklevel=2)
    times = np.arange(n_snap) * (stride * cfg.dt)
    return TrajectoryResult(
        times=times,
        exp_series={n: out_exp[i] for i, n in enumerate(names)},
        var_series={n: out_var[i] for i, n in enumerate(names)},
        record=out_rec,
        max_leakage=max_leak,
        final_state=final,
        diagnostics=diagnostics,
        leakage_exceeded=exceeded,
        seed=cfg.seed,
        trajectory_index=trajectory_index,
    )


def _ensemble_task(args):
    built, init, cfg, observables, extra, index = args
    return run_trajectory(built, init, cfg, observables, extra, trajectory_index=index)


def run_ensemble(model, init, cfg: IntegratorConfig, M: int, observables=None,
                 extra_observables=None, n_workers: int = 1,
                 keep_trajectories: bool = False) -> EnsembleResult:
    """Run M independent trajectories; trajectory i uses noise stream
    (cfg.seed, i).

    The mean series is an ordered reduction over trajectory index, so
    the result is bit-identical for any worker count.
    """
    if M < 1:
        raise ValueError(f"ensemble size must be >= 1, got {M}")
    built = build_model(model) if isinstance(model, ModelSpec) else model
    tasks = [(built, init, cfg, observables, extra_observables, i) for i in range(M)]

    results: list = [None] * M
    failures = []
    if n_workers <= 1:
        for i, task in enumerate(tasks):
            try:
                results[i] = _ensemble_task(task)
            except NanDetectedError as exc:
                failures.append((i, str(exc)))
    else:
        with ProcessPoolExecutor(max_workers=n_workers) as pool:
            futures = {pool.submit(_ensemble_task, t): t[-1] for t in tasks}
            for fut, idx in futures.items():
                try:
                    results[idx] = fut.result()
                except NanDetectedError as exc:
                    failures.append((idx, str(exc)))
    if failures:
        failures.sort()
        raise EnsembleError(
            f"{len(failures)} of {M} trajectories failed: "
            + "; ".join(f"#{i}: {msg}" for i, msg in failures),
            failures=failures)

    first = results[0]
    names = list(first.exp_series)
    sum_exp = {n: first.exp_series[n].copy() for n in names}
    sum_var = {n: first.var_series[n].copy() for n in names}
    sum_rec = first.record.copy()
    for r in results[1:]:
        for n in names:
            sum_exp[n] += r.exp_series[n]
            sum_var[n] += r.var_series[n]
        sum_rec += r.record
    mean = TrajectoryResult(
        times=first.times.copy(),
        exp_series={n: sum_exp[n] / M for n in names},
        var_series={n: sum_var[n] / M for n in names},
        record=sum_rec / M,
        max_leakage=max(r.max_leakage for r in results),
        final_state=None,
        diagnostics={"trajectories": M},
        leakage_exceeded=any(r.leakage_exceeded for r in results),
        seed=cfg.seed,
        trajectory_index=-1,
    )
    summaries = [
        TrajectorySummary(
            trajectory_index=r.trajectory_index,
            max_leakage=r.max_leakage,
            max_trace_drift=r.diagnostics.get("max_trace_drift", 0.0),
            max_hermiticity_error=r.diagnostics.get("max_hermiticity_error", 0.0),
        )
        for r in results
    ]
    return EnsembleResult(mean=mean, summaries=summaries,
                          trajectories=results if keep_trajectories else None)
