"""Reference single-step integrators and the deterministic oracle.

These are plain dense-numpy implementations of the conditioned update

    d rho = -i [H, rho] dt - k [X, [X, rho]] dt
            + sum_i r_i (2 c_i rho c_i^dag - c_i^dag c_i rho - rho c_i^dag c_i) dt
            + sqrt(2k) (X rho + rho X - 2 <X> rho) dW

and of its pure-state unraveling

    d psi = [-i H dt - k (X - <X>)^2 dt + sqrt(2k) (X - <X>) dW] psi ,

followed by renormalization.  The observed record increment is
dr = <X> dt + dW / sqrt(8k).

The trajectory runner in :mod:`qzeno.dynamics.run` uses compiled
banded kernels for speed; these functions are the readable contract
they are tested against.  ``unconditional_evolve`` (classical 4th-order
stepping of the ensemble-averaged equation) is kept independent of both
so it can serve as an oracle.
"""

from __future__ import annotations

import math

import numpy as np

from ..errors import DimensionTooLargeError, NanDetectedError
from ..hilbert import DensityMatrix, Operator, StateVector
from .config import Method

MAX_UNCONDITIONAL_DIM = 256


def _h_entries(hamiltonian, t: float):
    """Dense H(t) or None; accepts Operator, callable t -> Operator, None."""
    if hamiltonian is None:
        return None
    if callable(hamiltonian):
        hamiltonian = hamiltonian(t)
    return hamiltonian.entries


def lindblad_rhs(rho: np.ndarray, h: np.ndarray | None, x: np.ndarray | None,
                 k: float, dissipators=()) -> np.ndarray:
    """Deterministic part of the conditioned master equation (array in,
    array out)."""
    out = np.zeros_like(rho)
    if h is not None:
        hr = h @ rho
        out += -1j * (hr - hr.conj().T)
    if x is not None and k != 0.0:
        xr = x @ rho
        comm = xr - xr.conj().T  # [X, rho]
        xc = x @ comm
        out -= k * (xc + xc.conj().T)  # [X, [X, rho]]
    for dis in dissipators:
        c = dis.op.entries
        cr = c @ rho
        ctc = c.conj().T @ c
        out += dis.rate * (2.0 * (cr @ c.conj().T) - ctc @ rho - rho @ ctc)
    return out


def sme_increment(rho: np.ndarray, hamiltonian, x: np.ndarray, k: float,
                  dissipators, dt: float, dW: float, t: float = 0.0,
                  method: Method = Method.HEUN_DRIFT_EULER_NOISE) -> np.ndarray:
    """Full Ito increment of the conditioned density matrix.

    The drift is advanced at second order (Heun predictor-corrector)
    unless Euler-Maruyama is requested; the diffusion term uses a single
    Gaussian of variance dt evaluated at the step start.  The increment
    is traceless up to roundoff for every dW.
    """
    f1 = lindblad_rhs(rho, _h_entries(hamiltonian, t), x, k, dissipators)
    if method is Method.HEUN_DRIFT_EULER_NOISE:
        pred = rho + dt * f1
        f2 = lindblad_rhs(pred, _h_entries(hamiltonian, t + dt), x, k, dissipators)
        drift = 0.5 * dt * (f1 + f2)
    else:
        drift = dt * f1
    xr = x @ rho
    xbar = float(np.trace(xr).real)
    noise = math.sqrt(2.0 * k) * dW * (xr + xr.conj().T - 2.0 * xbar * rho)
    return drift + noise


def sme_step(rho: DensityMatrix, hamiltonian, x: Operator, k: float,
             dissipators=(), dt: float = 1e-3, dW: float = 0.0, t: float = 0.0,
             method: Method = Method.HEUN_DRIFT_EULER_NOISE) -> DensityMatrix:
    """One conditioned step; output is re-symmetrized and trace-renormalized."""
    if k <= 0:
        raise ValueError(f"measurement strength must be positive, got {k}")
    inc = sme_increment(rho.entries, hamiltonian, x.entries, k, dissipators,
                        dt, dW, t, method)
    new = rho.entries + inc
    if not np.all(np.isfinite(new.view(np.float64))):
        raise NanDetectedError("sme_step produced non-finite entries")
    new = 0.5 * (new + new.conj().T)
    new = new / np.trace(new).real
    return DensityMatrix(new)


def sse_increment(psi: np.ndarray, hamiltonian, x: np.ndarray, k: float,
                  dt: float, dW: float, t: float = 0.0,
                  method: Method = Method.HEUN_DRIFT_EULER_NOISE) -> np.ndarray:
    """Ito increment of the normalized pure-state unraveling."""

    def drift(phi, tt):
        n2 = float(np.vdot(phi, phi).real)
        xphi = x @ phi
        xbar = float(np.vdot(phi, xphi).real) / n2
        w = xphi - xbar * phi
        out = -k * (x @ w - xbar * w)
        h = _h_entries(hamiltonian, tt)
        if h is not None:
            out = out - 1j * (h @ phi)
        return out

    f1 = drift(psi, t)
    if method is Method.HEUN_DRIFT_EULER_NOISE:
        f2 = drift(psi + dt * f1, t + dt)
        dpsi = 0.5 * dt * (f1 + f2)
    else:
        dpsi = dt * f1
    xpsi = x @ psi
    xbar0 = float(np.vdot(psi, xpsi).real)
    dpsi = dpsi + math.sqrt(2.0 * k) * dW * (xpsi - xbar0 * psi)
    return dpsi


def sse_step(psi: StateVector, hamiltonian, x: Operator, k: float,
             dt: float = 1e-3, dW: float = 0.0, t: float = 0.0,
             method: Method = Method.HEUN_DRIFT_EULER_NOISE) -> StateVector:
    """One pure-state step (dissipator-free unraveling), renormalized."""
    if k <= 0:
        raise ValueError(f"measurement strength must be positive, got {k}")
    inc = sse_increment(psi.amplitudes, hamiltonian, x.entries, k, dt, dW, t, method)
    new = psi.amplitudes + inc
    if not np.all(np.isfinite(new.view(np.float64))):
        raise NanDetectedError("sse_step produced non-finite amplitudes")
    return StateVector(new)


def record_increment(x_expect: float, k: float, dt: float, dW: float) -> float:
    """Observed signal increment dr = <X> dt + dW / sqrt(8k)."""
    if k <= 0:
        raise ValueError(f"measurement strength must be positive, got {k}")
    return x_expect * dt + dW / math.sqrt(8.0 * k)


def unconditional_evolve(rho0: DensityMatrix, hamiltonian, x: Operator | None,
                         k: float, dissipators=(), dt: float = 1e-3,
                         t_final: float = 1.0, snapshot_stride: int = 1):
    """Deterministic (ensemble-averaged) evolution by classical RK4.

    Solves d rho/dt = -i[H, rho] - k[X,[X, rho]] + Lindblad terms, i.e.
    the conditioned equation with the noise averaged out.  Returns
    (times, [DensityMatrix, ...]) sampled every ``snapshot_stride``
    steps, starting at t=0.
    """
    if rho0.dim > MAX_UNCONDITIONAL_DIM:
        raise DimensionTooLargeError(
            f"dim {rho0.dim} > {MAX_UNCONDITIONAL_DIM}; deterministic evolution "
            "is meant for small spaces"
        )
    x_arr = x.entries if x is not None else None
    n_steps = int(round(t_final / dt))
    rho = rho0.entries.copy()
    times = [0.0]
    states = [DensityMatrix(rho.copy())]

    def rhs(r, tt):
        return lindblad_rhs(r, _h_entries(hamiltonian, tt), x_arr, k, dissipators)

    for s in range(n_steps):
        t = s * dt
        k1 = rhs(rho, t)
        k2 = rhs(rho + 0.5 * dt * k1, t + 0.5 * dt)
        k3 = rhs(rho + 0.5 * dt * k2, t + 0.5 * dt)
        k4 = rhs(rho + dt * k3, t + dt)
        rho = rho + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        rho = 0.5 * (rho + rho.conj().T)
        if not np.all(np.isfinite(rho.view(np.float64))):
            raise NanDetectedError("unconditional_evolve diverged", step=s)
        if (s + 1) % snapshot_stride == 0:
            times.append((s + 1) * dt)
            states.append(DensityMatrix(rho / np.trace(rho).real))
    return np.array(times), states
