"""Circuit-QED device-parameter calculator.

Computes the effective measurement strength obtained after adiabatic
elimination of the readout resonator,

    k = g^4 |alpha|^2 / (Delta^2 gamma),

the mechanical damping rate Gamma = omega_R / Q, and a report of the
dimensionless ratios the reduction relies on:

* (E_J/hbar, omega_S) >> Delta and Delta >> g  (dispersive coupling),
* gamma >> g^2 / Delta                          (adiabatic elimination),
* k >> Gamma and lambda << omega_R              (useful measurement, RWA).

All frequencies are stored as angular rates (rad/s); convert any Hz
inputs with an explicit 2*pi at the boundary.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import NonpositiveInputError


@dataclass(frozen=True)
class DeviceParams:
    """Hardware numbers feeding the calculator.  Angular rates in rad/s,
    except the dimensionless photon number and quality factor."""

    g: float
    Delta: float
    gamma: float
    n_photons: float
    omega_S: float
    omega_R: float
    E_J_over_hbar: float
    Q: float
    T: float
    lambda_: float
    quoted_ratios: tuple = ()  # ((name, value), ...) datasheet values to cross-check

    def __post_init__(self):
        for name in ("g", "Delta", "gamma", "omega_S", "omega_R",
                     "E_J_over_hbar", "Q", "lambda_"):
            if getattr(self, name) <= 0:
                raise NonpositiveInputError(f"{name} must be positive, got {getattr(self, name)}")
        if self.n_photons < 0 or self.T < 0:
            raise NonpositiveInputError("n_photons and T must be nonnegative")
        object.__setattr__(self, "quoted_ratios", tuple(self.quoted_ratios))


@dataclass(frozen=True)
class ValidityReport:
    k: float
    Gamma: float
    ratios: dict
    flags: dict
    notes: tuple
    threshold: float


def measurement_strength(g: float, Delta: float, gamma: float, n_photons: float) -> float:
    """k = g^4 n_photons / (Delta^2 gamma); linear in the photon number,
    inverse-linear in the readout decay rate."""
    if g <= 0 or Delta <= 0 or gamma <= 0:
        raise NonpositiveInputError(
            f"g, Delta, gamma must be positive, got {(g, Delta, gamma)}")
    if n_photons < 0:
        raise NonpositiveInputError(f"n_photons must be nonnegative, got {n_photons}")
    return g ** 4 * n_photons / (Delta ** 2 * gamma)


def resonator_damping(omega_R: float, Q: float) -> float:
    """Gamma = omega_R / Q."""
    if omega_R <= 0 or Q <= 0:
        raise NonpositiveInputError(f"omega_R, Q must be positive, got {(omega_R, Q)}")
    return omega_R / Q


def validity_report(params: DeviceParams, threshold: float = 10.0) -> ValidityReport:
    """Compute k, Gamma and all validity ratios, flagging each against
    ``threshold`` (the numeric meaning given to every '>>').

    ``lambda/omega_R`` is the one small-ratio condition: it passes when
    the value is at most 1/threshold.  Quoted datasheet ratios that
    disagree with the recomputation by more than 5% are surfaced in
    ``notes`` rather than silently replaced.
    """
    k = measurement_strength(params.g, params.Delta, params.gamma, params.n_photons)
    Gamma = resonator_damping(params.omega_R, params.Q)
    ratios = {
        "Delta/g": params.Delta / params.g,
        "omega_S/Delta": params.omega_S / params.Delta,
        "E_J/(hbar*Delta)": params.E_J_over_hbar / params.Delta,
        "gamma*Delta/g^2": params.gamma * params.Delta / params.g ** 2,
        "k/Gamma": k / Gamma,
        "lambda/omega_R": params.lambda_ / params.omega_R,
    }
    flags = {}
    for name, value in ratios.items():
        if not math.isfinite(value) or value <= 0:
            raise NonpositiveInputError(f"ratio {name} is not finite positive: {value}")
        if name == "lambda/omega_R":
            flags[name] = "pass" if value <= 1.0 / threshold else "warn"
        else:
            flags[name] = "pass" if value >= threshold else "warn"
    notes = []
    for name, quoted in params.quoted_ratios:
        computed = ratios.get(name)
        if computed is None:
            notes.append(f"quoted ratio {name} = {quoted:g} has no computed counterpart")
        elif abs(computed - quoted) > 0.05 * abs(quoted):
            notes.append(
                f"{name}: computed {computed:g} from the given parameters, "
                f"datasheet quotes {quoted:g}; reporting both")
    return ValidityReport(k=k, Gamma=Gamma, ratios=ratios, flags=flags,
                          notes=tuple(notes), threshold=threshold)


def reference_device_params() -> DeviceParams:
    """Readily-obtainable circuit-QED design point used throughout the
    presets: 100 MHz mechanical mode, 10 GHz readout, g = Delta/40."""
    omega_S = 2.0 * math.pi * 1e10
    Delta = 4.0 * math.pi * 1e8
    g = Delta / 40.0
    k = measurement_strength(g, Delta, math.pi * 1e7, 2e3)
    return DeviceParams(
        g=g,
        Delta=Delta,
        gamma=math.pi * 1e7,
        n_photons=2e3,
        omega_S=omega_S,
        omega_R=2.0 * math.pi * 1e8,
        E_J_over_hbar=omega_S + Delta,
        Q=1e5,
        T=0.006,
        lambda_=0.75 * k,
        quoted_ratios=(("omega_S/Delta", 50.0), ("gamma*Delta/g^2", 20.0)),
    )


def report_as_dict(report: ValidityReport) -> dict:
    return {
        "k": report.k,
        "Gamma": report.Gamma,
        "ratios": dict(report.ratios),
        "flags": dict(report.flags),
        "notes": list(report.notes),
        "threshold": report.threshold,
    }


def report_as_table(report: ValidityReport) -> str:
    lines = [
        f"measurement strength k : {report.k:.6g} 1/s",
        f"damping rate Gamma     : {report.Gamma:.6g} 1/s",
        "",
        f"{'ratio':<20} {'value':>12}   flag (threshold {report.threshold:g})",
    ]
    for name, value in report.ratios.items():
        lines.append(f"{name:<20} {value:>12.6g}   {report.flags[name]}")
    for note in report.notes:
        lines.append(f"note: {note}")
    return "\n".join(lines)
