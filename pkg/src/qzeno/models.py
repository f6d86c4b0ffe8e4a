"""Hamiltonians, measured observables and dissipator lists for the three
measurement scenarios.

Scenarios
---------
* ``rwa_oscillators`` -- two oscillators exchanging quanta,
  H = lambda (a b^dag + b a^dag), with a continuous measurement of the
  probe number b^dag b.  Interaction picture, so no free terms.
* ``tls_probe`` -- oscillator linearly coupled to a two-level probe,
  H = omega_R a^dag a + (omega_R/2) sigma_z + lambda sigma_x x_R, with
  sigma_z measured.  Lab frame, no rotating-wave approximation.
* ``cpb_reduced`` -- oscillator + charge qubit after the readout mode has
  been eliminated into an effective sigma_x measurement of strength k.
  Available in the lab frame (time-dependent drive) or in the
  rotating-wave frame (static exchange Hamiltonian).

Basis conventions
-----------------
The qubit factor of ``cpb_reduced`` is represented in its *energy*
eigenbasis (the sigma_x eigenbasis at the charge degeneracy point):
index 0 is the upper (+1) eigenstate, index 1 the ground (-1)
eigenstate.  In that representation the measured observable sigma_x is
diagonal and the charge operator sigma_z acts as the off-diagonal flip.
The ``tls_probe`` qubit uses the ordinary sigma_z basis.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from . import hilbert as hs
from .errors import (
    FrameUnsupportedError,
    InvalidDimensionError,
    NegativeRateError,
)
from .hilbert import Operator, SpaceLayout, StateVector

# exact SI values
HBAR = 1.054571817e-34  # J s
K_B = 1.380649e-23  # J / K


class Scenario(str, enum.Enum):
    RWA_OSCILLATORS = "rwa_oscillators"
    TLS_PROBE = "tls_probe"
    CPB_REDUCED = "cpb_reduced"


class Frame(str, enum.Enum):
    LAB = "lab"
    RWA = "rwa"


class Modulation(str, enum.Enum):
    CONSTANT = "constant"
    COSINE = "cosine"


@dataclass(frozen=True)
class HamiltonianTerm:
    """One additive piece of H(t) = sum_i coeff_i(t) * op_i.

    ``coefficient`` is the static prefactor; for ``Modulation.COSINE``
    the instantaneous coefficient is ``coefficient * cos(frequency t)``.
    Terms flagged ``is_coupling`` have their coefficient replaced by the
    integrator's piecewise-constant coupling schedule when one is set.
    """

    op: Operator
    coefficient: float = 1.0
    modulation: Modulation = Modulation.CONSTANT
    frequency: float = 0.0
    is_coupling: bool = False

    def __post_init__(self):
        err = hs.hermiticity_error(self.op)
        scale = max(1.0, float(np.abs(self.op.entries).max()))
        if err > 1e-12 * scale:
            raise ValueError(f"Hamiltonian term not Hermitian (error {err:.3e})")

    def coefficient_at(self, t: float, coupling_value=None) -> float:
        c = self.coefficient
        if self.is_coupling and coupling_value is not None:
            c = coupling_value
        if self.modulation is Modulation.COSINE:
            c = c * math.cos(self.frequency * t)
        return c


@dataclass(frozen=True)
class Dissipator:
    """Lindblad channel with the convention
    D[c] rho = 2 c rho c^dag - c^dag c rho - rho c^dag c,
    applied as rate * D[op] rho."""

    op: Operator
    rate: float

    def __post_init__(self):
        if self.rate < 0:
            raise NegativeRateError(f"dissipator rate {self.rate} < 0")


@dataclass(frozen=True)
class ModelSpec:
    """All physical parameters of one measurement scenario.

    Fields irrelevant to the chosen scenario are stored but ignored.
    Rates are angular (1/s in SI scenarios; 1/[k] in the unit system of
    the coupled-oscillator scenario).  ``delta=None`` means "derive from
    E_J_over_hbar - omega_R" for the cpb_reduced lab frame.
    """

    scenario: Scenario
    dims: SpaceLayout
    lambda_: float = 0.0
    k: float = 1.0
    omega_R: float = 0.0
    E_J_over_hbar: float = 0.0
    delta: float | None = None
    Gamma: float = 0.0
    T: float = 0.0
    gamma_CPB: float = 0.0
    frame: Frame = Frame.RWA

    def __post_init__(self):
        object.__setattr__(self, "scenario", Scenario(self.scenario))
        object.__setattr__(self, "frame", Frame(self.frame))
        for name in ("lambda_", "k", "omega_R", "E_J_over_hbar", "Gamma", "T", "gamma_CPB"):
            if getattr(self, name) < 0:
                raise NegativeRateError(f"{name} = {getattr(self, name)} < 0")

    @property
    def resolved_delta(self) -> float:
        if self.delta is not None:
            return self.delta
        return self.E_J_over_hbar - self.omega_R


# ---------------------------------------------------------------------------
# scenario builders

# qubit operators in the energy eigenbasis (index 0 = upper eigenstate)
_ENERGY_DIAG = np.diag([1.0, -1.0]).astype(np.complex128)  # sigma_x, diagonalized
_CHARGE_FLIP = np.array([[0, 1], [1, 0]], dtype=np.complex128)  # sigma_z in that basis
_LOWER_ENERGY = np.array([[0, 0], [1, 0]], dtype=np.complex128)  # |g><e|
_RAISE_ENERGY = np.array([[0, 1], [0, 0]], dtype=np.complex128)  # |e><g|


def build_rwa_oscillators(lambda_: float, dims) -> tuple[list[HamiltonianTerm], Operator]:
    """Quanta-exchange model H = lambda (a b^dag + b a^dag).

    The measurement acts on the probe number b^dag b.  Free oscillator
    terms commute with both H and the measured observable, so they are
    dropped (interaction picture).  Returns the term list and the
    measured operator on the joint space.
    """
    layout = dims if isinstance(dims, SpaceLayout) else SpaceLayout(tuple(dims))
    if len(layout.factor_dims) != 2:
        raise InvalidDimensionError("rwa_oscillators needs exactly two factors")
    d_r, d_p = layout.factor_dims
    a = hs.destroy(d_r).entries
    b = hs.destroy(d_p).entries
    exchange = np.kron(a, b.conj().T) + np.kron(a.conj().T, b)
    terms = [HamiltonianTerm(Operator(exchange), coefficient=lambda_, is_coupling=True)]
    measured = hs.embed(hs.number(d_p), layout, 1)
    return terms, measured


def build_tls_probe(lambda_: float, omega_R: float, d_R: int) -> tuple[list[HamiltonianTerm], Operator]:
    """Oscillator + two-level probe, lab frame, no approximations.

    H = omega_R a^dag a + (omega_R/2) sigma_z + lambda sigma_x x_R on a
    d_R x 2 space; the probe energy measurement is a sigma_z measurement.
    """
    if d_R < 2:
        raise InvalidDimensionError(f"d_R must be >= 2, got {d_R}")
    layout = SpaceLayout((d_R, 2))
    n_r = hs.embed(hs.number(d_R), layout, 0)
    sz = hs.embed(hs.pauli("z"), layout, 1)
    coupling = Operator(np.kron(hs.position(d_R).entries, hs.pauli("x").entries))
    terms = [
        HamiltonianTerm(n_r, coefficient=omega_R),
        HamiltonianTerm(sz, coefficient=omega_R / 2.0),
        HamiltonianTerm(coupling, coefficient=lambda_, is_coupling=True),
    ]
    return terms, sz


def build_cpb_reduced(spec: ModelSpec) -> tuple[list[HamiltonianTerm], Operator]:
    """Resonator-charge-qubit model with the readout mode eliminated.

    Lab frame:
        H(t) = omega_R a^dag a + lambda cos(delta t) sigma_z x_R
               + (E_J/hbar / 2) sigma_x,
    with delta = E_J/hbar - omega_R bringing the exchange on resonance.
    E_J/hbar is the qubit transition frequency, so the free term carries
    it with a factor 1/2.

    Rwa frame: static H = (lambda/2)(a tau_+ + a^dag tau_-), where
    tau_+/- raise/lower in the qubit energy basis.  Counter-rotating
    terms are dropped; validity requires lambda << omega_R.

    The measured operator is sigma_x in both frames.
    """
    if spec.scenario is not Scenario.CPB_REDUCED:
        raise ValueError(f"expected cpb_reduced spec, got {spec.scenario}")
    layout = spec.dims
    if len(layout.factor_dims) != 2 or layout.factor_dims[1] != 2:
        raise InvalidDimensionError("cpb_reduced needs layout (d_R, 2)")
    d_r = layout.factor_dims[0]
    measured = hs.embed(Operator(_ENERGY_DIAG), layout, 1)

    if spec.frame is Frame.RWA:
        a = hs.destroy(d_r).entries
        # the 1/2 lives inside the op so a coupling schedule supplies lambda itself
        exchange = 0.5 * (np.kron(a, _RAISE_ENERGY) + np.kron(a.conj().T, _LOWER_ENERGY))
        terms = [
            HamiltonianTerm(Operator(exchange), coefficient=spec.lambda_, is_coupling=True)
        ]
        return terms, measured
    if spec.frame is Frame.LAB:
        delta = spec.resolved_delta
        n_r = hs.embed(hs.number(d_r), layout, 0)
        coupling = Operator(np.kron(hs.position(d_r).entries, _CHARGE_FLIP))
        free_qubit = hs.embed(Operator(_ENERGY_DIAG), layout, 1)
        terms = [
            HamiltonianTerm(n_r, coefficient=spec.omega_R),
            HamiltonianTerm(
                coupling,
                coefficient=spec.lambda_,
                modulation=Modulation.COSINE,
                frequency=delta,
                is_coupling=True,
            ),
            HamiltonianTerm(free_qubit, coefficient=spec.E_J_over_hbar / 2.0),
        ]
        return terms, measured
    raise FrameUnsupportedError(f"frame {spec.frame} unsupported for cpb_reduced")


# ---------------------------------------------------------------------------
# dissipators


def xi_factor(T: float, omega_R: float) -> float:
    """Thermal weighting coth(hbar omega_R / (2 k_B T)); exactly 1 at T=0."""
    if T < 0:
        raise NegativeRateError(f"temperature {T} < 0")
    if omega_R <= 0:
        raise InvalidDimensionError(f"omega_R must be positive, got {omega_R}")
    if T == 0.0:
        return 1.0
    x = HBAR * omega_R / (2.0 * K_B * T)
    return 1.0 / math.tanh(x)


def thermal_dissipators(Gamma: float, T: float, omega_R: float, layout: SpaceLayout) -> list[Dissipator]:
    """Two-channel thermal damping of the resonator,
    rho_dot = Gamma (xi+1) D[a/2] rho + Gamma xi D[a^dag/2] rho.

    The upward channel keeps its nonzero rate Gamma*xi even at T=0
    (xi -> 1); that is the printed form of the Brownian-motion
    approximation and is implemented literally.
    """
    if Gamma < 0:
        raise NegativeRateError(f"Gamma {Gamma} < 0")
    xi = xi_factor(T, omega_R) if Gamma > 0 else 1.0
    d_r = layout.factor_dims[0]
    down = hs.embed(0.5 * hs.destroy(d_r), layout, 0)
    up = hs.embed(0.5 * hs.create(d_r), layout, 0)
    return [Dissipator(down, Gamma * (xi + 1.0)), Dissipator(up, Gamma * xi)]


def cpb_dissipators(gamma_CPB: float, layout: SpaceLayout) -> list[Dissipator]:
    """Qubit damping and dephasing, both at gamma_CPB.

    Damping lowers in the energy eigenbasis (op tau_-, rate gamma/4,
    i.e. the D[c/2] scaling used by the thermal channels); dephasing is
    the sigma_x/2 channel at rate gamma.  The ground state is the -1
    eigenstate of sigma_x, which tau_- annihilates.
    """
    if gamma_CPB < 0:
        raise NegativeRateError(f"gamma_CPB {gamma_CPB} < 0")
    lower = hs.embed(Operator(_LOWER_ENERGY), layout, 1)
    dephase = hs.embed(Operator(0.5 * _ENERGY_DIAG), layout, 1)
    return [Dissipator(lower, gamma_CPB / 4.0), Dissipator(dephase, gamma_CPB)]


# ---------------------------------------------------------------------------
# assembled model


@dataclass(frozen=True)
class BuiltModel:
    """Everything the integrators need for one scenario."""

    spec: ModelSpec
    layout: SpaceLayout
    h_terms: tuple
    measured_op: Operator
    dissipators: tuple
    observables: dict = field(default_factory=dict)
    probe_ground_index: int | None = None

    @property
    def dim(self) -> int:
        return self.layout.dim

    def observable(self, name: str) -> Operator:
        return self.observables[name]


def build_model(spec: ModelSpec) -> BuiltModel:
    """Assemble Hamiltonian terms, measured op, dissipators and the named
    observable registry for a ModelSpec.

    Dissipators with zero rate are dropped, so dissipation-free models
    stay eligible for the pure-state integrator.
    """
    layout = spec.dims
    obs: dict[str, Operator] = {}
    probe_ground = None
    if spec.scenario is Scenario.RWA_OSCILLATORS:
        terms, measured = build_rwa_oscillators(spec.lambda_, layout)
        d_r, d_p = layout.factor_dims
        obs["N_R"] = hs.embed(hs.number(d_r), layout, 0)
        obs["N_P"] = hs.embed(hs.number(d_p), layout, 1)
        dissipators: list[Dissipator] = []
    elif spec.scenario is Scenario.TLS_PROBE:
        terms, measured = build_tls_probe(spec.lambda_, spec.omega_R, layout.factor_dims[0])
        obs["N_R"] = hs.embed(hs.number(layout.factor_dims[0]), layout, 0)
        obs["sigma_z"] = measured
        probe_ground = 1  # lowest eigenstate of +(omega_R/2) sigma_z
        dissipators = []
    elif spec.scenario is Scenario.CPB_REDUCED:
        terms, measured = build_cpb_reduced(spec)
        obs["N_R"] = hs.embed(hs.number(layout.factor_dims[0]), layout, 0)
        obs["sigma_x"] = measured
        probe_ground = 1  # -1 eigenstate of sigma_x
        dissipators = []
        if spec.Gamma > 0:
            dissipators += thermal_dissipators(spec.Gamma, spec.T, spec.omega_R, layout)
        if spec.gamma_CPB > 0:
            dissipators += cpb_dissipators(spec.gamma_CPB, layout)
    else:  # pragma: no cover
        raise ValueError(f"unknown scenario {spec.scenario}")
    dissipators = [d for d in dissipators if d.rate > 0]
    return BuiltModel(
        spec=spec,
        layout=layout,
        h_terms=tuple(terms),
        measured_op=measured,
        dissipators=tuple(dissipators),
        observables=obs,
        probe_ground_index=probe_ground,
    )


def hamiltonian_at(terms, t: float, coupling_value=None) -> Operator | None:
    """Dense H(t); None when the term list is empty."""
    if not terms:
        return None
    acc = None
    for term in terms:
        piece = term.coefficient_at(t, coupling_value) * term.op.entries
        acc = piece if acc is None else acc + piece
    return Operator(acc)


def schedule_value(schedule, t: float, default: float) -> float:
    """Piecewise-constant coupling lookup; `schedule` is a sequence of
    (t_start, value) pairs sorted by t_start, first entry at t=0."""
    if not schedule:
        return default
    val = schedule[0][1]
    for t_start, v in schedule:
        if t_start <= t:
            val = v
        else:
            break
    return val


def probe_ground_state(model: BuiltModel) -> StateVector:
    if model.probe_ground_index is None:
        raise ValueError(f"scenario {model.spec.scenario} has no two-level probe")
    return hs.fock_state(model.layout.factor_dims[1], model.probe_ground_index)
