"""Dense operator and state algebra on truncated Fock and qubit spaces.

Everything is a plain dense complex matrix or vector wrapped in a thin
immutable container.  Dimensions in this project stay below a few
hundred, so no sparse machinery is used anywhere.

Tensor-product convention: the leftmost factor is the nanoresonator,
then the probe, i.e. a joint index ``I = i_res * d_probe + i_probe``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DimensionMismatchError,
    InvalidDimensionError,
    TruncationLeakageError,
)

HERMITIAN_TOL = 1e-12
STATE_NORM_TOL = 1e-10
TRACE_TOL = 1e-8


def _as_complex(a) -> np.ndarray:
    arr = np.asarray(a, dtype=np.complex128)
    arr = np.ascontiguousarray(arr)
    return arr


@dataclass(frozen=True)
class SpaceLayout:
    """Ordered subsystem dimensions; leftmost factor is the resonator."""

    factor_dims: tuple

    def __post_init__(self):
        dims = tuple(int(d) for d in self.factor_dims)
        if not dims or any(d < 2 for d in dims):
            raise InvalidDimensionError(f"factor dims must all be >= 2, got {dims}")
        object.__setattr__(self, "factor_dims", dims)

    @property
    def dim(self) -> int:
        return math.prod(self.factor_dims)


@dataclass(frozen=True)
class Operator:
    """Square complex matrix on a (possibly composite) Hilbert space."""

    entries: np.ndarray

    def __post_init__(self):
        arr = _as_complex(self.entries)
        if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
            raise DimensionMismatchError(f"operator must be square, got shape {arr.shape}")
        if not np.all(np.isfinite(arr.view(np.float64))):
            raise ValueError("operator entries must be finite")
        arr.setflags(write=False)
        object.__setattr__(self, "entries", arr)

    @property
    def dim(self) -> int:
        return self.entries.shape[0]

    @property
    def is_hermitian(self) -> bool:
        return hermiticity_error(self) <= HERMITIAN_TOL * max(
            1.0, float(np.abs(self.entries).max())
        )

    def __matmul__(self, other: "Operator") -> "Operator":
        if self.dim != other.dim:
            raise DimensionMismatchError(f"dims {self.dim} and {other.dim} differ")
        return Operator(self.entries @ other.entries)

    def __add__(self, other: "Operator") -> "Operator":
        if self.dim != other.dim:
            raise DimensionMismatchError(f"dims {self.dim} and {other.dim} differ")
        return Operator(self.entries + other.entries)

    def __sub__(self, other: "Operator") -> "Operator":
        if self.dim != other.dim:
            raise DimensionMismatchError(f"dims {self.dim} and {other.dim} differ")
        return Operator(self.entries - other.entries)

    def __mul__(self, scalar) -> "Operator":
        return Operator(self.entries * scalar)

    __rmul__ = __mul__


@dataclass(frozen=True)
class StateVector:
    """Pure state; kept normalized to within 1e-10 after construction."""

    amplitudes: np.ndarray
    _normalize: bool = field(default=True, repr=False)

    def __post_init__(self):
        vec = _as_complex(self.amplitudes).reshape(-1)
        if vec.size < 2:
            raise InvalidDimensionError("state needs dim >= 2")
        if not np.all(np.isfinite(vec.view(np.float64))):
            raise ValueError("state amplitudes must be finite")
        nrm = float(np.linalg.norm(vec))
        if nrm == 0.0:
            raise ValueError("zero state vector")
        if self._normalize and abs(nrm - 1.0) > 1e-15:
            vec = vec / nrm
        vec.setflags(write=False)
        object.__setattr__(self, "amplitudes", vec)

    @property
    def dim(self) -> int:
        return self.amplitudes.size

    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def to_density_matrix(self) -> "DensityMatrix":
        return DensityMatrix(np.outer(self.amplitudes, self.amplitudes.conj()))


@dataclass(frozen=True)
class DensityMatrix:
    """Mixed state: unit trace, Hermitian; positivity checked on demand."""

    entries: np.ndarray

    def __post_init__(self):
        arr = _as_complex(self.entries)
        if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
            raise DimensionMismatchError(f"density matrix must be square, got {arr.shape}")
        tr = complex(np.trace(arr))
        if abs(tr - 1.0) > TRACE_TOL:
            raise ValueError(f"trace {tr} deviates from 1 beyond {TRACE_TOL}")
        herm = float(np.abs(arr - arr.conj().T).max())
        if herm > 1e-10 * max(1.0, float(np.abs(arr).max())):
            raise ValueError(f"density matrix not Hermitian (error {herm:.3e})")
        arr.setflags(write=False)
        object.__setattr__(self, "entries", arr)

    @property
    def dim(self) -> int:
        return self.entries.shape[0]

    def smallest_eigenvalue(self) -> float:
        return float(np.linalg.eigvalsh(self.entries)[0])

    def check_positive(self, tol: float = -1e-6) -> bool:
        return self.smallest_eigenvalue() >= tol

    def purity(self) -> float:
        return float(np.einsum("ij,ji->", self.entries, self.entries).real)


# ---------------------------------------------------------------------------
# operator constructors


def destroy(dim: int) -> Operator:
    """Annihilation operator a with <n-1|a|n> = sqrt(n) on a dim-level space."""
    if dim < 2:
        raise InvalidDimensionError(f"destroy needs dim >= 2, got {dim}")
    a = np.zeros((dim, dim), dtype=np.complex128)
    ns = np.arange(1, dim)
    a[ns - 1, ns] = np.sqrt(ns)
    return Operator(a)


def create(dim: int) -> Operator:
    return dagger(destroy(dim))


def number(dim: int) -> Operator:
    """Number operator diag(0, 1, ..., dim-1)."""
    if dim < 2:
        raise InvalidDimensionError(f"number needs dim >= 2, got {dim}")
    return Operator(np.diag(np.arange(dim, dtype=np.complex128)))


def position(dim: int) -> Operator:
    """Dimensionless position a + a^dag (equals sigma_x at dim 2)."""
    a = destroy(dim).entries
    return Operator(a + a.conj().T)


def identity(dim: int) -> Operator:
    if dim < 2:
        raise InvalidDimensionError(f"identity needs dim >= 2, got {dim}")
    return Operator(np.eye(dim, dtype=np.complex128))


_PAULI = {
    "x": np.array([[0, 1], [1, 0]], dtype=np.complex128),
    "y": np.array([[0, -1j], [1j, 0]], dtype=np.complex128),
    "z": np.array([[1, 0], [0, -1]], dtype=np.complex128),
}


def pauli(axis: str) -> Operator:
    """Standard Pauli matrix sigma_x, sigma_y or sigma_z (dim fixed at 2)."""
    try:
        return Operator(_PAULI[axis])
    except KeyError:
        raise InvalidDimensionError(f"pauli axis must be x, y or z, got {axis!r}") from None


def kron(a: Operator, b: Operator) -> Operator:
    """Tensor product; left factor varies slowest (resonator-first order)."""
    return Operator(np.kron(a.entries, b.entries))


def dagger(a: Operator) -> Operator:
    return Operator(a.entries.conj().T)


def commutator(a: Operator, b: Operator) -> Operator:
    if a.dim != b.dim:
        raise DimensionMismatchError(f"dims {a.dim} and {b.dim} differ")
    return Operator(a.entries @ b.entries - b.entries @ a.entries)


def embed(a: Operator, layout: SpaceLayout, slot: int) -> Operator:
    """Place `a` on subsystem `slot`, identities on every other factor."""
    if not 0 <= slot < len(layout.factor_dims):
        raise DimensionMismatchError(f"slot {slot} outside layout {layout.factor_dims}")
    if a.dim != layout.factor_dims[slot]:
        raise DimensionMismatchError(
            f"operator dim {a.dim} does not match factor dim {layout.factor_dims[slot]}"
        )
    out = np.array([[1.0 + 0j]])
    for s, d in enumerate(layout.factor_dims):
        out = np.kron(out, a.entries if s == slot else np.eye(d))
    return Operator(out)


# ---------------------------------------------------------------------------
# states


def fock_state(dim: int, n: int) -> StateVector:
    """Number eigenstate |n> in a dim-level truncation."""
    if dim < 2:
        raise InvalidDimensionError(f"fock_state needs dim >= 2, got {dim}")
    if not 0 <= n < dim:
        raise DimensionMismatchError(f"level {n} outside truncation {dim}")
    vec = np.zeros(dim, dtype=np.complex128)
    vec[n] = 1.0
    return StateVector(vec)


def coherent_state(dim: int, alpha: complex) -> StateVector:
    """Truncated coherent state with amplitude alpha, renormalized.

    Amplitudes follow c_n = exp(-|alpha|^2/2) alpha^n / sqrt(n!).  The
    probability left above the truncation must be below 1e-6, otherwise
    the requested state simply does not fit in the space and a
    TruncationLeakageError is raised.
    """
    if dim < 2:
        raise InvalidDimensionError(f"coherent_state needs dim >= 2, got {dim}")
    alpha = complex(alpha)
    c = np.empty(dim, dtype=np.complex128)
    c[0] = math.exp(-abs(alpha) ** 2 / 2.0)
    for n in range(1, dim):
        c[n] = c[n - 1] * alpha / math.sqrt(n)
    kept = float(np.sum(np.abs(c) ** 2))
    leakage = max(0.0, 1.0 - kept)
    if leakage >= 1e-6:
        raise TruncationLeakageError(
            f"coherent alpha={alpha} leaks {leakage:.3e} above dim={dim}"
        )
    return StateVector(c / math.sqrt(kept), _normalize=False)


def tensor_state(*states: StateVector) -> StateVector:
    vec = states[0].amplitudes
    for s in states[1:]:
        vec = np.kron(vec, s.amplitudes)
    return StateVector(vec)


# ---------------------------------------------------------------------------
# expectations


def expectation(a: Operator, state):
    """<A> for a pure or mixed state.

    For Hermitian `a` the (roundoff-level) imaginary part is checked
    against 1e-10 and dropped, so the returned value is a float; for a
    general operator the complex value is returned.
    """
    if isinstance(state, StateVector):
        if a.dim != state.dim:
            raise DimensionMismatchError(f"dims {a.dim} and {state.dim} differ")
        val = complex(np.vdot(state.amplitudes, a.entries @ state.amplitudes))
    elif isinstance(state, DensityMatrix):
        if a.dim != state.dim:
            raise DimensionMismatchError(f"dims {a.dim} and {state.dim} differ")
        val = complex(np.einsum("ij,ji->", a.entries, state.entries))
    else:
        raise TypeError(f"unsupported state type {type(state)!r}")
    if a.is_hermitian:
        scale = max(1.0, abs(val))
        if abs(val.imag) > 1e-10 * scale:
            raise ValueError(f"imaginary part {val.imag:.3e} too large for Hermitian operator")
        return float(val.real)
    return val


def variance(a: Operator, state) -> float:
    """Var(A) = <A^2> - <A>^2 (requires Hermitian A)."""
    mean = expectation(a, state)
    second = expectation(a @ a, state)
    return float(second) - float(mean) ** 2


def hermiticity_error(a: Operator) -> float:
    return float(np.abs(a.entries - a.entries.conj().T).max())
