"""
Dense finite-dimensional state algebra: kets, density matrices, tensor
products, projective postselection and partial traces.

Subsystem order is significant everywhere: the path qubit comes first
(basis A=0, B=1), followed by the pointers in declared order.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import reduce
from typing import Iterable, Sequence

import numpy as np

from . import tol
from .errors import PostselectionImpossible

__all__ = [
    "Ket", "DensityMatrix", "basis", "ket", "tensor", "tensor_all",
    "normalize", "project", "partial_trace", "reduced_density_matrix",
    "apply_local", "expect_local", "PATH_A", "PATH_B", "POSTSELECT_C",
]


@dataclass(frozen=True)
class Ket:
    """State vector over a product of subsystems.

    Parameters
    ----------
    dims : tuple of int
        Subsystem dimensions. An empty tuple denotes a scalar.
    amplitudes : ndarray
        Complex vector of length ``prod(dims)`` in row-major order.
    """
    dims: tuple
    amplitudes: np.ndarray

    def __post_init__(self):
        dims = tuple(int(d) for d in self.dims)
        amps = np.asarray(self.amplitudes, dtype=complex).reshape(-1)
        if amps.size != int(np.prod(dims, dtype=np.int64)):
            raise ValueError(
                f"{amps.size} amplitudes do not match dims {dims}")
        object.__setattr__(self, "dims", dims)
        object.__setattr__(self, "amplitudes", amps)

    @property
    def norm2(self) -> float:
        return float(np.vdot(self.amplitudes, self.amplitudes).real)

    @property
    def norm(self) -> float:
        return float(np.sqrt(self.norm2))

    def tensor(self) -> np.ndarray:
        """Amplitudes reshaped to one axis per subsystem."""
        return self.amplitudes.reshape(self.dims)

    def inner(self, other: "Ket") -> complex:
        """``<self|other>``."""
        if self.dims != other.dims:
            raise ValueError(f"dims differ: {self.dims} vs {other.dims}")
        return complex(np.vdot(self.amplitudes, other.amplitudes))

    def dm(self) -> "DensityMatrix":
        a = self.amplitudes
        return DensityMatrix(self.dims, np.outer(a, a.conj()))

    def __add__(self, other: "Ket") -> "Ket":
        if self.dims != other.dims:
            raise ValueError(f"dims differ: {self.dims} vs {other.dims}")
        return Ket(self.dims, self.amplitudes + other.amplitudes)

    def __sub__(self, other: "Ket") -> "Ket":
        return self + (-1.0) * other

    def __mul__(self, c) -> "Ket":
        return Ket(self.dims, complex(c) * self.amplitudes)

    __rmul__ = __mul__


@dataclass(frozen=True)
class DensityMatrix:
    """Density operator over a product of subsystems."""
    dims: tuple
    entries: np.ndarray

    def __post_init__(self):
        dims = tuple(int(d) for d in self.dims)
        n = int(np.prod(dims, dtype=np.int64))
        m = np.asarray(self.entries, dtype=complex)
        if m.shape != (n, n):
            raise ValueError(f"matrix shape {m.shape} does not match dims {dims}")
        object.__setattr__(self, "dims", dims)
        object.__setattr__(self, "entries", m)

    @property
    def trace(self) -> complex:
        return complex(np.trace(self.entries))

    def is_valid(self, atol: float = tol.ALGEBRAIC) -> bool:
        """Hermitian, unit trace and positive semidefinite."""
        m = self.entries
        if not np.allclose(m, m.conj().T, atol=atol, rtol=0):
            return False
        if abs(self.trace - 1.0) > atol:
            return False
        return bool(np.linalg.eigvalsh(m).min() >= tol.PSD_FLOOR)


def basis(dim: int, index: int) -> Ket:
    v = np.zeros(dim, dtype=complex)
    v[index] = 1.0
    return Ket((dim,), v)


def ket(values: Sequence[complex], dims: Sequence[int] | None = None) -> Ket:
    values = np.asarray(values, dtype=complex)
    return Ket(tuple(dims) if dims is not None else (values.size,), values)


PATH_A = basis(2, 0)
PATH_B = basis(2, 1)
#: output port C of the balanced final beam splitter, (|A> + |B>)/sqrt(2)
POSTSELECT_C = Ket((2,), np.array([1.0, 1.0]) / np.sqrt(2.0))


def tensor(a: Ket, b: Ket) -> Ket:
    """Kronecker product; dims concatenate."""
    return Ket(a.dims + b.dims, np.kron(a.amplitudes, b.amplitudes))


def tensor_all(kets: Iterable[Ket]) -> Ket:
    return reduce(tensor, kets)


def normalize(state: Ket) -> Ket:
    n = state.norm
    if n == 0.0:
        raise ValueError("cannot normalize the zero vector")
    return Ket(state.dims, state.amplitudes / n)


def project(state: Ket, subsystem: int, onto: Ket) -> tuple[Ket, float]:
    """Postselect one subsystem onto ``onto``.

    Returns the *unnormalized* conditional state of the remaining subsystems
    together with its squared norm, which is the postselection probability
    when ``state`` is normalized.

    Raises
    ------
    PostselectionImpossible
        If the probability is below ``tol.POSTSELECTION_MIN``.
    """
    if onto.dims != (state.dims[subsystem],):
        raise ValueError(
            f"projector dim {onto.dims} does not match subsystem "
            f"{subsystem} of {state.dims}")
    t = np.moveaxis(state.tensor(), subsystem, 0)
    rest = np.tensordot(onto.amplitudes.conj(), t, axes=(0, 0))
    dims = state.dims[:subsystem] + state.dims[subsystem + 1:]
    out = Ket(dims, rest.reshape(-1))
    p = out.norm2
    if p < tol.POSTSELECTION_MIN:
        raise PostselectionImpossible(
            f"postselection probability {p:.3e} vanishes")
    return out, p


def _normalize_keep(keep, n) -> list[int]:
    if isinstance(keep, (int, np.integer)):
        keep = [keep]
    keep = sorted(set(int(k) for k in keep))
    if any(k < 0 or k >= n for k in keep):
        raise IndexError(f"subsystem index out of range in {keep}")
    return keep


def partial_trace(rho: DensityMatrix, keep) -> DensityMatrix:
    """Trace out every subsystem not listed in ``keep``."""
    dims = rho.dims
    n = len(dims)
    keep = _normalize_keep(keep, n)
    t = rho.entries.reshape(dims + dims)
    # trace from the highest index down so remaining axis numbers stay valid
    for k in reversed(range(n)):
        if k in keep:
            continue
        m = t.ndim // 2
        t = np.trace(t, axis1=k, axis2=k + m)
    kd = tuple(dims[k] for k in keep)
    size = int(np.prod(kd, dtype=np.int64))
    return DensityMatrix(kd, t.reshape(size, size))


def reduced_density_matrix(state: Ket, keep) -> DensityMatrix:
    """Partial trace of ``|state><state|`` without forming the full matrix."""
    n = len(state.dims)
    keep = _normalize_keep(keep, n)
    drop = [k for k in range(n) if k not in keep]
    t = np.transpose(state.tensor(), keep + drop)
    kd = tuple(state.dims[k] for k in keep)
    size = int(np.prod(kd, dtype=np.int64))
    m = t.reshape(size, -1)
    return DensityMatrix(kd, m @ m.conj().T)


def apply_local(state: Ket, subsystem: int, op) -> Ket:
    """Apply ``op`` to one subsystem.

    ``op`` is either a square matrix or a callable acting on a 1-D
    array of subsystem amplitudes along axis 0 of its input.
    """
    t = np.moveaxis(state.tensor(), subsystem, 0)
    if callable(op):
        out = op(t)
    else:
        out = np.tensordot(np.asarray(op, dtype=complex), t, axes=(1, 0))
    out = np.moveaxis(out, 0, subsystem)
    return Ket(state.dims, out.reshape(-1))


def expect_local(state: Ket, subsystem: int, op) -> complex:
    """``<state| op_k |state> / <state|state>``."""
    return state.inner(apply_local(state, subsystem, op)) / state.norm2
