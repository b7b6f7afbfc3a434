"""
Pointer (external system) models and the orthogonal-component decomposition

    chi' = eta * (chi + epsilon * chi_perp),   eta > 0, epsilon >= 0,

which quantifies the trace a particle leaves in a single channel.

Continuous pointers use hbar = 1 and the wavefunction convention

    chi(q) = (2 pi dQ^2)^(-1/4) exp(-(q - q0)^2 / (4 dQ^2) + i p0 q),

so ``width`` is the standard deviation of |chi|^2 and dP = 1 / (2 dQ).
"""
from __future__ import annotations

import cmath
from dataclasses import dataclass, replace

import numpy as np

from . import tol
from .errors import DecompositionError, GridError
from .qstate import Ket, basis

__all__ = [
    "GaussianPointer", "GridPointer", "TwoLevelPointer", "TraceDecomposition",
    "apply_shift", "gaussian_overlap", "gaussian_matrix_element",
    "orthogonal_decompose", "expectation", "grid_from_gaussian",
    "sample_gaussian", "common_grid", "gaussian_span", "SIGMA_X", "SIGMA_Y",
    "SIGMA_Z", "canonical_observable",
]

SIGMA_X = np.array([[0, 1], [1, 0]], dtype=complex)
SIGMA_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
SIGMA_Z = np.array([[1, 0], [0, -1]], dtype=complex)

_ALIASES = {
    "q": "Q", "position": "Q",
    "p": "P", "momentum": "P",
    "sigma_x": "sigma_x", "sx": "sigma_x",
    "sigma_y": "sigma_y", "sy": "sigma_y",
    "sigma_z": "sigma_z", "sz": "sigma_z",
    "theta": "Theta", "upsilon": "Upsilon",
}


def canonical_observable(name: str) -> str:
    try:
        return _ALIASES[name.lower()]
    except (KeyError, AttributeError):
        raise ValueError(f"unknown observable {name!r}") from None


@dataclass(frozen=True)
class GaussianPointer:
    """Minimum-uncertainty Gaussian wave packet."""
    mean_q: float = 0.0
    mean_p: float = 0.0
    width: float = 1.0

    def __post_init__(self):
        if not self.width > 0:
            raise ValueError(f"width must be positive, got {self.width}")

    @property
    def width_p(self) -> float:
        return 0.5 / self.width

    def wavefunction(self, q) -> np.ndarray:
        q = np.asarray(q, dtype=float)
        s = self.width
        norm = (2.0 * np.pi * s * s) ** -0.25
        return norm * np.exp(-(q - self.mean_q) ** 2 / (4 * s * s)
                             + 1j * self.mean_p * q)


def apply_shift(p: GaussianPointer, dq: float = 0.0, dp: float = 0.0) -> GaussianPointer:
    return replace(p, mean_q=p.mean_q + dq, mean_p=p.mean_p + dp)


def _check_widths(a: GaussianPointer, b: GaussianPointer):
    if not np.isclose(a.width, b.width, rtol=1e-12, atol=0):
        raise ValueError(
            f"overlap of Gaussians with different widths ({a.width}, {b.width}) "
            "is not supported")


def gaussian_overlap(chi: GaussianPointer, chi_prime: GaussianPointer) -> complex:
    """Closed-form ``<chi|chi'>`` for equal-width Gaussian pointers."""
    _check_widths(chi, chi_prime)
    s2 = chi.width ** 2
    dq = chi_prime.mean_q - chi.mean_q
    dp = chi_prime.mean_p - chi.mean_p
    qbar = 0.5 * (chi.mean_q + chi_prime.mean_q)
    mag = np.exp(-(dq * dq + 4 * s2 * s2 * dp * dp) / (8 * s2))
    return mag * cmath.exp(1j * dp * qbar)


def gaussian_matrix_element(a: GaussianPointer, b: GaussianPointer, observable: str) -> complex:
    """``<a|O|b>`` for O in {identity, Q, P}, equal widths."""
    obs = observable if observable == "identity" else canonical_observable(observable)
    o = gaussian_overlap(a, b)
    if obs == "identity":
        return o
    s2 = a.width ** 2
    dq = b.mean_q - a.mean_q
    dp = b.mean_p - a.mean_p
    if obs == "Q":
        return o * (0.5 * (a.mean_q + b.mean_q) + 1j * s2 * dp)
    if obs == "P":
        return o * (0.5 * (a.mean_p + b.mean_p) - 1j * dq / (4 * s2))
    raise ValueError(f"observable {observable!r} undefined for a Gaussian pointer")


@dataclass(frozen=True)
class GridPointer:
    """Wavefunction sampled on a uniform periodic grid.

    Amplitudes are normalized so that ``sum(|a|^2) * dq == 1``.
    """
    q: np.ndarray
    amplitudes: np.ndarray

    def __post_init__(self):
        q = np.asarray(self.q, dtype=float)
        a = np.asarray(self.amplitudes, dtype=complex)
        if q.shape != a.shape or q.ndim != 1:
            raise ValueError("grid and amplitudes must be 1-D of equal length")
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "amplitudes", a)

    @property
    def n(self) -> int:
        return self.q.size

    @property
    def dq(self) -> float:
        return float(self.q[1] - self.q[0])

    @property
    def norm2(self) -> float:
        return float(np.sum(np.abs(self.amplitudes) ** 2) * self.dq)

    def momenta(self, shifted: bool = False) -> np.ndarray:
        k = 2 * np.pi * np.fft.fftfreq(self.n, self.dq)
        return np.fft.fftshift(k) if shifted else k

    def momentum_amplitudes(self) -> tuple[np.ndarray, np.ndarray]:
        """Momentum grid and amplitudes in fftshift ordering, unit norm."""
        phi = np.fft.fftshift(np.fft.fft(self.amplitudes))
        k = self.momenta(shifted=True)
        dk = 2 * np.pi / (self.n * self.dq)
        phi = phi / np.sqrt(np.sum(np.abs(phi) ** 2) * dk)
        return k, phi

    def as_ket(self) -> Ket:
        """Unit-norm vector with the quadrature weight folded in."""
        return Ket((self.n,), self.amplitudes * np.sqrt(self.dq))

    @classmethod
    def from_ket(cls, q, state: Ket) -> "GridPointer":
        q = np.asarray(q, dtype=float)
        return cls(q, state.amplitudes / np.sqrt(q[1] - q[0]))

    def inner(self, other: "GridPointer") -> complex:
        if self.n != other.n or not np.allclose(self.q, other.q, rtol=0, atol=1e-12 * abs(self.dq)):
            raise ValueError("grid pointers live on different grids")
        return complex(np.vdot(self.amplitudes, other.amplitudes) * self.dq)

    def boundary_amplitude(self) -> float:
        a = np.abs(self.amplitudes) * np.sqrt(self.dq)
        return float(max(a[0], a[-1]))

    # operators acting on axis 0, usable with qstate.apply_local
    def q_operator(self):
        q = self.q

        def op(t):
            return q.reshape((-1,) + (1,) * (t.ndim - 1)) * t
        return op

    def p_operator(self):
        k = self.momenta()

        def op(t):
            kk = k.reshape((-1,) + (1,) * (t.ndim - 1))
            return np.fft.ifft(kk * np.fft.fft(t, axis=0), axis=0)
        return op


def _is_power_of_two(n: int) -> bool:
    return n > 0 and (n & (n - 1)) == 0


def make_grid(center: float, extent: float, n: int) -> np.ndarray:
    """``n`` points covering ``[center - extent, center + extent)``."""
    if not _is_power_of_two(n):
        raise GridError(f"grid size must be a power of two, got {n}")
    if not extent > 0:
        raise GridError("extent must be positive")
    return center - extent + (2.0 * extent / n) * np.arange(n)


def sample_gaussian(p: GaussianPointer, q) -> GridPointer:
    """Sample ``p`` on grid ``q``, renormalize by quadrature and guard wrap-around."""
    q = np.asarray(q, dtype=float)
    a = p.wavefunction(q)
    dq = q[1] - q[0]
    a = a / np.sqrt(np.sum(np.abs(a) ** 2) * dq)
    g = GridPointer(q, a)
    if g.boundary_amplitude() >= 1e-12:
        raise GridError(
            f"Gaussian at q0={p.mean_q}, width={p.width} reaches the grid "
            f"boundary (amplitude {g.boundary_amplitude():.2e}); enlarge the extent")
    nyquist = np.pi / dq
    if abs(p.mean_p) + 8 * p.width_p >= nyquist:
        raise GridError(
            f"momentum {p.mean_p} +/- 8 dP exceeds the grid Nyquist limit {nyquist:.3g}")
    return g


def grid_from_gaussian(p: GaussianPointer, n: int = 4096, extent: float | None = None,
                       center: float | None = None) -> GridPointer:
    """Brute-force grid representation of a Gaussian pointer.

    ``extent`` is the half-width of the grid; by default 12 widths around
    ``center`` (which defaults to the packet mean).
    """
    center = p.mean_q if center is None else center
    extent = 12.0 * p.width if extent is None else extent
    if extent < 8 * p.width + abs(p.mean_q - center):
        raise GridError(
            f"extent {extent} smaller than 8 widths + offset "
            f"({8 * p.width + abs(p.mean_q - center)})")
    return sample_gaussian(p, make_grid(center, extent, n))


def common_grid(pointers, n: int = 4096, margin: float = 12.0) -> np.ndarray:
    """Grid wide enough for every pointer in ``pointers`` (equal widths)."""
    means = [p.mean_q for p in pointers]
    width = max(p.width for p in pointers)
    center = 0.5 * (min(means) + max(means))
    extent = 0.5 * (max(means) - min(means)) + margin * width
    return make_grid(center, extent, n)


@dataclass(frozen=True)
class TwoLevelPointer:
    """Polarization state ``amp_H |H> + amp_V |V>``."""
    amp_H: complex = 1.0
    amp_V: complex = 0.0

    def __post_init__(self):
        n2 = abs(self.amp_H) ** 2 + abs(self.amp_V) ** 2
        if abs(n2 - 1.0) > tol.ALGEBRAIC:
            raise ValueError(f"two-level pointer not normalized (norm^2={n2})")

    @classmethod
    def rotated(cls, dtheta: float) -> "TwoLevelPointer":
        """``|H>`` rotated by ``dtheta`` in the sigma_x-sigma_z plane."""
        return cls(np.cos(dtheta / 2), np.sin(dtheta / 2))

    def as_ket(self) -> Ket:
        return Ket((2,), np.array([self.amp_H, self.amp_V], dtype=complex))


@dataclass(frozen=True)
class TraceDecomposition:
    """``chi' * exp(-i global_phase) = eta * (chi + epsilon * chi_perp)``."""
    eta: float
    epsilon: float
    chi_perp: Ket
    global_phase: float
    chi: Ket

    def reconstruct(self) -> Ket:
        """``eta (chi + epsilon chi_perp)``, i.e. chi' with its global phase removed."""
        return self.eta * (self.chi + self.epsilon * self.chi_perp)


def _as_ket(state) -> Ket:
    if isinstance(state, Ket):
        return state
    if isinstance(state, (GridPointer, TwoLevelPointer)):
        return state.as_ket()
    raise TypeError(f"cannot decompose {type(state).__name__}")


def _orthogonal_unit(chi: Ket) -> Ket:
    # any unit vector orthogonal to chi, by Gram-Schmidt on the basis
    for i in range(chi.amplitudes.size):
        e = np.zeros_like(chi.amplitudes)
        e[i] = 1.0
        r = e - np.vdot(chi.amplitudes, e) * chi.amplitudes
        nr = np.linalg.norm(r)
        if nr > 0.5:
            return Ket(chi.dims, r / nr)
    raise DecompositionError("no orthogonal complement (one-dimensional space)")


def orthogonal_decompose(chi, chi_prime) -> TraceDecomposition:
    """Split ``chi'`` into a multiple of ``chi`` and an orthogonal remainder.

    The global phase of ``<chi|chi'>`` is removed first so that eta is real
    positive; the phase of ``chi_perp`` is chosen so that epsilon >= 0.

    Raises
    ------
    DecompositionError
        If ``chi`` and ``chi'`` are orthogonal.
    """
    a, b = _as_ket(chi), _as_ket(chi_prime)
    for name, s in (("chi", a), ("chi'", b)):
        if abs(s.norm2 - 1.0) > 1e-10:
            raise ValueError(f"{name} is not normalized (norm^2={s.norm2})")
    o = a.inner(b)
    if abs(o) <= tol.ALGEBRAIC:
        raise DecompositionError("chi and chi' are orthogonal; eta would vanish")
    gamma = cmath.phase(o)
    eta = abs(o)
    aligned = b.amplitudes * cmath.exp(-1j * gamma)
    r = aligned - eta * a.amplitudes
    nr = float(np.linalg.norm(r))
    if nr == 0.0:
        return TraceDecomposition(eta, 0.0, _orthogonal_unit(a), gamma, a)
    return TraceDecomposition(eta, nr / eta, Ket(a.dims, r / nr), gamma, a)


def expectation(p, observable: str) -> float:
    """Expectation value of a pointer observable.

    Gaussian pointers answer Q and P analytically, grid pointers by
    quadrature and FFT. Two-level pointers answer the Pauli operators and
    the polarization angles Theta = arcsin<sigma_x>, Upsilon = -arcsin<sigma_y>.
    """
    obs = canonical_observable(observable)
    if isinstance(p, GaussianPointer):
        if obs == "Q":
            return p.mean_q
        if obs == "P":
            return p.mean_p
    elif isinstance(p, GridPointer):
        w = np.abs(p.amplitudes) ** 2
        if obs == "Q":
            return float(np.sum(p.q * w) / np.sum(w))
        if obs == "P":
            k, phi = p.momentum_amplitudes()
            wk = np.abs(phi) ** 2
            return float(np.sum(k * wk) / np.sum(wk))
    elif isinstance(p, TwoLevelPointer):
        v = p.as_ket().amplitudes
        mats = {"sigma_x": SIGMA_X, "sigma_y": SIGMA_Y, "sigma_z": SIGMA_Z}
        if obs in mats:
            return float(np.vdot(v, mats[obs] @ v).real)
        if obs == "Theta":
            return float(np.arcsin(np.clip(np.vdot(v, SIGMA_X @ v).real, -1, 1)))
        if obs == "Upsilon":
            return float(-np.arcsin(np.clip(np.vdot(v, SIGMA_Y @ v).real, -1, 1)))
    raise ValueError(
        f"observable {observable!r} undefined for {type(p).__name__}")


def grid_variance(p: GridPointer, observable: str) -> float:
    obs = canonical_observable(observable)
    if obs == "Q":
        w = np.abs(p.amplitudes) ** 2
        w = w / w.sum()
        m = np.sum(p.q * w)
        return float(np.sum((p.q - m) ** 2 * w))
    if obs == "P":
        k, phi = p.momentum_amplitudes()
        w = np.abs(phi) ** 2
        w = w / w.sum()
        m = np.sum(k * w)
        return float(np.sum((k - m) ** 2 * w))
    raise ValueError(f"variance of {observable!r} undefined on a grid")


def gaussian_span(chi: GaussianPointer, chi_prime: GaussianPointer):
    """Exact two-dimensional representation of a Gaussian coupling.

    Every state reachable in the interferometer lies in span{chi, chi'}.
    Working in the orthonormal basis {chi, chi_perp} with the phase of chi'
    absorbed gives 2-vectors for both states and the compressed Q and P
    operators, whose expectation values are exact inside the span.

    Returns
    -------
    before, after : Ket
        ``(1, 0)`` and ``(eta, eta * epsilon)``.
    ops : dict
        2x2 matrices for ``"Q"`` and ``"P"``.
    decomposition : (eta, epsilon, global_phase)
    """
    o = gaussian_overlap(chi, chi_prime)
    eta, gamma = abs(o), cmath.phase(o)
    # eta^2 (1 + eps^2) = 1, written to avoid cancellation for small shifts
    s2 = chi.width ** 2
    dq = chi_prime.mean_q - chi.mean_q
    dp = chi_prime.mean_p - chi.mean_p
    x = (dq * dq + 4 * s2 * s2 * dp * dp) / (8 * s2)
    eps = float(np.sqrt(np.expm1(2 * x)))
    before = basis(2, 0)
    after = Ket((2,), np.array([eta, eta * eps], dtype=complex))
    ops = {}
    for obs in ("Q", "P"):
        m = np.array([
            [gaussian_matrix_element(chi, chi, obs), gaussian_matrix_element(chi, chi_prime, obs)],
            [gaussian_matrix_element(chi_prime, chi, obs), gaussian_matrix_element(chi_prime, chi_prime, obs)],
        ])
        if eps == 0.0:
            ops[obs] = np.diag([m[0, 0], m[0, 0]]).astype(complex)
            continue
        c = np.array([[1.0, -1.0 / eps],
                      [0.0, cmath.exp(-1j * gamma) / (eta * eps)]], dtype=complex)
        ops[obs] = c.conj().T @ m @ c
    return before, after, ops, (eta, eps, gamma)
