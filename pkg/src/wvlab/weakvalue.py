"""
Weak value of the arm-A projector for a Mach-Zehnder interferometer and
the scalar relations between amplitude ratio, phase, overlap, visibility
and output intensity.

The preselected state is ``cos(a)|A> + sin(a) exp(i phi)|B>``; the
postselection is output port C, ``(|A> + |B>)/sqrt(2)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import tol
from .errors import OrthogonalBoundaryError
from .qstate import DensityMatrix, Ket, POSTSELECT_C

__all__ = [
    "PreSelection", "WeakValueRecord", "PROJECTOR_A", "cis", "wv_ideal",
    "wv_finite", "wv_mixed", "weak_value", "visibility", "eta_from_visibility",
    "tan_alpha_from_arm_intensities", "intensity", "extremal_amplification",
    "path_density_matrix", "path_ket", "postselection_dm",
]

PROJECTOR_A = np.array([[1, 0], [0, 0]], dtype=complex)

_TWO_PI = 2.0 * math.pi


def _reduce_phase(phi: float) -> float:
    phi = math.fmod(float(phi), _TWO_PI)
    return phi + _TWO_PI if phi < 0 else phi


def cis(phi: float) -> tuple[float, float]:
    """``(cos phi, sin phi)`` with exact values at multiples of pi/2.

    ``math.sin(math.pi)`` is 1.2e-16, which would leave a spurious imaginary
    part in weak values evaluated on the real axis.
    """
    r = _reduce_phase(phi)
    quarter = r / (0.5 * math.pi)
    k = round(quarter)
    if quarter == k:
        return ((1.0, 0.0), (0.0, 1.0), (-1.0, 0.0), (0.0, -1.0))[k % 4]
    return math.cos(r), math.sin(r)


@dataclass(frozen=True)
class PreSelection:
    """Path state inside the interferometer.

    ``alpha`` sets the amplitude ratio ``tan(alpha) = |B| / |A|`` and must
    lie in [0, pi/2); ``phi`` is reduced to [0, 2 pi).
    """
    alpha: float
    phi: float = 0.0

    def __post_init__(self):
        if not (0.0 <= self.alpha < 0.5 * math.pi):
            raise ValueError(f"alpha={self.alpha} outside [0, pi/2)")
        object.__setattr__(self, "phi", _reduce_phase(self.phi))

    @classmethod
    def from_tan(cls, tan_alpha: float, phi: float = 0.0) -> "PreSelection":
        if not (tan_alpha >= 0 and math.isfinite(tan_alpha)):
            raise ValueError(f"tan(alpha) must be finite and >= 0, got {tan_alpha}")
        return cls(math.atan(tan_alpha), phi)

    @property
    def tan_alpha(self) -> float:
        return math.tan(self.alpha)

    def with_phase(self, phi: float) -> "PreSelection":
        return PreSelection(self.alpha, phi)


@dataclass(frozen=True)
class WeakValueRecord:
    """A weak value together with the parameters that produced it.

    The complex value doubles as the operational measure of the particle's
    presence in arm A.
    """
    value: complex
    alpha: float
    phi: float
    eta: float

    @property
    def presence(self) -> complex:
        return self.value


def wv_ideal(pre: PreSelection) -> complex:
    """``1 / (1 + tan(alpha) exp(i phi))`` for vanishing couplings.

    Raises
    ------
    OrthogonalBoundaryError
        At the pole tan(alpha) = 1, phi = pi.
    """
    t = pre.tan_alpha
    c, s = cis(pre.phi)
    den = complex(1.0 + t * c, t * s)
    if abs(den) <= tol.POLE_IDEAL:
        raise OrthogonalBoundaryError(
            f"orthogonal pre/postselection at tan(alpha)={t}, phi={pre.phi}")
    return 1.0 / den


def wv_finite(pre: PreSelection, eta: float) -> complex:
    """Weak value corrected for the overlap ``eta`` between the arm states.

    ``(1 + t eta exp(-i phi)) / (1 + t^2 + 2 t eta cos phi)`` with
    ``t = tan(alpha)``. At ``eta == 1`` the value is exactly ``wv_ideal``.
    """
    if not 0.0 <= eta <= 1.0:
        raise ValueError(f"eta={eta} outside [0, 1]")
    if eta == 1.0:
        return wv_ideal(pre)
    t = pre.tan_alpha
    c, s = cis(pre.phi)
    den = 1.0 + t * t + 2.0 * t * eta * c
    if den <= tol.POLE:
        raise OrthogonalBoundaryError(
            f"orthogonal pre/postselection at tan(alpha)={t}, phi={pre.phi}, eta={eta}")
    return complex(1.0 + t * eta * c, -t * eta * s) / den


def weak_value(pre: PreSelection, eta: float = 1.0) -> WeakValueRecord:
    return WeakValueRecord(wv_finite(pre, eta), pre.alpha, pre.phi, eta)


def path_ket(pre: PreSelection) -> Ket:
    c, s = cis(pre.phi)
    return Ket((2,), np.array([math.cos(pre.alpha),
                               math.sin(pre.alpha) * complex(c, s)]))


def path_density_matrix(pre: PreSelection, eta: float) -> DensityMatrix:
    """Path state after tracing out pointers with total overlap ``eta``."""
    ca, sa = math.cos(pre.alpha), math.sin(pre.alpha)
    c, s = cis(pre.phi)
    off = ca * sa * eta * complex(c, -s)
    return DensityMatrix((2,), np.array([[ca * ca, off], [off.conjugate(), sa * sa]]))


def postselection_dm() -> DensityMatrix:
    return POSTSELECT_C.dm()


def wv_mixed(rho_pre: DensityMatrix, rho_post: DensityMatrix, A=PROJECTOR_A) -> complex:
    """``Tr(rho_post A rho_pre) / Tr(rho_post rho_pre)``."""
    post, pre = rho_post.entries, rho_pre.entries
    den = np.trace(post @ pre)
    if abs(den) <= tol.POLE:
        raise OrthogonalBoundaryError("pre- and postselected states are orthogonal")
    return complex(np.trace(post @ np.asarray(A, dtype=complex) @ pre) / den)


def visibility(pre: PreSelection, eta: float) -> float:
    """Fringe visibility ``eta * 2 t / (1 + t^2)``."""
    t = pre.tan_alpha
    return eta * 2.0 * t / (1.0 + t * t)


def eta_from_visibility(v: float, pre: PreSelection) -> float:
    t = pre.tan_alpha
    if t == 0.0:
        raise ValueError("visibility carries no overlap information at tan(alpha)=0")
    return v * (1.0 + t * t) / (2.0 * t)


def tan_alpha_from_arm_intensities(intensity_a: float, intensity_b: float) -> float:
    """Amplitude ratio from single-arm intensities (the other arm blocked)."""
    if intensity_a <= 0:
        raise ValueError("arm A intensity must be positive")
    return math.sqrt(intensity_b / intensity_a)


def intensity(pre: PreSelection, eta: float, phi_scan=None):
    """Output-C intensity ``1 + t^2 + 2 t eta cos phi`` in arbitrary units.

    ``phi_scan`` may be an array; it defaults to ``pre.phi``.
    """
    t = pre.tan_alpha
    if phi_scan is None:
        return 1.0 + t * t + 2.0 * t * eta * cis(pre.phi)[0]
    if np.ndim(phi_scan) == 0:
        return 1.0 + t * t + 2.0 * t * eta * cis(float(phi_scan))[0]
    c = np.array([cis(p)[0] for p in np.asarray(phi_scan, dtype=float)])
    return 1.0 + t * t + 2.0 * t * eta * c


def extremal_amplification(eta: float) -> tuple[float, float, float, float]:
    """Largest real amplifications at phi = pi for a given overlap.

    ``Re wv(t)`` at phi = pi is stationary where ``eta (1 + t^2) = 2 t``, i.e.
    ``t = (1 +/- sqrt(1 - eta^2)) / eta``.

    Returns
    -------
    t_plus, t_minus, wv_plus, wv_minus
        ``t_plus > 1`` gives the negative extremum, ``t_minus < 1`` the
        positive one.
    """
    if not 0.0 < eta < 1.0:
        if eta == 1.0:
            raise OrthogonalBoundaryError(
                "amplification is unbounded at eta=1 (pole at tan(alpha)=1)")
        raise ValueError(f"eta={eta} outside (0, 1)")
    r = math.sqrt((1.0 - eta) * (1.0 + eta))
    t_plus = (1.0 + r) / eta
    # (1 - r) / eta, rewritten to avoid cancellation as eta -> 1
    t_minus = eta / (1.0 + r)
    wv = [wv_finite(PreSelection.from_tan(t, math.pi), eta).real
          for t in (t_plus, t_minus)]
    return t_plus, t_minus, wv[0], wv[1]
