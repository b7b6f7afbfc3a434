"""
Gaussian-beam geometry, the mapping from interferometer misalignment to
pointer shifts, the centroid trajectory model and synthetic phase scans.

Units are SI throughout (meters, radians). Tilts follow the right-handed
convention in which a tilt ``dtheta`` displaces the beam on a detector at
distance ``z`` by ``dtheta x (0, 0, z) = (z dtheta_y, -z dtheta_x)``, so

    dp_x = +(2 pi / lambda) dtheta_y,    dp_y = -(2 pi / lambda) dtheta_x.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .weakvalue import PreSelection, intensity, wv_finite

__all__ = [
    "BeamGeometry", "MisalignmentParams", "TrajectorySample", "ScanData",
    "rayleigh_range", "misalignment_to_shifts", "waist_shifts",
    "centroid_model", "design_rows", "simulate_scan", "two_detector_solve",
    "scan_phases",
]

PARAXIAL_LIMIT = 1e-2


def rayleigh_range(wavelength: float, w0: float) -> float:
    """``pi w0^2 / lambda``."""
    if wavelength <= 0 or w0 <= 0:
        raise ValueError("wavelength and waist must be positive")
    return math.pi * w0 * w0 / wavelength


@dataclass(frozen=True)
class BeamGeometry:
    wavelength: float
    w0: float
    detector_z: float

    def __post_init__(self):
        if not (self.wavelength > 0 and self.w0 > 0 and self.detector_z > 0):
            raise ValueError("wavelength, w0 and detector_z must be positive")

    @property
    def zr(self) -> float:
        return rayleigh_range(self.wavelength, self.w0)

    @property
    def k(self) -> float:
        return 2 * math.pi / self.wavelength

    @property
    def pointer_width(self) -> float:
        """Position standard deviation of the mode, w0 / 2."""
        return 0.5 * self.w0

    @classmethod
    def from_rayleigh(cls, wavelength: float, zr: float, detector_z: float) -> "BeamGeometry":
        return cls(wavelength, math.sqrt(zr * wavelength / math.pi), detector_z)


@dataclass(frozen=True)
class MisalignmentParams:
    """Arm A relative to arm B: lateral offsets (m) and tilts (rad)."""
    dx: float = 0.0
    dy: float = 0.0
    dtheta_x: float = 0.0
    dtheta_y: float = 0.0

    def __post_init__(self):
        vals = self.as_array()
        if not np.all(np.isfinite(vals)):
            raise ValueError("misalignment parameters must be finite")
        if max(abs(self.dtheta_x), abs(self.dtheta_y)) >= PARAXIAL_LIMIT:
            raise ValueError("tilts beyond 1e-2 rad leave the paraxial regime")

    def as_array(self) -> np.ndarray:
        return np.array([self.dx, self.dy, self.dtheta_x, self.dtheta_y], dtype=float)

    @classmethod
    def from_array(cls, v) -> "MisalignmentParams":
        return cls(*(float(x) for x in v))

    @classmethod
    def from_um_urad(cls, v) -> "MisalignmentParams":
        dx, dy, tx, ty = (float(x) for x in v)
        return cls(dx * 1e-6, dy * 1e-6, tx * 1e-6, ty * 1e-6)

    def to_um_urad(self) -> list:
        return [x * 1e6 for x in self.as_array()]

    def __add__(self, other):
        return MisalignmentParams.from_array(self.as_array() + other.as_array())

    def __sub__(self, other):
        return MisalignmentParams.from_array(self.as_array() - other.as_array())

    def __neg__(self):
        return MisalignmentParams.from_array(-self.as_array())


@dataclass(frozen=True)
class TrajectorySample:
    """One point of a phase scan. ``phi`` is NaN when the phase is unknown."""
    phi: float
    rx: float
    ry: float
    intensity: float
    sigma: float = math.nan

    def __post_init__(self):
        if self.intensity < 0:
            raise ValueError("intensity must be non-negative")


@dataclass
class ScanData:
    """A synthetic measurement run: single arms first, then the phase scan."""
    samples: list
    arm_a: tuple
    arm_b: tuple
    tan_alpha: float
    eta: float
    geometry: BeamGeometry
    misalignment: MisalignmentParams
    seed: int | None = None
    noise_sigma: float = 0.0
    meta: dict = field(default_factory=dict)


def misalignment_to_shifts(m: MisalignmentParams, g: BeamGeometry) -> dict:
    """Per-axis ``(dq, dp)`` of the Gaussian mode pointers."""
    k = g.k
    return {"x": (m.dx, k * m.dtheta_y), "y": (m.dy, -k * m.dtheta_x)}


def waist_shifts(m: MisalignmentParams, g: BeamGeometry, wv) -> tuple:
    """Postselected centroid and direction at the waist.

    Returns ``(x, y, theta_x, theta_y)`` with the same tilt convention as
    the misalignment parameters.
    """
    re, im = np.real(wv), np.imag(wv)
    zr = g.zr
    x = m.dx * re - zr * m.dtheta_y * im
    y = m.dy * re + zr * m.dtheta_x * im
    theta_y = m.dtheta_y * re + m.dx / zr * im
    theta_x = m.dtheta_x * re - m.dy / zr * im
    return x, y, theta_x, theta_y


def centroid_model(m: MisalignmentParams, g: BeamGeometry, wv) -> tuple:
    """Centroid shift on the detector for weak value(s) ``wv``.

    ``wv`` may be a scalar or an array; the result broadcasts.
    """
    re, im = np.real(wv), np.imag(wv)
    z, zr = g.detector_z, g.zr
    rx = (m.dx + z * m.dtheta_y) * re + (z / zr * m.dx - zr * m.dtheta_y) * im
    ry = (m.dy - z * m.dtheta_x) * re + (z / zr * m.dy + zr * m.dtheta_x) * im
    return rx, ry


def design_rows(g: BeamGeometry, wv) -> tuple[np.ndarray, np.ndarray]:
    """Rows of the linear map from (dx, dy, dtheta_x, dtheta_y) to (Rx, Ry).

    Returns two arrays of shape (n, 4): one for Rx, one for Ry.
    """
    re, im = np.real(np.atleast_1d(wv)), np.imag(np.atleast_1d(wv))
    z, zr = g.detector_z, g.zr
    pos = re + z / zr * im
    zero = np.zeros_like(re)
    ax = np.stack([pos, zero, zero, z * re - zr * im], axis=1)
    ay = np.stack([zero, pos, -z * re + zr * im, zero], axis=1)
    return ax, ay


def two_detector_solve(r1: float, z1: float, r2: float, z2: float) -> tuple[float, float]:
    """Waist position and slope from centroids at two distances.

    For the x axis the slope is theta_y; for the y axis it is -theta_x.
    """
    if z1 == z2:
        raise ValueError("detectors must sit at different distances")
    a = np.array([[1.0, z1], [1.0, z2]])
    pos, slope = np.linalg.solve(a, np.array([r1, r2]))
    return float(pos), float(slope)


def scan_phases(steps: int, start: float = 0.0, stop: float = 2 * math.pi,
                endpoint: bool = True) -> np.ndarray:
    return np.linspace(start, stop, steps, endpoint=endpoint)


def _sample_noise(seed: int, index: int, sigma: float) -> tuple[float, float]:
    # keyed by (seed, sample index) so generation order never matters
    rng = np.random.default_rng([seed, index])
    nx, ny = rng.standard_normal(2)
    return sigma * nx, sigma * ny


def simulate_scan(m: MisalignmentParams, g: BeamGeometry, pre: PreSelection, eta: float,
                  phi_samples, noise_sigma: float = 0.0, seed: int = 0,
                  intensity_scale: float = 1.0) -> ScanData:
    """Synthetic three-step measurement run.

    Arm A alone gives the geometric shift ``(dx + z dtheta_y, dy - z dtheta_x)``;
    arm B alone is the reference origin; the interference scan follows
    :func:`centroid_model` with ``wv_finite`` at each phase plus isotropic
    Gaussian noise of scale ``noise_sigma``.
    """
    if noise_sigma < 0:
        raise ValueError("noise_sigma must be non-negative")
    ax, ay = centroid_model(m, g, 1.0)
    samples = []
    for i, phi in enumerate(np.asarray(phi_samples, dtype=float)):
        p = pre.with_phase(phi)
        rx, ry = centroid_model(m, g, wv_finite(p, eta))
        if noise_sigma > 0:
            nx, ny = _sample_noise(seed, i, noise_sigma)
            rx, ry = rx + nx, ry + ny
        samples.append(TrajectorySample(
            float(phi), float(rx), float(ry),
            float(intensity_scale * intensity(p, eta)),
            noise_sigma if noise_sigma > 0 else math.nan))
    return ScanData(samples, (float(ax), float(ay)), (0.0, 0.0), pre.tan_alpha,
                    eta, g, m, seed, noise_sigma)
