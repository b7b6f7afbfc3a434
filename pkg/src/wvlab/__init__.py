"""Weak values of a photon's path in a Mach-Zehnder interferometer.

Closed-form weak values with finite pointer overlap, full-state simulation
of pointers coupled to one arm, a Gaussian-beam centroid model and the
alignment fits built on it.
"""
from .errors import (
    DecompositionError, GridError, OrthogonalBoundaryError, PostselectionImpossible,
    ResourceLimitError, UnidentifiableError, WeaknessWarning, WVLabError,
)
from .weakvalue import (
    PreSelection, extremal_amplification, intensity, visibility, weak_value,
    wv_finite, wv_ideal, wv_mixed,
)

__version__ = "0.1.0"

__all__ = [
    "PreSelection", "weak_value", "wv_ideal", "wv_finite", "wv_mixed",
    "visibility", "intensity", "extremal_amplification",
    "WVLabError", "OrthogonalBoundaryError", "PostselectionImpossible",
    "DecompositionError", "UnidentifiableError", "GridError",
    "ResourceLimitError", "WeaknessWarning",
]
