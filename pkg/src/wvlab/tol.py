"""Numerical tolerances shared by the whole package."""

#: algebraic identities (norms, traces, hermiticity)
ALGEBRAIC = 1e-12
#: eigenvalue floor for positive semidefinite checks
PSD_FLOOR = -1e-10
#: smallest postselection probability treated as possible
POSTSELECTION_MIN = 1e-15
#: weak-value denominators below this are treated as poles
POLE = 1e-14
#: ideal weak-value denominator magnitude below this is a pole
POLE_IDEAL = 1e-12
