"""Exception types raised across the package."""


class WVLabError(Exception):
    """Base class for all package errors."""


class OrthogonalBoundaryError(WVLabError, ZeroDivisionError):
    """Pre- and postselected states are (numerically) orthogonal.

    Raised for weak-value poles and for impossible postselections.
    """


class PostselectionImpossible(OrthogonalBoundaryError):
    """The postselection probability vanishes."""


class DecompositionError(WVLabError, ValueError):
    """The orthogonal decomposition of a pointer state is undefined."""


class UnidentifiableError(WVLabError, ValueError):
    """A fit problem does not determine its parameters."""


class GridError(WVLabError, ValueError):
    """A grid pointer cannot represent the requested state."""


class ResourceLimitError(WVLabError, MemoryError):
    """A simulation would exceed the configured memory guard."""


class WeaknessWarning(UserWarning):
    """A first-order prediction was requested outside the weak regime."""
