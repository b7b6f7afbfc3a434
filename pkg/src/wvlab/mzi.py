"""
Full-state simulation of a Mach-Zehnder interferometer whose arm A couples
the photon path to several pointers, and the weak-value predictions the
simulation is checked against.

Composite state before the final beam splitter (path first, then pointers
in declared order)::

    cos(a)|A> (x)_j chi'_j  +  sin(a) exp(i phi)|B> (x)_j chi_j

An imperfection overlap ``eta_imperfection < 1`` is carried by one extra
two-level ancilla appended after the pointers; it has no observable.
"""
from __future__ import annotations

import cmath
import math
import os
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import qstate
from .errors import OrthogonalBoundaryError, ResourceLimitError, WeaknessWarning
from .pointer import (
    SIGMA_X, SIGMA_Y, SIGMA_Z, GaussianPointer, canonical_observable,
    common_grid, gaussian_overlap, gaussian_span, orthogonal_decompose,
    sample_gaussian,
)
from .qstate import Ket
from .weakvalue import PreSelection, cis, intensity, wv_finite

__all__ = [
    "CouplingSpec", "ExperimentModel", "ShiftEntry", "PointerModel",
    "Postselected", "realize", "compose_state", "postselect_pointer",
    "coupling_eta", "first_order_shift", "shift_report",
    "gaussian_shift_exact", "predict_scan", "parallel_map", "BeamAxis",
    "MAX_GRID_POINTERS", "MAX_AMPLITUDES", "WEAK_EPSILON",
]

MAX_GRID_POINTERS = 2
MAX_AMPLITUDES = 40_000_000
WEAK_EPSILON = 0.1

_GAUSSIAN_KINDS = ("gaussian_q", "gaussian_p")
_KINDS = _GAUSSIAN_KINDS + ("two_level", "custom_ket")


@dataclass(frozen=True)
class BeamAxis:
    """Marks a Gaussian coupling as one transverse axis of a beam.

    ``name`` is ``"x"`` or ``"y"``. Angles reported for the axis are
    ``wavelength * p / (2 pi)``; the x position pairs with theta_y and the
    y position with theta_x.
    """
    name: str
    wavelength: float

    def __post_init__(self):
        if self.name not in ("x", "y"):
            raise ValueError(f"beam axis must be 'x' or 'y', got {self.name!r}")

    @property
    def position(self) -> str:
        return self.name

    @property
    def angle(self) -> str:
        return "theta_y" if self.name == "x" else "theta_x"


@dataclass(frozen=True)
class CouplingSpec:
    """One pointer coupled to arm A.

    Parameters
    ----------
    label : str
    kind : {"gaussian_q", "gaussian_p", "two_level", "custom_ket"}
        Gaussian kinds accept both ``delta_q`` and ``delta_p``; the name
        records which variable is nominally coupled.
    width : float
        Position standard deviation of a Gaussian pointer.
    representation : {"analytic", "grid"}
        Gaussian pointers are simulated either exactly in the
        two-dimensional span of the undisturbed and shifted packets or by
        brute force on a grid of ``grid_size`` points.
    before, after, operators
        States and observables of a ``custom_ket`` pointer.
    """
    label: str
    kind: str
    delta_q: float = 0.0
    delta_p: float = 0.0
    delta_theta: float = 0.0
    width: float = 1.0
    representation: str = "analytic"
    grid_size: int = 4096
    axis: BeamAxis | None = None
    before: Ket | None = None
    after: Ket | None = None
    operators: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ValueError(f"unknown pointer kind {self.kind!r}")
        for name in ("delta_q", "delta_p", "delta_theta", "width"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")
        if self.representation not in ("analytic", "grid"):
            raise ValueError(f"unknown representation {self.representation!r}")
        if self.kind == "custom_ket" and (self.before is None or self.after is None):
            raise ValueError("custom_ket pointers need 'before' and 'after' states")
        if self.kind == "two_level" and abs(self.delta_theta) >= math.pi:
            raise ValueError("polarization rotation must satisfy |delta_theta| < pi")

    @property
    def is_gaussian(self) -> bool:
        return self.kind in _GAUSSIAN_KINDS

    def gaussians(self) -> tuple[GaussianPointer, GaussianPointer]:
        chi = GaussianPointer(0.0, 0.0, self.width)
        return chi, GaussianPointer(self.delta_q, self.delta_p, self.width)


@dataclass(frozen=True)
class ExperimentModel:
    pre: PreSelection
    couplings: tuple = ()
    eta_imperfection: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "couplings", tuple(self.couplings))
        if not 0.0 < self.eta_imperfection <= 1.0:
            raise ValueError("eta_imperfection must lie in (0, 1]")
        labels = [c.label for c in self.couplings]
        if len(set(labels)) != len(labels):
            raise ValueError(f"duplicate coupling labels in {labels}")

    def coupling(self, label: str) -> CouplingSpec:
        for c in self.couplings:
            if c.label == label:
                return c
        raise KeyError(label)

    @property
    def eta_total(self) -> float:
        eta = self.eta_imperfection
        for c in self.couplings:
            eta *= coupling_eta(c)
        return eta

    def with_phase(self, phi: float) -> "ExperimentModel":
        return ExperimentModel(self.pre.with_phase(phi), self.couplings,
                               self.eta_imperfection)


def coupling_eta(c: CouplingSpec) -> float:
    """Closed-form overlap ``|<chi|chi'>|`` of one coupling."""
    if c.is_gaussian:
        return abs(gaussian_overlap(*c.gaussians()))
    if c.kind == "two_level":
        return abs(math.cos(c.delta_theta / 2))
    return abs(c.before.inner(c.after))


@dataclass
class PointerModel:
    """A coupling realized as vectors and operators for the simulation."""
    label: str
    before: Ket
    after: Ket          # global phase of <before|after> removed
    operators: dict     # name -> matrix or callable acting on axis 0
    eta: float
    epsilon: float
    global_phase: float
    grid: np.ndarray | None = None

    @property
    def dim(self) -> int:
        return self.before.dims[0]


def _realize_one(c: CouplingSpec) -> PointerModel:
    if c.is_gaussian and c.representation == "grid":
        chi, chi_p = c.gaussians()
        q = common_grid([chi, chi_p], n=c.grid_size)
        g0, g1 = sample_gaussian(chi, q), sample_gaussian(chi_p, q)
        d = orthogonal_decompose(g0, g1)
        after = g1.as_ket() * cmath.exp(-1j * d.global_phase)
        ops = {"Q": g0.q_operator(), "P": g0.p_operator()}
        return PointerModel(c.label, g0.as_ket(), after, ops, d.eta, d.epsilon,
                            d.global_phase, grid=q)
    if c.is_gaussian:
        before, after, ops, (eta, eps, gamma) = gaussian_span(*c.gaussians())
        return PointerModel(c.label, before, after, ops, eta, eps, gamma)
    if c.kind == "two_level":
        before = qstate.basis(2, 0)
        after = Ket((2,), np.array([math.cos(c.delta_theta / 2),
                                    math.sin(c.delta_theta / 2)]))
        d = orthogonal_decompose(before, after)
        ops = {"sigma_x": SIGMA_X, "sigma_y": SIGMA_Y, "sigma_z": SIGMA_Z}
        after = after * cmath.exp(-1j * d.global_phase)
        return PointerModel(c.label, before, after, ops, d.eta, d.epsilon,
                            d.global_phase)
    d = orthogonal_decompose(c.before, c.after)
    after = c.after * cmath.exp(-1j * d.global_phase)
    return PointerModel(c.label, c.before, after, dict(c.operators), d.eta,
                        d.epsilon, d.global_phase)


def realize(m: ExperimentModel) -> list[PointerModel]:
    """Build simulation vectors for every coupling, enforcing the memory guard."""
    n_grid = sum(1 for c in m.couplings if c.is_gaussian and c.representation == "grid")
    if n_grid > MAX_GRID_POINTERS:
        raise ResourceLimitError(
            f"{n_grid} grid pointers requested; at most {MAX_GRID_POINTERS} "
            "may be simulated on a grid, use representation='analytic'")
    pointers = [_realize_one(c) for c in m.couplings]
    if m.eta_imperfection < 1.0:
        e = m.eta_imperfection
        pointers.append(PointerModel(
            "__imperfection__", qstate.basis(2, 0),
            Ket((2,), np.array([e, math.sqrt((1 - e) * (1 + e))])),
            {}, e, math.sqrt((1 - e) * (1 + e)) / e, 0.0))
    size = 2 * int(np.prod([p.dim for p in pointers], dtype=np.int64))
    if size > MAX_AMPLITUDES:
        raise ResourceLimitError(
            f"composite state would hold {size} amplitudes (limit {MAX_AMPLITUDES})")
    return pointers


def compose_state(m: ExperimentModel, pointers: Sequence[PointerModel] | None = None) -> Ket:
    """Normalized path-pointer state just before the final beam splitter."""
    pointers = realize(m) if pointers is None else pointers
    ca, sa = math.cos(m.pre.alpha), math.sin(m.pre.alpha)
    c, s = cis(m.pre.phi)
    if not pointers:
        return Ket((2,), np.array([ca, sa * complex(c, s)]))
    arm_a = qstate.tensor_all([p.after for p in pointers])
    arm_b = qstate.tensor_all([p.before for p in pointers])
    amps = np.concatenate([ca * arm_a.amplitudes,
                           (sa * complex(c, s)) * arm_b.amplitudes])
    return qstate.normalize(Ket((2,) + arm_a.dims, amps))


@dataclass
class Postselected:
    """Pointer state conditioned on detection in output port C."""
    state: Ket                  # normalized, pointers only
    probability: float
    pointers: list

    def index(self, label: str) -> int:
        for i, p in enumerate(self.pointers):
            if p.label == label:
                return i
        raise KeyError(label)

    def pointer(self, label: str) -> PointerModel:
        return self.pointers[self.index(label)]

    def expect(self, label: str, observable: str) -> float:
        """Conditional expectation value of a pointer observable."""
        i = self.index(label)
        p = self.pointers[i]
        obs = _resolve(p, observable)
        if obs in ("Theta", "Upsilon"):
            sx = qstate.expect_local(self.state, i, p.operators["sigma_x"]).real
            sy = qstate.expect_local(self.state, i, p.operators["sigma_y"]).real
            return _polarization_angle(obs, sx, sy)
        return qstate.expect_local(self.state, i, p.operators[obs]).real

    def reduced_dm(self, label: str) -> qstate.DensityMatrix:
        i = self.index(label)
        if self.pointers[i].dim > 64:
            raise ResourceLimitError("reduced density matrices are limited to small pointers")
        return qstate.reduced_density_matrix(self.state, i)


def _resolve(p: PointerModel, observable: str) -> str:
    # custom pointers name their own operators; everything else goes by alias
    if observable in p.operators:
        return observable
    return canonical_observable(observable)


def _polarization_angle(obs: str, sx: float, sy: float) -> float:
    if obs == "Theta":
        return math.asin(max(-1.0, min(1.0, sx)))
    return -math.asin(max(-1.0, min(1.0, sy)))


def postselect_pointer(m: ExperimentModel, pointers=None) -> Postselected:
    """Project the path onto output port C.

    Raises
    ------
    PostselectionImpossible
        At a dark fringe.
    """
    pointers = realize(m) if pointers is None else pointers
    psi = compose_state(m, pointers)
    cond, p = qstate.project(psi, 0, qstate.POSTSELECT_C)
    return Postselected(qstate.normalize(cond), p, list(pointers))


def single_arm_expect(pointer: PointerModel, observable: str, arm: str = "A") -> float:
    """Expectation value with only one arm open."""
    state = pointer.after if arm == "A" else pointer.before
    obs = _resolve(pointer, observable)
    if obs in ("Theta", "Upsilon"):
        sx = qstate.expect_local(state, 0, pointer.operators["sigma_x"]).real
        sy = qstate.expect_local(state, 0, pointer.operators["sigma_y"]).real
        return _polarization_angle(obs, sx, sy)
    return qstate.expect_local(state, 0, pointer.operators[obs]).real


@dataclass(frozen=True)
class ShiftEntry:
    """First-order shift prediction for one pointer observable."""
    observable: str
    single_channel_shift: float
    postselected_shift: float
    weak_value: complex
    epsilon: float
    eta_total: float
    weak: bool
    predicted_dm: np.ndarray    # basis {chi, chi_perp}
    single_channel_exact: float


def _analytic_pointer(c: CouplingSpec) -> PointerModel:
    if c.is_gaussian and c.representation == "grid":
        c = CouplingSpec(c.label, c.kind, c.delta_q, c.delta_p, c.delta_theta,
                         c.width, "analytic")
    return _realize_one(c)


def first_order_shift(m: ExperimentModel, label: str, observable: str) -> ShiftEntry:
    """Weak-value prediction ``2 eps Re[<chi|O|chi_perp> wv]`` for one pointer.

    The weak value uses the overlap of *all* couplings and imperfections,
    including the target pointer. Predictions outside the weak regime
    (epsilon > 0.1) are still returned, flagged and accompanied by a
    ``WeaknessWarning``.
    """
    c = m.coupling(label)
    p = _analytic_pointer(c)
    obs = _resolve(p, observable)
    sign = 1.0
    if obs == "Theta":
        op = p.operators["sigma_x"]
    elif obs == "Upsilon":
        op, sign = p.operators["sigma_y"], -1.0
    else:
        try:
            op = p.operators[obs]
        except KeyError:
            raise ValueError(f"observable {observable!r} undefined for pointer {label!r}") from None
    chi = p.before.amplitudes
    if p.epsilon > 0:
        perp = (p.after.amplitudes - p.eta * chi) / (p.eta * p.epsilon)
    else:
        perp = np.zeros_like(chi)
    mat = np.asarray(op)
    elem = sign * complex(np.vdot(chi, mat @ perp))
    eta_total = m.eta_total
    wv = wv_finite(m.pre, eta_total)
    weak = p.epsilon <= WEAK_EPSILON
    if not weak:
        warnings.warn(
            f"pointer {label!r} has epsilon={p.epsilon:.3g} > {WEAK_EPSILON}; "
            "first-order prediction is outside its regime", WeaknessWarning,
            stacklevel=2)
    eps = p.epsilon
    dm = np.array([[1.0, np.conj(wv) * eps], [wv * eps, 0.0]], dtype=complex)
    exact = single_arm_expect(p, obs, "A") - single_arm_expect(p, obs, "B")
    return ShiftEntry(obs, 2 * eps * elem.real, 2 * eps * (elem * wv).real, wv,
                      eps, eta_total, weak, dm, exact)


def shift_report(m: ExperimentModel, targets: dict) -> dict:
    """``{label: {observable: ShiftEntry}}`` for the requested observables."""
    return {label: {o: first_order_shift(m, label, o) for o in obs}
            for label, obs in targets.items()}


def gaussian_shift_exact(dq: float, dp: float, width: float, wv: complex) -> tuple[float, float]:
    """Postselected shifts of <Q> and <P> for a Gaussian pointer.

    Exact at any coupling strength provided ``wv`` includes the overlap of
    every coupling (this pointer's own included).
    """
    s2 = width * width
    re, im = wv.real, wv.imag
    return dq * re - 2.0 * dp * s2 * im, dp * re + dq / (2.0 * s2) * im


def predict_scan(m: ExperimentModel, phi_samples, observables: dict | None = None,
                 rayleigh: float | None = None) -> list[dict]:
    """Predicted intensity, weak value and pointer shifts along a phase scan.

    Beam-axis couplings (``CouplingSpec.axis``) report position and angle
    shifts through the Rayleigh range ``rayleigh`` (defaults to
    ``4 pi width^2 / wavelength``); other Gaussian couplings report Q and P;
    two-level couplings report Theta and Upsilon.

    Samples at a weak-value pole produce a row with ``pole=True`` and NaN
    predictions instead of an exception.
    """
    eta = m.eta_total
    singles = {}
    for c in m.couplings:
        if observables is not None and c.label not in observables:
            continue
        singles[c.label] = _single_arm_table(c, rayleigh)
    rows = []
    for phi in np.asarray(phi_samples, dtype=float):
        pre = m.pre.with_phase(phi)
        row = {"phi": float(phi), "intensity": float(intensity(pre, eta)),
               "eta": eta, "pole": False}
        try:
            wv = wv_finite(pre, eta)
        except OrthogonalBoundaryError:
            wv = complex(math.nan, math.nan)
            row["pole"] = True
        row["wv"] = wv
        for label, (kind, single) in singles.items():
            for name, value in _predict(kind, single, wv).items():
                if observables is None or name in observables[label]:
                    row[(label, name)] = value
        rows.append(row)
    return rows


def _single_arm_table(c: CouplingSpec, rayleigh):
    if c.is_gaussian and c.axis is not None:
        zr = rayleigh if rayleigh is not None else 4 * math.pi * c.width ** 2 / c.axis.wavelength
        ang = c.axis.wavelength * c.delta_p / (2 * math.pi)
        return ("beam", {"pos": c.delta_q, "ang": ang, "zr": zr,
                         "names": (c.axis.position, c.axis.angle)})
    if c.is_gaussian:
        return ("gauss", {"dq": c.delta_q, "dp": c.delta_p, "width": c.width})
    if c.kind == "two_level":
        return ("pol", {"theta": c.delta_theta})
    return ("custom", {})


def _predict(kind, s, wv) -> dict:
    re, im = wv.real, wv.imag
    if kind == "beam":
        pos, ang, zr = s["pos"], s["ang"], s["zr"]
        npos, nang = s["names"]
        return {npos: pos * re - zr * ang * im,
                nang: ang * re + pos / zr * im}
    if kind == "gauss":
        q, p = gaussian_shift_exact(s["dq"], s["dp"], s["width"], wv)
        return {"Q": q, "P": p}
    if kind == "pol":
        return {"Theta": s["theta"] * re, "Upsilon": -s["theta"] * im}
    return {}


def _threads() -> int:
    try:
        n = int(os.environ.get("WVLAB_THREADS", "0"))
    except ValueError:
        n = 0
    return n if n > 0 else (os.cpu_count() or 1)


def parallel_map(func: Callable, items: Sequence) -> list:
    """Apply ``func`` to each item; results land in input order.

    Parallelism is capped by the ``WVLAB_THREADS`` environment variable.
    """
    items = list(items)
    out = [None] * len(items)
    n = min(_threads(), len(items)) or 1
    if n == 1:
        for i, x in enumerate(items):
            out[i] = func(x)
        return out

    def run(i):
        out[i] = func(items[i])

    with ThreadPoolExecutor(max_workers=n) as ex:
        list(ex.map(run, range(len(items))))
    return out
