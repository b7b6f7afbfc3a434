"""
Misalignment estimation from a phase-scanned centroid trajectory.

For a known weak value per sample the centroid model is linear in the four
misalignment parameters, so the phase-known fit is a weighted linear least
squares problem. With unknown phases a Levenberg-Marquardt fit also
estimates an affine phase ramp ``phi_i = phi_0 + scale * i``. The reverse
task fits the Rayleigh range and detector distance for known misalignment.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .beamlab import (
    BeamGeometry, MisalignmentParams, centroid_model, design_rows,
)
from .errors import UnidentifiableError
from .weakvalue import PreSelection, wv_finite

__all__ = [
    "FitProblem", "FitResult", "Correction", "CorrectionReport",
    "fit_misalignment", "fit_beam_parameters", "correction_report",
    "levenberg_marquardt", "LMResult", "MODES", "COND_LIMIT",
]

MODES = ("phase_known_linear", "phase_unknown_nonlinear", "reverse_beam")
COND_LIMIT = 1e8
MAX_ITER = 200
REL_COST_TOL = 1e-12
STEP_TOL = 1e-14

# misalignment is fitted in um / urad internally
_SCALE = 1e-6


@dataclass
class FitProblem:
    """Inputs of an alignment fit.

    ``tan_alpha`` comes from the single-arm intensities and ``eta`` from the
    visibility; neither is fitted. ``known`` supplies the misalignment in
    ``reverse_beam`` mode. ``weighting`` is ``"auto"`` (inverse variance
    when every sample carries a finite sigma), ``"none"`` or ``"intensity"``.

    ``phase_direction`` is the sign of the phase step between consecutive
    samples in ``phase_unknown_nonlinear`` mode. Reversing every phase
    conjugates the weak values, and a different misalignment then yields
    the same trajectory, so the direction cannot be inferred from the data.
    """
    samples: list
    geometry: BeamGeometry
    tan_alpha: float
    eta: float
    mode: str = "phase_known_linear"
    known: MisalignmentParams | None = None
    weighting: str = "auto"
    phase_direction: int = 1

    def __post_init__(self):
        if self.phase_direction not in (1, -1):
            raise ValueError("phase_direction must be +1 or -1")
        if self.mode not in MODES:
            raise ValueError(f"unknown fit mode {self.mode!r}; choose from {MODES}")
        if self.weighting not in ("auto", "none", "intensity"):
            raise ValueError(f"unknown weighting {self.weighting!r}")

    @property
    def pre(self) -> PreSelection:
        return PreSelection.from_tan(self.tan_alpha)

    def data(self) -> tuple[np.ndarray, np.ndarray]:
        rx = np.array([s.rx for s in self.samples], dtype=float)
        ry = np.array([s.ry for s in self.samples], dtype=float)
        return rx, ry

    def phases(self) -> np.ndarray:
        return np.array([s.phi for s in self.samples], dtype=float)

    def weights(self) -> np.ndarray:
        n = len(self.samples)
        if self.weighting == "none":
            return np.ones(n)
        if self.weighting == "intensity":
            i = np.array([s.intensity for s in self.samples], dtype=float)
            if not np.all(np.isfinite(i)) or i.max() <= 0:
                raise ValueError("intensity weighting needs positive intensities")
            return np.sqrt(i / i.max())
        sig = np.array([s.sigma for s in self.samples], dtype=float)
        if np.all(np.isfinite(sig)) and np.all(sig > 0):
            return 1.0 / sig
        return np.ones(n)


@dataclass
class FitResult:
    """Outcome of a fit.

    ``params`` is a :class:`MisalignmentParams` or, in reverse mode, a dict
    with ``"zr"`` and ``"z"`` (meters). ``covariance`` is in SI units.
    """
    params: object
    covariance: np.ndarray
    residual_rms: float
    iterations: int
    converged: bool
    mode: str
    cost_history: list = field(default_factory=list)
    extras: dict = field(default_factory=dict)
    message: str = ""

    @property
    def sigma(self) -> np.ndarray:
        return np.sqrt(np.clip(np.diag(self.covariance), 0.0, None))

    def values(self) -> np.ndarray:
        if isinstance(self.params, MisalignmentParams):
            return self.params.as_array()
        return np.array([self.params["zr"], self.params["z"]])


def _wv_array(pre: PreSelection, eta: float, phases) -> np.ndarray:
    return np.array([wv_finite(pre.with_phase(p), eta) for p in phases])


def _equilibrated_cond(a: np.ndarray) -> tuple[float, np.ndarray]:
    norms = np.linalg.norm(a, axis=0)
    if np.any(norms == 0):
        return math.inf, norms
    return float(np.linalg.cond(a / norms)), norms


def _require_samples(p: FitProblem, n_min: int):
    if len(p.samples) < n_min:
        raise UnidentifiableError(
            f"insufficient samples: {len(p.samples)} given, {p.mode} needs >= {n_min}")


# ---------------------------------------------------------------- linear

def _linear_solve(wv: np.ndarray, rx, ry, w, g: BeamGeometry):
    ax, ay = design_rows(g, wv)
    a = np.vstack([ax * w[:, None], ay * w[:, None]])
    y = np.concatenate([rx * w, ry * w])
    cond, norms = _equilibrated_cond(a)
    if not cond < COND_LIMIT:
        raise UnidentifiableError(
            f"unidentifiable geometry: design matrix condition number {cond:.3g}")
    beta_s, *_ = np.linalg.lstsq(a / norms, y, rcond=None)
    beta = beta_s / norms
    resid = y - a @ beta
    return beta, resid, a, norms


def _fit_linear(p: FitProblem) -> FitResult:
    _require_samples(p, 4)
    phases = p.phases()
    if not np.all(np.isfinite(phases)):
        raise UnidentifiableError("phase_known_linear mode needs a finite phase for every sample")
    wv = _wv_array(p.pre, p.eta, phases)
    if np.ptp(wv.imag) <= 1e-12:
        raise UnidentifiableError(
            "unidentifiable geometry: Im(wv) does not vary over the scan, "
            "position and tilt are degenerate")
    rx, ry = p.data()
    w = p.weights()
    beta, resid, a, norms = _linear_solve(wv, rx, ry, w, p.geometry)
    dof = a.shape[0] - 4
    s2 = float(resid @ resid) / dof if dof > 0 else 0.0
    inv = np.linalg.inv((a / norms).T @ (a / norms))
    cov = s2 * inv / np.outer(norms, norms)
    raw = np.concatenate([rx, ry]) - np.concatenate(design_rows(p.geometry, wv)) @ beta
    return FitResult(MisalignmentParams.from_array(beta), 0.5 * (cov + cov.T),
                     float(np.sqrt(np.mean(raw ** 2))), 1, True, p.mode,
                     extras={"weak_values": wv, "phases": phases})


# ---------------------------------------------------------------- LM core

@dataclass
class LMResult:
    x: np.ndarray
    cost: float
    jacobian: np.ndarray
    iterations: int
    converged: bool
    history: list
    message: str


def levenberg_marquardt(fun: Callable, jac: Callable, x0, max_iter: int = MAX_ITER,
                        rel_cost_tol: float = REL_COST_TOL, step_tol: float = STEP_TOL,
                        cost_floor: float = 0.0) -> LMResult:
    """Minimize ``0.5 * |fun(x)|^2`` by damped Gauss-Newton steps.

    Steps solve ``(J^T J + lam diag(J^T J)) dx = -J^T r``; ``lam`` shrinks
    tenfold after an accepted step and grows tenfold after a rejected one,
    so the recorded cost never increases. Convergence: relative cost
    decrease below ``rel_cost_tol``, step norm below ``step_tol`` or cost
    at ``cost_floor``.
    """
    x = np.asarray(x0, dtype=float).copy()
    r = fun(x)
    cost = 0.5 * float(r @ r)
    j = jac(x)
    history = [cost]
    lam = 1e-3
    if cost <= cost_floor:
        return LMResult(x, cost, j, 0, True, history, "initial cost at floor")
    for it in range(1, max_iter + 1):
        jtj = j.T @ j
        g = j.T @ r
        d = np.diag(jtj).copy()
        d[d <= 0] = 1e-30 * max(1.0, d.max(initial=0.0))
        while True:
            try:
                step = -np.linalg.solve(jtj + lam * np.diag(d), g)
            except np.linalg.LinAlgError:
                lam *= 10.0
                continue
            break
        x_new = x + step
        r_new = fun(x_new)
        cost_new = 0.5 * float(r_new @ r_new)
        step_norm = float(np.linalg.norm(step))
        if np.isfinite(cost_new) and cost_new <= cost:
            rel = (cost - cost_new) / cost if cost > 0 else 0.0
            x, r, cost = x_new, r_new, cost_new
            j = jac(x)
            history.append(cost)
            lam = max(lam / 10.0, 1e-12)
            if cost <= cost_floor:
                return LMResult(x, cost, j, it, True, history, "cost at floor")
            if rel < rel_cost_tol:
                return LMResult(x, cost, j, it, True, history, "relative cost change below tolerance")
            if step_norm < step_tol:
                return LMResult(x, cost, j, it, True, history, "step norm below tolerance")
        else:
            if step_norm < step_tol:
                return LMResult(x, cost, j, it, True, history, "step norm below tolerance")
            lam *= 10.0
            if lam > 1e20:
                return LMResult(x, cost, j, it, False, history, "damping diverged")
    return LMResult(x, cost, j, max_iter, False, history, "maximum iterations reached")


def _covariance(jac_m: np.ndarray, resid: np.ndarray, n_params: int):
    dof = jac_m.shape[0] - n_params
    s2 = float(resid @ resid) / dof if dof > 0 else 0.0
    cond, norms = _equilibrated_cond(jac_m)
    if not cond < COND_LIMIT:
        raise UnidentifiableError(
            f"unidentifiable: Jacobian condition number {cond:.3g} at the solution")
    js = jac_m / norms
    return s2 * np.linalg.inv(js.T @ js) / np.outer(norms, norms)


# ---------------------------------------------------------------- nonlinear

def _wv_and_derivative(t: float, eta: float, phases: np.ndarray):
    c = np.cos(phases)
    s = np.sin(phases)
    num = 1.0 + t * eta * (c - 1j * s)
    den = 1.0 + t * t + 2.0 * t * eta * c
    if np.any(den <= 1e-14):
        raise UnidentifiableError("phase ramp crosses a weak-value pole")
    dnum = -1j * t * eta * (c - 1j * s)
    dden = -2.0 * t * eta * s
    wv = num / den
    return wv, (dnum * den - num * dden) / den ** 2


class _RampModel:
    """Residuals and Jacobian for misalignment (um/urad) plus a phase ramp."""

    def __init__(self, p: FitProblem):
        self.g = p.geometry
        self.t = p.tan_alpha
        self.eta = p.eta
        self.rx, self.ry = p.data()
        self.w = p.weights()
        self.idx = np.arange(len(p.samples), dtype=float)

    def phases(self, x):
        return x[4] + x[5] * self.idx

    def residuals(self, x):
        wv, _ = _wv_and_derivative(self.t, self.eta, self.phases(x))
        m = MisalignmentParams.from_array(x[:4] * _SCALE)
        mx, my = centroid_model(m, self.g, wv)
        return np.concatenate([(mx - self.rx) * self.w, (my - self.ry) * self.w]) / _SCALE

    def jacobian(self, x):
        wv, dwv = _wv_and_derivative(self.t, self.eta, self.phases(x))
        ax, ay = design_rows(self.g, wv)
        dax, day = design_rows(self.g, dwv)
        beta = x[:4]
        # d/dphi of the model for each sample
        dmx = dax @ beta
        dmy = day @ beta
        jx = np.column_stack([ax, dmx, dmx * self.idx]) * self.w[:, None]
        jy = np.column_stack([ay, dmy, dmy * self.idx]) * self.w[:, None]
        return np.vstack([jx, jy])


def _sinusoid_fit(y: np.ndarray, s: float):
    i = np.arange(y.size, dtype=float)
    basis = np.column_stack([np.ones_like(i), np.cos(s * i), np.sin(s * i)])
    coef, *_ = np.linalg.lstsq(basis, y, rcond=None)
    r = y - basis @ coef
    return float(r @ r), coef


def _ramp_from_intensity(intensities: np.ndarray):
    """Phase ramp ``(phi_0, scale)`` from the fringe in the intensity column.

    Returns the ramp with positive scale; the mirrored ramp ``(-phi_0,
    -scale)`` fits the fringe equally well.
    """
    y = np.asarray(intensities, dtype=float)
    if y.size < 6 or not np.all(np.isfinite(y)) or np.ptp(y) <= 1e-12 * max(1.0, abs(y).max()):
        return []
    lo, hi = 1e-3, math.pi
    best = None
    for _ in range(4):
        grid = np.linspace(lo, hi, 2048)
        costs = [_sinusoid_fit(y, s)[0] for s in grid]
        k = int(np.argmin(costs))
        best = grid[k]
        step = grid[1] - grid[0]
        lo, hi = max(1e-6, best - 2 * step), min(math.pi, best + 2 * step)
    _, (a, b, c) = _sinusoid_fit(y, best)
    phi0 = math.atan2(-c, b)
    return [(phi0, best)]


def _linear_cost(model: _RampModel, phi0: float, scale: float):
    phases = phi0 + scale * model.idx
    try:
        wv, _ = _wv_and_derivative(model.t, model.eta, phases)
        beta, resid, _, _ = _linear_solve(wv, model.rx, model.ry, model.w, model.g)
    except UnidentifiableError:
        return math.inf, None
    return float(resid @ resid), beta


def _initial_ramps(p: FitProblem, model: _RampModel):
    d = p.phase_direction
    cands = [(d * f, d * s) for f, s in
             _ramp_from_intensity(np.array([s.intensity for s in p.samples]))]
    if not cands:
        # no usable fringe: coarse search over the ramp directly
        cands = [(f, d * s) for s in np.linspace(0, math.pi, 33)[1:-1]
                 for f in np.linspace(0, 2 * math.pi, 48, endpoint=False)]
    best = (math.inf, None, None)
    for phi0, scale in cands:
        cost, beta = _linear_cost(model, phi0, scale)
        if cost < best[0]:
            best = (cost, beta, (phi0, scale))
    if best[1] is None:
        raise UnidentifiableError("could not initialize the phase ramp")
    return best[1], best[2]


def _fit_nonlinear(p: FitProblem) -> FitResult:
    _require_samples(p, 6)
    model = _RampModel(p)
    beta0, (phi0, scale) = _initial_ramps(p, model)
    x0 = np.concatenate([beta0 / _SCALE, [phi0, scale]])
    data_scale = float(np.sum((np.concatenate([model.rx * model.w, model.ry * model.w]) / _SCALE) ** 2))
    lm = levenberg_marquardt(model.residuals, model.jacobian, x0, max_iter=MAX_ITER,
                             cost_floor=0.5 * 1e-26 * data_scale)
    resid = model.residuals(lm.x)
    cov_s = _covariance(lm.jacobian, resid, 6)
    scale_vec = np.array([_SCALE] * 4 + [1.0, 1.0])
    cov = cov_s * np.outer(scale_vec, scale_vec)
    cov = 0.5 * (cov + cov.T)
    params = MisalignmentParams.from_array(lm.x[:4] * _SCALE)
    wv, _ = _wv_and_derivative(model.t, model.eta, model.phases(lm.x))
    mx, my = centroid_model(params, p.geometry, wv)
    rms = float(np.sqrt(np.mean(np.concatenate([mx - model.rx, my - model.ry]) ** 2)))
    phi0, scale = float(lm.x[4]), float(lm.x[5])
    return FitResult(params, cov[:4, :4], rms, lm.iterations, lm.converged, p.mode,
                     cost_history=lm.history,
                     extras={"phase_offset": math.remainder(phi0, 2 * math.pi),
                             "phase_scale": scale, "full_covariance": cov,
                             "phases": model.phases(lm.x), "weak_values": wv},
                     message=lm.message)


def fit_misalignment(p: FitProblem) -> FitResult:
    """Estimate (dx, dy, dtheta_x, dtheta_y) from a centroid trajectory.

    Raises
    ------
    UnidentifiableError
        Too few samples, or a scan that cannot separate the parameters.
    """
    if p.mode == "phase_known_linear":
        return _fit_linear(p)
    if p.mode == "phase_unknown_nonlinear":
        return _fit_nonlinear(p)
    return fit_beam_parameters(p)


# ---------------------------------------------------------------- reverse

def _beam_design(m: MisalignmentParams, wv: np.ndarray, zr: float):
    """Model pieces for fixed zr: R = base + z * slope."""
    re, im = wv.real, wv.imag
    base_x = m.dx * re - zr * m.dtheta_y * im
    base_y = m.dy * re + zr * m.dtheta_x * im
    slope_x = m.dtheta_y * re + m.dx / zr * im
    slope_y = -m.dtheta_x * re + m.dy / zr * im
    return base_x, base_y, slope_x, slope_y


def fit_beam_parameters(p: FitProblem) -> FitResult:
    """Fit the Rayleigh range and detector distance for known misalignment.

    A pure lateral offset leaves the Rayleigh range and detector distance
    degenerate and raises :class:`UnidentifiableError`.
    """
    if p.known is None:
        raise ValueError("reverse_beam mode needs the known misalignment")
    _require_samples(p, 4)
    m = p.known
    if m.dtheta_x == 0.0 and m.dtheta_y == 0.0:
        raise UnidentifiableError(
            "beam parameters unidentifiable: misalignment has no tilt component")
    phases = p.phases()
    if not np.all(np.isfinite(phases)):
        raise UnidentifiableError("reverse_beam mode needs a finite phase for every sample")
    wv = _wv_array(p.pre, p.eta, phases)
    rx, ry = p.data()
    w = p.weights()
    y = np.concatenate([rx * w, ry * w])
    unit = max(abs(p.geometry.zr), abs(p.geometry.detector_z))

    def z_for(zr):
        bx, by, sx, sy = _beam_design(m, wv, zr)
        base = np.concatenate([bx * w, by * w])
        slope = np.concatenate([sx * w, sy * w])
        ss = float(slope @ slope)
        z = float(slope @ (y - base)) / ss if ss > 0 else 0.0
        r = base + z * slope - y
        return z, float(r @ r)

    zr_grid = p.geometry.zr * np.logspace(-2, 2, 401)
    best = min(((zr,) + z_for(zr) for zr in zr_grid), key=lambda v: v[2])
    x0 = np.array([best[0], best[1]]) / unit

    def fun(x):
        zr, z = x * unit
        bx, by, sx, sy = _beam_design(m, wv, zr)
        return (np.concatenate([(bx + z * sx) * w, (by + z * sy) * w]) - y) / _SCALE

    def jac(x):
        zr, z = x * unit
        im = wv.imag
        dzr_x = -z * m.dx * im / zr ** 2 - m.dtheta_y * im
        dzr_y = -z * m.dy * im / zr ** 2 + m.dtheta_x * im
        _, _, sx, sy = _beam_design(m, wv, zr)
        j = np.column_stack([np.concatenate([dzr_x * w, dzr_y * w]),
                             np.concatenate([sx * w, sy * w])])
        return j * unit / _SCALE

    data_scale = float(np.sum((y / _SCALE) ** 2))
    lm = levenberg_marquardt(fun, jac, x0, max_iter=MAX_ITER, cost_floor=0.5 * 1e-26 * data_scale)
    resid = fun(lm.x)
    cov = _covariance(lm.jacobian, resid, 2) * unit ** 2
    zr, z = lm.x * unit
    raw = resid * _SCALE
    raw = raw / np.concatenate([w, w])
    return FitResult({"zr": float(zr), "z": float(z)}, 0.5 * (cov + cov.T),
                     float(np.sqrt(np.mean(raw ** 2))), lm.iterations, lm.converged,
                     p.mode, cost_history=lm.history, message=lm.message)


# ---------------------------------------------------------------- corrections

@dataclass(frozen=True)
class Correction:
    parameter: str
    value: float          # SI
    unit: str             # display unit
    display_value: float

    def __str__(self):
        verb = "shift" if self.parameter in ("dx", "dy") else "tilt"
        axis = {"dx": "x", "dy": "y", "dtheta_x": "about x", "dtheta_y": "about y"}[self.parameter]
        return f"{verb} arm A {axis} by {self.display_value:+.3f} {self.unit}"


@dataclass
class CorrectionReport:
    corrections: list
    trajectory_radius: float | None
    predicted_radius: float | None

    def lines(self) -> list:
        out = [str(c) for c in self.corrections]
        if self.trajectory_radius is not None:
            out.append(f"current trajectory radius: {self.trajectory_radius * 1e6:.3f} um")
        if self.predicted_radius is not None:
            out.append(f"predicted radius after correction: {self.predicted_radius * 1e6:.3f} um")
        return out


def correction_report(r: FitResult, problem: FitProblem | None = None,
                      min_significance: float = 0.0) -> CorrectionReport:
    """Signed corrections that undo a fitted misalignment.

    Components whose magnitude does not exceed ``min_significance`` times
    their uncertainty are omitted (exact zeros are always omitted). With the
    originating ``problem`` the report also gives the largest centroid
    excursion of the fitted trajectory and the 1-sigma radius expected
    after correction.
    """
    if not r.converged:
        raise ValueError("corrections need a converged fit")
    if not isinstance(r.params, MisalignmentParams):
        raise ValueError("corrections apply to misalignment fits only")
    names = ("dx", "dy", "dtheta_x", "dtheta_y")
    units = ("um", "um", "urad", "urad")
    sig = r.sigma
    out = []
    for name, unit, v, s in zip(names, units, r.params.as_array(), sig):
        if v == 0.0 or abs(v) <= min_significance * s:
            continue
        out.append(Correction(name, -v, unit, -v * 1e6))
    traj = pred = None
    if problem is not None:
        phases = r.extras.get("phases", problem.phases())
        wv = _wv_array(problem.pre, problem.eta, phases)
        rx, ry = centroid_model(r.params, problem.geometry, wv)
        traj = float(np.max(np.hypot(rx, ry)))
        ax, ay = design_rows(problem.geometry, wv)
        cov = r.covariance
        var = (np.einsum("ij,jk,ik->i", ax, cov, ax) + np.einsum("ij,jk,ik->i", ay, cov, ay))
        pred = float(np.sqrt(np.max(var)))
    return CorrectionReport(out, traj, pred)


def corrected(m: MisalignmentParams, r: FitResult) -> MisalignmentParams:
    """Misalignment left after applying the corrections of ``r`` to ``m``."""
    return m - r.params
