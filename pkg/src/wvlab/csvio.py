"""CSV and JSON interchange for trajectories, references and fit results."""
from __future__ import annotations

import csv
import io
import json

import numpy as np

from .beamlab import BeamGeometry, MisalignmentParams, ScanData, TrajectorySample

TRAJECTORY_HEADER = ("phi_rad", "Rx_um", "Ry_um", "intensity", "sigma_um")


class CSVFormatError(ValueError):
    pass


def fmt(x: float) -> str:
    """17 significant digits, enough to round-trip any double."""
    return "%.17g" % float(x)


def samples_to_rows(samples) -> np.ndarray:
    """``(n, 5)`` array in file units (rad, um, um, a.u., um)."""
    return np.array([[s.phi, s.rx * 1e6, s.ry * 1e6, s.intensity, s.sigma * 1e6]
                     for s in samples], dtype=float).reshape(-1, 5)


def rows_to_samples(rows) -> list:
    return [TrajectorySample(phi, rx * 1e-6, ry * 1e-6, inten, sig * 1e-6)
            for phi, rx, ry, inten, sig in np.asarray(rows, dtype=float)]


def rows_to_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(TRAJECTORY_HEADER)
    for row in np.asarray(rows, dtype=float).reshape(-1, 5):
        w.writerow([fmt(v) for v in row])
    return buf.getvalue()


def trajectory_to_csv(samples) -> str:
    return rows_to_csv(samples_to_rows(samples))


def write_trajectory(path, samples) -> None:
    with open(path, "w", encoding="utf-8", newline="") as f:
        f.write(trajectory_to_csv(samples))


def parse_rows(text: str) -> np.ndarray:
    """Trajectory CSV text as an ``(n, 5)`` array in file units.

    ``rows_to_csv(parse_rows(text)) == text`` for any text this module wrote.

    Raises
    ------
    CSVFormatError
        Wrong header, wrong column count or an unparsable number; the
        message names the line.
    """
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or tuple(rows[0]) != TRAJECTORY_HEADER:
        raise CSVFormatError(f"line 1: expected header {','.join(TRAJECTORY_HEADER)}")
    out = []
    for lineno, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if len(row) != len(TRAJECTORY_HEADER):
            raise CSVFormatError(f"line {lineno}: expected 5 fields, got {len(row)}")
        try:
            out.append([float(v) for v in row])
        except ValueError as e:
            raise CSVFormatError(f"line {lineno}: {e}") from None
    return np.array(out, dtype=float).reshape(-1, 5)


def parse_trajectory(text: str) -> list:
    """Samples in SI units from trajectory CSV text."""
    rows = parse_rows(text)
    try:
        return rows_to_samples(rows)
    except ValueError as e:
        raise CSVFormatError(str(e)) from None


def read_trajectory(path) -> list:
    with open(path, encoding="utf-8", newline="") as f:
        return parse_trajectory(f.read())


def refs_dict(scan: ScanData) -> dict:
    """Sidecar reference data for a simulated scan."""
    g = scan.geometry
    return {
        "arm_a_centroid_um": [scan.arm_a[0] * 1e6, scan.arm_a[1] * 1e6],
        "arm_b_centroid_um": [scan.arm_b[0] * 1e6, scan.arm_b[1] * 1e6],
        "tan_alpha": scan.tan_alpha,
        "eta": scan.eta,
        "geometry": {"wavelength_nm": g.wavelength * 1e9, "w0_um": g.w0 * 1e6,
                     "z_m": g.detector_z, "zr_m": g.zr},
        "misalignment_um_urad": scan.misalignment.to_um_urad(),
        "noise_sigma_um": scan.noise_sigma * 1e6,
        "seed": scan.seed,
        **scan.meta,
    }


def geometry_from_refs(refs: dict) -> BeamGeometry:
    g = refs["geometry"]
    return BeamGeometry(g["wavelength_nm"] * 1e-9, g["w0_um"] * 1e-6, g["z_m"])


def misalignment_from_refs(refs: dict) -> MisalignmentParams:
    return MisalignmentParams.from_um_urad(refs["misalignment_um_urad"])


def fit_result_dict(r) -> dict:
    """JSON-ready dict of a :class:`~wvlab.alignfit.FitResult`."""
    base = {"converged": bool(r.converged), "iterations": int(r.iterations),
            "mode": r.mode, "message": r.message}
    if isinstance(r.params, MisalignmentParams):
        unit = np.full(4, 1e6)
        cov = r.covariance * np.outer(unit, unit)
        base.update({
            "params_um_urad": r.params.to_um_urad(),
            "sigma": list(r.sigma * 1e6),
            "covariance": [list(row) for row in cov],
            "residual_rms_um": r.residual_rms * 1e6,
        })
        if "phase_offset" in r.extras:
            base["phase_offset_rad"] = r.extras["phase_offset"]
            base["phase_scale_rad"] = r.extras["phase_scale"]
    else:
        base.update({
            "beam_parameters_m": {"zr": r.params["zr"], "z": r.params["z"]},
            "sigma": list(r.sigma),
            "covariance": [list(row) for row in r.covariance],
            "residual_rms_um": r.residual_rms * 1e6,
        })
    return json.loads(json.dumps(base, default=float))


def dump_json(obj, path=None) -> str:
    text = json.dumps(obj, indent=2, sort_keys=True) + "\n"
    if path is not None:
        with open(path, "w", encoding="utf-8", newline="") as f:
            f.write(text)
    return text
