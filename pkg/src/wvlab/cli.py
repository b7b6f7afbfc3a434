"""
Command-line entry point.

Subcommands: ``scan-wv`` (weak-value parameter maps), ``simulate``
(synthetic centroid trajectory from a config file), ``fit`` (misalignment
or beam parameters from a trajectory) and ``verify`` (oracle suites).

Exit codes: 0 ok, 1 verification failure, 2 invalid input, 3 unidentifiable
or insufficient data, 4 fit did not converge.
"""
from __future__ import annotations

import argparse
import configparser
import csv
import io
import json
import math
import re
import sys

import numpy as np

from . import csvio
from .alignfit import FitProblem, correction_report, fit_misalignment
from .beamlab import BeamGeometry, MisalignmentParams, TrajectorySample, simulate_scan
from .errors import OrthogonalBoundaryError, UnidentifiableError
from .verify import SUITES, run_suite
from .weakvalue import PreSelection, eta_from_visibility, intensity, wv_finite

EXIT_OK = 0
EXIT_VERIFY_FAILED = 1
EXIT_INPUT = 2
EXIT_UNIDENTIFIABLE = 3
EXIT_NOT_CONVERGED = 4

DEFAULT_SEED = 0

FIT_MODES = {"linear": "phase_known_linear", "nonlinear": "phase_unknown_nonlinear",
             "reverse": "reverse_beam"}


class ConfigError(ValueError):
    """Invalid simulation config; the message names file, line and field."""


# ---------------------------------------------------------------- scan-wv

SCAN_COLUMNS = ("phi_rad", "tan_alpha", "eta", "re_wv", "im_wv", "intensity", "pole")


def scan_rows(tan_alphas, etas, phi_steps: int):
    phis = np.linspace(0.0, 2 * math.pi, phi_steps, endpoint=False)
    for t in tan_alphas:
        for eta in etas:
            for phi in phis:
                pre = PreSelection.from_tan(t, phi)
                try:
                    wv, pole = wv_finite(pre, eta), 0
                except OrthogonalBoundaryError:
                    wv, pole = complex(math.nan, math.nan), 1
                yield (phi, t, eta, wv.real, wv.imag, intensity(pre, eta), pole)


def cmd_scan_wv(args) -> int:
    if args.phi_steps < 1:
        return _input_error("--phi-steps must be positive")
    for t in args.tan_alpha:
        if not (t >= 0 and math.isfinite(t)):
            return _input_error(f"--tan-alpha {t} must be finite and non-negative")
    for e in args.eta:
        if not 0.0 <= e <= 1.0:
            return _input_error(f"--eta {e} must lie in [0, 1]")
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SCAN_COLUMNS)
    for row in scan_rows(args.tan_alpha, args.eta, args.phi_steps):
        w.writerow([csvio.fmt(v) for v in row[:-1]] + [row[-1]])
    _emit(buf.getvalue(), args.out)
    return EXIT_OK


# ---------------------------------------------------------------- config

CONFIG_SCHEMA = {
    "geometry": {"wavelength_nm": True, "w0_um": True, "z_m": True},
    "preselection": {"tan_alpha": True, "eta": False, "visibility": False},
    "couplings": {"dx_um": False, "dy_um": False, "dtheta_x_urad": False,
                  "dtheta_y_urad": False},
    "scan": {"phi_start_rad": False, "phi_end_rad": False, "steps": True,
             "phase_known": False},
    "noise": {"sigma_um": False, "seed": False},
    "output": {"trajectory": False, "refs": False},
}


def _line_of(text: str, section: str, key: str | None = None) -> int | None:
    current = None
    for i, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        m = re.fullmatch(r"\[([^\]]+)\]", stripped)
        if m:
            current = m.group(1).strip()
            if key is None and current == section:
                return i
            continue
        if key is not None and current == section:
            if re.match(rf"{re.escape(key)}\s*[=:]", stripped):
                return i
    return None


def load_config(text: str, source: str = "<config>") -> dict:
    """Validate config text and return typed values in SI units.

    Raises
    ------
    ConfigError
        With ``source:line: [section] key: problem`` diagnostics.
    """
    cp = configparser.ConfigParser()
    try:
        cp.read_string(text, source=source)
    except configparser.Error as e:
        raise ConfigError(f"{source}: {e}") from None

    def fail(section, key, msg):
        line = _line_of(text, section, key)
        where = f"{source}:{line}" if line else source
        field = f"[{section}] {key}" if key else f"[{section}]"
        raise ConfigError(f"{where}: {field}: {msg}")

    for section in cp.sections():
        if section not in CONFIG_SCHEMA:
            fail(section, None, f"unknown section; expected one of {sorted(CONFIG_SCHEMA)}")
        for key in cp[section]:
            if key not in CONFIG_SCHEMA[section]:
                fail(section, key, f"unknown field; expected one of {sorted(CONFIG_SCHEMA[section])}")
    for section, fields in CONFIG_SCHEMA.items():
        for key, required in fields.items():
            if required and not cp.has_option(section, key):
                line = _line_of(text, section)
                where = f"{source}:{line}" if line else source
                raise ConfigError(f"{where}: [{section}] {key}: missing required field")

    def num(section, key, default=None, cast=float):
        if not cp.has_option(section, key):
            return default
        raw = cp.get(section, key)
        try:
            v = cast(raw)
        except ValueError:
            fail(section, key, f"expected a number, got {raw!r}")
        if cast is float and not math.isfinite(v):
            fail(section, key, "must be finite")
        return v

    cfg = {}
    wl, w0, z = num("geometry", "wavelength_nm"), num("geometry", "w0_um"), num("geometry", "z_m")
    for key, v in (("wavelength_nm", wl), ("w0_um", w0), ("z_m", z)):
        if v <= 0:
            fail("geometry", key, "must be positive")
    cfg["geometry"] = BeamGeometry(wl * 1e-9, w0 * 1e-6, z)

    t = num("preselection", "tan_alpha")
    if t < 0:
        fail("preselection", "tan_alpha", "must be non-negative")
    has_eta = cp.has_option("preselection", "eta")
    has_vis = cp.has_option("preselection", "visibility")
    if has_eta == has_vis:
        fail("preselection", "eta" if has_eta else "tan_alpha",
             "give exactly one of eta or visibility")
    pre = PreSelection.from_tan(t)
    if has_eta:
        eta = num("preselection", "eta")
        if not 0.0 < eta <= 1.0:
            fail("preselection", "eta", "must lie in (0, 1]")
    else:
        v = num("preselection", "visibility")
        if t == 0.0:
            fail("preselection", "visibility", "undefined for tan_alpha = 0")
        eta = eta_from_visibility(v, pre)
        if not 0.0 < eta <= 1.0:
            fail("preselection", "visibility", f"implies eta={eta:.6g} outside (0, 1]")
    cfg["tan_alpha"], cfg["eta"] = t, eta

    vals = [num("couplings", k, 0.0) for k in ("dx_um", "dy_um", "dtheta_x_urad", "dtheta_y_urad")]
    try:
        cfg["misalignment"] = MisalignmentParams.from_um_urad(vals)
    except ValueError as e:
        fail("couplings", "dtheta_x_urad" if abs(vals[2]) > abs(vals[3]) else "dtheta_y_urad", str(e))

    steps = num("scan", "steps", cast=int)
    if steps < 2:
        fail("scan", "steps", "must be at least 2")
    cfg["phis"] = np.linspace(num("scan", "phi_start_rad", 0.0),
                              num("scan", "phi_end_rad", 2 * math.pi), steps)
    try:
        cfg["phase_known"] = cp.getboolean("scan", "phase_known", fallback=True)
    except ValueError:
        fail("scan", "phase_known", "expected true or false")

    sigma = num("noise", "sigma_um", 0.0)
    if sigma < 0:
        fail("noise", "sigma_um", "must be non-negative")
    cfg["noise_sigma"] = sigma * 1e-6
    cfg["seed"] = num("noise", "seed", None, cast=int)
    cfg["trajectory"] = cp.get("output", "trajectory", fallback=None)
    cfg["refs"] = cp.get("output", "refs", fallback=None)
    return cfg


# ---------------------------------------------------------------- simulate

def _refs_path(traj_path: str) -> str:
    return re.sub(r"\.csv$", "", traj_path) + ".refs.json"


def cmd_simulate(args) -> int:
    try:
        with open(args.config, encoding="utf-8") as f:
            text = f.read()
    except OSError as e:
        return _input_error(f"{args.config}: {e.strerror}")
    try:
        cfg = load_config(text, args.config)
    except ConfigError as e:
        return _input_error(str(e))
    out = args.out or cfg["trajectory"]
    if out is None:
        return _input_error("no output path: pass --out or set [output] trajectory")
    refs_out = args.refs_out or cfg["refs"] or _refs_path(out)
    seed = args.seed if args.seed is not None else (
        cfg["seed"] if cfg["seed"] is not None else DEFAULT_SEED)
    scan = simulate_scan(cfg["misalignment"], cfg["geometry"], PreSelection.from_tan(cfg["tan_alpha"]),
                         cfg["eta"], cfg["phis"], noise_sigma=cfg["noise_sigma"], seed=seed)
    samples = scan.samples
    if not cfg["phase_known"]:
        samples = [TrajectorySample(math.nan, s.rx, s.ry, s.intensity, s.sigma) for s in samples]
    scan.meta["phase_known"] = cfg["phase_known"]
    csvio.write_trajectory(out, samples)
    csvio.dump_json(csvio.refs_dict(scan), refs_out)
    return EXIT_OK


# ---------------------------------------------------------------- fit

def _fit_error(kind: str, message: str, out, code: int) -> int:
    _emit(csvio.dump_json({"error": kind, "message": message}), out)
    print(f"error: {message}", file=sys.stderr)
    return code


def cmd_fit(args) -> int:
    try:
        samples = csvio.read_trajectory(args.traj)
    except (OSError, csvio.CSVFormatError) as e:
        return _input_error(f"{args.traj}: {e}")
    refs = {}
    if args.refs:
        try:
            with open(args.refs, encoding="utf-8") as f:
                refs = json.load(f)
        except (OSError, json.JSONDecodeError) as e:
            return _input_error(f"{args.refs}: {e}")
    try:
        geo = refs.get("geometry", {})
        g = BeamGeometry(
            (args.wavelength_nm or geo["wavelength_nm"]) * 1e-9,
            (args.w0_um or geo["w0_um"]) * 1e-6,
            args.z_m or geo["z_m"])
        t = args.tan_alpha if args.tan_alpha is not None else refs["tan_alpha"]
        eta = args.eta if args.eta is not None else refs["eta"]
    except KeyError as e:
        return _input_error(f"missing {e.args[0]!r}: supply it in --refs or by flag")
    except ValueError as e:
        return _input_error(str(e))
    known = None
    if args.mode == "reverse":
        vals = args.known or refs.get("misalignment_um_urad")
        if vals is None:
            return _input_error("reverse mode needs --known or misalignment in --refs")
        known = MisalignmentParams.from_um_urad(vals)
    problem = FitProblem(samples, g, t, eta, mode=FIT_MODES[args.mode], known=known,
                         weighting=args.weighting, phase_direction=args.phase_direction)
    try:
        result = fit_misalignment(problem)
    except UnidentifiableError as e:
        return _fit_error("unidentifiable", str(e), args.out, EXIT_UNIDENTIFIABLE)
    doc = csvio.fit_result_dict(result)
    if not result.converged:
        doc["error"] = "not_converged"
        _emit(csvio.dump_json(doc), args.out)
        print(f"error: fit did not converge ({result.message})", file=sys.stderr)
        return EXIT_NOT_CONVERGED
    if args.mode != "reverse":
        doc["corrections"] = correction_report(result, problem).lines()
    _emit(csvio.dump_json(doc), args.out)
    return EXIT_OK


# ---------------------------------------------------------------- verify

def cmd_verify(args) -> int:
    checks = run_suite(args.suite, seed=args.seed)
    for c in checks:
        print(c.line())
    return EXIT_OK if all(c.passed for c in checks) else EXIT_VERIFY_FAILED


# ---------------------------------------------------------------- plumbing

def _emit(text: str, path) -> None:
    if path in (None, "-"):
        sys.stdout.write(text)
    else:
        with open(path, "w", encoding="utf-8", newline="") as f:
            f.write(text)


def _input_error(msg: str) -> int:
    print(f"error: {msg}", file=sys.stderr)
    return EXIT_INPUT


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None,
                        help=f"random seed (default: config value, else {DEFAULT_SEED})")

    parser = argparse.ArgumentParser(
        prog="wvlab", description="Weak-value interferometer simulation and alignment fitting")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("scan-wv", parents=[common],
                       help="weak value and intensity over phase for given tan(alpha) and eta")
    p.add_argument("--tan-alpha", type=float, nargs="+", required=True)
    p.add_argument("--eta", type=float, nargs="+", default=[1.0])
    p.add_argument("--phi-steps", type=int, default=256)
    p.add_argument("--out", default=None, help="CSV path (default: stdout)")
    p.set_defaults(func=cmd_scan_wv)

    p = sub.add_parser("simulate", parents=[common],
                       help="synthetic centroid trajectory from an INI config")
    p.add_argument("--config", required=True)
    p.add_argument("--out", default=None, help="trajectory CSV path")
    p.add_argument("--refs-out", default=None,
                   help="reference JSON path (default: <out>.refs.json)")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("fit", parents=[common], help="fit a trajectory CSV")
    p.add_argument("--traj", required=True)
    p.add_argument("--refs", default=None, help="reference JSON written by simulate")
    p.add_argument("--mode", choices=sorted(FIT_MODES), default="linear")
    p.add_argument("--out", default=None, help="result JSON path (default: stdout)")
    p.add_argument("--tan-alpha", type=float, default=None)
    p.add_argument("--eta", type=float, default=None)
    p.add_argument("--wavelength-nm", type=float, default=None)
    p.add_argument("--w0-um", type=float, default=None)
    p.add_argument("--z-m", type=float, default=None)
    p.add_argument("--known", type=float, nargs=4, default=None,
                   metavar=("DX_UM", "DY_UM", "DTHETA_X_URAD", "DTHETA_Y_URAD"),
                   help="known misalignment for --mode reverse")
    p.add_argument("--weighting", choices=("auto", "none", "intensity"), default="auto")
    p.add_argument("--phase-direction", type=int, choices=(1, -1), default=1,
                   help="sign of the phase step between samples (nonlinear mode)")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("verify", parents=[common], help="run oracle suites")
    p.add_argument("--suite", choices=SUITES + ("all",), default="all")
    p.set_defaults(func=cmd_verify)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
