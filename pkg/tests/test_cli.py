import csv
import io
import json
import math
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from wvlab import csvio
from wvlab.beamlab import TrajectorySample
from wvlab.cli import load_config, ConfigError, main

REFERENCE_CONFIG = """\
[geometry]
wavelength_nm = 780
w0_um = 500
z_m = 1.5

[preselection]
tan_alpha = 1.3323
eta = 0.9904

[couplings]
dx_um = 49
dy_um = 7
dtheta_x_urad = 12.7
dtheta_y_urad = 0.2

[scan]
phi_start_rad = 0
phi_end_rad = 6.283185307179586
steps = 64

[noise]
sigma_um = {sigma}
seed = 7
"""


def write_config(tmp_path, text, name="run.ini"):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


def simulate(tmp_path, sigma=0, extra_args=()):
    cfg = write_config(tmp_path, REFERENCE_CONFIG.format(sigma=sigma))
    out = str(tmp_path / "traj.csv")
    assert main(["simulate", "--config", cfg, "--out", out, *extra_args]) == 0
    return out, str(tmp_path / "traj.refs.json")


def read_rows(text):
    return list(csv.DictReader(io.StringIO(text)))


def test_scan_wv_reference_minimum(capsys):
    assert main(["scan-wv", "--tan-alpha", "1.3323", "--eta", "0.9904",
                 "--phi-steps", "256"]) == 0
    rows = read_rows(capsys.readouterr().out)
    assert len(rows) == 256
    low = min(rows, key=lambda r: float(r["re_wv"]))
    assert float(low["phi_rad"]) == math.pi
    assert abs(float(low["re_wv"]) + 2.3493) < 1e-4


def test_scan_wv_flags_pole(capsys):
    assert main(["scan-wv", "--tan-alpha", "1", "--eta", "1", "--phi-steps", "8"]) == 0
    rows = read_rows(capsys.readouterr().out)
    poles = [r for r in rows if r["pole"] == "1"]
    assert len(poles) == 1 and float(poles[0]["phi_rad"]) == math.pi
    assert poles[0]["re_wv"] == "nan"


def test_scan_wv_sweeps_grid(tmp_path):
    out = tmp_path / "map.csv"
    assert main(["scan-wv", "--tan-alpha", "0.5", "1.0", "1.5", "--eta", "1", "0.990", "0.936",
                 "--phi-steps", "16", "--out", str(out)]) == 0
    rows = read_rows(out.read_text())
    assert len(rows) == 3 * 3 * 16
    assert {r["eta"] for r in rows} == {"1", "0.98999999999999999", "0.93600000000000005"}


def test_scan_wv_rejects_bad_eta(capsys):
    assert main(["scan-wv", "--tan-alpha", "1", "--eta", "1.5"]) == 2


def test_simulate_writes_csv_and_refs(tmp_path):
    out, refs = simulate(tmp_path)
    text = open(out).read()
    assert text.startswith("phi_rad,Rx_um,Ry_um,intensity,sigma_um\n")
    assert "\r" not in text
    assert len(text.strip().split("\n")) == 65
    r = json.load(open(refs))
    assert r["tan_alpha"] == 1.3323 and r["eta"] == 0.9904
    assert np.allclose(r["arm_a_centroid_um"], [49 + 1.5 * 0.2, 7 - 1.5 * 12.7])


def test_simulate_is_byte_deterministic(tmp_path):
    a, _ = simulate(tmp_path, sigma=2)
    first = open(a, "rb").read()
    b, _ = simulate(tmp_path, sigma=2)
    assert open(b, "rb").read() == first
    c, _ = simulate(tmp_path, sigma=2, extra_args=("--seed", "8"))
    assert open(c, "rb").read() != first


def test_zero_misalignment_zero_noise(tmp_path):
    text = REFERENCE_CONFIG.format(sigma=0)
    for key in ("dx_um = 49", "dy_um = 7", "dtheta_x_urad = 12.7", "dtheta_y_urad = 0.2"):
        text = text.replace(key, key.split("=")[0] + "= 0")
    out = str(tmp_path / "z.csv")
    assert main(["simulate", "--config", write_config(tmp_path, text), "--out", out]) == 0
    for s in csvio.read_trajectory(out):
        assert s.rx == 0.0 and s.ry == 0.0


@pytest.mark.parametrize("edit,needle", [
    (("eta = 0.9904", "eta = 1.5"), ":8: [preselection] eta"),
    (("eta = 0.9904", "eta = 0.99\nvisibility = 0.95"), "exactly one"),
    (("steps = 64", "steps = 1"), ":19: [scan] steps"),
    (("w0_um = 500", "w0 = 500"), "[geometry] w0"),
    (("z_m = 1.5", "z_m = far"), ":4: [geometry] z_m: expected a number"),
    (("[noise]", "[noize]"), "unknown section"),
])
def test_config_errors_name_line_and_field(tmp_path, capsys, edit, needle):
    text = REFERENCE_CONFIG.format(sigma=0).replace(*edit)
    cfg = write_config(tmp_path, text)
    assert main(["simulate", "--config", cfg, "--out", str(tmp_path / "o.csv")]) == 2
    assert needle in capsys.readouterr().err


def test_config_visibility_derives_eta():
    text = REFERENCE_CONFIG.format(sigma=0).replace("eta = 0.9904", "visibility = 0.95099015907718742")
    cfg = load_config(text)
    assert np.isclose(cfg["eta"], 0.9904, rtol=1e-14)


def test_config_missing_required_field():
    text = REFERENCE_CONFIG.format(sigma=0).replace("tan_alpha = 1.3323\n", "")
    with pytest.raises(ConfigError, match=r"\[preselection\] tan_alpha: missing"):
        load_config(text)


def test_fit_round_trip(tmp_path, capsys):
    out, refs = simulate(tmp_path)
    capsys.readouterr()
    assert main(["fit", "--traj", out, "--refs", refs]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert np.allclose(doc["params_um_urad"], [49, 7, 12.7, 0.2], rtol=1e-9)
    assert len(doc["covariance"]) == 4 and len(doc["covariance"][0]) == 4
    for key in ("sigma", "residual_rms_um", "converged", "iterations", "mode"):
        assert key in doc
    assert doc["mode"] == "phase_known_linear"


def test_fit_truncated_csv_exit_3(tmp_path, capsys):
    out, refs = simulate(tmp_path)
    lines = open(out).read().split("\n")
    short = tmp_path / "short.csv"
    short.write_text("\n".join(lines[:4]) + "\n")
    capsys.readouterr()
    assert main(["fit", "--traj", str(short), "--refs", refs]) == 3
    doc = json.loads(capsys.readouterr().out)
    assert doc["error"] == "unidentifiable"
    assert "insufficient samples" in doc["message"]


def test_fit_reverse_mode(tmp_path, capsys):
    out, refs = simulate(tmp_path)
    capsys.readouterr()
    assert main(["fit", "--traj", out, "--refs", refs, "--mode", "reverse",
                 "--z-m", "3", "--w0-um", "300"]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert np.isclose(doc["beam_parameters_m"]["zr"], 1.0069207223044209, rtol=1e-6)
    assert np.isclose(doc["beam_parameters_m"]["z"], 1.5, rtol=1e-6)


def test_fit_nonlinear_mode_with_hidden_phases(tmp_path, capsys):
    text = REFERENCE_CONFIG.format(sigma=0).replace("steps = 64", "steps = 64\nphase_known = false")
    text = text.replace("phi_end_rad = 6.283185307179586", "phi_end_rad = 5")
    cfg = write_config(tmp_path, text)
    out = str(tmp_path / "hidden.csv")
    assert main(["simulate", "--config", cfg, "--out", out]) == 0
    assert all(math.isnan(s.phi) for s in csvio.read_trajectory(out))
    capsys.readouterr()
    assert main(["fit", "--traj", out, "--refs", str(tmp_path / "hidden.refs.json"),
                 "--mode", "nonlinear"]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert np.allclose(doc["params_um_urad"], [49, 7, 12.7, 0.2], rtol=1e-7)


def test_fit_non_convergence_exit_4(tmp_path, capsys, monkeypatch):
    import wvlab.alignfit as af
    monkeypatch.setattr(af, "MAX_ITER", 1)
    out, refs = simulate(tmp_path, sigma=2)
    capsys.readouterr()
    code = main(["fit", "--traj", out, "--refs", refs, "--mode", "reverse"])
    assert code == 4
    doc = json.loads(capsys.readouterr().out)
    assert doc["error"] == "not_converged"


def test_fit_bad_csv_header(tmp_path, capsys):
    bad = tmp_path / "bad.csv"
    bad.write_text("phi,x,y\n1,2,3\n")
    assert main(["fit", "--traj", str(bad), "--tan-alpha", "1", "--eta", "0.9",
                 "--wavelength-nm", "780", "--w0-um", "500", "--z-m", "1"]) == 2


def test_verify_visibility(capsys):
    assert main(["verify", "--suite", "visibility"]) == 0
    out = capsys.readouterr().out
    assert out.startswith("PASS visibility") and "0.950990" in out


def test_verify_mixed_wv_honors_seed(capsys):
    assert main(["verify", "--suite", "mixed-wv", "--seed", "3"]) == 0
    assert "PASS mixed-wv" in capsys.readouterr().out


def test_module_entry_point():
    r = subprocess.run([sys.executable, "-m", "wvlab", "verify", "--suite", "visibility"],
                       capture_output=True, text=True)
    assert r.returncode == 0 and "PASS" in r.stdout


finite = st.floats(allow_nan=False, allow_infinity=False, width=64)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.tuples(st.one_of(finite, st.just(math.nan)), finite, finite,
                          st.floats(0, 1e6), st.one_of(st.floats(0, 1e3), st.just(math.nan))),
                min_size=1, max_size=20))
def test_csv_round_trip_is_byte_identical(rows):
    samples = [TrajectorySample(p, x * 1e-6, y * 1e-6, i, s * 1e-6) for p, x, y, i, s in rows]
    first = csvio.trajectory_to_csv(samples)
    second = csvio.rows_to_csv(csvio.parse_rows(first))
    assert first == second
    # values survive to SI within one rounding of the unit conversion
    back = csvio.parse_trajectory(first)
    for a, b in zip(samples, back):
        assert b.rx == pytest.approx(a.rx, rel=1e-15)
        assert b.ry == pytest.approx(a.ry, rel=1e-15)


def test_csv_parse_errors_name_line():
    with pytest.raises(csvio.CSVFormatError, match="line 3"):
        csvio.parse_trajectory("phi_rad,Rx_um,Ry_um,intensity,sigma_um\n0,1,2,3,nan\n0,1,x,3,nan\n")
