import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from wvlab.errors import DecompositionError, GridError
from wvlab.pointer import (
    GaussianPointer, TwoLevelPointer, apply_shift, canonical_observable,
    expectation, gaussian_matrix_element, gaussian_overlap, gaussian_span,
    grid_from_gaussian, grid_variance, make_grid, orthogonal_decompose,
    sample_gaussian,
)
from wvlab.qstate import Ket


def test_canonical_observable_aliases():
    assert canonical_observable("q") == "Q"
    assert canonical_observable("theta") == "Theta"
    with pytest.raises(ValueError):
        canonical_observable("energy")


def test_gaussian_moments_on_grid():
    p = GaussianPointer(0.3, -1.1, 0.7)
    g = grid_from_gaussian(p, n=2048)
    assert np.isclose(expectation(g, "Q"), 0.3, atol=1e-12)
    assert np.isclose(expectation(g, "P"), -1.1, atol=1e-12)
    assert np.isclose(grid_variance(g, "Q"), 0.49, rtol=1e-10)
    assert np.isclose(grid_variance(g, "P"), 1 / (4 * 0.49), rtol=1e-10)


@settings(max_examples=50, deadline=None)
@given(st.floats(-3, 3), st.floats(-2, 2), st.floats(0.3, 2.0))
def test_overlap_closed_form_matches_quadrature(dq, dp, width):
    chi = GaussianPointer(0.0, 0.0, width)
    chi2 = apply_shift(chi, dq, dp)
    q = make_grid(0.5 * dq, 14 * width + abs(dq), 4096)
    a, b = sample_gaussian(chi, q), sample_gaussian(chi2, q)
    assert abs(a.inner(b) - gaussian_overlap(chi, chi2)) < 1e-11


@settings(max_examples=30, deadline=None)
@given(st.floats(-2, 2), st.floats(-1.5, 1.5))
def test_matrix_elements_match_quadrature(dq, dp):
    chi = GaussianPointer(0.2, 0.1, 0.8)
    chi2 = apply_shift(chi, dq, dp)
    q = make_grid(0.2 + 0.5 * dq, 12, 4096)
    a, b = sample_gaussian(chi, q), sample_gaussian(chi2, q)
    qa = a.as_ket().amplitudes
    q_elem = np.vdot(qa, b.q_operator()(b.as_ket().amplitudes))
    p_elem = np.vdot(qa, b.p_operator()(b.as_ket().amplitudes))
    assert abs(q_elem - gaussian_matrix_element(chi, chi2, "Q")) < 1e-10
    assert abs(p_elem - gaussian_matrix_element(chi, chi2, "P")) < 1e-10


def test_mismatched_widths_rejected():
    with pytest.raises(ValueError):
        gaussian_overlap(GaussianPointer(width=1.0), GaussianPointer(width=1.1))


def test_grid_guards():
    with pytest.raises(GridError):
        make_grid(0.0, 5.0, 1000)
    with pytest.raises(GridError):
        sample_gaussian(GaussianPointer(4.0, 0.0, 1.0), make_grid(0.0, 6.0, 1024))
    with pytest.raises(GridError):
        sample_gaussian(GaussianPointer(0.0, 200.0, 1.0), make_grid(0.0, 12.0, 256))
    with pytest.raises(GridError):
        grid_from_gaussian(GaussianPointer(0.0, 0.0, 1.0), extent=5.0)


@settings(max_examples=50, deadline=None)
@given(st.floats(0.01, 3.0), st.floats(-math.pi, math.pi))
def test_two_level_decomposition_reconstructs(dtheta, phase):
    chi = TwoLevelPointer()
    rot = TwoLevelPointer.rotated(dtheta).as_ket() * complex(math.cos(phase), math.sin(phase))
    d = orthogonal_decompose(chi, rot)
    assert np.isclose(d.eta, math.cos(dtheta / 2))
    assert np.isclose(d.epsilon, math.tan(dtheta / 2))
    assert np.isclose(d.eta ** 2 * (1 + d.epsilon ** 2), 1.0)
    assert abs(chi.as_ket().inner(d.chi_perp)) < 1e-12
    back = d.reconstruct() * complex(math.cos(d.global_phase), math.sin(d.global_phase))
    assert np.allclose(back.amplitudes, rot.amplitudes)


def test_decomposition_of_identical_states():
    chi = TwoLevelPointer()
    d = orthogonal_decompose(chi, chi)
    assert d.eta == 1.0 and d.epsilon == 0.0
    assert abs(chi.as_ket().inner(d.chi_perp)) < 1e-15
    assert np.isclose(d.chi_perp.norm, 1.0)


def test_decomposition_of_orthogonal_states_raises():
    with pytest.raises(DecompositionError):
        orthogonal_decompose(Ket((2,), np.array([1, 0])), Ket((2,), np.array([0, 1])))


def test_decomposition_requires_normalized_input():
    with pytest.raises(ValueError):
        orthogonal_decompose(Ket((2,), np.array([1, 0])), Ket((2,), np.array([1, 1])))


def test_polarization_angles():
    # rotation by dtheta about y-axis of the Bloch sphere tilts <sigma_x> to sin(dtheta)
    p = TwoLevelPointer.rotated(0.3)
    assert np.isclose(expectation(p, "Theta"), 0.3)
    assert np.isclose(expectation(p, "Upsilon"), 0.0)
    circ = TwoLevelPointer(math.cos(0.1), 1j * math.sin(0.1))
    assert np.isclose(expectation(circ, "Upsilon"), -0.2)


@settings(max_examples=40, deadline=None)
@given(st.floats(-4, 4), st.floats(-3, 3), st.floats(0.2, 2.0))
def test_gaussian_span_is_exact(dq, dp, width):
    chi = GaussianPointer(0.0, 0.0, width)
    chi2 = GaussianPointer(dq, dp, width)
    if abs(gaussian_overlap(chi, chi2)) < 1e-6:
        return
    before, after, ops, (eta, eps, gamma) = gaussian_span(chi, chi2)
    assert np.isclose(eta, abs(gaussian_overlap(chi, chi2)))
    assert np.isclose(after.norm2, 1.0)
    # expectation values inside the span agree with the closed forms
    a = after.amplitudes
    assert np.isclose(np.vdot(a, ops["Q"] @ a).real, dq, atol=1e-9 * max(1, width))
    assert np.isclose(np.vdot(a, ops["P"] @ a).real, dp, atol=1e-9 / width)
