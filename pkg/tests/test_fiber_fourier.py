import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from maglab.cohomology import theorem_B_model
from maglab.fiber_fourier import (
    AliasingWarning, BandOverflowError, FourierField, HypothesisViolation, SMGrid, adjointness_residual,
    apply_eta_minus, apply_eta_plus, apply_X, apply_X_lambda, apply_X_lambda_direct, energy_inequality_check,
    mode_locality_residual, project_modes, random_band_field, random_section, random_single_mode,
    recurrence_diagnostics, refinement_tolerance,
)
from maglab.geometry import SurfaceModel

CONSTANT = SurfaceModel.constant()


@pytest.fixture(scope="module")
def grids():
    return SMGrid.build(CONSTANT, 8, 16), SMGrid.build(CONSTANT, 16, 16)


def test_grid_quadrature(grids):
    for g in grids:
        assert g.weights.sum() == pytest.approx(1.0)
        assert g.area == pytest.approx(4 * np.pi, rel=1e-3)
        assert g.pairing_residual < 1e-12


def test_mode_columns(grids):
    g = grids[0]
    assert list(g.modes) == list(range(-8, 8))
    with pytest.raises(BandOverflowError):
        g.column(8)


@settings(max_examples=20)
@given(arrays(np.float64, (2, 7), elements=st.floats(-1, 1)))
def test_samples_and_modes_round_trip(coef):
    g = SMGrid.build(CONSTANT, 4, 16)
    c = np.zeros((g.size, 16), dtype=complex)
    c[:, g.column(-3):g.column(4)] = (coef[0] + 1j * coef[1])[None, :]
    f = FourierField(g, c)
    back = project_modes(g, f.samples())
    assert np.abs(back.coeffs - c).max() < 1e-12


def test_aliasing_warning(grids):
    g = grids[0]
    samples = np.cos(8 * g.thetas)[None, :].repeat(g.size, axis=0)
    with pytest.warns(AliasingWarning):
        project_modes(g, samples)


def test_band_overflow_guard(grids):
    g = grids[0]
    f = g.field_from_modes({7: np.ones(g.size)})
    with pytest.raises(BandOverflowError):
        apply_eta_plus(f)


@settings(max_examples=15)
@given(st.integers(0, 4), st.floats(0.0, 0.6), st.floats(0.0, 2 * np.pi), st.integers(0, 7))
def test_sections_transform_with_fiber_rotation(n, r, a, k):
    sec = random_section(CONSTANT, n, np.random.default_rng(n), cover=2 * np.arctanh(0.95))
    z = r * np.exp(1j * a)
    gam = CONSTANT.group.generators[k]
    w = complex(gam(z))
    if abs(w) > 0.95:
        return
    phase = np.exp(-1j * n * np.angle(gam.derivative(z)))
    assert abs(sec.evaluate(np.array([w]))[0][0] - sec.evaluate(np.array([z]))[0][0] * phase) < 1e-9


def test_section_refuses_points_beyond_cover():
    sec = random_section(CONSTANT, 1, np.random.default_rng(1))
    with pytest.raises(ValueError):
        sec.evaluate(np.array([0.95]))


def test_eta_operators_shift_modes(grids):
    g = grids[0]
    f = random_single_mode(CONSTANT, 2, np.random.default_rng(0)).on_grid(g)
    assert set(apply_eta_plus(f).support(1e-14)) == {3}
    assert set(apply_eta_minus(f).support(1e-14)) == {1}
    assert mode_locality_residual(f, 2) < 1e-20


def test_adjointness_converges(grids):
    rng = np.random.default_rng(4)
    a = random_band_field(CONSTANT, 3, rng)
    b = random_band_field(CONSTANT, 3, rng)
    res = [abs(adjointness_residual(a.on_grid(g), b.on_grid(g))) / (a.on_grid(g).norm() * b.on_grid(g).norm())
           for g in grids]
    tau, order = refinement_tolerance(*res)
    assert res[0] < tau and order > 1.8


def test_x_matches_analytic_transport(grids):
    fld = random_band_field(CONSTANT, 2, np.random.default_rng(5))
    err = []
    for g in grids:
        exact = fld.x_lambda_exact(g, 0.3)
        err.append((apply_X_lambda(fld.on_grid(g), 0.3) - exact).norm() / exact.norm())
    assert err[1] < err[0] / 3.5


@pytest.mark.parametrize("lam", [0.0, 0.2])
def test_direct_assembly_agrees_with_mode_formula(grids, lam):
    f = random_band_field(CONSTANT, 4, np.random.default_rng(6)).on_grid(grids[0])
    assert (apply_X_lambda_direct(f, lam) - apply_X_lambda(f, lam)).norm() < 1e-12 * f.norm()


def test_x_is_sum_of_eta(grids):
    f = random_band_field(CONSTANT, 2, np.random.default_rng(7)).on_grid(grids[0])
    assert (apply_X(f) - apply_eta_plus(f) - apply_eta_minus(f)).norm() < 1e-14 * apply_X(f).norm()


def test_real_fields_stay_real(grids):
    f = random_band_field(CONSTANT, 3, np.random.default_rng(8)).on_grid(grids[0])
    assert f.reality_defect() < 1e-12
    assert apply_X(f).reality_defect() < 1e-12


@pytest.mark.parametrize("n", [0, 3])
def test_energy_inequality_single_field(grids, n):
    fld = random_single_mode(CONSTANT, n, np.random.default_rng(9 + n))
    s = [energy_inequality_check(fld.on_grid(g), n, 0.5) for g in grids]
    tau = 2 * abs(s[0] - s[1])
    assert s[0] >= -max(tau, 1e-12)


def test_energy_inequality_rejects_negative_modes(grids):
    with pytest.raises(ValueError):
        energy_inequality_check(grids[0].zeros(), -1)


def test_recurrence_gates(grids):
    g = grids[0]
    f = random_band_field(CONSTANT, 3, np.random.default_rng(10)).on_grid(g)
    with pytest.raises(HypothesisViolation, match="A-lambda"):
        recurrence_diagnostics(f, 1, 0.9, 0.0)
    with pytest.raises(HypothesisViolation, match="homogeneous"):
        recurrence_diagnostics(f, 1, 0.3, 0.0, precheck_tolerance=1e-6)
    gb = SMGrid.build(theorem_B_model(), 4, 16)
    with pytest.raises(HypothesisViolation, match="F constant"):
        recurrence_diagnostics(gb.zeros(), 1, 0.1, 0.0)


def test_no_warning_for_band_limited_fields(grids):
    g = grids[0]
    f = random_band_field(CONSTANT, 3, np.random.default_rng(11)).on_grid(g)
    with warnings.catch_warnings():
        warnings.simplefilter("error", AliasingWarning)
        project_modes(g, f.samples())
