import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from maglab.cohomology import (
    OneForm, anosov_gate, estimate_c, exact_form, find_closed_orbit, flip_average_check, fourier_support_check,
    harmonic_like_form, hypercycle_period, lambda_zero_bound, normalize_curvature, solve_transport,
    theorem_B_experiment, theorem_B_model,
)
from maglab.fiber_fourier import HypothesisViolation, SMGrid, random_band_field
from maglab.flow import FlowParams
from maglab.geometry import SurfaceModel

CONSTANT = SurfaceModel.constant()
PERTURBED = SurfaceModel.perturbed()


@pytest.fixture(scope="module")
def grid():
    return SMGrid.build(CONSTANT, 8, 16)


@pytest.mark.parametrize("lam", [0.0, 0.3])
def test_closed_orbit_period_matches_hypercycle(lam):
    o = find_closed_orbit(FlowParams(lam, CONSTANT), (1,))
    assert o.closing_error < 1e-9
    assert o.period == pytest.approx(hypercycle_period(CONSTANT.group.generators[1], lam), rel=1e-8)


def test_theorem_a_gate_names_hypothesis():
    with pytest.raises(HypothesisViolation, match="2lambda\\^2\\+K"):
        anosov_gate(CONSTANT, 0.75)
    anosov_gate(CONSTANT, 0.7)


def test_solver_gate_names_hypothesis(grid):
    f = random_band_field(CONSTANT, 2, np.random.default_rng(0)).x_lambda_exact(grid, 0.8)
    with pytest.raises(HypothesisViolation, match="max\\{\\(N\\+1\\),2\\}"):
        solve_transport(f, 0.8, 5, margin_N=1)


def test_coboundary_is_recovered(grid):
    g_true = random_band_field(CONSTANT, 2, np.random.default_rng(1))
    f = g_true.x_lambda_exact(grid, 0.3)
    sol = solve_transport(f, 0.3, 5, margin_N=3)
    truth = g_true.on_grid(grid)
    truth.coeffs[:, grid.column(0)] -= truth.mean()
    assert (sol.g - truth).norm() < 0.05 * truth.norm()
    assert sol.tail(3) < 0.01 * truth.norm()
    assert abs(sol.g.mean()) < 1e-12


def test_support_check_flags_tail(grid):
    g_true = random_band_field(CONSTANT, 3, np.random.default_rng(2))
    sol = solve_transport(g_true.x_lambda_exact(grid, 0.0), 0.0, 5)
    rep = fourier_support_check(sol, 2, 1e-6)
    assert not rep["pass"]
    assert 3 in rep["offending"] or -3 in rep["offending"]


def test_closed_form_periods():
    form = harmonic_like_form(CONSTANT, (1.0, -0.5, 0.25, 0.0))
    for row in form.pairing_periods().values():
        assert row["error"] < 1e-9
    assert not form.is_exact
    assert exact_form(CONSTANT).is_exact


@settings(max_examples=10)
@given(st.floats(0.0, 0.15), st.floats(0.0, 2 * np.pi), st.integers(0, 7))
def test_multivalued_primitive_shifts_by_period(r, a, k):
    # near side k+4 both z and g_k z stay close to the octagon, where the cover is complete
    form = OneForm(CONSTANT, None, (0.7, 0.1, -0.3, 0.2))
    z = CONSTANT.group.side_midpoint(k + 4) * 0.9 + r * np.exp(1j * a)
    gz = complex(CONSTANT.group.generators[k](z))
    assert form.multivalued(gz) - form.multivalued(z) == pytest.approx(form.chi((k,)), abs=1e-9)


def test_flip_average_and_k():
    out = flip_average_check(CONSTANT, 0.3)
    assert out["form_average"] < 1e-12
    assert out["k"] == pytest.approx(-1.0 / (1.0 - 0.09))


def test_normalize_curvature():
    m, factor = normalize_curvature(PERTURBED, -2.0)
    assert m.curvature_bounds[1] == pytest.approx(-2.0, rel=1e-9)
    assert factor < 1.0
    same, one = normalize_curvature(theorem_B_model())
    assert one == 1.0


def test_lambda_zero_bound():
    lam0 = lambda_zero_bound(1.0, 1.0, 1)
    assert lam0 == pytest.approx(np.sqrt(0.25))
    assert 1.0 - 4 * lam0 ** 2 >= -1e-12


def test_c_estimate_dominates_field_square():
    est = estimate_c(theorem_B_model(), fields=5)
    assert est["c"] >= 1.0
    assert est["c"] <= est["sup_bound"] * (1 + 1e-9)


def test_theorem_b_refuses_large_lambda():
    with pytest.raises(HypothesisViolation):
        theorem_B_experiment(theorem_B_model(), lam=0.6, fields=5)


def test_theorem_b_needs_constant_curvature():
    with pytest.raises(ValueError):
        theorem_B_experiment(PERTURBED, lam=0.1, fields=5)
