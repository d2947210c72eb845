import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from maglab.flow import (
    FlowParams, IntegrationError, SMPoint, commutator_check, duality_matrix, flow_along_frame, flow_point,
    frame_at, geodesic_curvature_along, integrate, liouville_jacobian, magnetic_curvature_deviation,
    random_states, state_distance,
)
from maglab.geometry import SurfaceModel, hyperbolic_distance

CONSTANT = SurfaceModel.constant()
PERTURBED = SurfaceModel.perturbed()
points = st.builds(lambda r, a, t: SMPoint(r * np.exp(1j * a), t),
                   st.floats(0.0, 0.7), st.floats(0.0, 2 * np.pi), st.floats(0.0, 2 * np.pi))


def _circle_through(z1, z2, z3):
    a = np.array([[2 * (z2 - z1).real, 2 * (z2 - z1).imag], [2 * (z3 - z1).real, 2 * (z3 - z1).imag]])
    rhs = np.array([abs(z2) ** 2 - abs(z1) ** 2, abs(z3) ** 2 - abs(z1) ** 2])
    cx, cy = np.linalg.solve(a, rhs)
    c = complex(cx, cy)
    return c, abs(z1 - c)


def test_frame_at_origin():
    X, H, V = frame_at(FlowParams(0.0, CONSTANT), SMPoint(0j, 0.0))
    # metric factor at 0 is 2, so a unit vector has Euclidean length 1/2
    assert np.allclose(X, [0.5, 0.0, 0.0])
    assert np.allclose(H, [0.0, 0.5, 0.0])
    assert np.allclose(V, [0.0, 0.0, 1.0])


@settings(max_examples=30)
@given(points)
def test_duality_matrix_is_identity(p):
    for model in (CONSTANT, PERTURBED):
        assert np.abs(duality_matrix(model, p.as_state()) - np.eye(3)).max() < 1e-9


def test_fiber_flow_is_periodic():
    s = np.array([0.2, -0.1, 1.0])
    out = flow_along_frame(CONSTANT, s, (0.0, 0.0, 2 * np.pi), 1.0, 4)
    assert np.allclose(out[:2], s[:2]) and abs(out[2] - s[2] - 2 * np.pi) < 1e-12


def test_geodesic_from_origin_is_a_diameter():
    orbit = integrate(FlowParams(0.0, CONSTANT), SMPoint(0j, 0.0), 1.0)
    assert not orbit.transitions
    assert np.abs(orbit.states[:, 1]).max() < 1e-12
    end = complex(orbit.states[-1, 0], orbit.states[-1, 1])
    assert hyperbolic_distance(end) == pytest.approx(1.0, abs=1e-10)


def test_hypercycle_matches_euclidean_circle():
    orbit = integrate(FlowParams(0.5, CONSTANT), SMPoint(0j, 0.0), 0.9)
    assert not orbit.transitions
    z = orbit.states[:, 0] + 1j * orbit.states[:, 1]
    c, r = _circle_through(z[0], z[len(z) // 2], z[-1])
    assert np.abs(np.abs(z - c) - r).max() < 1e-9


@pytest.mark.parametrize("lam", [0.0, 0.5, 1.0])
def test_constant_geodesic_curvature(lam):
    orbit = integrate(FlowParams(lam, CONSTANT), SMPoint(0.1 + 0.2j, 0.7), 5.0)
    kg = geodesic_curvature_along(orbit)
    assert np.abs(kg - lam).max() < 1e-6


def test_curvature_tracks_variable_magnetic_field():
    model = SurfaceModel.from_spec((), [], 0.0, 1.0)
    bumped = SurfaceModel.from_dict({**model.to_dict(), "magnetic": {
        "constant": 1.0, "bumps": [{"center": [0.3, 0.15], "width": 0.6, "amplitude": 0.2}]}})
    orbit = integrate(FlowParams(0.3, bumped), SMPoint(0.05j, 0.2), 5.0)
    assert magnetic_curvature_deviation(orbit) < 1e-5


def test_velocity_norm_is_one_by_construction():
    orbit = integrate(FlowParams(0.3, PERTURBED), SMPoint(0.1j, 0.0), 1.0)
    assert np.all(orbit.speeds() == 1.0)
    assert np.all(np.diff(orbit.times) > 0)


@settings(max_examples=8)
@given(points, st.floats(0.0, 0.9))
def test_forward_then_backward_returns(p, lam):
    params = FlowParams(lam, PERTURBED)
    q = flow_point(params, p, 2.0)
    back = flow_point(params, q, -2.0)
    ref = flow_point(params, p, 0.0)
    assert state_distance(back.as_state(), ref.as_state()) < 1e-9


def test_liouville_identity_at_zero():
    assert liouville_jacobian(FlowParams(0.4, CONSTANT), SMPoint(0j, 0.0), 0.0) == 1.0


@pytest.mark.parametrize("model,lam", [(CONSTANT, 0.4), (PERTURBED, 0.2)])
def test_liouville_determinant(model, lam):
    for p in random_states(model, 3, np.random.default_rng(1)):
        assert abs(liouville_jacobian(FlowParams(lam, model), p, 10.0) - 1.0) < 1e-5


def test_liouville_rejects_long_horizons():
    with pytest.raises(IntegrationError):
        liouville_jacobian(FlowParams(0.4, CONSTANT), SMPoint(0j, 0.0), 50.0)


def test_brackets_at_origin():
    c = commutator_check(FlowParams(0.0, CONSTANT), SMPoint(0j, 0.0))
    assert max(c["VX_minus_H"], c["VH_plus_X"], c["XH_minus_KV"]) < 1e-6


def test_random_states_lie_in_domain(rng):
    for p in random_states(PERTURBED, 20, rng):
        assert PERTURBED.group.in_domain(p.base, tol=1e-9)


def test_flow_params_validation():
    with pytest.raises(ValueError):
        FlowParams(0.1, CONSTANT, dt=0.0)
    with pytest.raises(ValueError):
        FlowParams(0.1, CONSTANT, method="euler")
