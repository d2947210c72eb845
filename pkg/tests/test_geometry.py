import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from maglab.geometry import (
    CIRCUMRADIUS, INRADIUS, Bump, FuchsianGroup, GeometryError, MobiusMap, SurfaceModel, curvature_fd,
    disk_point_at, free_reduce, hyperbolic_distance, parse_word, word_to_string,
)

GROUP = FuchsianGroup()
PERTURBED = SurfaceModel.perturbed()
radii = st.floats(min_value=0.0, max_value=0.9)
angles = st.floats(min_value=0.0, max_value=2 * np.pi)


def maps():
    return st.builds(lambda ang, d: MobiusMap.translation(ang, d), angles, st.floats(0.0, 3.0))


@given(maps(), maps(), radii, angles)
def test_mobius_composition_and_inverse(m1, m2, r, a):
    z = r * np.exp(1j * a)
    assert abs(m1.compose(m2)(z) - m1(m2(z))) < 1e-9
    assert abs(m1.inverse()(m1(z)) - z) < 1e-9


@given(maps(), radii, angles)
def test_mobius_is_an_isometry(m, r, a):
    z, w = r * np.exp(1j * a), 0.3 - 0.2j
    assert hyperbolic_distance(m(z), m(w)) == pytest.approx(hyperbolic_distance(z, w), abs=1e-8)


@given(maps(), st.floats(0.0, 0.6), angles)
def test_mobius_derivative_matches_difference_quotient(m, r, a):
    z, h = r * np.exp(1j * a), 1e-6
    fd = (m(z + h) - m(z - h)) / (2 * h)
    assert abs(fd - m.derivative(z)) < 1e-6 * max(1.0, abs(m.derivative(z)))


def test_translation_length_of_generators():
    for g in GROUP.generators:
        assert g.translation_length() == pytest.approx(2 * INRADIUS)


def test_relator_is_identity():
    assert GROUP.relator_residual() < 1e-9


def test_side_pairing_maps_midpoints():
    for k in range(8):
        m = GROUP.generators[k]
        assert abs(m(GROUP.side_midpoint(k + 4)) - GROUP.side_midpoint(k)) < 1e-12


def test_vertex_distance_is_circumradius():
    for k in range(8):
        assert hyperbolic_distance(GROUP.vertex(k)) == pytest.approx(CIRCUMRADIUS)


@settings(max_examples=60)
@given(st.floats(0.0, 0.97), angles)
def test_reduction_lands_in_domain_and_recovers_point(r, a):
    z = r * np.exp(1j * a)
    w, word = GROUP.reduce(z)
    assert GROUP.in_domain(w, tol=1e-9)
    assert abs(GROUP.element(word)(w) - z) < 1e-8


def test_reduce_many_agrees_with_reduce(rng):
    z = 0.95 * np.sqrt(rng.random(50)) * np.exp(2j * np.pi * rng.random(50))
    w, _ = GROUP.reduce_many(z)
    for zi, wi in zip(z, w):
        assert abs(GROUP.reduce(zi)[0] - wi) < 1e-9


def test_points_outside_disk_rejected():
    with pytest.raises(GeometryError):
        GROUP.reduce(1.2)


def test_words_round_trip():
    assert parse_word("g1 g5 g2") == (1, 5, 2)
    assert parse_word(word_to_string((3, 0))) == (3, 0)
    assert free_reduce((1, 5, 2)) == (2,)


def test_constant_curvature_value():
    assert SurfaceModel.constant().curvature(0.2j) == pytest.approx(-1.0)
    m = SurfaceModel.constant(scale_exponent=-0.5 * np.log(2))
    assert m.curvature(0.1) == pytest.approx(-2.0)


def test_area_and_cohomology_constant(constant_model):
    assert constant_model.area == pytest.approx(4 * np.pi, rel=1e-8)
    assert constant_model.cohomology_constant == pytest.approx(-1.0, rel=1e-8)
    assert constant_model.mean_magnetic == pytest.approx(1.0)


@pytest.mark.parametrize("model", [PERTURBED, SurfaceModel.constant()])
def test_curvature_matches_laplacian_oracle(model, rng):
    z = 0.85 * np.sqrt(rng.random(100)) * np.exp(2j * np.pi * rng.random(100))
    assert np.abs(model.curvature(z) - curvature_fd(model, z)).max() < 1e-6


def test_gauss_bonnet_for_perturbed_model(perturbed_model):
    total = perturbed_model.integrate(lambda z: perturbed_model.curvature(z))
    assert total == pytest.approx(-4 * np.pi, rel=1e-4)


@settings(max_examples=25)
@given(st.floats(0.0, 0.8), angles, st.integers(0, 7))
def test_bump_fields_are_group_invariant(r, a, k):
    model = PERTURBED
    z = r * np.exp(1j * a)
    g = GROUP.generators[k]
    gz = complex(g(z))
    if abs(gz) > 0.97:
        return
    assert model.phi.value(gz) == pytest.approx(model.phi.value(z), abs=1e-9)


def test_model_dict_round_trip(perturbed_model):
    d = perturbed_model.to_dict()
    again = SurfaceModel.from_dict(d)
    assert again.to_dict() == d
    assert again.curvature(0.3 + 0.1j) == pytest.approx(perturbed_model.curvature(0.3 + 0.1j))


def test_perturbed_model_is_negatively_curved(perturbed_model):
    kmin, kmax = perturbed_model.curvature_bounds
    assert kmin < kmax < 0


def test_disk_point_at_distance():
    assert hyperbolic_distance(disk_point_at(1.3, 0.4)) == pytest.approx(1.3)


def test_bump_serialization():
    b = Bump(0.1 + 0.2j, 0.5, -0.3)
    assert Bump.from_dict(b.to_dict()) == b
