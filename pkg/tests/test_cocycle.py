import numpy as np
import pytest

from maglab.cocycle import additivity_residual, contact_check, kam_cocycle, zygmund_lipschitz_scan
from maglab.cohomology import find_closed_orbit, obstruction_survey
from maglab.flow import FlowParams, SMPoint, integrate
from maglab.geometry import SurfaceModel

CONSTANT = SurfaceModel.constant()
PERTURBED = SurfaceModel.perturbed()


@pytest.mark.parametrize("lam", [0.0, 0.3, 0.6])
def test_contact_value_is_constant(lam):
    params = FlowParams(lam, CONSTANT)
    seg = integrate(params, SMPoint(0.1 + 0.05j, 0.3), 3.0, sample_every=50)
    cc = contact_check(params, seg)
    assert cc["fluctuation"] < 1e-8
    assert cc["constant"] == pytest.approx(-1.0 - lam ** 2 * cc["c"], abs=1e-8)


def test_additivity_on_perturbed_model():
    a = additivity_residual(FlowParams(0.15, PERTURBED), SMPoint(0.1j, 0.4), 0.8, 1.1)
    assert abs(a["residual"]) <= a["budget"]


def test_cocycle_vanishes_for_constant_curvature():
    s = kam_cocycle(FlowParams(0.3, CONSTANT), SMPoint(0.1j, 0.4), 1.0)
    assert abs(s.value) <= max(s.error, 1e-8)


def test_chart_step_must_fit_inside_chart():
    with pytest.raises(ValueError):
        kam_cocycle(FlowParams(0.3, CONSTANT), SMPoint(0j, 0.0), 1.0, h=0.1, eps=0.01)


def test_constant_model_has_no_periodic_obstruction():
    rows = obstruction_survey(CONSTANT, 0.3, ((1,),), refine=False)
    assert not rows[0]["significant"]
    assert abs(rows[0]["value"]) <= rows[0]["error"]


def test_closed_orbit_closes():
    o = find_closed_orbit(FlowParams(0.2, PERTURBED), (0,))
    assert o.closing_error < 1e-9


x = np.linspace(-1.0, 1.0, 8193)


@pytest.mark.parametrize("f,verdict", [
    (np.sin(3 * x), "smooth"),
    (np.abs(x - 0.1), "lipschitz"),
    (np.where(x == 0, 0.0, x * np.log(np.abs(x) + 1e-300)), "zygmund"),
    (np.sqrt(np.abs(x)), "not-zygmund"),
])
def test_regularity_verdicts(f, verdict):
    rep = zygmund_lipschitz_scan(x, f)
    assert rep.classification == verdict


def test_kink_location_reported():
    rep = zygmund_lipschitz_scan(x, np.abs(x - 0.1))
    assert rep.kink == pytest.approx(0.1, abs=0.01)


def test_scan_requires_uniform_samples():
    with pytest.raises(ValueError):
        zygmund_lipschitz_scan(np.r_[x[:100], x[101:]], np.sin(np.r_[x[:100], x[101:]]))
