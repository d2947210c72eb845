import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from maglab.flow import FlowParams, SMPoint, random_states
from maglab.geometry import SurfaceModel
from maglab.splitting import (
    SplittingSample, dichotomy_fit, splitting_at, stable_slope, strong_bundles, unstable_slope,
)

CONSTANT = SurfaceModel.constant()
PERTURBED = SurfaceModel.perturbed()


@settings(max_examples=10)
@given(st.floats(0.0, 0.95), st.floats(0.0, 2 * np.pi))
def test_gap_matches_constant_curvature_oracle(lam, theta):
    s = splitting_at(FlowParams(lam, CONSTANT), SMPoint(0.1 - 0.2j, theta))
    assert s.gap == pytest.approx(2 * np.sqrt(1 - lam ** 2), abs=1e-3)
    assert s.growth_rate == pytest.approx(np.sqrt(1 - lam ** 2), rel=1e-3)


def test_gap_shrinks_toward_horocycle_flow():
    p = SMPoint(0.2j, 0.4)
    # contraction weakens like sqrt(1 - lam^2), so the horizon has to grow
    gaps = [splitting_at(FlowParams(lam, CONSTANT), p, horizon=30.0 / np.sqrt(1 - lam ** 2)).gap
            for lam in (0.0, 0.5, 0.9, 0.99)]
    assert all(a > b for a, b in zip(gaps, gaps[1:]))
    assert gaps[-1] < 0.3


def test_bundles_transverse_on_perturbed_model(rng):
    params = FlowParams(0.15, PERTURBED)
    for p in random_states(PERTURBED, 4, rng):
        assert unstable_slope(params, p) > stable_slope(params, p)


def test_dichotomy_rates_constant_case():
    lam = 0.3
    pts = random_states(CONSTANT, 2, np.random.default_rng(0))
    fit = dichotomy_fit(FlowParams(lam, CONSTANT), pts)
    r = np.sqrt(1 - lam ** 2)
    assert fit.eta == pytest.approx(np.exp(r), rel=0.02)
    assert fit.rho == pytest.approx(np.exp(-r), rel=0.02)
    assert fit.margin > 0


def test_strong_bundles_are_distinct():
    sb = strong_bundles(FlowParams(0.3, PERTURBED), SMPoint(0.1j, 0.0))
    assert sb.gap > 0.1


def test_sample_rejects_nonfinite_slopes():
    with pytest.raises(ValueError):
        SplittingSample(SMPoint(0j, 0.0), np.nan, 1.0, 1.0, 30.0)
