import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import counterexample, location_uniform, md1, mg1, scale_exponential
from lindley_grad.distributions import (
    Exponential,
    RandomStream,
    SampleWithDerivatives,
    ScaleModel,
    Uniform,
)
from lindley_grad.errors import CapabilityError, SmoothnessError
from lindley_grad.estimators import (
    DerivativeState,
    estimate_batch,
    estimate_path,
    ipa_step,
    kinds_for_order,
    naive_ipa_higher_step,
    second_step,
    third_step,
)
from lindley_grad.lindley import draw_inputs, first_busy_period_end, simulate_waits, uniform_layout
from lindley_grad.montecarlo import replication_uniforms
from lindley_grad.scenario import Scenario

E1 = math.exp(-1.0)
ZERO = DerivativeState()


def test_ipa_step_examples():
    assert ipa_step(0.0, 1.0, 0.9 > 0.5) == 1.0
    assert ipa_step(0.0, 1.0, 0.3 > 0.5) == 0.0
    assert ipa_step(1.0, 0.0, True) == 1.0


def test_second_step_counterexample_and_md():
    theta = SampleWithDerivatives(0.5, 1.0, 0.0, 0.0)
    assert second_step(ZERO, 0.0, theta, 0.7, Uniform(0.0, 1.0)) == 1.0
    one = SampleWithDerivatives(1.0, 1.0, 0.0, 0.0)
    assert second_step(ZERO, 0.0, one, 3.0, Exponential(1.0)) == pytest.approx(E1, abs=1e-15)


def test_second_step_vanishes_when_nothing_propagates():
    state = DerivativeState(d1=0.0, d2=0.7)
    s = SampleWithDerivatives.theta_free(0.3)
    assert second_step(state, 0.2, s, 4.0, Exponential(1.0)) == 0.0


def test_second_step_needs_s1_second_derivative():
    with pytest.raises(SmoothnessError):
        second_step(ZERO, 0.0, SampleWithDerivatives(1.0, 1.0), 0.5, Exponential(1.0))


def test_third_step_examples():
    one = SampleWithDerivatives(1.0, 1.0, 0.0, 0.0)
    assert third_step(ZERO, 0.0, one, 0.2, Exponential(1.0)) == pytest.approx(-E1, abs=1e-15)
    lam, theta, s1 = 1.5, 0.8, 1.1
    smp = SampleWithDerivatives(s1, s1 / theta, 0.0, 0.0)
    expected = -((s1 / theta) ** 3) * lam**2 * math.exp(-lam * s1)
    assert third_step(ZERO, 0.0, smp, 0.3, Exponential(lam)) == pytest.approx(expected, rel=1e-14)
    with pytest.raises(CapabilityError, match="Assumption 4"):
        third_step(ZERO, 0.0, one, 0.2, Uniform(0.0, 1.0))


def test_naive_higher_step():
    assert naive_ipa_higher_step(ZERO, SampleWithDerivatives(1.0, 1.0, 0.5, 0.0), True) == (0.5, 0.0)
    assert naive_ipa_higher_step(ZERO, SampleWithDerivatives(1.0, 1.0, 0.5, 0.0), False) == (0.0, 0.0)


def test_steps_vectorize():
    ind = np.array([True, False, True])
    assert ipa_step(np.zeros(3), np.ones(3), ind).tolist() == [1.0, 0.0, 1.0]


def test_kinds_for_order():
    assert kinds_for_order(1) == ("W", "d1")
    assert kinds_for_order(2) == ("W", "d1", "d2", "d2_naive")
    assert len(kinds_for_order(3)) == 6


def test_single_customer_all_zero():
    est = estimate_path(mg1(), 1, 3, RandomStream(0))
    assert all(float(est[k][0]) == 0.0 for k in kinds_for_order(3))


def test_md_customer_two_is_deterministic():
    for seed in range(20):
        est = estimate_path(md1(), 2, 3, RandomStream(seed))
        assert est["d2"][1] == pytest.approx(E1, abs=1e-15)
        assert est["d3"][1] == pytest.approx(-E1, abs=1e-15)


@pytest.mark.parametrize("build", [location_uniform, scale_exponential])
def test_naive_higher_ipa_is_zero_for_linear_families(build):
    s = build(n_customers=12)
    k = len(uniform_layout(s, 12))
    out = estimate_batch(s, 12, 3, replication_uniforms(2, 0, 500, k))
    assert not out["d2_naive"].any() and not out["d3_naive"].any()


def test_contract_violations_surface_before_drawing():
    stream = RandomStream(1)
    with pytest.raises(CapabilityError):
        estimate_path(counterexample(), 2, 3, stream)
    s = Scenario(ScaleModel(0.8, smoothness_order=1), Exponential(2.0), (Exponential(1.0),))
    with pytest.raises(SmoothnessError):
        estimate_path(s, 3, 2, stream)
    assert np.array_equal(stream.uniforms(3), RandomStream(1).uniforms(3))


def test_batch_and_single_path_agree():
    s = mg1(n_customers=6)
    k = len(uniform_layout(s, 6))
    out = estimate_batch(s, 6, 3, replication_uniforms(4, 0, 3, k))
    for r in range(3):
        est = estimate_path(s, 6, 3, RandomStream.substream(4, r))
        for kind in kinds_for_order(3):
            assert np.array_equal(out[kind][r], est[kind])


@settings(max_examples=100, deadline=None)
@given(seed=st.integers(0, 2**32), location=st.booleans())
def test_busy_period_structure(seed, location):
    s = location_uniform(n_customers=15) if location else scale_exponential(n_customers=15)
    est = estimate_path(s, 15, 1, RandomStream(seed))
    istar = first_busy_period_end(est.path).index
    s1_d1 = 1.0 if location else est.path.records[0].s / s.theta
    d1 = est["d1"]
    for i in range(2, 16):
        expected = s1_d1 if i <= istar else 0.0
        assert d1[i - 1] == pytest.approx(expected, rel=1e-14, abs=0)


@pytest.mark.parametrize("h", [1e-3, 1e-4, 1e-5])
def test_crn_difference_converges_to_ipa(h):
    s = scale_exponential(n_customers=10)
    k = len(uniform_layout(s, 10))
    U = replication_uniforms(6, 0, 4000, k)
    d1 = estimate_batch(s, 10, 1, U)["d1"]
    hi, lo = draw_inputs(s, 10, U, s.theta + h), draw_inputs(s, 10, U, s.theta - h)
    fd = (simulate_waits(hi.a, hi.s) - simulate_waits(lo.a, lo.s)) / (2 * h)
    mismatch = np.abs(fd - d1) > 1e-6
    # paths whose busy-period structure flips inside [theta-h, theta+h] shrink with h
    assert mismatch.any(axis=1).mean() < 50 * h
