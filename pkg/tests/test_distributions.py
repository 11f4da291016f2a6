import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lindley_grad.distributions import (
    CustomModel,
    Deterministic,
    DeterministicThetaModel,
    Exponential,
    LocationModel,
    RandomStream,
    ScaleModel,
    Uniform,
    UniformLocation,
    lemma3_derivative,
    pdf,
    pdf_prime,
    require_order,
    sample,
    service_sample,
)
from lindley_grad.errors import CapabilityError, DegenerateDensityError, SmoothnessError


def test_sample_deterministic_is_constant():
    assert sample(Deterministic(0.7), RandomStream(3)) == 0.7


def test_sample_uniform_in_support():
    stream = RandomStream(11)
    for _ in range(1000):
        assert 0.0 < sample(Uniform(0.0, 1.0), stream) < 1.0


def test_exponential_mean_lln():
    u = RandomStream(2024).uniforms(10**6)
    x = Exponential(1.0).quantile(u)
    assert abs(x.mean() - 1.0) < 3.0 / math.sqrt(10**6)


def test_uniforms_never_zero_or_one():
    u = RandomStream(0).uniforms(10**5)
    assert u.min() > 0.0 and u.max() < 1.0


def test_pdf_values():
    assert pdf(Exponential(1.0), 1.0) == pytest.approx(math.exp(-1), abs=1e-15)
    assert pdf(Uniform(0, 1), 0.5) == 1.0
    assert pdf(Uniform(0, 1), 2.0) == 0.0


def test_pdf_prime_values():
    assert pdf_prime(Exponential(1.0), 1.0) == pytest.approx(-math.exp(-1), abs=1e-15)
    assert pdf_prime(Exponential(2.0), 0.0) == pytest.approx(-4.0)
    with pytest.raises(CapabilityError, match="Assumption 4"):
        pdf_prime(Uniform(0, 1), 0.5)


def test_deterministic_has_no_density():
    with pytest.raises(CapabilityError):
        pdf(Deterministic(1.0), 1.0)


def test_capability_flags():
    assert Exponential(1.0).has_continuous_density_on_positive_line
    assert not Uniform(0.0, 1.0).has_continuous_density_on_positive_line
    assert not Deterministic(1.0).is_random


@pytest.mark.parametrize("bad", [dict(rate=0.0), dict(rate=-1.0), dict(rate=float("nan"))])
def test_exponential_rejects_bad_rate(bad):
    with pytest.raises(ValueError):
        Exponential(**bad)


def test_uniform_location_requires_half_width_below_center():
    UniformLocation(1.0, 1.0)
    with pytest.raises(ValueError):
        UniformLocation(1.0, 1.5)


@pytest.mark.parametrize("dist", [Exponential(0.7), Exponential(3.0), Uniform(0.2, 1.9), UniformLocation(1.0, 0.3)])
def test_density_integrates_to_one(dist):
    lo, hi = dist.support
    hi = min(hi, lo + 60.0 / getattr(dist, "rate", 1.0))
    x, w = np.polynomial.legendre.leggauss(200)
    mid, half = 0.5 * (hi + lo), 0.5 * (hi - lo)
    total = half * np.sum(w * dist.pdf(mid + half * x))
    assert total == pytest.approx(1.0, abs=1e-8)


@settings(max_examples=200, deadline=None)
@given(rate=st.floats(0.05, 20.0), x=st.floats(0.0, 30.0))
def test_pdf_prime_matches_finite_difference(rate, x):
    d = Exponential(rate)
    h = 1e-5 * max(1.0, x)
    x = max(x, 2 * h)
    fd = (d.pdf(x + h) - d.pdf(x - h)) / (2 * h)
    exact = d.pdf_prime(x)
    assert fd == pytest.approx(exact, rel=1e-5, abs=1e-300)


@given(u=st.floats(1e-12, 1 - 1e-12), rate=st.floats(0.1, 10.0))
def test_exponential_quantile_inverts_cdf(u, rate):
    d = Exponential(rate)
    assert d.cdf(d.quantile(u)) == pytest.approx(u, rel=1e-9, abs=1e-12)


# --- pathwise derivative via the implicit function of F(S; theta) = U ---

def test_lemma3_examples():
    scale = ScaleModel(2.0, base_law=Exponential(1.0))
    assert lemma3_derivative(scale, 3.0) == pytest.approx(1.5, abs=1e-14)
    loc = LocationModel(1.0, noise=Uniform(-0.2, 0.2))
    assert lemma3_derivative(loc, 1.1) == pytest.approx(1.0, abs=1e-14)
    custom = CustomModel(2.0, cdf_fn=lambda x, t: x / t, cdf_dtheta_fn=lambda x, t: -x / t**2,
                         cdf_dx_fn=lambda x, t: 1.0 / t, quantile_fn=lambda u, t: u * t)
    assert lemma3_derivative(custom, 0.5) == pytest.approx(0.25, abs=1e-14)
    assert lemma3_derivative(DeterministicThetaModel(0.5), 0.5) == 1.0


def test_lemma3_outside_support_raises():
    loc = LocationModel(1.0, noise=Uniform(-0.2, 0.2))
    with pytest.raises(DegenerateDensityError):
        lemma3_derivative(loc, 2.0)


def test_lemma3_matches_closed_forms_on_many_pairs():
    rng = np.random.default_rng(5)
    theta = rng.uniform(0.1, 5.0, 10**4)
    z = rng.exponential(1.0, 10**4)
    for t, zz in zip(theta[:5000], z[:5000]):
        s = t * zz
        assert abs(lemma3_derivative(ScaleModel(t), s) - s / t) <= 1e-12 * max(1.0, s / t)
    for t in theta[5000:]:
        m = LocationModel(t, noise=Uniform(-0.05, 0.05))
        s = t + rng.uniform(-0.049, 0.049)
        assert abs(lemma3_derivative(m, s) - 1.0) <= 1e-12


def test_service_sample_examples():
    loc = service_sample(LocationModel(1.0, noise=Uniform(-0.2, 0.2)), RandomStream(1))
    assert 0.8 < loc.s < 1.2 and (loc.d1, loc.d2, loc.d3) == (1.0, 0.0, 0.0)
    det = service_sample(DeterministicThetaModel(0.5), RandomStream(1))
    assert (det.s, det.d1, det.d2, det.d3) == (0.5, 1.0, 0.0, 0.0)
    scale = ScaleModel(0.8, base_law=Exponential(1.0))
    u = Exponential(1.0).cdf(1.25)
    smp = scale.sample_from_uniform(u)
    assert smp.s == pytest.approx(1.0, abs=1e-14)
    assert smp.d1 == pytest.approx(1.25, abs=1e-14)
    assert (smp.d2, smp.d3) == (0.0, 0.0)


def test_smoothness_order_truncates_derivatives():
    smp = ScaleModel(0.8, smoothness_order=1).sample_from_uniform(0.3)
    assert smp.d2 is None and smp.d3 is None
    with pytest.raises(SmoothnessError, match="Assumption 2'"):
        require_order(smp, 2)


def test_substreams_are_reproducible_and_distinct():
    a = RandomStream.substream(9, 4).uniforms(5)
    b = RandomStream.substream(9, 4).uniforms(5)
    c = RandomStream.substream(9, 5).uniforms(5)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)


def test_sequential_draws_match_block_draws():
    s1, s2 = RandomStream(77), RandomStream(77)
    block = s1.uniforms(6)
    seq = np.array([s2.uniform() for _ in range(6)])
    assert np.array_equal(block, seq)
