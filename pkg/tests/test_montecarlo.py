import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import counterexample, location_uniform, md1, mg1, scale_exponential
from lindley_grad.errors import ParameterRegionError, ShapeMismatchError
from lindley_grad.montecarlo import (
    CHUNK_SIZE,
    SeedSpec,
    _Moments,
    _reduce,
    compare,
    finite_difference,
    run_replications,
)

E1 = math.exp(-1.0)


def test_md_second_customer_exact_with_zero_variance():
    rep = run_replications(md1(), R=500, seed=SeedSpec(3))
    c2, c3 = rep.cell(2, "d2"), rep.cell(2, "d3")
    assert (c2.mean, c2.variance) == (pytest.approx(E1, abs=1e-15), 0.0)
    assert (c3.mean, c3.variance) == (pytest.approx(-E1, abs=1e-15), 0.0)
    assert rep.cell(2, "d2").ci_lo == rep.cell(2, "d2").ci_hi


def test_location_customer_two_matches_probability():
    # dE[W2]/dtheta = P(S1 > A1) with S1 ~ U(theta - d, theta + d), A1 ~ Exp(1)
    theta, delta = 0.8, 0.4
    s = location_uniform(theta, delta, n_customers=2)
    rep = run_replications(s, R=200_000, seed=1)
    lo, hi = theta - delta, theta + delta
    p = 1.0 - (math.exp(-lo) - math.exp(-hi)) / (hi - lo)
    c = rep.cell(2, "d1")
    assert abs(c.mean - p) <= 3.5 * c.se


def test_reports_are_bit_identical():
    a = run_replications(scale_exponential(), R=2, seed=9)
    b = run_replications(scale_exponential(), R=2, seed=9)
    assert a.to_csv() == b.to_csv() and a.to_json() == b.to_json()


def test_report_independent_of_workers():
    s = mg1(n_customers=5)
    R = 2 * CHUNK_SIZE + 17
    a = run_replications(s, R=R, seed=5, workers=1)
    b = run_replications(s, R=R, seed=5, workers=2)
    assert a.to_csv() == b.to_csv()


def test_csv_layout():
    rep = run_replications(counterexample(), R=100, seed=1)
    lines = rep.to_csv().splitlines()
    assert lines[0] == "customer,statistic,R,mean,variance,se,ci_lo,ci_hi"
    assert "2,d2,100,1,0,0,1,1" in lines
    assert any(line.startswith("2,d2_naive,100,0,0,") for line in lines)


def test_json_nested_by_customer():
    d = run_replications(counterexample(), R=10, seed=1).to_dict()
    assert d["meta"]["replications"] == 10
    assert d["customers"][1]["stats"]["d2"]["mean"] == 1.0


@settings(max_examples=40, deadline=None)
@given(st.lists(st.integers(1, 50), min_size=1, max_size=8), st.integers(0, 2**32))
def test_chunked_moments_match_two_pass(sizes, seed):
    rng = np.random.default_rng(seed)
    x = rng.lognormal(0.0, 1.0, size=(sum(sizes) + 1, 3)) + 1e3
    edges = np.cumsum([0] + sizes + [1])
    parts = [_Moments.of(x[a:b]) for a, b in zip(edges[:-1], edges[1:])]
    mean, var = _reduce(parts).finalize()
    assert np.allclose(mean, x.mean(axis=0), rtol=1e-12, atol=0)
    assert np.allclose(var, x.var(axis=0, ddof=1), rtol=1e-10, atol=0)


def test_constant_columns_are_exact():
    x = np.full((7, 2), 0.1)
    parts = [_Moments.of(x[:3]), _Moments.of(x[3:])]
    mean, var = _reduce(parts).finalize()
    assert mean.tolist() == [0.1, 0.1] and var.tolist() == [0.0, 0.0]


def test_fd_counterexample_second_derivative():
    rep = finite_difference(counterexample(), order=2, h=0.05, R=100_000, seed=2)
    c = rep.cell(2, "d2")
    assert abs(c.mean - 1.0) <= 3 * c.se


def test_fd_md_first_derivative():
    rep = finite_difference(md1(), order=1, h=0.01, R=100_000, seed=2)
    c = rep.cell(2, "d1")
    assert abs(c.mean - (1 - E1)) <= 3 * c.se


def test_fd_stencil_outside_region():
    with pytest.raises(ParameterRegionError):
        finite_difference(scale_exponential(), order=3, h=0.4, R=10)
    with pytest.raises(ParameterRegionError):
        finite_difference(scale_exponential(), order=1, h=-0.1, R=10)


def test_compare_self_is_zero():
    rep = run_replications(mg1(), R=1000, seed=4)
    table = compare(rep, rep)
    assert all(c.z == 0.0 for c in table.cells) and table.all_pass


def test_compare_naive_flagged_biased():
    rep = run_replications(counterexample(), R=1000, seed=4)
    table = compare(rep, {(2, "d2"): 1.0}, pairs=[("d2", "d2"), ("d2_naive", "d2")])
    assert table.cell(2, "d2").status == "PASS"
    assert table.cell(2, "d2_naive").status == "BIASED"
    assert table.all_pass


def test_compare_shape_mismatch():
    a = run_replications(mg1(), R=10, seed=1)
    b = run_replications(mg1(n_customers=3), R=10, seed=1)
    with pytest.raises(ShapeMismatchError):
        compare(a, b)
    with pytest.raises(ShapeMismatchError):
        compare(a, {(9, "d1"): 0.0})
