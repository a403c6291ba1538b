"""Pointwise vector inequalities behind the absorption term.

The difference bound with constant 2^{r-2} r and the power-mean bound 2^{s-1}
are genuinely false for fractional exponents r in (1, 2) / s in (0, 1); the
tests below pin the valid ranges and document the counterexample region
explicitly rather than sampling around it.
"""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cbfsim.operators import (
    difference_bound_check,
    monotonicity_constant,
    monotonicity_gap,
    power_mean_fact,
    run_difference_bound_suite,
    run_monotonicity_suite,
    run_power_mean_suite,
)

vec3 = st.tuples(
    st.floats(-10, 10, allow_nan=False),
    st.floats(-10, 10, allow_nan=False),
    st.floats(-10, 10, allow_nan=False),
)


# --- monotonicity lower bound -------------------------------------------------


def test_monotonicity_gap_case_one_example():
    # |u| >= |w| branch gives lhs >= (1/r) |w|^{r+1}
    lhs, certified = monotonicity_gap([1, 0, 0], [0, 0, 0], 2.0)
    assert lhs == pytest.approx(1.0)
    assert lhs >= 0.5  # the case bound with r = 2
    assert lhs >= certified


def test_monotonicity_gap_equal_inputs():
    lhs, certified = monotonicity_gap([0.3, -1.2, 2.0], [0.3, -1.2, 2.0], 3.0)
    assert lhs == 0.0 and certified == 0.0


@pytest.mark.parametrize("r", [1.0, 1.5, 2.0, 3.0])
def test_certified_constant_below_brute_force_minimum(r):
    # random-search minimization of lhs / |w|^{r+1}; the hard-coded c(r) must
    # not exceed the observed minimum
    rng = np.random.default_rng(123)
    n = 1_000_000
    u = rng.standard_normal((n, 3)) * np.exp(rng.normal(size=(n, 1)))
    v = rng.standard_normal((n, 3)) * np.exp(rng.normal(size=(n, 1)))
    w = u - v
    nu = np.linalg.norm(u, axis=1, keepdims=True)
    nv = np.linalg.norm(v, axis=1, keepdims=True)
    nw = np.linalg.norm(w, axis=1)
    lhs = np.sum((nu ** (r - 1) * u - nv ** (r - 1) * v) * w, axis=1)
    ok = nw > 1e-12
    observed_min = float(np.min(lhs[ok] / nw[ok] ** (r + 1)))
    assert monotonicity_constant(r) <= observed_min


@given(u=vec3, v=vec3, r=st.sampled_from([1.0, 1.5, 2.0, 3.0]))
@settings(max_examples=300, deadline=None)
def test_monotonicity_gap_property(u, v, r):
    lhs, certified = monotonicity_gap(u, v, r)
    scale = (np.linalg.norm(u) + np.linalg.norm(v) + 1.0) ** (r + 1)
    assert lhs >= certified - 1e-12 * scale


# --- difference bound ----------------------------------------------------------


def test_difference_bound_r1_equality(rng):
    for _ in range(20):
        u, v = rng.normal(size=3), rng.normal(size=3)
        lhs, rhs = difference_bound_check(u, v, 1.0)
        assert lhs == pytest.approx(rhs)
        assert rhs == pytest.approx(np.linalg.norm(u - v))


def test_difference_bound_arithmetic_example():
    lhs, rhs = difference_bound_check([1, 0, 0], [0, 0, 0], 3.0)
    assert lhs == pytest.approx(1.0)
    assert rhs == pytest.approx(12.0)


@given(u=vec3, v=vec3, r=st.sampled_from([1.0, 2.0, 2.5, 3.0]))
@settings(max_examples=300, deadline=None)
def test_difference_bound_property_valid_range(u, v, r):
    # the stated constant is provable for r = 1 and r >= 2
    lhs, rhs = difference_bound_check(u, v, r)
    scale = (np.linalg.norm(u) + np.linalg.norm(v) + 1.0) ** r
    assert lhs <= rhs + 1e-12 * scale


@pytest.mark.parametrize("r", [1.0, 2.0, 3.0])
def test_difference_bound_sweep_zero_violations(r):
    report = run_difference_bound_suite(r, samples=100_000, seed=5)
    assert report.passed, f"worst ratio {report.worst_ratio}"


def test_difference_bound_fails_for_fractional_r_below_two():
    # known counterexample region: nearly colinear pairs with small |w|/|u|
    lhs, rhs = difference_bound_check([1, 0, 0], [0.9, 0, 0], 1.5)
    assert lhs > rhs
    report = run_difference_bound_suite(1.5, samples=100_000, seed=5)
    assert not report.passed


# --- power-mean fact -----------------------------------------------------------


def test_power_mean_maximizer_at_one_for_s_ge_one():
    for s in (1.0, 2.0, 3.7):
        value, bound = power_mean_fact(1.0, s)
        assert value == pytest.approx(bound)


def test_power_mean_s1_is_identity():
    for x in (0.0, 0.5, 1.0, 10.0, 1e3):
        value, bound = power_mean_fact(x, 1.0)
        assert value == pytest.approx(1.0) and bound == 1.0


def test_power_mean_sweep_valid_range():
    report = run_power_mean_suite(s_values=(0.0, 1.0, 2.0, 3.7))
    assert report.passed, f"worst ratio {report.worst_ratio}"


def test_power_mean_fails_below_s_one():
    # for s < 1 the stated bound 2^{s-1} is the minimum of f, not the maximum
    value, bound = power_mean_fact(0.0, 0.5)
    assert value == 1.0 > bound
    report = run_power_mean_suite(s_values=(0.5,))
    assert not report.passed


@given(x=st.floats(0, 1e6, allow_nan=False), s=st.floats(1, 8, allow_nan=False))
@settings(max_examples=300, deadline=None)
def test_power_mean_property_s_ge_one(x, s):
    value, bound = power_mean_fact(x, s)
    assert value <= bound * (1 + 1e-12)


# --- suite plumbing ------------------------------------------------------------


@pytest.mark.parametrize("r", [1.0, 1.5, 2.0, 3.0])
def test_monotonicity_sweep_zero_violations(r):
    report = run_monotonicity_suite(r, samples=100_000, seed=9)
    assert report.passed
    assert report.certified_bound == pytest.approx(monotonicity_constant(r))


def test_report_serialization():
    report = run_monotonicity_suite(2.0, samples=1000, seed=1)
    d = report.to_dict()
    assert set(d) == {"lemma_id", "samples", "worst_ratio", "certified_bound", "pass"}
    assert d["pass"] is True
