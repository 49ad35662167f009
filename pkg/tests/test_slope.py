import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rankope.core import EstimatorSpec, Family
from rankope.estimators import run_estimator
from rankope.oracle import make_tiny_env, sample_tiny
from rankope.slope import INFLATION, SlopeCandidate, cnf, gmips_with_slope, slope_select

from conftest import make_dataset


def cand(estimate, spread, dims=1):
    return SlopeCandidate(dims, estimate, np.zeros(2), spread)


def test_cnf_constant_is_zero():
    assert cnf([3.0, 3.0, 3.0]) == 0.0


def test_cnf_hand_value():
    # t_{0.975, 3} = 3.18245, sample std of {0, 0, 2, 2} = 1.1547
    assert cnf([0, 0, 2, 2], 0.05) == pytest.approx(1.8376, abs=5e-4)
    assert cnf([0, 0, 2, 2], 0.05) == pytest.approx(3.182446305 * (2 / math.sqrt(3)) / 2, rel=1e-8)


@given(st.lists(st.floats(-100, 100), min_size=2, max_size=30), st.floats(0.001, 0.9))
@settings(max_examples=50)
def test_cnf_halving_delta_never_decreases(xs, delta):
    assert cnf(xs, delta / 2) >= cnf(xs, delta) - 1e-12


def test_cnf_input_checks():
    with pytest.raises(ValueError):
        cnf([1.0])
    with pytest.raises(ValueError):
        cnf([1.0, 2.0], 1.5)


def test_select_single_candidate():
    sel = slope_select([cand(1.0, 0.1)])
    assert sel.index == 1 and sel.audit == []


def test_select_identical_estimates_takes_last():
    sel = slope_select([cand(2.0, s) for s in (0.5, 0.3, 0.2, 0.1)])
    assert sel.index == 4
    assert all(row.passed for row in sel.audit)


def test_select_hand_example():
    sel = slope_select([cand(0.0, 1.0), cand(10.0, 0.5)])
    assert sel.index == 1
    (row,) = sel.audit
    assert (row.j, row.m, row.lhs) == (2, 1, 10.0)
    assert row.rhs == pytest.approx(0.5 + INFLATION * 1.0)
    assert not row.passed
    assert "pass=0" in row.as_text()


def test_select_requires_all_earlier_pairs():
    # Candidate 3 agrees with 2 but not with 1, so it is rejected even though 2 passes.
    sel = slope_select([cand(0.0, 0.1), cand(0.2, 0.1), cand(0.4, 0.1)])
    assert sel.index == 2


def test_select_flags_cnf_increases():
    sel = slope_select([cand(0.0, 0.1), cand(0.0, 0.3), cand(0.0, 0.2)])
    assert sel.cnf_violations == [2]


def test_single_dimension_is_trivial():
    ds = make_dataset(n=40, D=1)
    res = gmips_with_slope(ds, "prefix")
    assert res.retained_dims == 1 and res.selection.index == 1
    plain = run_estimator(ds, EstimatorSpec(Family.MRIPS))
    assert res.report.value == plain.value


def test_candidates_run_from_full_to_one():
    ds = make_dataset(n=40, D=3)
    res = gmips_with_slope(ds, "full")
    assert [c.retained_dims for c in res.candidates] == [3, 2, 1]
    for c in res.candidates:
        spec = EstimatorSpec(Family.MSIPS, retained_dims=c.retained_dims)
        assert c.estimate == pytest.approx(run_estimator(ds, spec).value)
    assert len(res.selection.audit) == 3


@pytest.mark.parametrize("seed", [0, 1])
def test_keeps_all_dimensions_when_dropping_one_is_clearly_biased(seed):
    # Rewards depend on both embedding dimensions, so keeping both is unbiased
    # while keeping one is not; with low noise and many samples SLOPE keeps both.
    env = make_tiny_env(seed, reward="scope", scope="prefix", sigma=0.1)
    runs = 200
    hits = sum(
        gmips_with_slope(sample_tiny(env, 50_000, np.random.default_rng(r)), "prefix").retained_dims == 2
        for r in range(runs)
    )
    assert hits >= 0.95 * runs
