from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from caclab.analytic import (
    CSV_HEADER,
    CUMULATIVE,
    PAPER,
    AnalyticError,
    aggregate_blocking,
    class_blocking,
    erlang_b,
    kaufman_roberts,
    multirate_exact,
    solve_recurrence,
    sweep_analytic,
    sweep_to_csv,
)
from caclab.traffic import TrafficClass, build_equal_rate_scenario
from oracles import erlang_b_closed, multirate_bruteforce, recurrence_direct

# frozen from the exact-rational oracle: (1, 0.1, 0.11, 0.121) / 1.331
N3_A03 = (0.7513148009015778, 0.07513148009015778, 0.08264462809917356, 0.09090909090909091)


def test_recurrence_small_case_against_rationals():
    d = solve_recurrence(3, 0.3)
    exact = [float(x) for x in recurrence_direct(3, Fraction(3, 10))]
    assert np.allclose(d.probs, exact, atol=1e-12, rtol=0)
    assert np.allclose(d.probs, N3_A03, atol=1e-12, rtol=0)


def test_recurrence_zero_load_is_empty_system():
    assert np.array_equal(solve_recurrence(5, 0.0).probs, [1, 0, 0, 0, 0, 0])


@given(st.integers(3, 300), st.floats(0.0, 5.0))
def test_recurrence_normalized_and_nonnegative(n, a):
    p = solve_recurrence(n, a).probs
    assert p.shape == (n + 1,)
    assert abs(p.sum() - 1.0) <= 1e-12
    assert np.all(p >= 0)


def test_recurrence_survives_heavy_load():
    p = solve_recurrence(400, 50.0).probs
    assert np.all(np.isfinite(p)) and abs(p.sum() - 1) < 1e-12


@pytest.mark.parametrize("n,a", [(2, 0.5), (3, -0.1), (3, float("nan"))])
def test_recurrence_rejects_bad_input(n, a):
    with pytest.raises(AnalyticError):
        solve_recurrence(n, a)


def test_single_state_readout_and_aggregate():
    d = solve_recurrence(3, 0.3)
    r = class_blocking(d, PAPER)
    assert r.per_class == pytest.approx((0.09090909090909091, 0.08264462809917356, 0.07513148009015778), abs=1e-12)
    assert aggregate_blocking(d, 0.3) == pytest.approx(0.1 * sum(N3_A03[1:]), abs=1e-12)
    assert aggregate_blocking(d, 0.3) == pytest.approx(0.0248685, abs=1e-7)
    assert aggregate_blocking(solve_recurrence(10, 0.0), 0.0) == 0.0


def test_cumulative_mode_nested():
    r = class_blocking(solve_recurrence(50, 0.5), CUMULATIVE)
    assert r.per_class[2] >= r.per_class[1] >= r.per_class[0]
    zero = class_blocking(solve_recurrence(5, 0.0), CUMULATIVE)
    assert zero.per_class == (0.0, 0.0, 0.0)


def test_unknown_mode():
    with pytest.raises(AnalyticError):
        class_blocking(solve_recurrence(5, 0.1), "bogus")


@pytest.mark.parametrize("c,a,expected", [(1, 1.0, 0.5), (3, 1.0, 0.0625), (7, 0.0, 0.0)])
def test_erlang_b_hand_values(c, a, expected):
    assert erlang_b(c, a) == pytest.approx(expected, abs=1e-15)


@given(st.integers(1, 120), st.floats(0.0, 150.0))
def test_erlang_b_matches_closed_form(c, a):
    assert erlang_b(c, a) == pytest.approx(erlang_b_closed(c, a), rel=1e-9, abs=1e-300)


@given(st.integers(1, 60), st.floats(0.1, 60.0))
def test_erlang_b_monotone(c, a):
    assert erlang_b(c, a * 1.1) >= erlang_b(c, a)
    assert erlang_b(c + 1, a) <= erlang_b(c, a)


def kr_blocking(c, loads, demands):
    q = kaufman_roberts(c, loads, demands)
    return [q[c - b + 1 :].sum() for b in demands]


@given(st.integers(1, 80), st.floats(0.0, 80.0))
def test_kaufman_roberts_single_class_is_erlang(c, rho):
    assert kr_blocking(c, [rho], [1])[0] == pytest.approx(erlang_b(c, rho), rel=1e-12, abs=1e-15)


def test_kaufman_roberts_distribution_normalized():
    q = kaufman_roberts(20, [2.0, 1.0, 0.5], [1, 2, 3])
    assert q.shape == (21,) and abs(q.sum() - 1) < 1e-14


def test_multirate_two_state_example():
    r = multirate_exact(2, (TrafficClass(1, "x", 2, 1.0, 1.0),))
    assert r.per_class[0] == pytest.approx(0.5, abs=1e-15)
    z = multirate_exact(10, build_equal_rate_scenario(0.0, 10).classes)
    assert z.per_class == (0.0, 0.0, 0.0) and z.aggregate == 0.0


@given(st.integers(3, 14), st.lists(st.floats(0.0, 6.0), min_size=3, max_size=3))
def test_kaufman_roberts_matches_state_enumeration(c, loads):
    got = kr_blocking(c, loads, [1, 2, 3])
    assert np.allclose(got, multirate_bruteforce(c, loads, [1, 2, 3]), rtol=1e-9, atol=1e-13)


def test_multirate_exact_aggregate_is_arrival_weighted():
    classes = (TrafficClass(1, "a", 1, 3.0, 1.0), TrafficClass(2, "b", 2, 1.0, 1.0))
    r = multirate_exact(10, classes)
    assert r.aggregate == pytest.approx((3 * r.per_class[0] + r.per_class[1]) / 4)


def test_sweep_arity_zero_grid_and_csv():
    assert len(sweep_analytic(np.round(np.arange(1, 10) * 0.1, 10), 50)) == 9
    (zero,) = sweep_analytic([0.0], 50)
    assert zero.per_class == (0.0, 0.0, 0.0) and zero.aggregate == 0.0
    text = sweep_to_csv(sweep_analytic([0.1, 0.2], 10))
    lines = text.splitlines()
    assert lines[0] == ",".join(CSV_HEADER) and len(lines) == 3


def test_equal_rate_exact_orders_classes():
    r = multirate_exact(50, build_equal_rate_scenario(20.0, 50).classes)
    assert r.per_class[2] > r.per_class[1] > r.per_class[0]
