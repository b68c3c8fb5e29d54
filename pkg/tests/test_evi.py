"""Flow-axiom checks against closed-form targets.

On the quadratic Euclidean target every inequality in the suite holds
with a computable remainder, so the reports can be compared against
hand-integrated values instead of mere sign checks.
"""
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mhl.evi import (CHECK_NAMES, CheckReport, check_contraction, check_evi,
                     check_doubled_slope, check_monotone_slope,
                     check_regularization_energy, check_speed,
                     check_two_point, merge_reports, run_check,
                     run_evi_suite)
from mhl.space import make_space


def _quad():
    return make_space("euclid-quadratic", dim=2)


def _exact_pair_slack(u, v, t1, t2):
    """Integral of 0.5 |e^{-t} u - v|^2 over [t1, t2].

    For the quadratic energy the dissipation identity holds with
    equality and this integral is exactly the per-pair slack.
    """
    uu, uv, vv = float(u @ u), float(u @ v), float(v @ v)
    term = lambda t: (-0.25 * math.exp(-2 * t) * uu
                      + math.exp(-t) * uv + 0.5 * vv * t)
    return term(t2) - term(t1)


def test_evi_slack_matches_closed_form_integral():
    sp = _quad()
    u, v = np.array([1.5, -0.5]), np.array([-0.25, 1.0])
    grid = np.linspace(0.0, 2.0, 2501)
    rep = check_evi(sp, u, v, grid)
    t1, t2 = rep.worst_case["t1"], rep.worst_case["t2"]
    assert abs(rep.worst_slack - _exact_pair_slack(u, v, t1, t2)) <= 1e-9
    assert rep.passed


def test_evi_slack_every_pair_nonnegative_for_quadratic():
    sp = _quad()
    rep = check_evi(sp, np.array([2.0, 0.0]), np.array([0.0, -1.0]),
                    np.linspace(0.0, 1.0, 101))
    # equality-case slack is an integral of a square: >= 0 before tolerance
    assert rep.worst_slack >= 0.0
    assert rep.samples == 100


def test_evi_rejects_bad_grids():
    sp = _quad()
    u = np.array([1.0, 0.0])
    with pytest.raises(ValueError):
        check_evi(sp, u, u, [0.5])
    with pytest.raises(ValueError):
        check_evi(sp, u, u, [0.5, 0.4])
    with pytest.raises(ValueError):
        check_evi(sp, u, u, [-0.1, 0.4])


def test_evi_rejects_infinite_reference_energy():
    sp = make_space("quantile-entropy", m=8, tau=1e-3)
    u = sp.sample_point(__import__("mhl.rng", fromlist=["stream"])
                        .stream(1, "x"))
    bad = np.zeros(8)  # collapsed gaps, infinite entropy
    with pytest.raises(ValueError):
        check_evi(sp, u, bad, [0.0, 1.0])


def test_two_point_at_equal_times_reproduces_contraction():
    sp = _quad()
    u1, u2 = np.array([1.0, 2.0]), np.array([-0.5, 0.25])
    for t in (0.0, 0.4, 1.3):
        a = check_two_point(sp, u1, u2, t, t).worst_slack
        b = check_contraction(sp, u1, u2, [t]).worst_slack
        assert a == b  # same arithmetic, bitwise


def test_two_point_cross_term_sign():
    sp = _quad()
    u1, u2 = np.array([2.0, 0.0]), np.array([0.5, 0.0])
    rep = check_two_point(sp, u1, u2, 1.0, 0.2)
    assert rep.passed
    assert rep.worst_case["t1"] == 1.0


def test_speed_equality_on_linear_target():
    sp = make_space("euclid-linear", dim=2, coeffs=[0.6, -0.8])
    u = np.array([0.3, 0.1])
    rep = check_speed(sp, u, 0.2, 1.4)
    # endpoints are |t1 - t2| |c| apart and both slopes equal |c| = 1,
    # so the slack is exactly |t1 - t2| |c|
    assert abs(rep.worst_slack - 1.2) <= 1e-12


def test_monotone_slope_constant_on_linear_target():
    sp = make_space("euclid-linear", dim=2)
    rep = check_monotone_slope(sp, np.array([1.0, 1.0]),
                               np.linspace(0.0, 2.0, 9))
    assert rep.worst_slack == 0.0


def test_regularization_energy_hand_case():
    sp = _quad()
    u, v = np.array([3.0, 0.0]), np.array([0.0, 1.0])
    t = 0.5
    rep = check_regularization_energy(sp, u, v, [t])
    expect = (0.5 + 10.0 / (2 * t)) - 0.5 * math.exp(-2 * t) * 9.0
    assert abs(rep.worst_slack - expect) <= 1e-12


def test_regularization_rejects_zero_time():
    sp = _quad()
    with pytest.raises(ValueError):
        check_regularization_energy(sp, np.zeros(2), np.zeros(2), [0.0, 1.0])


def test_doubled_slope_hand_case():
    sp = _quad()
    u, v = np.array([2.0, 0.0]), np.array([1.0, 0.0])
    rep = check_doubled_slope(sp, u, v)
    # (2 + 1) * 1 - |2 - 0.5| = 1.5
    assert abs(rep.worst_slack - 1.5) <= 1e-12
    assert not rep.indicative


def test_doubled_slope_indicative_for_estimated_slopes():
    sp = make_space("quantile-entropy", m=8, tau=1e-3)
    from mhl.rng import stream
    rng = stream(5, "ds")
    rep = check_doubled_slope(sp, sp.sample_point(rng), sp.sample_point(rng))
    assert rep.indicative


# -- aggregation ------------------------------------------------------------

@given(st.lists(st.tuples(
    st.floats(min_value=-10, max_value=10, allow_nan=False),
    st.floats(min_value=0, max_value=1, allow_nan=False)), min_size=1,
    max_size=20))
@settings(max_examples=200, deadline=None)
def test_merge_reports_keeps_pass_invariant(pairs):
    reports = [CheckReport("t", 1, s, tol, s + tol >= 0.0, {"k": i})
               for i, (s, tol) in enumerate(pairs)]
    merged = merge_reports("t", reports)
    assert merged.passed == (merged.worst_slack + merged.tolerance >= 0.0)
    assert merged.samples == len(pairs)
    # the surviving worst case is the minimizer of slack + tolerance
    keys = [s + tol for s, tol in pairs]
    assert merged.worst_slack + merged.tolerance == min(keys)


def test_merge_reports_rejects_empty():
    with pytest.raises(ValueError):
        merge_reports("t", [])


def test_merge_reports_propagates_indicative():
    a = CheckReport("t", 1, 1.0, 0.0, True, {}, indicative=False)
    b = CheckReport("t", 1, 2.0, 0.0, True, {}, indicative=True)
    assert merge_reports("t", [a, b]).indicative


# -- seeded runner ----------------------------------------------------------

def test_run_check_rejects_unknown_name():
    with pytest.raises(ValueError):
        run_check(_quad(), 0, "no-such-check")


def test_run_check_is_deterministic():
    sp = _quad()
    a = run_check(sp, 123, "contraction", n_samples=40)
    b = run_check(sp, 123, "contraction", n_samples=40)
    assert a == b
    c = run_check(sp, 124, "contraction", n_samples=40)
    assert a.worst_slack != c.worst_slack


def test_run_evi_suite_order_and_thread_independence():
    sp = make_space("euclid-linear", dim=2)
    seq = run_evi_suite(sp, 7, n_samples=25)
    par = run_evi_suite(sp, 7, n_samples=25, max_workers=4)
    assert [r.check_name for r in seq] == list(CHECK_NAMES)
    assert seq == par  # scheduling must not touch any number


def test_run_evi_suite_all_pass_on_closed_form_targets():
    for sid in ("euclid-quadratic", "euclid-linear"):
        for rep in run_evi_suite(make_space(sid), 7, n_samples=50):
            assert rep.passed, f"{sid}/{rep.check_name}: {rep.worst_slack}"
