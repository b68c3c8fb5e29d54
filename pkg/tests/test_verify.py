"""Inequality checks: pointwise subharmonicity, weak and perturbed
forms, the unit-source dual problem, maximum principles, and the
nonlocal pair form.

Frozen numbers come from closed-form solutions (interval problems, the
sine series for the unit square, constant fields) recomputed inside the
tests.
"""
import math

import numpy as np
import pytest

from conftest import assert_close
from mhl.dirichlet import c_d, graph_dirichlet, solve_harmonic
from mhl.field import Field, GridDomain, make_field
from mhl.field import test_function as get_test_function
from mhl.reporting import row_counts_as_failure, report_row
from mhl.space import make_space
from mhl.space.quantile import uniform_quantile_sample
from mhl.verify import (InequalityReport, ScalarField, check_ipp_convergence,
                        check_l1_bound, check_lp_gain, check_max_principle,
                        check_perturbation_inequality, check_subharmonic,
                        check_weak_inequality, discrete_laplacian, make_report,
                        pair_form, pullback, solve_poisson_unit)


def _scalar_space():
    return make_space("euclid-quadratic", dim=1)


def _coordinate_field(n):
    dom = GridDomain(2, n)
    sp = make_space("euclid-quadratic", dim=2)
    return solve_harmonic(dom, sp, lambda c: np.array([c[0], c[1]])), sp


def _plates_field(n, m=32):
    dom = GridDomain(2, n)
    sp = make_space("quantile-entropy", m=m)
    lo = uniform_quantile_sample(m, 0.0, 0.5)
    hi = uniform_quantile_sample(m, 0.0, 1.0)
    return solve_harmonic(dom, sp, lambda c: (1 - c[0]) * lo + c[0] * hi), sp


# -- report plumbing --------------------------------------------------------

def test_make_report_slack_and_pass():
    rep = make_report("x", lhs=1.0, rhs=1.5, tolerance=0.1, metadata={})
    assert rep.slack == 0.5 and rep.passed
    rep = make_report("x", lhs=2.0, rhs=1.5, tolerance=0.1, metadata={})
    assert rep.slack == -0.5 and not rep.passed
    # inside the tolerance band still passes
    rep = make_report("x", lhs=1.55, rhs=1.5, tolerance=0.1, metadata={})
    assert rep.passed


def test_make_report_nan_becomes_failure():
    rep = make_report("x", lhs=float("nan"), rhs=1.0, tolerance=1.0,
                      metadata={})
    assert rep.slack == -math.inf and not rep.passed


# -- pullback and discrete laplacian ---------------------------------------

def test_pullback_composes_energy():
    dom = GridDomain(1, 5)
    sp = make_space("euclid-quadratic", dim=2)
    f = make_field(dom, sp, lambda c: np.array([c[0], 2.0]))
    s = pullback(f)
    assert_close(s.values, 0.5 * (dom.coords[:, 0] ** 2 + 4.0), 1e-15,
                 "energy values")


def test_discrete_laplacian_exact_on_quadratics():
    dom = GridDomain(2, 9)
    x, y = dom.coords[:, 0], dom.coords[:, 1]
    s = ScalarField(dom, x * x + 3.0 * y * y, {})
    lap = discrete_laplacian(s)
    assert_close(lap.values[dom.interior], 8.0, 1e-11, "second differences")
    assert np.all(np.isnan(lap.values[dom.boundary]))


def test_discrete_laplacian_flags_infinite_stencils():
    dom = GridDomain(2, 9)
    vals = np.zeros(dom.n_nodes)
    bad = dom.flat_index((4, 4))
    vals[bad] = math.inf
    lap = discrete_laplacian(ScalarField(dom, vals, {}))
    # the node itself and its four interior neighbors lose their stencil
    assert lap.meta["excluded_count"] == 5
    assert np.isnan(lap.values[bad])


# -- pointwise subharmonicity ----------------------------------------------

def test_subharmonic_coordinate_field_slack_is_two():
    # E(u) = 0.5 (x^2 + y^2) has discrete laplacian exactly 2
    f, sp = _coordinate_field(17)
    rep = check_subharmonic(f)
    assert_close(rep.slack, 2.0, 1e-10, "min interior laplacian")
    assert rep.passed and not rep.metadata["indicative"]
    assert rep.metadata["input_harmonic"]


def test_subharmonic_quantile_plates(quantile):
    f, sp = _plates_field(17)
    rep = check_subharmonic(f)
    assert rep.passed
    assert rep.slack > 0.1  # strictly subharmonic here


def test_subharmonic_flip_detects_non_harmonic_node():
    f, sp = _coordinate_field(17)
    k = f.domain.flat_index((8, 8))
    f.values[k] += 2.0  # kick one interior node
    rep = check_subharmonic(f)
    assert not rep.passed
    assert not rep.metadata["input_harmonic"]


def test_subharmonic_tripod_is_indicative():
    dom = GridDomain(2, 5)
    sp = make_space("tripod-quadratic")
    from mhl.space.tripod import TripodPoint
    f = solve_harmonic(dom, sp, lambda c: TripodPoint(
        1 + min(2, int(3.0 * c[0])), 0.25 + c[1]))
    rep = check_subharmonic(f)
    assert rep.metadata["indicative"]
    assert not row_counts_as_failure(report_row(rep))


def test_subharmonic_excludes_infinite_stencils():
    dom = GridDomain(2, 9)
    sp = make_space("quantile-entropy", m=4)
    base = uniform_quantile_sample(4)
    f = make_field(dom, sp, lambda c: base + c[0])
    f.values[dom.flat_index((4, 4))] = [0.0, 0.0, 0.0, 0.0]  # inf energy
    rep = check_subharmonic(f)
    assert rep.metadata["excluded_count"] == 5


# -- weak inequality --------------------------------------------------------

def test_weak_interval_oracle_values():
    """u(x) = x with the square-distance energy: the two sides converge
    to 1/3 and 1/2."""
    sp = _scalar_space()
    phi = get_test_function("poly-bump", 1)
    f = solve_harmonic(GridDomain(1, 129), sp,
                       {0: np.array([0.0]), 128: np.array([1.0])})
    rep = check_weak_inequality(f, sp, phi)
    assert abs(rep.lhs - 1.0 / 3.0) <= 0.02 / 3.0
    assert abs(rep.rhs - 0.5) <= 0.01
    assert rep.passed


@pytest.mark.parametrize("n", [17, 33, 65, 129])
def test_weak_interval_slack_positive_at_all_n(n):
    sp = _scalar_space()
    phi = get_test_function("poly-bump", 1)
    f = solve_harmonic(GridDomain(1, n), sp,
                       {0: np.array([0.0]), n - 1: np.array([1.0])})
    assert check_weak_inequality(f, sp, phi).slack > 0.0


def test_weak_constant_field_slack_is_h():
    # E = 1/2: lhs = (n-2) h, rhs = 1/2 + 1/2, slack exactly h
    sp = _scalar_space()
    phi = get_test_function("poly-bump", 1)
    for n in (17, 33, 65):
        dom = GridDomain(1, n)
        f = make_field(dom, sp, lambda c: np.array([1.0]))
        rep = check_weak_inequality(f, sp, phi)
        assert_close(rep.slack, dom.h, 1e-12, f"n={n}")


def test_weak_not_applicable_on_infinite_interior():
    dom = GridDomain(2, 9)
    sp = make_space("quantile-entropy", m=4)
    base = uniform_quantile_sample(4)
    f = make_field(dom, sp, lambda c: base + c[0])
    f.values[dom.flat_index((4, 4))] = [0.0, 0.0, 0.0, 0.0]
    rep = check_weak_inequality(f, sp, get_test_function("poly-bump", 2))
    assert rep.metadata["applicable"] is False
    assert not rep.passed and rep.slack == -math.inf
    assert not row_counts_as_failure(report_row(rep))


def test_weak_zero_function_is_trivially_slack_free():
    f, sp = _coordinate_field(9)
    rep = check_weak_inequality(f, sp, get_test_function("zero", 2))
    assert rep.lhs == 0.0 and rep.rhs == 0.0
    assert rep.passed


# -- perturbation inequality ------------------------------------------------

def test_perturbation_closed_form_passes_both_notions():
    f, sp = _coordinate_field(17)
    phi = get_test_function("poly-bump", 2)
    graph, eps = check_perturbation_inequality(f, sp, phi, 0.05)
    assert graph.passed and eps.passed
    assert graph.check == "perturbation_graph"
    assert eps.check == "perturbation_eps"
    assert graph.metadata["energy"] == "graph"
    assert graph.metadata["flow_accuracy"] == 0.0


def test_perturbation_rejects_nonpositive_delta():
    f, sp = _coordinate_field(9)
    with pytest.raises(ValueError):
        check_perturbation_inequality(f, sp,
                                      get_test_function("poly-bump", 2), 0.0)


def test_perturbation_zero_function_tight_for_exact_flows():
    """With phi = 0 both sides involve the same delta-flowed field and
    the slack reduces to Dir(u) - Dir(w) >= 0 up to rounding."""
    f, sp = _coordinate_field(9)
    graph, eps = check_perturbation_inequality(
        f, sp, get_test_function("zero", 2), 0.1)
    assert graph.slack >= -1e-12
    assert eps.slack >= -1e-12


def test_perturbation_small_lambda_approaches_weak_form():
    f, sp = _coordinate_field(17)
    phi = get_test_function("poly-bump", 2)
    lams = (0.2, 0.1, 0.05)
    slacks = [check_perturbation_inequality(f, sp, phi, 0.01, lam=l)[0].slack
              for l in lams]
    limit = check_perturbation_inequality(f, sp, phi, 0.01, lam=1e-3)[0].slack
    gaps = [abs(s - limit) for s in slacks]
    assert gaps[0] > gaps[1] > gaps[2]
    # first-order in lambda: each halving of lambda halves the gap
    assert 1.6 <= gaps[0] / gaps[1] <= 2.4
    assert 1.6 <= gaps[1] / gaps[2] <= 2.4


def test_perturbation_quantile_passes_with_flow_tolerance():
    dom = GridDomain(1, 9)
    sp = make_space("quantile-entropy", m=8, tau=1e-3)
    lo = uniform_quantile_sample(8, 0.0, 0.5)
    hi = uniform_quantile_sample(8, 0.0, 1.0)
    f = solve_harmonic(dom, sp, lambda c: (1 - c[0]) * lo + c[0] * hi)
    graph, eps = check_perturbation_inequality(
        f, sp, get_test_function("poly-bump", 1), 0.05)
    assert graph.passed and eps.passed
    assert graph.metadata["flow_accuracy"] == sp.accuracy_bound(1.0)
    assert graph.tolerance > graph.metadata["tolerance_quadrature"]


# -- unit-source dual problem ----------------------------------------------

def test_poisson_interval_closed_form():
    dom = GridDomain(1, 33)
    res = solve_poisson_unit(dom)
    x = dom.coords[:, 0]
    assert_close(res.psi.values, x * (1.0 - x) / 2.0, 1e-12, "torsion")
    assert_close(res.flux, [0.5, 0.5], 1e-12, "end fluxes")
    assert_close(res.c_omega, 0.5, 1e-12, "c_omega")


def test_poisson_square_center_against_sine_series():
    dom = GridDomain(2, 65)
    res = solve_poisson_unit(dom)
    center = res.psi.values[dom.flat_index((32, 32))]
    series = 0.0
    for i in range(1, 400, 2):
        for j in range(1, 400, 2):
            series += (math.sin(i * math.pi / 2) * math.sin(j * math.pi / 2)
                       / (i * j * (i * i + j * j)))
    series *= 16.0 / math.pi**4
    assert abs(center - series) <= 1e-4
    assert res.residual <= 1e-10


def test_poisson_flux_accounts_for_the_source():
    # integral of the flux over the boundary equals the unit source mass
    dom = GridDomain(2, 65)
    res = solve_poisson_unit(dom)
    total = float(res.flux @ dom.surface_weights[res.flux_indices])
    assert abs(total - 1.0) <= 0.02


def test_l1_bound_interval():
    sp = _scalar_space()
    dom = GridDomain(1, 33)
    f = solve_harmonic(dom, sp, {0: np.array([0.0]), 32: np.array([1.0])})
    rep = check_l1_bound(f)
    # lhs -> integral of x^2/2 = 1/6, rhs -> 0.5 * (0 + 1/2) = 1/4
    assert abs(rep.lhs - 1.0 / 6.0) <= 0.01
    assert_close(rep.rhs, 0.25, 1e-10, "c_omega * boundary mass")
    assert rep.passed


def test_l1_bound_square_fields():
    for build in (_coordinate_field, _plates_field):
        f, sp = build(17)
        assert check_l1_bound(f).passed


# -- maximum principles -----------------------------------------------------

def test_max_principle_coordinate_field():
    f, sp = _coordinate_field(17)
    rep = check_max_principle(f)
    # E = 0.5 |(x, y)|^2 peaks at the corner (1, 1)
    assert_close(rep.rhs, 1.0, 1e-12, "boundary max")
    assert rep.passed


def test_max_principle_quantile_boundary_value():
    f, sp = _plates_field(17)
    rep = check_max_principle(f)
    # the Uniform[0, 1/2] plate is the most concentrated boundary value
    assert_close(rep.rhs, (31.0 / 32.0) * math.log(2.0), 1e-12,
                 "plate entropy")
    assert rep.passed


def test_max_principle_fails_after_interior_spike():
    f, sp = _coordinate_field(9)
    f.values[f.domain.flat_index((4, 4))] = [3.0, 3.0]
    assert not check_max_principle(f).passed


def test_lp_gain_constant_field_ratio_formula():
    dom = GridDomain(2, 17)
    sp = make_space("euclid-quadratic", dim=2)
    f = solve_harmonic(dom, sp, lambda c: np.array([1.5, 0.0]))
    for q in (1.5, 2.0, 3.0):
        rep = check_lp_gain(f, sp, q)
        p = 2.0 * q
        expect = (15.0 * dom.h) ** (2.0 / p) / 4.0 ** (1.0 / q)
        assert_close(rep.metadata["ratio"], expect, 1e-12, f"q={q}")
        assert rep.metadata["single_resolution"]
        assert rep.slack == 0.0


def test_lp_gain_refinement_stability():
    f, sp = _coordinate_field(17)
    g, _ = _coordinate_field(33)
    rep = check_lp_gain(f, sp, 2.0, refined=g)
    assert rep.passed
    assert rep.metadata["n_refined"] == 33
    assert abs(rep.metadata["ratio"] - rep.metadata["ratio_refined"]) \
        <= 0.2 * rep.metadata["ratio"]


def test_lp_gain_rejects_interval_and_bad_refinement():
    sp = _scalar_space()
    f1 = solve_harmonic(GridDomain(1, 9), sp,
                        {0: np.array([0.0]), 8: np.array([1.0])})
    with pytest.raises(ValueError):
        check_lp_gain(f1, sp, 2.0)
    f, sp2 = _coordinate_field(9)
    g, _ = _coordinate_field(19)
    with pytest.raises(ValueError):
        check_lp_gain(f, sp2, 2.0, refined=g)


# -- nonlocal pair form -----------------------------------------------------

def test_pair_form_antisymmetric_vanishes():
    dom = GridDomain(2, 81)
    x = dom.coords
    form = pair_form(dom, x[:, 0], x[:, 1], 0.1)
    assert abs(form) <= 1e-12


def test_pair_form_rejects_under_resolved_eps():
    dom = GridDomain(2, 17)
    with pytest.raises(ValueError):
        pair_form(dom, dom.coords[:, 0], dom.coords[:, 0], 2.0 * dom.h)


def test_pair_form_linear_interval_close_to_c1():
    dom = GridDomain(1, 321)
    x = dom.coords[:, 0]
    # (1/eps^3) sum w w (dx)^2 over |dx| <= eps tends to c_1 * Dir-pair
    form = pair_form(dom, x, x, 0.1)
    target = c_d(1) * 1.0  # grad f . grad g = 1 on the unit interval
    assert abs(form - target) <= 0.15 * target


def test_ipp_convergence_validations():
    dom = GridDomain(2, 41)
    fx = lambda c: c[:, 0]
    with pytest.raises(ValueError):
        check_ipp_convergence(fx, fx, dom, [0.1, 0.1])
    with pytest.raises(ValueError):
        check_ipp_convergence(fx, fx, dom, [0.2])
    with pytest.raises(ValueError):
        check_ipp_convergence(fx, fx, dom, [0.05, 0.2, 0.1])


def test_ipp_convergence_linear_pair_against_quadrature():
    dom = GridDomain(2, 161)
    fx = lambda c: c[:, 0]
    rep = check_ipp_convergence(fx, fx, dom, [0.2, 0.1, 0.05])
    assert rep.passed  # errors strictly decreasing
    md = rep.metadata
    assert md["target_quadrature"] == pytest.approx(c_d(2), rel=0.02)
    assert all(e2 < e1 for e1, e2 in zip(md["errors"], md["errors"][1:]))


def test_ipp_convergence_cubic_pair_error_shrinks():
    dom = GridDomain(2, 161)
    fn_f = lambda c: c[:, 0] ** 3
    fn_g = lambda c: c[:, 1] * (1.0 - c[:, 1])
    rep = check_ipp_convergence(fn_f, fn_g, dom, [0.2, 0.1, 0.05])
    assert rep.passed
