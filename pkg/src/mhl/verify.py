"""Inequality checks on grid fields: subharmonicity of the pulled-back
energy, its weak form against a test function, the flow-time
perturbation inequality, the Poisson-dual L1 bound, maximum principles,
and the convergence of the pair kernel to the Dirichlet form.

Every check returns an InequalityReport with slack = rhs - lhs and
passed <=> slack >= -tolerance.  When an energy is +inf on nodes that
carry weight in a left-hand side, the inequality cannot be evaluated;
such reports keep the invariant (slack = -inf, passed = False) and set
metadata["applicable"] = False, which downstream exit-code logic treats
as "not run" rather than "failed".

Tolerances for quadrature-limited checks scale like C * h where C is
assembled from the test function's derivative bounds and the field's
energy range; flow-accuracy terms are added for proximal plugins.  The
formulas are in the respective docstrings; they are deliberately
generous since the underlying statements carry no discretization rate.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field

import numpy as np
import scipy.sparse as sps
import scipy.sparse.linalg as spla
from numba import njit

from .dirichlet import _grid_view, _half_offsets, c_d, dirichlet_eps, \
    fixed_point_residual, graph_dirichlet, perturb_field
from .field import Field, GridDomain, TestFunction
from .space.base import EnergySpace


@dataclass
class ScalarField:
    """Real-valued (possibly +inf) samples on every node of a grid."""

    domain: GridDomain
    values: np.ndarray
    meta: dict = dc_field(default_factory=dict)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (self.domain.n_nodes,):
            raise ValueError(
                f"values shape {self.values.shape} != "
                f"({self.domain.n_nodes},)")


@dataclass(frozen=True)
class InequalityReport:
    check: str
    lhs: float
    rhs: float
    slack: float
    tolerance: float
    passed: bool
    metadata: dict


def make_report(check: str, lhs: float, rhs: float, tolerance: float,
                metadata: dict, slack: float | None = None
                ) -> InequalityReport:
    if slack is None:
        slack = rhs - lhs
        if math.isnan(slack):  # inf - inf
            slack = -math.inf
    passed = bool(slack >= -tolerance)
    return InequalityReport(check, float(lhs), float(rhs), float(slack),
                            float(tolerance), passed, metadata)


def _not_applicable(check: str, rhs: float, tolerance: float,
                    metadata: dict, reason: str) -> InequalityReport:
    md = dict(metadata)
    md.update(applicable=False, reason=reason)
    return make_report(check, math.inf, rhs, tolerance, md,
                       slack=-math.inf)


def pullback(f: Field, space: EnergySpace | None = None) -> ScalarField:
    """Pointwise energy of a field's values."""
    space = space or f.space
    vals = space.rows_energy(f.values)
    return ScalarField(f.domain, vals, {"space": space.space_id})


def _harmonic_meta(f: Field) -> dict:
    """Provenance block shared by every report on a field.

    input_harmonic re-verifies the fixed-point property instead of
    trusting the solver flag, so hand-edited fields are flagged."""
    out = {"n": f.domain.n, "dim": f.domain.dim,
           "space": f.space.space_id}
    if "converged" in f.meta:
        tol = float(f.meta.get("fixed_point_tol", 1e-12))
        out["input_harmonic"] = bool(
            f.meta["converged"]
            and fixed_point_residual(f) <= max(100.0 * tol, 1e-10))
        out["solver_sweeps"] = f.meta.get("sweeps")
    else:
        out["input_harmonic"] = False
    return out


def discrete_laplacian(s: ScalarField) -> ScalarField:
    """(sum of neighbors - 2d * center) / h^2 on interior nodes.

    Nodes whose stencil touches a +inf value are excluded (NaN) and
    counted in meta["excluded_count"]; non-interior nodes are NaN.
    """
    dom = s.domain
    nbr = dom.interior_neighbors()
    center = s.values[dom.interior]
    around = s.values[nbr]
    ok = np.isfinite(center) & np.isfinite(around).all(axis=1)
    lap = np.full(dom.n_nodes, np.nan)
    lap[dom.interior[ok]] = (around[ok].sum(axis=1)
                             - 2 * dom.dim * center[ok]) / dom.h**2
    excluded = dom.interior[~ok]
    return ScalarField(dom, lap, {
        "excluded": [int(k) for k in excluded],
        "excluded_count": int(len(excluded))})


def check_subharmonic(f: Field, space: EnergySpace | None = None,
                      tol: float = 1e-12) -> InequalityReport:
    """Signed margin of the discrete subharmonicity of the pulled-back
    energy: passes iff the stencil Laplacian is >= -tol at every
    evaluated interior node.

    For plugins whose barycenter is not a coordinate mean the Jensen
    argument behind the grid-exact statement does not apply; those
    reports carry metadata["indicative"] = True.
    """
    space = space or f.space
    lap = discrete_laplacian(pullback(f, space))
    vals = lap.values[f.domain.interior]
    ok = np.isfinite(vals)
    if not ok.any():
        raise ValueError("energy infinite on every interior stencil")
    i = int(np.nanargmin(np.where(ok, vals, np.nan)))
    md = _harmonic_meta(f)
    md.update(min_at_node=int(f.domain.interior[i]),
              excluded_count=lap.meta["excluded_count"],
              indicative=not space.mean_barycenter)
    return make_report("subharmonic", lhs=-float(vals[i]), rhs=0.0,
                       tolerance=tol, metadata=md, slack=float(vals[i]))


def _weighted_sum(coeff: np.ndarray, values: np.ndarray) -> float:
    """sum(coeff * values) where values may contain +inf; zero-weight
    infinities are ignored, weighted ones dominate the sum."""
    inf = np.isinf(values)
    live = inf & (coeff != 0.0)
    if live.any():
        signs = np.sign(coeff[live])
        if (signs > 0).any() and (signs < 0).any():
            raise ValueError("opposing infinite contributions")
        return math.inf if signs[0] > 0 else -math.inf
    keep = ~inf
    return float(coeff[keep] @ values[keep])


def _phi_bounds(phi: TestFunction, dom: GridDomain):
    """(-laplacian samples on interior, -normal derivative samples and
    their node index list on the non-corner boundary)."""
    neg_lap = -phi.laplacian(dom.coords[dom.interior])
    bidx = np.array(sorted(dom.normals), dtype=int)
    nrm = np.array([dom.normals[int(k)] for k in bidx])
    neg_nd = -phi.normal_derivative(dom.coords[bidx], nrm)
    return neg_lap, bidx, neg_nd


def check_weak_inequality(f: Field, space: EnergySpace | None,
                          phi: TestFunction,
                          tol: float | None = None) -> InequalityReport:
    """Interior integral of (-laplacian phi) * E(u) against the boundary
    integral of (-d phi/d normal) * E(u^b).

    Quadrature: h^d on interior nodes, h^(d-1) on non-corner boundary
    nodes (corners carry no normal).  Default tolerance C_quad * h with
    C_quad = (1 + max |lap phi| + max |d phi/d n|) * (1 + max finite
    |E|).
    """
    space = space or f.space
    dom = f.domain
    phi.validate_on(dom)
    e = pullback(f, space).values
    neg_lap, bidx, neg_nd = _phi_bounds(phi, dom)
    md = _harmonic_meta(f)
    md.update(test_function=phi.name, h=dom.h, energy="pointwise")

    e_int = e[dom.interior]
    e_bnd = e[bidx]
    finite = np.isfinite(e_int) | (neg_lap == 0.0)
    scale = 1.0 + (np.abs(e_int[np.isfinite(e_int)]).max(initial=0.0))
    c_quad = (1.0 + np.abs(neg_lap).max() + np.abs(neg_nd).max()) * scale
    if tol is None:
        tol = c_quad * dom.h
    md["c_quad"] = float(c_quad)
    rhs = _weighted_sum(dom.h ** (dom.dim - 1) * neg_nd, e_bnd)
    if not finite.all():
        return _not_applicable("weak_inequality", rhs, tol, md,
                               "energy infinite on weighted interior nodes")
    if np.isinf(rhs):
        md["vacuous"] = True
    lhs = _weighted_sum(dom.interior_weight * neg_lap, e_int)
    return make_report("weak_inequality", lhs, rhs, tol, md)


def check_perturbation_inequality(
        f: Field, space: EnergySpace | None, phi: TestFunction,
        delta: float, lam: float = 1.0, eps: float | None = None
) -> tuple[InequalityReport, InequalityReport]:
    """Flow-time perturbation inequality at level delta with test
    function lam * phi, evaluated once with graph_dirichlet and once
    with dirichlet_eps.

    Checks, for the perturbed field w = flow(u, delta + lam phi):

        Dir(w) + int (-lap(lam phi)) E(w)
            <= Dir(u) + int_boundary (-d(lam phi)/dn) E(flow(u^b, delta))

    The tolerance adds to the C_quad * h quadrature budget first-order
    terms for proximal flow accuracy: the Dirichlet terms move by at
    most O(acc * sqrt(Dir / h^d)) and the energy integrals by acc times
    a slope-weighted quadrature sum.
    """
    if delta <= 0:
        raise ValueError(f"delta must be > 0, got {delta}")
    space = space or f.space
    dom = f.domain
    if eps is None:
        eps = 8.0 * dom.h
    scaled = phi.scaled(lam) if lam != 1.0 else phi
    pert = perturb_field(f, phi, delta, lam)
    e_pert = pullback(pert, space).values
    neg_lap, bidx, neg_nd = _phi_bounds(scaled, dom)
    e_bnd = e_pert[bidx]  # boundary values were flowed by exactly delta

    acc = float(pert.meta["flow_accuracy"])
    e_int = e_pert[dom.interior]
    fin = np.isfinite(e_int)
    scale = 1.0 + np.abs(e_int[fin]).max(initial=0.0)
    c_quad = (1.0 + np.abs(neg_lap).max() + np.abs(neg_nd).max()) * scale
    quad_tol = c_quad * dom.h

    flow_tol_int = 0.0
    if acc > 0.0:
        # first-order effect of endpoint error on the energy integrals
        slopes_int = np.array(
            [space.slope(p) for p in space.unpack(pert.values[dom.interior])])
        slopes_bnd = np.array(
            [space.slope(p) for p in space.unpack(pert.values[bidx])])
        flow_tol_int = acc * (
            dom.interior_weight * float(np.abs(neg_lap) @ slopes_int)
            + dom.h ** (dom.dim - 1) * float(np.abs(neg_nd) @ slopes_bnd))

    def one(notion: str, dir_fun) -> InequalityReport:
        du = dir_fun(f)
        dw = dir_fun(pert)
        md = _harmonic_meta(f)
        md.update(test_function=phi.name, energy=notion,
                  delta=float(delta), **{"lambda": float(lam)},
                  eps=float(eps), flow_accuracy=acc)
        tol = quad_tol + flow_tol_int + 1e-12
        if acc > 0.0:
            tol += 4.0 * acc * math.sqrt(max(du, 1.0) / dom.h**dom.dim)
        md["tolerance_quadrature"] = float(quad_tol)
        rhs_b = _weighted_sum(dom.h ** (dom.dim - 1) * neg_nd, e_bnd)
        if not (np.isfinite(e_int) | (neg_lap == 0.0)).all() \
                or math.isinf(dw):
            return _not_applicable(
                f"perturbation_{notion}", rhs_b, tol, md,
                "energy infinite on weighted nodes")
        lhs = dw + _weighted_sum(dom.interior_weight * neg_lap, e_int)
        rhs = du + rhs_b
        return make_report(f"perturbation_{notion}", lhs, rhs, tol, md)

    graph = one("graph", graph_dirichlet)
    eps_rep = one("eps", lambda g: dirichlet_eps(g, eps))
    return graph, eps_rep


@dataclass
class PoissonResult:
    psi: ScalarField
    flux_indices: np.ndarray
    flux: np.ndarray
    c_omega: float
    residual: float


def solve_poisson_unit(domain: GridDomain) -> PoissonResult:
    """Discrete solution of -laplacian psi = 1 with zero boundary
    values, plus boundary flux -d psi/d normal by one-sided second-order
    differences.

    Asserts psi >= -1e-12 and flux >= -1e-8; c_omega is the largest
    flux value.
    """
    dom = domain
    ni = len(dom.interior)
    pos = -np.ones(dom.n_nodes, dtype=int)
    pos[dom.interior] = np.arange(ni)
    nbr = dom.interior_neighbors()
    rows, cols, vals = [], [], []
    for r in range(ni):
        rows.append(r)
        cols.append(r)
        vals.append(2.0 * dom.dim / dom.h**2)
    for r, nb in enumerate(nbr):
        for k in nb:
            c = pos[k]
            if c >= 0:
                rows.append(r)
                cols.append(int(c))
                vals.append(-1.0 / dom.h**2)
    a = sps.csr_matrix((vals, (rows, cols)), shape=(ni, ni))
    b = np.ones(ni)
    x, info = spla.cg(a, b, rtol=1e-14, atol=1e-13, maxiter=20 * ni)
    residual = float(np.linalg.norm(a @ x - b))
    if info != 0 or residual > 1e-10:
        raise RuntimeError(
            f"conjugate gradient failed: info={info}, residual={residual:.3e}")
    psi = np.zeros(dom.n_nodes)
    psi[dom.interior] = x
    if psi.min() < -1e-12:
        raise RuntimeError(f"psi negative: min {psi.min():.3e}")

    bidx = np.array(sorted(dom.normals), dtype=int)
    flux = np.empty(len(bidx))
    n = dom.n
    for j, k in enumerate(bidx):
        nrm = dom.normals[int(k)]
        # inward flat step along -normal
        if dom.dim == 1:
            s = -int(nrm[0])
        else:
            s = -int(nrm[0]) * n - int(nrm[1])
        p0, p1, p2 = psi[k], psi[k + s], psi[k + 2 * s]
        flux[j] = (-3.0 * p0 + 4.0 * p1 - p2) / (2.0 * dom.h)
    if flux.min() < -1e-8:
        raise RuntimeError(f"negative boundary flux: min {flux.min():.3e}")
    return PoissonResult(
        ScalarField(dom, psi, {"residual": residual}),
        bidx, flux, float(flux.max()), residual)


def check_l1_bound(f: Field, space: EnergySpace | None = None,
                   poisson: PoissonResult | None = None
                   ) -> InequalityReport:
    """Interior integral of E(u) against c_omega times the boundary
    integral of E(u^b)^+ (full surface weights, corners included)."""
    space = space or f.space
    dom = f.domain
    if poisson is None:
        poisson = solve_poisson_unit(dom)
    e = pullback(f, space).values
    e_int = e[dom.interior]
    e_bnd = e[dom.boundary]
    pos_bnd = np.where(np.isinf(e_bnd), e_bnd, np.maximum(e_bnd, 0.0))
    md = _harmonic_meta(f)
    md.update(c_omega=poisson.c_omega, h=dom.h, energy="pointwise")
    scale = 1.0 + np.maximum(
        pos_bnd[np.isfinite(pos_bnd)], 0.0).max(initial=0.0)
    tol = (1.0 + poisson.c_omega) * scale * dom.h
    rhs = poisson.c_omega * _weighted_sum(
        dom.surface_weights[dom.boundary], pos_bnd)
    if np.isinf(e_int).any():
        return _not_applicable("l1_bound", rhs, tol, md,
                               "energy infinite on interior nodes")
    if np.isinf(rhs):
        md["vacuous"] = True
    lhs = dom.interior_weight * float(e_int.sum())
    return make_report("l1_bound", lhs, rhs, tol, md)


def check_max_principle(f: Field, space: EnergySpace | None = None,
                        tol: float = 1e-10) -> InequalityReport:
    """max interior E(u) <= max boundary E(u^b) + tol."""
    space = space or f.space
    dom = f.domain
    e = pullback(f, space).values
    lhs = float(e[dom.interior].max())
    rhs = float(e[dom.boundary].max())
    md = _harmonic_meta(f)
    md.update(argmax_interior=int(dom.interior[int(
        np.argmax(e[dom.interior]))]), energy="pointwise")
    return make_report("max_principle", lhs, rhs, tol, md)


def check_lp_gain(f: Field, space: EnergySpace | None, q: float,
                  refined: Field | None = None) -> InequalityReport:
    """Interior L^p norm of E^+ against the boundary L^q norm of E^+
    with the dimensional exponent p = d q / (d - 1).

    The pass criterion is refinement stability: with a second solution
    of the same problem on the 2n-1 grid, the two lhs/rhs ratios must
    agree within 20%.  Without one the report is informational.
    """
    space = space or f.space
    if f.domain.dim != 2:
        raise ValueError("the exponent p = d q/(d-1) needs d >= 2; "
                         "use check_max_principle on intervals")
    if q < 1:
        raise ValueError(f"q must be >= 1, got {q}")
    p = f.domain.dim * q / (f.domain.dim - 1)

    def ratio(g: Field) -> float:
        dom = g.domain
        e = pullback(g, space).values
        if np.isinf(e).any():
            return math.inf
        ei = np.maximum(e[dom.interior], 0.0)
        eb = np.maximum(e[dom.boundary], 0.0)
        lhs = (dom.interior_weight * float((ei**p).sum())) ** (1.0 / p)
        rhs = (float(dom.surface_weights[dom.boundary] @ eb**q)) ** (1.0 / q)
        if rhs == 0.0:
            return math.inf if lhs > 0 else 0.0
        return lhs / rhs

    r1 = ratio(f)
    md = _harmonic_meta(f)
    md.update(q=float(q), p=float(p), ratio=float(r1), energy="pointwise")
    if refined is None:
        md["single_resolution"] = True
        return make_report("lp_gain", r1, r1, 0.0, md, slack=0.0)
    if refined.domain.n != 2 * f.domain.n - 1:
        raise ValueError("refined field must live on the 2n-1 grid")
    r2 = ratio(refined)
    md.update(ratio_refined=float(r2), n_refined=refined.domain.n)
    return make_report("lp_gain", lhs=abs(r2 - r1), rhs=0.2 * r1,
                       tolerance=0.0, metadata=md)


@njit(cache=True)
def _pair_form_2d(fg, gg, wg, offs):
    n = fg.shape[0]
    total = 0.0
    for t in range(offs.shape[0]):
        a, b = offs[t, 0], offs[t, 1]
        j0 = 0 if b >= 0 else -b
        j1 = n - b if b >= 0 else n
        part = 0.0
        for i in range(n - a):
            for j in range(j0, j1):
                df = fg[i + a, j + b] - fg[i, j]
                dg = gg[i + a, j + b] - gg[i, j]
                part += wg[i, j] * wg[i + a, j + b] * df * dg
        total += 2.0 * part
    return total


def pair_form(domain: GridDomain, fvals: np.ndarray, gvals: np.ndarray,
              eps: float) -> float:
    """(1 / eps^(d+2)) * double sum of w_x w_y (f(y)-f(x)) (g(y)-g(x))
    over node pairs within lattice distance eps."""
    dom = domain
    if eps < 4.0 * dom.h - 1e-12:
        raise ValueError(f"eps = {eps} is below 4h = {4 * dom.h}")
    n, d = dom.n, dom.dim
    if d == 1:
        fg = fvals.reshape(n)
        gg = gvals.reshape(n)
        wg = dom.volume_weights
        total = 0.0
        for off in _half_offsets(1, eps / dom.h):
            a = off[0]
            df = fg[a:] - fg[:n - a]
            dg = gg[a:] - gg[:n - a]
            total += 2.0 * float((wg[:n - a] * wg[a:] * df * dg).sum())
        return total / eps ** 3
    offs = np.array(_half_offsets(2, eps / dom.h), dtype=np.int64)
    total = _pair_form_2d(fvals.reshape(n, n), gvals.reshape(n, n),
                          dom.volume_weights.reshape(n, n), offs)
    return total / eps ** 4


def _central_gradient(domain: GridDomain, vals: np.ndarray) -> np.ndarray:
    """(n_interior, d) central differences of node values."""
    dom = domain
    nbr = dom.interior_neighbors()
    out = np.empty((len(dom.interior), dom.dim))
    for ax in range(dom.dim):
        lo, hi = nbr[:, 2 * ax], nbr[:, 2 * ax + 1]
        out[:, ax] = (vals[hi] - vals[lo]) / (2.0 * dom.h)
    return out


def check_ipp_convergence(fn_f, fn_g, domain: GridDomain, eps_list,
                          analytic_target: float | None = None
                          ) -> InequalityReport:
    """Convergence of the pair form toward c_d times the Dirichlet form
    of two scalar functions.

    The reference is c_d * sum_interior grad f . grad g * h^d with
    central differences of the node samples; an analytic target may be
    supplied instead when the integral is known in closed form.  Passes
    iff the absolute errors decrease at every step of the (decreasing)
    eps list, up to a 1e-12 floor.
    """
    eps = [float(e) for e in eps_list]
    if len(eps) < 2 or any(b >= a for a, b in zip(eps, eps[1:])):
        raise ValueError("eps_list must be strictly decreasing, length >= 2")
    fvals = np.asarray(fn_f(domain.coords), dtype=float)
    gvals = np.asarray(fn_g(domain.coords), dtype=float)
    gf = _central_gradient(domain, fvals)
    gg = _central_gradient(domain, gvals)
    target_quad = c_d(domain.dim) * domain.interior_weight * float(
        np.einsum("ij,ij->", gf, gg))
    target = target_quad if analytic_target is None else float(
        analytic_target)
    forms = [pair_form(domain, fvals, gvals, e) for e in eps]
    errors = [abs(v - target) for v in forms]
    orders = []
    for (e1, e2), (r1, r2) in zip(zip(eps, eps[1:]), zip(errors, errors[1:])):
        if r1 > 0 and r2 > 0:
            orders.append(math.log(r1 / r2) / math.log(e1 / e2))
        else:
            orders.append(math.inf)
    worst_rise = max(b - a for a, b in zip(errors, errors[1:]))
    md = {"n": domain.n, "dim": domain.dim, "eps": eps, "form": forms,
          "errors": errors, "orders": orders, "target": target,
          "target_quadrature": target_quad,
          "analytic_target": analytic_target}
    return make_report("ipp_convergence", lhs=worst_rise, rhs=0.0,
                       tolerance=1e-12, metadata=md, slack=-worst_rise)
