"""Discrete Dirichlet energies, the barycentric harmonic solver, and
flow-time perturbations of grid fields.

Two energy notions coexist on purpose and every report downstream names
which one it used:

  dirichlet_eps   pair sum over all node pairs within distance eps,
                  normalised by 2 c_d eps^(d+2)
  graph_dirichlet nearest-neighbor surrogate
                  (1/2) sum_edges h^(d-2) d^2(f(x), f(y))

The solver performs lexicographic Gauss-Seidel sweeps, replacing each
interior value by the equal-weight barycenter of its 2d axis neighbors.
It descends graph_dirichlet, which is asserted after every sweep.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from numba import njit

from .field import BoundaryValues, Field, GridDomain, TestFunction
from .space.base import EnergySpace


def c_d(dim: int) -> float:
    """(1/d) * integral of |z|^2 over the unit ball in R^d.

    Radially, integral of r^2 over B_1 is sigma_{d-1} * 1/(d+2) with
    sigma_{d-1} the unit-sphere area, giving sigma_{d-1} / (d (d+2)).
    """
    if dim < 1:
        raise ValueError(f"dim must be >= 1, got {dim}")
    sigma = 2.0 * math.pi ** (dim / 2.0) / math.gamma(dim / 2.0)
    return sigma / (dim * (dim + 2))


def _grid_view(f: Field) -> np.ndarray:
    n, w = f.domain.n, f.space.width
    if f.domain.dim == 1:
        return f.values.reshape(n, w)
    return f.values.reshape(n, n, w)


def _half_offsets(dim: int, reach: float):
    """Integer offsets delta with 0 < |delta| <= reach, one per +-pair,
    in a fixed deterministic order."""
    k = int(math.floor(reach + 1e-9))
    out = []
    if dim == 1:
        out = [(a,) for a in range(1, k + 1)]
    else:
        r2 = reach * reach * (1.0 + 1e-12)
        for a in range(0, k + 1):
            b0 = 1 if a == 0 else -k
            for b in range(b0, k + 1):
                if a == 0 and b <= 0:
                    continue
                if a * a + b * b <= r2:
                    out.append((a, b))
    return out


def dirichlet_eps(f: Field, eps: float | None = None) -> float:
    """Pairwise approximate Dirichlet energy at interaction radius eps.

    Sums w_x w_y d^2(f(x), f(y)) over ordered node pairs whose lattice
    offset delta satisfies |delta| h <= eps, with trapezoid volume
    weights, then divides by 2 c_d eps^(d+2).  The indicator is applied
    to the exact lattice offset, so borderline pairs (|delta| h == eps)
    are included regardless of coordinate rounding.  Summation order is
    fixed (offset-major), hence byte-deterministic.
    """
    dom, sp = f.domain, f.space
    h, d = dom.h, dom.dim
    if eps is None:
        eps = 8.0 * h
    if eps <= 0:
        raise ValueError(f"eps must be > 0, got {eps}")
    v = _grid_view(f)
    if d == 1:
        wgrid = dom.volume_weights
    else:
        wgrid = dom.volume_weights.reshape(dom.n, dom.n)
    n = dom.n
    total = 0.0
    for off in _half_offsets(d, eps / h):
        if d == 1:
            a = off[0]
            src, dst = v[:n - a], v[a:]
            wprod = wgrid[:n - a] * wgrid[a:]
        else:
            a, b = off
            js = slice(0, n - b) if b >= 0 else slice(-b, n)
            jd = slice(b, n) if b >= 0 else slice(0, n + b)
            src = v[:n - a, js].reshape(-1, sp.width)
            dst = v[a:, jd].reshape(-1, sp.width)
            wprod = (wgrid[:n - a, js] * wgrid[a:, jd]).ravel()
        sq = sp.rows_sq_dist(src, dst)
        # each unordered pair appears for one of +-delta; double for
        # the ordered sum
        total += 2.0 * float(wprod @ sq)
    return total / (2.0 * c_d(d) * eps ** (d + 2))


def graph_dirichlet(f: Field) -> float:
    """(1/2) sum over axis-adjacent node pairs of h^(d-2) d^2."""
    dom, sp = f.domain, f.space
    v = _grid_view(f)
    w = sp.width
    total = 0.0
    if dom.dim == 1:
        total += float(sp.rows_sq_dist(v[:-1], v[1:]).sum())
    else:
        total += float(sp.rows_sq_dist(
            v[:-1].reshape(-1, w), v[1:].reshape(-1, w)).sum())
        total += float(sp.rows_sq_dist(
            v[:, :-1].reshape(-1, w), v[:, 1:].reshape(-1, w)).sum())
    return 0.5 * dom.h ** (dom.dim - 2) * total


# -- Gauss-Seidel sweep kernels (mean-barycenter fast path) ----------------
#
# Each kernel performs exactly one lexicographic sweep in place and
# returns (max squared update distance, raw graph energy after the
# sweep).  "Raw" means sum over edges of sum_k mscale[k] diff^2; the
# caller applies the 0.5 h^(d-2) factor.


@njit(cache=True)
def _sweep_mean_1d(v, mscale):
    n, w = v.shape
    max_du = 0.0
    for i in range(1, n - 1):
        du = 0.0
        for k in range(w):
            newv = 0.5 * (v[i - 1, k] + v[i + 1, k])
            diff = newv - v[i, k]
            du += mscale[k] * diff * diff
            v[i, k] = newv
        if du > max_du:
            max_du = du
    energy = 0.0
    for i in range(n - 1):
        for k in range(w):
            diff = v[i + 1, k] - v[i, k]
            energy += mscale[k] * diff * diff
    return max_du, energy


@njit(cache=True)
def _sweep_mean_2d(v, mscale):
    n = v.shape[0]
    w = v.shape[2]
    max_du = 0.0
    for i in range(1, n - 1):
        for j in range(1, n - 1):
            du = 0.0
            for k in range(w):
                newv = 0.25 * (v[i - 1, j, k] + v[i + 1, j, k]
                               + v[i, j - 1, k] + v[i, j + 1, k])
                diff = newv - v[i, j, k]
                du += mscale[k] * diff * diff
                v[i, j, k] = newv
            if du > max_du:
                max_du = du
    energy = 0.0
    for i in range(n - 1):
        for j in range(n):
            for k in range(w):
                diff = v[i + 1, j, k] - v[i, j, k]
                energy += mscale[k] * diff * diff
    for i in range(n):
        for j in range(n - 1):
            for k in range(w):
                diff = v[i, j + 1, k] - v[i, j, k]
                energy += mscale[k] * diff * diff
    return max_du, energy


@dataclass(frozen=True)
class SolverOptions:
    # Gauss-Seidel contracts like 1 - O(h^2) per sweep, so reaching a
    # 1e-12 fixed point on the finest default grids (n = 129) takes
    # a few tens of thousands of sweeps; each one is a cheap kernel.
    max_sweeps: int = 100000
    fixed_point_tol: float = 1e-12
    sweep_order: str = "lexicographic"

    def __post_init__(self):
        if self.fixed_point_tol <= 0:
            raise ValueError("fixed_point_tol must be > 0")
        if self.max_sweeps < 1:
            raise ValueError("max_sweeps must be >= 1")
        if self.sweep_order != "lexicographic":
            raise ValueError("only lexicographic sweeps are supported")


def _pack_boundary(domain: GridDomain, space: EnergySpace,
                   boundary_data) -> np.ndarray:
    idx = domain.boundary
    if isinstance(boundary_data, BoundaryValues):
        if boundary_data.domain != domain:
            raise ValueError("boundary data from a different domain")
        if not np.array_equal(boundary_data.indices, idx):
            raise ValueError("boundary indices out of order")
        rows = np.array(boundary_data.values, dtype=float)
    elif callable(boundary_data):
        rows = space.pack([boundary_data(domain.coords[k]) for k in idx])
    elif isinstance(boundary_data, dict):
        missing = [int(k) for k in idx if int(k) not in boundary_data]
        if missing:
            raise ValueError(
                f"boundary data missing {len(missing)} nodes: {missing[:4]}")
        rows = space.pack([boundary_data[int(k)] for k in idx])
    else:
        rows = np.asarray(boundary_data, dtype=float)
        if rows.shape != (len(idx), space.width):
            raise ValueError(
                f"boundary rows shape {rows.shape} != "
                f"{(len(idx), space.width)}")
    for p in space.unpack(rows):
        space.validate_point(p)
    return rows


def _monotone_guard(e_prev: float, e_new: float, sweep: int) -> None:
    if e_new > e_prev + 1e-12 * max(1.0, abs(e_prev)):
        raise RuntimeError(
            f"graph_dirichlet increased on sweep {sweep}: "
            f"{e_prev!r} -> {e_new!r}")


def solve_harmonic(domain: GridDomain, space: EnergySpace, boundary_data,
                   opts: SolverOptions | None = None) -> Field:
    """Barycentric Gauss-Seidel solution of the discrete Dirichlet
    problem with the given boundary values.

    Interior nodes start at the equal-weight barycenter of the boundary
    values, then each sweep replaces every interior value, in
    lexicographic order, by the barycenter of its 2d neighbors.  Stops
    when the largest per-node update distance drops below
    fixed_point_tol.  On sweep exhaustion the best-so-far field is
    returned with meta["converged"] = False.
    """
    opts = opts or SolverOptions()
    bnd = _pack_boundary(domain, space, boundary_data)
    values = np.empty((domain.n_nodes, space.width))
    values[domain.boundary] = bnd
    eq = [1.0] * len(bnd)
    values[domain.interior] = space.pack(
        [space.barycenter(space.unpack(bnd), eq)])[0]

    f = Field(domain, space, values,
              {"solver": "gauss-seidel", "fixed_point_tol":
               opts.fixed_point_tol})
    mscale = space.metric_scale()
    if space.mean_barycenter and mscale is not None:
        _solve_mean(f, np.asarray(mscale, float), opts)
    else:
        _solve_generic(f, opts)
    f.values[domain.boundary] = bnd  # exact round-trip of the trace
    return f


def _solve_mean(f: Field, mscale: np.ndarray, opts: SolverOptions) -> None:
    dom = f.domain
    v = _grid_view(f)
    kernel = _sweep_mean_1d if dom.dim == 1 else _sweep_mean_2d
    scale = 0.5 * dom.h ** (dom.dim - 2)
    e_prev = graph_dirichlet(f)
    tol_sq = opts.fixed_point_tol ** 2
    converged = False
    sweeps = 0
    max_du_sq = math.inf
    while sweeps < opts.max_sweeps:
        max_du_sq, raw = kernel(v, mscale)
        sweeps += 1
        e_new = scale * raw
        _monotone_guard(e_prev, e_new, sweeps)
        e_prev = e_new
        if max_du_sq < tol_sq:
            converged = True
            break
    _finish(f, converged, sweeps, math.sqrt(max_du_sq), opts)


def _solve_generic(f: Field, opts: SolverOptions) -> None:
    dom, sp = f.domain, f.space
    nbr = dom.interior_neighbors()
    eq = [1.0] * nbr.shape[1]
    e_prev = graph_dirichlet(f)
    converged = False
    sweeps = 0
    max_du = math.inf
    while sweeps < opts.max_sweeps:
        max_du = 0.0
        for node, nb in zip(dom.interior, nbr):
            pts = sp.unpack(f.values[nb])
            new_pt = sp.barycenter(pts, eq)
            old_pt = sp.unpack(f.values[node:node + 1])[0]
            du = sp.distance(old_pt, new_pt)
            if du > max_du:
                max_du = du
            f.values[node] = sp.pack([new_pt])[0]
        sweeps += 1
        e_new = graph_dirichlet(f)
        _monotone_guard(e_prev, e_new, sweeps)
        e_prev = e_new
        if max_du < opts.fixed_point_tol:
            converged = True
            break
    _finish(f, converged, sweeps, max_du, opts)


def _finish(f: Field, converged: bool, sweeps: int, final_update: float,
            opts: SolverOptions) -> None:
    f.meta.update(converged=converged, sweeps=sweeps,
                  final_update=final_update)
    if not converged:
        warnings.warn(
            f"harmonic solver hit max_sweeps={opts.max_sweeps} with "
            f"update {final_update:.3e} >= tol {opts.fixed_point_tol:.3e}; "
            "returning best-so-far", RuntimeWarning)


def fixed_point_residual(f: Field) -> float:
    """Largest distance between an interior value and the barycenter of
    its neighbors; small iff f is a solver fixed point."""
    dom, sp = f.domain, f.space
    nbr = dom.interior_neighbors()
    mscale = sp.metric_scale()
    if sp.mean_barycenter and mscale is not None:
        bary = f.values[nbr].mean(axis=1)
        sq = sp.rows_sq_dist(f.values[dom.interior], bary)
        return math.sqrt(float(sq.max()))
    eq = [1.0] * nbr.shape[1]
    worst = 0.0
    for node, nb in zip(dom.interior, nbr):
        b = sp.barycenter(sp.unpack(f.values[nb]), eq)
        worst = max(worst, sp.distance(sp.unpack(
            f.values[node:node + 1])[0], b))
    return worst


def perturb_field(f: Field, phi: TestFunction, delta: float,
                  lam: float = 1.0) -> Field:
    """Advance each node value along the flow for time delta + lam *
    phi(x).

    phi vanishes on the boundary, so boundary values move only by the
    uniform time delta; with delta = 0 the boundary trace is preserved
    bitwise (zero-time rows are copied unchanged).
    """
    if delta < 0 or lam < 0:
        raise ValueError("delta and lam must be >= 0")
    phi.validate_on(f.domain)
    times = delta + lam * phi.value(f.domain.coords)
    if times.min() < 0:
        raise ValueError("negative flow time")
    moving = times > 0.0
    out = f.values.copy()
    if moving.any():
        out[moving] = f.space.rows_flow(f.values[moving], times[moving])
    meta = {"perturbation": phi.name, "delta": delta, "lambda": lam,
            "flow_accuracy": f.space.accuracy_bound(float(times.max()))}
    return Field(f.domain, f.space, out, meta)
