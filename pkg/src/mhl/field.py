"""Grid domains on the unit interval/square and maps into target spaces.

Nodes live on a uniform lattice with spacing h = 1/(n-1), ordered
lexicographically (axis 1 major).  Quadrature conventions:

  volume_weights   tensor-product trapezoid weights over all nodes,
                   summing to |Omega| = 1 exactly
  interior_weight  plain h^d, used for interior-only volume sums
  surface_weights  h^(d-1) per boundary node; in 2-D a corner collects
                   h/2 from each of its two edges, so every boundary
                   node carries h and the total is the exact perimeter

Corners have no outward normal and stay out of normal-derivative
quadrature.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field as dc_field
from typing import Callable, Iterable

import numpy as np

from .space.base import EnergySpace


class GridDomain:
    """Uniform grid on [0,1]^dim for dim in {1, 2}."""

    def __init__(self, dim: int, n: int):
        if dim not in (1, 2):
            raise ValueError(f"dim must be 1 or 2, got {dim}")
        if n < 3:
            raise ValueError(f"n must be >= 3, got {n}")
        self.dim = dim
        self.n = n
        self.h = 1.0 / (n - 1)
        h = self.h

        if dim == 1:
            idx = np.arange(n)
            self.coords = (idx * h)[:, None]
            self.interior = idx[1:-1]
            self.boundary = np.array([0, n - 1])
            self.corners = np.array([], dtype=int)
            self.normals = {0: np.array([-1.0]), n - 1: np.array([1.0])}
            vw = np.full(n, h)
            vw[[0, -1]] = h / 2.0
            sw = np.zeros(n)
            sw[[0, -1]] = 1.0
        else:
            ii, jj = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
            ii, jj = ii.ravel(), jj.ravel()
            self.coords = np.column_stack([ii * h, jj * h])
            on_edge = ((ii == 0).astype(int) + (ii == n - 1).astype(int)
                       + (jj == 0).astype(int) + (jj == n - 1).astype(int))
            self.interior = np.where(on_edge == 0)[0]
            self.boundary = np.where(on_edge > 0)[0]
            self.corners = np.where(on_edge == 2)[0]
            self.normals = {}
            for k in np.where(on_edge == 1)[0]:
                i, j = divmod(int(k), n)
                if i == 0:
                    nrm = np.array([-1.0, 0.0])
                elif i == n - 1:
                    nrm = np.array([1.0, 0.0])
                elif j == 0:
                    nrm = np.array([0.0, -1.0])
                else:
                    nrm = np.array([0.0, 1.0])
                self.normals[int(k)] = nrm
            w1 = np.full(n, h)
            w1[[0, -1]] = h / 2.0
            vw = np.outer(w1, w1).ravel()
            sw = np.zeros(n * n)
            sw[self.boundary] = h
        self.volume_weights = vw
        self.surface_weights = sw
        self.interior_weight = h**dim
        self.n_nodes = n**dim
        # flat indices of the 2*dim axis neighbors of each interior node
        if dim == 1:
            self._nbr = np.column_stack([self.interior - 1, self.interior + 1])
        else:
            self._nbr = np.column_stack([
                self.interior - n, self.interior + n,
                self.interior - 1, self.interior + 1,
            ])

    def interior_neighbors(self) -> np.ndarray:
        """(len(interior), 2*dim) flat neighbor indices, axis 1 first."""
        return self._nbr

    def flat_index(self, multi) -> int:
        if self.dim == 1:
            return int(multi[0])
        return int(multi[0]) * self.n + int(multi[1])

    def __eq__(self, other):
        return (isinstance(other, GridDomain)
                and (self.dim, self.n) == (other.dim, other.n))

    def __hash__(self):
        return hash((self.dim, self.n))

    def __repr__(self):
        return f"GridDomain(dim={self.dim}, n={self.n})"


def build_domain(dim: int, n: int) -> GridDomain:
    return GridDomain(dim, n)


@dataclass
class Field:
    """Map from grid nodes into a target space, packed one row per node."""

    domain: GridDomain
    space: EnergySpace
    values: np.ndarray
    meta: dict = dc_field(default_factory=dict)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        expected = (self.domain.n_nodes, self.space.width)
        if self.values.shape != expected:
            raise ValueError(
                f"values shape {self.values.shape} != {expected}")

    def point(self, flat_index: int):
        return self.space.unpack(self.values[flat_index:flat_index + 1])[0]


@dataclass
class BoundaryValues:
    """A field restricted to the boundary nodes of its domain."""

    domain: GridDomain
    indices: np.ndarray
    values: np.ndarray


def make_field(domain: GridDomain, space: EnergySpace, assignment) -> Field:
    """Total assignment of target points to nodes.

    assignment may be a callable coords -> point, a dict keyed by flat
    node index, or a sequence of points in node order.  Every node must
    receive a valid point.
    """
    if callable(assignment):
        pts = [assignment(c) for c in domain.coords]
    elif isinstance(assignment, dict):
        missing = [k for k in range(domain.n_nodes) if k not in assignment]
        if missing:
            raise ValueError(f"assignment missing {len(missing)} nodes, "
                             f"first {missing[:4]}")
        pts = [assignment[k] for k in range(domain.n_nodes)]
    else:
        pts = list(assignment)
        if len(pts) != domain.n_nodes:
            raise ValueError(
                f"expected {domain.n_nodes} points, got {len(pts)}")
    for p in pts:
        space.validate_point(p)
    return Field(domain, space, space.pack(pts))


def boundary_trace(f: Field) -> BoundaryValues:
    idx = f.domain.boundary
    return BoundaryValues(f.domain, idx.copy(), f.values[idx].copy())


def l2_field_distance(f: Field, g: Field) -> float:
    """L2(Omega) distance of two fields by trapezoid quadrature."""
    if f.domain != g.domain:
        raise ValueError("fields live on different domains")
    if f.space.space_id != g.space.space_id:
        raise ValueError("fields map into different spaces")
    sq = f.space.rows_sq_dist(f.values, g.values)
    return math.sqrt(float(f.domain.volume_weights @ sq))


def save_field(f: Field, path: str) -> None:
    pts = f.space.unpack(f.values)
    doc = {
        "space": f.space.space_id,
        "dim": f.domain.dim,
        "n": f.domain.n,
        "values": [f.space.serialize_point(p) for p in pts],
        "meta": {k: v for k, v in f.meta.items()
                 if isinstance(v, (bool, int, float, str))},
    }
    with open(path, "w") as fh:
        json.dump(doc, fh)


def load_field(path: str, space: EnergySpace) -> Field:
    with open(path) as fh:
        doc = json.load(fh)
    if doc["space"] != space.space_id:
        raise ValueError(
            f"field was saved for {doc['space']!r}, not {space.space_id!r}")
    domain = GridDomain(int(doc["dim"]), int(doc["n"]))
    pts = [space.deserialize_point(o) for o in doc["values"]]
    f = make_field(domain, space, pts)
    f.meta.update(doc.get("meta", {}))
    return f


# -- test functions --------------------------------------------------------


class TestFunction:
    """Nonnegative C^2 function on the closed domain, zero on the
    boundary, with analytic gradient and Laplacian.

    ``superharmonic`` declares -laplacian >= 0 throughout; validate_on
    spot-checks all declared properties on a given grid.
    """

    __test__ = False  # keep pytest from collecting this as a test class

    def __init__(self, name: str, dim: int, value: Callable,
                 gradient: Callable, laplacian: Callable,
                 superharmonic: bool = True):
        self.name = name
        self.dim = dim
        self.value = value
        self.gradient = gradient
        self.laplacian = laplacian
        self.superharmonic = superharmonic

    def normal_derivative(self, coords: np.ndarray,
                          normals: np.ndarray) -> np.ndarray:
        g = self.gradient(np.atleast_2d(coords))
        return np.einsum("ij,ij->i", g, np.atleast_2d(normals))

    def scaled(self, lam: float) -> "TestFunction":
        if lam < 0:
            raise ValueError("scale must be >= 0")
        return TestFunction(
            f"{self.name}*{lam:g}", self.dim,
            lambda x, s=self: lam * s.value(x),
            lambda x, s=self: lam * s.gradient(x),
            lambda x, s=self: lam * s.laplacian(x),
            self.superharmonic)

    def validate_on(self, domain: GridDomain, tol: float = 1e-12) -> None:
        if domain.dim != self.dim:
            raise ValueError(f"{self.name} is {self.dim}-dimensional, "
                             f"domain is {domain.dim}-dimensional")
        vals = self.value(domain.coords)
        if np.min(vals) < -tol:
            raise ValueError(f"{self.name} negative on the domain")
        if np.max(np.abs(vals[domain.boundary])) > tol:
            raise ValueError(f"{self.name} does not vanish on the boundary")
        if self.superharmonic:
            lap = self.laplacian(domain.coords[domain.interior])
            if np.max(lap) > tol:
                raise ValueError(f"{self.name} is not superharmonic")


def _poly_bump(dim: int) -> TestFunction:
    if dim == 1:
        return TestFunction(
            "poly-bump", 1,
            lambda x: x[:, 0] * (1.0 - x[:, 0]),
            lambda x: (1.0 - 2.0 * x[:, 0])[:, None],
            lambda x: np.full(len(x), -2.0))

    def value(x):
        return x[:, 0] * (1 - x[:, 0]) * x[:, 1] * (1 - x[:, 1])

    def gradient(x):
        a, b = x[:, 0], x[:, 1]
        return np.column_stack([(1 - 2 * a) * b * (1 - b),
                                a * (1 - a) * (1 - 2 * b)])

    def laplacian(x):
        a, b = x[:, 0], x[:, 1]
        return -2.0 * (b * (1 - b) + a * (1 - a))

    return TestFunction("poly-bump", 2, value, gradient, laplacian)


def _sine_bump(dim: int) -> TestFunction:
    if dim == 1:
        return TestFunction(
            "sine-bump", 1,
            lambda x: np.sin(np.pi * x[:, 0]),
            lambda x: (np.pi * np.cos(np.pi * x[:, 0]))[:, None],
            lambda x: -np.pi**2 * np.sin(np.pi * x[:, 0]))

    def value(x):
        return np.sin(np.pi * x[:, 0]) * np.sin(np.pi * x[:, 1])

    def gradient(x):
        a, b = np.pi * x[:, 0], np.pi * x[:, 1]
        return np.pi * np.column_stack([np.cos(a) * np.sin(b),
                                        np.sin(a) * np.cos(b)])

    return TestFunction("sine-bump", 2, value, gradient,
                        lambda x: -2.0 * np.pi**2 * value(x))


def _zero(dim: int) -> TestFunction:
    return TestFunction(
        "zero", dim,
        lambda x: np.zeros(len(np.atleast_2d(x))),
        lambda x: np.zeros_like(np.atleast_2d(x), dtype=float),
        lambda x: np.zeros(len(np.atleast_2d(x))))


TEST_FUNCTION_IDS = ("poly-bump", "sine-bump", "zero")


def test_function(name: str, dim: int) -> TestFunction:
    if name == "poly-bump":
        return _poly_bump(dim)
    if name == "sine-bump":
        return _sine_bump(dim)
    if name == "zero":
        return _zero(dim)
    raise ValueError(
        f"unknown test function {name!r}; known: {TEST_FUNCTION_IDS}")
