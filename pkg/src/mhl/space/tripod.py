"""Tripod tree target: three half-lines glued at the origin.

The simplest branching NPC space.  A point is (branch, radius) with
branch in {1, 2, 3} and radius >= 0; all branches share the radius-0
origin.  Geodesics either stay on one branch or route through the
origin, and the quadratic energy 0.5 d(., z0)^2 flows along them in
closed form.  The plugin exists to exercise every generic code path on
a genuinely non-Hilbert target.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from ..rng import SplitMix64
from .base import EnergySpace, FlowResult, LowerBoundWitness


@dataclass(frozen=True)
class TripodPoint:
    branch: int
    radius: float


def tripod_distance(p: TripodPoint, q: TripodPoint) -> float:
    if p.branch == q.branch:
        return abs(p.radius - q.radius)
    # through the origin; correct also when either radius is 0
    return p.radius + q.radius


def point_on_geodesic(a: TripodPoint, b: TripodPoint, s: float) -> TripodPoint:
    """The point at arc length s from a along the geodesic toward b."""
    total = tripod_distance(a, b)
    if not 0.0 <= s <= total + 1e-12:
        raise ValueError(f"arc length {s} outside [0, {total}]")
    if a.branch == b.branch:
        sgn = 1.0 if b.radius >= a.radius else -1.0
        return TripodPoint(a.branch, max(a.radius + sgn * s, 0.0))
    if a.radius == 0.0:
        return TripodPoint(b.branch, s)
    # distinct branches: head to the origin first, then out along b
    if s <= a.radius:
        return TripodPoint(a.branch, a.radius - s)
    return TripodPoint(b.branch, s - a.radius)


class TripodQuadratic(EnergySpace):
    """E(p) = 0.5 d(p, z0)^2 on the tripod tree.

    The flow slides along the geodesic toward z0, leaving the remaining
    distance shrinking as exp(-t): S_t p sits at distance
    exp(-t) d(p, z0) from z0.
    """

    space_id = "tripod-quadratic"
    mean_barycenter = False
    width = 2

    def __init__(self, z0: TripodPoint | None = None):
        self.z0 = TripodPoint(1, 1.0) if z0 is None else z0
        self.validate_point(self.z0)

    def validate_point(self, p) -> None:
        if not isinstance(p, TripodPoint):
            raise ValueError(f"expected TripodPoint, got {type(p).__name__}")
        if p.branch not in (1, 2, 3):
            raise ValueError(f"branch must be 1, 2 or 3, got {p.branch}")
        if not (math.isfinite(p.radius) and p.radius >= 0.0):
            raise ValueError(f"radius must be finite and >= 0, got {p.radius}")

    def distance(self, p, q) -> float:
        return tripod_distance(p, q)

    def energy(self, p) -> float:
        return 0.5 * tripod_distance(p, self.z0) ** 2

    def slope(self, p) -> float:
        return tripod_distance(p, self.z0)

    def flow(self, p, t: float) -> FlowResult:
        if t < 0:
            raise ValueError(f"flow time must be >= 0, got {t}")
        d0 = tripod_distance(p, self.z0)
        if d0 == 0.0:
            return FlowResult(p, float(t), 0, 0.0)
        end = point_on_geodesic(self.z0, p, math.exp(-t) * d0)
        return FlowResult(end, float(t), 0, 0.0)

    def barycenter(self, points: Sequence, weights: Sequence[float]):
        w = np.asarray(weights, dtype=float)
        if np.any(w < 0) or w.sum() <= 0:
            raise ValueError("weights must be nonnegative with positive sum")

        def total(c: TripodPoint) -> float:
            return float(sum(wi * tripod_distance(c, p) ** 2
                             for wi, p in zip(w, points)))

        # The objective restricted to branch b is a quadratic in the
        # radius with signed data (+r on b, -r elsewhere); its
        # constrained minimizer is the clipped signed mean.  The global
        # minimum is one of the three branch candidates or the origin;
        # ties go to the origin, then to the lowest branch index.
        best = TripodPoint(1, 0.0)
        best_val = total(best)
        for b in (1, 2, 3):
            signed = np.array([p.radius if p.branch == b else -p.radius
                               for p in points])
            rho = float(w @ signed) / float(w.sum())
            if rho <= 0.0:
                continue
            cand = TripodPoint(b, rho)
            val = total(cand)
            if val < best_val:
                best, best_val = cand, val
        return best

    def lower_bound_witness(self) -> LowerBoundWitness:
        return LowerBoundWitness(0.0, 0.0, self.z0)

    def sample_point(self, rng: SplitMix64):
        """Branch uniform in {1,2,3}, radius uniform in [0, 3]."""
        return TripodPoint(1 + rng.randint(3), rng.uniform(0.0, 3.0))

    def perturb_point(self, p, radius: float, rng: SplitMix64):
        if p.radius == 0.0:
            return TripodPoint(1 + rng.randint(3), radius)
        if rng.uniform() < 0.5:
            return TripodPoint(p.branch, p.radius + radius)
        if radius <= p.radius:
            return TripodPoint(p.branch, p.radius - radius)
        others = [b for b in (1, 2, 3) if b != p.branch]
        return TripodPoint(others[rng.randint(2)], radius - p.radius)

    # -- packing and serialization -----------------------------------------

    def pack(self, points: Iterable) -> np.ndarray:
        pts = list(points)
        rows = np.empty((len(pts), 2))
        for i, p in enumerate(pts):
            rows[i, 0] = p.branch
            rows[i, 1] = p.radius
        return rows

    def unpack(self, rows: np.ndarray) -> list:
        rows = np.asarray(rows, float).reshape(-1, 2)
        return [TripodPoint(int(r[0]), float(r[1])) for r in rows]

    def rows_sq_dist(self, a, b) -> np.ndarray:
        a = np.asarray(a, float).reshape(-1, 2)
        b = np.asarray(b, float).reshape(-1, 2)
        same = a[:, 0] == b[:, 0]
        d = np.where(same, np.abs(a[:, 1] - b[:, 1]), a[:, 1] + b[:, 1])
        return d * d

    def rows_energy(self, rows) -> np.ndarray:
        rows = np.asarray(rows, float).reshape(-1, 2)
        z = np.tile([float(self.z0.branch), self.z0.radius], (rows.shape[0], 1))
        return 0.5 * self.rows_sq_dist(rows, z)

    def serialize_point(self, p):
        return [int(p.branch), float(p.radius)]

    def deserialize_point(self, obj):
        p = TripodPoint(int(obj[0]), float(obj[1]))
        self.validate_point(p)
        return p
