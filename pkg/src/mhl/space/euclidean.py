"""Euclidean targets with closed-form flows, used as exact references."""
from __future__ import annotations

import math
from typing import Iterable, Sequence

import numpy as np

from ..rng import SplitMix64
from .base import EnergySpace, FlowResult, LowerBoundWitness


class _EuclideanBase(EnergySpace):
    """Shared plumbing for R^n targets; points are float vectors."""

    mean_barycenter = True

    def __init__(self, dim: int):
        if dim < 1:
            raise ValueError(f"dim must be >= 1, got {dim}")
        self.dim = dim
        self.width = dim

    def validate_point(self, p) -> None:
        p = np.asarray(p, dtype=float)
        if p.shape != (self.dim,):
            raise ValueError(f"expected shape ({self.dim},), got {p.shape}")
        if not np.all(np.isfinite(p)):
            raise ValueError("point has non-finite coordinates")

    def metric_scale(self):
        return np.ones(self.dim)

    def distance(self, p, q) -> float:
        return float(np.linalg.norm(np.asarray(p, float) - np.asarray(q, float)))

    def barycenter(self, points: Sequence, weights: Sequence[float]):
        w = np.asarray(weights, dtype=float)
        if np.any(w < 0) or w.sum() <= 0:
            raise ValueError("weights must be nonnegative with positive sum")
        rows = self.pack(points)
        return (w @ rows) / w.sum()

    def sample_point(self, rng: SplitMix64):
        # uniform in the box [-2, 2]^dim
        return np.array([rng.uniform(-2.0, 2.0) for _ in range(self.dim)])

    def perturb_point(self, p, radius: float, rng: SplitMix64):
        xi = np.array([rng.uniform(-1.0, 1.0) for _ in range(self.dim)])
        nrm = np.linalg.norm(xi)
        if nrm == 0.0:
            xi[0], nrm = 1.0, 1.0
        return np.asarray(p, float) + (radius / nrm) * xi

    def pack(self, points: Iterable) -> np.ndarray:
        rows = np.asarray(list(points), dtype=float)
        return rows.reshape(-1, self.dim)

    def unpack(self, rows: np.ndarray) -> list:
        return [np.array(r) for r in np.asarray(rows, float).reshape(-1, self.dim)]

    def rows_sq_dist(self, a, b) -> np.ndarray:
        d = np.asarray(a, float) - np.asarray(b, float)
        return np.einsum("ij,ij->i", d, d)

    def serialize_point(self, p):
        return [float(v) for v in np.asarray(p, float)]

    def deserialize_point(self, obj):
        p = np.asarray(obj, dtype=float)
        self.validate_point(p)
        return p


class EuclideanQuadratic(_EuclideanBase):
    """E(u) = 0.5 |u - center|^2 + offset on R^dim.

    Flow contracts exponentially onto the center:
    S_t u = center + exp(-t) (u - center).
    The optional offset shifts the energy only; it exercises paths that
    must cope with negative energies.
    """

    space_id = "euclid-quadratic"

    def __init__(self, dim: int = 2, center=None, offset: float = 0.0):
        super().__init__(dim)
        self.center = (np.zeros(dim) if center is None
                       else np.asarray(center, dtype=float))
        if self.center.shape != (dim,):
            raise ValueError("center has wrong dimension")
        self.offset = float(offset)

    def energy(self, p) -> float:
        d = np.asarray(p, float) - self.center
        return 0.5 * float(d @ d) + self.offset

    def slope(self, p) -> float:
        return self.distance(p, self.center)

    def flow(self, p, t: float) -> FlowResult:
        if t < 0:
            raise ValueError(f"flow time must be >= 0, got {t}")
        end = self.center + math.exp(-t) * (np.asarray(p, float) - self.center)
        return FlowResult(end, float(t), 0, 0.0)

    def lower_bound_witness(self) -> LowerBoundWitness:
        # E >= offset everywhere, with equality at the center.
        return LowerBoundWitness(self.offset, 0.0, self.center.copy())

    def rows_energy(self, rows) -> np.ndarray:
        d = np.asarray(rows, float) - self.center
        return 0.5 * np.einsum("ij,ij->i", d, d) + self.offset

    def rows_flow(self, rows, times) -> np.ndarray:
        d = np.asarray(rows, float) - self.center
        return self.center + np.exp(-np.asarray(times, float))[:, None] * d


class EuclideanLinear(_EuclideanBase):
    """E(u) = <coeffs, u> on R^dim, flowing at constant speed.

    S_t u = u - t * coeffs; the slope is |coeffs| everywhere.
    """

    space_id = "euclid-linear"

    def __init__(self, dim: int = 2, coeffs=(0.6, -0.8)):
        super().__init__(dim)
        self.coeffs = np.asarray(coeffs, dtype=float)
        if self.coeffs.shape != (dim,):
            raise ValueError("coeffs has wrong dimension")

    def energy(self, p) -> float:
        return float(self.coeffs @ np.asarray(p, float))

    def slope(self, p) -> float:
        return float(np.linalg.norm(self.coeffs))

    def flow(self, p, t: float) -> FlowResult:
        if t < 0:
            raise ValueError(f"flow time must be >= 0, got {t}")
        return FlowResult(np.asarray(p, float) - t * self.coeffs, float(t), 0, 0.0)

    def lower_bound_witness(self) -> LowerBoundWitness:
        # Cauchy-Schwarz from the origin: <c, u> >= -|c| d(u, 0).
        return LowerBoundWitness(0.0, float(np.linalg.norm(self.coeffs)),
                                 np.zeros(self.dim))

    def rows_energy(self, rows) -> np.ndarray:
        return np.asarray(rows, float) @ self.coeffs

    def rows_flow(self, rows, times) -> np.ndarray:
        return (np.asarray(rows, float)
                - np.asarray(times, float)[:, None] * self.coeffs)
