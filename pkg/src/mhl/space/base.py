"""Contract for target spaces carrying an energy and its gradient flow.

A plugin bundles a complete metric space, a lower-semicontinuous energy,
the energy's semigroup flow, barycenters, and a global linear lower
bound witness.  Everything downstream (flow checks, grid fields,
Dirichlet energies, verification) talks to targets only through this
interface.
"""
from __future__ import annotations

from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Any, Iterable, Sequence

import numpy as np

from ..rng import SplitMix64


@dataclass(frozen=True)
class FlowResult:
    """Outcome of following the semigroup for a fixed time.

    accuracy_bound is an upper bound on the metric distance to the exact
    semigroup endpoint: 0.0 for closed-form flows, C * tau for proximal
    ones.
    """

    endpoint: Any
    elapsed: float
    substeps: int
    accuracy_bound: float


@dataclass(frozen=True)
class LowerBoundWitness:
    """Witness (alpha, beta, point) with energy(p) >= alpha - beta * d(p, point)."""

    alpha: float
    beta: float
    point: Any


class EnergySpace(ABC):
    """A metric target space with energy, flow, and barycenters.

    Class attributes fixed per plugin:
      space_id        registry identifier
      flow_kind       "exact" (closed form) or "proximal"
      slope_exact     False when slope() only certifies a lower estimate
      mean_barycenter True when the equal-weight barycenter is the
                      coordinate mean of packed rows (Hilbert-like
                      plugins); enables vectorized solver sweeps
      width           packed row length (see pack/unpack)
    """

    space_id: str = ""
    flow_kind: str = "exact"
    slope_exact: bool = True
    mean_barycenter: bool = False
    width: int = 0

    def metric_scale(self):
        """Diagonal weights m with d^2(p, q) = sum_k m[k] (p_k - q_k)^2
        on packed rows, or None when the metric has no such form.

        Hilbert-like plugins provide this; it lets grid solvers evaluate
        distances and graph energies without per-point calls.
        """
        return None

    # -- core metric/energy ops -------------------------------------------

    @abstractmethod
    def validate_point(self, p) -> None:
        """Raise ValueError when p is not a point of this space."""

    @abstractmethod
    def distance(self, p, q) -> float:
        ...

    @abstractmethod
    def energy(self, p) -> float:
        """Energy value, may be math.inf; never NaN."""

    @abstractmethod
    def slope(self, p) -> float:
        """Descent slope of the energy at p.

        Exact when slope_exact is True, otherwise a certified lower
        estimate of the global slope.
        """

    @abstractmethod
    def flow(self, p, t: float) -> FlowResult:
        """Follow the semigroup from p for time t >= 0."""

    @abstractmethod
    def barycenter(self, points: Sequence, weights: Sequence[float]):
        """Minimizer of sum_i w_i d(., p_i)^2 for nonnegative weights."""

    @abstractmethod
    def lower_bound_witness(self) -> LowerBoundWitness:
        ...

    def accuracy_bound(self, t: float) -> float:
        """Distance bound to the exact flow endpoint at time t."""
        return 0.0

    # -- sampling for harnesses -------------------------------------------

    @abstractmethod
    def sample_point(self, rng: SplitMix64):
        """Draw a generic point; distribution documented per plugin."""

    @abstractmethod
    def perturb_point(self, p, radius: float, rng: SplitMix64):
        """A point at metric distance about `radius` from p (never beyond
        a small multiple of it)."""

    def sampled_slope(self, p, rng: SplitMix64, n: int = 1000) -> float:
        """Lower estimate of the slope by sampling competitors.

        Perturbs p at radii log-spaced over [1e-3, 1] and takes the best
        difference quotient (E(p) - E(q))+ / d(p, q).
        """
        ep = self.energy(p)
        if not np.isfinite(ep):
            return float("inf")
        radii = np.logspace(-3.0, 0.0, 13)
        best = 0.0
        for k in range(n):
            q = self.perturb_point(p, float(radii[k % len(radii)]), rng)
            dq = self.distance(p, q)
            if dq <= 0.0:
                continue
            eq = self.energy(q)
            if np.isfinite(eq):
                best = max(best, (ep - eq) / dq)
        return best

    # -- packed row representation ----------------------------------------
    # Fields store one point per row of a float array with `width` columns.

    @abstractmethod
    def pack(self, points: Iterable) -> np.ndarray:
        ...

    @abstractmethod
    def unpack(self, rows: np.ndarray) -> list:
        ...

    def rows_sq_dist(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        """Row-wise squared distances between two packed arrays."""
        pa, pb = self.unpack(a), self.unpack(b)
        return np.array([self.distance(p, q) ** 2 for p, q in zip(pa, pb)])

    def rows_energy(self, rows: np.ndarray) -> np.ndarray:
        return np.array([self.energy(p) for p in self.unpack(rows)])

    def rows_flow(self, rows: np.ndarray, times: np.ndarray) -> np.ndarray:
        """Flow row i for times[i]; returns packed endpoints."""
        pts = [self.flow(p, float(t)).endpoint
               for p, t in zip(self.unpack(rows), times)]
        return self.pack(pts)

    # -- serialization -----------------------------------------------------

    @abstractmethod
    def serialize_point(self, p):
        """JSON-compatible representation of p."""

    @abstractmethod
    def deserialize_point(self, obj):
        ...
