"""Target-space plugins and their registry."""
from __future__ import annotations

from .base import EnergySpace, FlowResult, LowerBoundWitness
from .euclidean import EuclideanLinear, EuclideanQuadratic
from .quantile import QuantileEntropy, uniform_quantile_sample
from .tripod import TripodPoint, TripodQuadratic, point_on_geodesic

SPACE_IDS = (
    "euclid-quadratic",
    "euclid-linear",
    "quantile-entropy",
    "tripod-quadratic",
)


def make_space(space_id: str, **params) -> EnergySpace:
    """Build a plugin by registry id.

    Recognized params per id:
      euclid-quadratic: dim, center, offset
      euclid-linear:    dim, coeffs
      quantile-entropy: m, tau, gamma_min
      tripod-quadratic: z0 (pair [branch, radius])
    """
    if space_id == "euclid-quadratic":
        return EuclideanQuadratic(**params)
    if space_id == "euclid-linear":
        return EuclideanLinear(**params)
    if space_id == "quantile-entropy":
        return QuantileEntropy(**params)
    if space_id == "tripod-quadratic":
        z0 = params.pop("z0", None)
        if z0 is not None and not isinstance(z0, TripodPoint):
            z0 = TripodPoint(int(z0[0]), float(z0[1]))
        return TripodQuadratic(z0=z0, **params)
    raise ValueError(f"unknown space id {space_id!r}; known: {SPACE_IDS}")


__all__ = [
    "EnergySpace",
    "FlowResult",
    "LowerBoundWitness",
    "EuclideanQuadratic",
    "EuclideanLinear",
    "QuantileEntropy",
    "TripodPoint",
    "TripodQuadratic",
    "point_on_geodesic",
    "uniform_quantile_sample",
    "make_space",
    "SPACE_IDS",
]
