"""One-dimensional Wasserstein-2 target in quantile coordinates.

A point is a strictly increasing vector X in R^m holding quantile values
at the midpoints s_i = (i - 1/2)/m.  With ds = 1/m the metric is the
weighted l2 distance  d(X, Y)^2 = ds * sum (X_i - Y_i)^2,  which is the
W2 distance between the m-atom measures the vectors represent.  The
energy is the discrete Boltzmann entropy

    H(X) = -ds * sum_{i<m} log((X_{i+1} - X_i) / ds),

infinite when any increment falls below the gap floor.  The flow has no
closed form and is driven by proximal (minimizing-movement) substeps.
"""
from __future__ import annotations

import math
from typing import Iterable, Sequence

import numpy as np
from numba import njit

from ..rng import SplitMix64
from .base import EnergySpace, FlowResult, LowerBoundWitness


@njit(cache=True)
def _chain_objective(v, x, m, h, ds):
    # Objective of one substep divided by ds: the barrier plus the
    # proximal quadratic.  Returns inf outside the monotone cone.
    s = 0.0
    for i in range(m - 1):
        g = v[i + 1] - v[i]
        if g <= 0.0:
            return np.inf
        s -= math.log(g / ds)
    q = 0.0
    for j in range(m):
        r = v[j] - x[j]
        q += r * r
    return s + q / (2.0 * h)


@njit(cache=True)
def _prox_chain(x0, n_steps, h, ds, gtol, newton_cap):
    """Run n_steps implicit substeps of size h from x0.

    Each substep solves  argmin_Y H(Y) + d(X, Y)^2 / (2 h)  by damped
    Newton on the log-barrier objective; the common factor ds is divided
    out of the optimality system.  Returns (endpoint, failed_step,
    last_grad_norm, total_newton_iters); failed_step is -1 on success.
    """
    m = x0.shape[0]
    x = x0.copy()
    y = x0.copy()
    trial = np.empty(m)
    inv = np.empty(m - 1)
    grad = np.empty(m)
    diag = np.empty(m)
    off = np.empty(m - 1)
    cp = np.empty(m - 1)
    dp = np.empty(m)
    step_dir = np.empty(m)
    total_newton = 0

    for step in range(n_steps):
        converged = False
        gnorm = np.inf
        for _ in range(newton_cap):
            for i in range(m - 1):
                inv[i] = 1.0 / (y[i + 1] - y[i])
            gsq = 0.0
            for j in range(m):
                a = inv[j] if j < m - 1 else 0.0
                b = inv[j - 1] if j > 0 else 0.0
                grad[j] = a - b + (y[j] - x[j]) / h
                gsq += grad[j] * grad[j]
            gnorm = ds * math.sqrt(gsq)
            if gnorm <= gtol:
                converged = True
                break
            total_newton += 1

            for j in range(m):
                a2 = inv[j] * inv[j] if j < m - 1 else 0.0
                b2 = inv[j - 1] * inv[j - 1] if j > 0 else 0.0
                diag[j] = 1.0 / h + a2 + b2
            for i in range(m - 1):
                off[i] = -inv[i] * inv[i]

            # Thomas solve of the SPD tridiagonal system T s = -grad.
            # Strict diagonal dominance by 1/h makes this stable
            # without pivoting.
            cp[0] = off[0] / diag[0]
            dp[0] = -grad[0] / diag[0]
            for i in range(1, m):
                piv = diag[i] - off[i - 1] * cp[i - 1]
                if i < m - 1:
                    cp[i] = off[i] / piv
                dp[i] = (-grad[i] - off[i - 1] * dp[i - 1]) / piv
            step_dir[m - 1] = dp[m - 1]
            for i in range(m - 2, -1, -1):
                step_dir[i] = dp[i] - cp[i] * step_dir[i + 1]

            descent = 0.0
            for j in range(m):
                descent += grad[j] * step_dir[j]

            # Keep every gap strictly positive, then backtrack (Armijo).
            amax = 1.0
            for i in range(m - 1):
                dg = step_dir[i + 1] - step_dir[i]
                if dg < 0.0:
                    cap = -0.99 * (y[i + 1] - y[i]) / dg
                    if cap < amax:
                        amax = cap
            alpha = amax
            f0 = _chain_objective(y, x, m, h, ds)
            # rounding allowance: near the optimum the true decrease is
            # far below the fp resolution of f0 and must not be
            # mistaken for an ascent
            fp_slack = 1e-14 * (1.0 + abs(f0))
            accepted = False
            for _ls in range(60):
                for j in range(m):
                    trial[j] = y[j] + alpha * step_dir[j]
                f1 = _chain_objective(trial, x, m, h, ds)
                if f1 <= f0 + 1e-4 * alpha * descent + fp_slack:
                    accepted = True
                    break
                alpha *= 0.5
            if not accepted:
                return y, step, gnorm, total_newton
            for j in range(m):
                y[j] = trial[j]
        if not converged:
            return y, step, gnorm, total_newton
        for j in range(m):
            x[j] = y[j]
    return y, -1, 0.0, total_newton


def uniform_quantile_sample(m: int, lo: float = 0.0, hi: float = 1.0) -> np.ndarray:
    """Quantile vector of Uniform[lo, hi] at the m midpoints."""
    s = (np.arange(m) + 0.5) / m
    return lo + (hi - lo) * s


class QuantileEntropy(EnergySpace):
    """Entropy on the quantile cone with a proximal flow.

    The accuracy bound of the flow is PROX_ACCURACY_C * tau; the
    constant was fixed by Richardson comparison of the chain at tau
    against tau/10 over seeded samples (see the calibration test).
    """

    space_id = "quantile-entropy"
    flow_kind = "proximal"
    # The closed slope formula below is the norm of the entropy gradient
    # in quantile coordinates.  It is certified only as a lower estimate
    # of the global difference-quotient supremum, so slope-based checks
    # downstream treat this plugin as indicative.
    slope_exact = False
    mean_barycenter = True

    # Richardson comparison of the chain at tau against tau/10 over
    # seeded samples measures d(S^tau, S^tau/10)/tau about 0.75, so the
    # true-flow error is near 0.83 tau for a first-order scheme; 2.0
    # keeps a 2.4x margin.  The calibration test re-measures this.
    PROX_ACCURACY_C = 2.0
    NEWTON_CAP = 200
    GRAD_TOL = 1e-10

    def __init__(self, m: int = 32, tau: float = 1e-3, gamma_min: float = 1e-12):
        if m < 2:
            raise ValueError(f"m must be >= 2, got {m}")
        if tau <= 0:
            raise ValueError(f"tau must be > 0, got {tau}")
        if gamma_min <= 0:
            raise ValueError(f"gamma_min must be > 0, got {gamma_min}")
        self.m = m
        self.width = m
        self.ds = 1.0 / m
        self.tau = float(tau)
        self.gamma_min = float(gamma_min)

    # -- metric and energy -------------------------------------------------

    def validate_point(self, p) -> None:
        p = np.asarray(p, dtype=float)
        if p.shape != (self.m,):
            raise ValueError(f"expected shape ({self.m},), got {p.shape}")
        if not np.all(np.isfinite(p)):
            raise ValueError("point has non-finite entries")
        gaps = np.diff(p)
        if gaps.size and gaps.min() < self.gamma_min:
            raise ValueError(
                f"increments must stay >= {self.gamma_min}, min is {gaps.min()}")

    def metric_scale(self):
        return np.full(self.m, self.ds)

    def distance(self, p, q) -> float:
        d = np.asarray(p, float) - np.asarray(q, float)
        return math.sqrt(self.ds * float(d @ d))

    def energy(self, p) -> float:
        gaps = np.diff(np.asarray(p, dtype=float))
        if gaps.min() < self.gamma_min:
            return math.inf
        return -self.ds * float(np.log(gaps / self.ds).sum())

    def slope(self, p) -> float:
        """Norm of the entropy gradient in the ds-weighted metric."""
        gaps = np.diff(np.asarray(p, dtype=float))
        if gaps.min() < self.gamma_min:
            return math.inf
        inv = 1.0 / gaps
        partial = self.ds * (np.append(inv, 0.0) - np.append(0.0, inv))
        return math.sqrt(float(partial @ partial) / self.ds)

    # -- flow --------------------------------------------------------------

    def flow(self, p, t: float) -> FlowResult:
        if t < 0:
            raise ValueError(f"flow time must be >= 0, got {t}")
        x = np.asarray(p, dtype=float).copy()
        if t == 0.0:
            return FlowResult(x, 0.0, 0, 0.0)
        k = int(math.ceil(t / self.tau))
        h = t / k
        end, failed, gnorm, _ = _prox_chain(
            x, k, h, self.ds, self.GRAD_TOL, self.NEWTON_CAP)
        if failed >= 0:
            raise RuntimeError(
                f"proximal substep {failed}/{k} stalled, |grad| = {gnorm:.3e}")
        return FlowResult(end, float(t), k, self.accuracy_bound(t))

    def accuracy_bound(self, t: float) -> float:
        return 0.0 if t == 0.0 else self.PROX_ACCURACY_C * self.tau

    # -- barycenter and witness --------------------------------------------

    def barycenter(self, points: Sequence, weights: Sequence[float]):
        w = np.asarray(weights, dtype=float)
        if np.any(w < 0) or w.sum() <= 0:
            raise ValueError("weights must be nonnegative with positive sum")
        rows = self.pack(points)
        return (w @ rows) / w.sum()

    def lower_bound_witness(self) -> LowerBoundWitness:
        # H(X) >= (m-1)/m - (X_m - X_1) by -log r >= 1 - r; rewriting the
        # range of X against the identity sample v and bounding the sup
        # norm by the l2 norm over sqrt(ds) gives
        # H(X) >= 0 - (2 / sqrt(ds)) d(X, v).
        v = uniform_quantile_sample(self.m)
        return LowerBoundWitness(0.0, 2.0 / math.sqrt(self.ds), v)

    # -- sampling ----------------------------------------------------------

    def sample_point(self, rng: SplitMix64):
        """Start uniform in [-1, 1]; increments ds * exp(U[-1, 1])."""
        start = rng.uniform(-1.0, 1.0)
        gaps = np.array([self.ds * math.exp(rng.uniform(-1.0, 1.0))
                         for _ in range(self.m - 1)])
        out = np.empty(self.m)
        out[0] = start
        out[1:] = start + np.cumsum(gaps)
        return out

    def perturb_point(self, p, radius: float, rng: SplitMix64):
        """Shift by a random vector of metric length `radius`, then
        restore monotonicity by sorting (which can only shrink the
        distance) and re-flooring the gaps."""
        xi = np.array([rng.uniform(-1.0, 1.0) for _ in range(self.m)])
        nrm = math.sqrt(self.ds * float(xi @ xi))
        if nrm == 0.0:
            xi[0], nrm = 1.0, math.sqrt(self.ds)
        y = np.sort(np.asarray(p, float) + (radius / nrm) * xi)
        idx = np.arange(self.m)
        floor = idx * self.gamma_min
        return np.maximum.accumulate(y - floor) + floor

    # -- packing and serialization -----------------------------------------

    def pack(self, points: Iterable) -> np.ndarray:
        rows = np.asarray(list(points), dtype=float)
        return rows.reshape(-1, self.m)

    def unpack(self, rows: np.ndarray) -> list:
        return [np.array(r) for r in np.asarray(rows, float).reshape(-1, self.m)]

    def rows_sq_dist(self, a, b) -> np.ndarray:
        d = np.asarray(a, float) - np.asarray(b, float)
        return self.ds * np.einsum("ij,ij->i", d, d)

    def rows_energy(self, rows) -> np.ndarray:
        gaps = np.diff(np.asarray(rows, float), axis=1)
        out = np.full(gaps.shape[0], np.inf)
        ok = gaps.min(axis=1) >= self.gamma_min
        if np.any(ok):
            out[ok] = -self.ds * np.log(gaps[ok] / self.ds).sum(axis=1)
        return out

    def serialize_point(self, p):
        return [float(v) for v in np.asarray(p, float)]

    def deserialize_point(self, obj):
        p = np.asarray(obj, dtype=float)
        self.validate_point(p)
        return p
