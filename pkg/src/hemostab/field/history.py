"""Characteristic-aligned grid and time-slice storage for ``N(t, m)``.

Maturities are indexed by ``y = ln h(m)``; nodes are ``y_j = (j - J) dt`` so
that ``pi_{-dt}`` maps node ``j`` onto node ``j - 1`` exactly.  Anything
below node 0 is served by the boundary trace ``x(t) = N(t, 0)``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .. import flow
from ..model import ValidatedModel


class HistoryGap(LookupError):
    pass


@dataclass(frozen=True)
class MaturityGrid:
    dt: float
    J: int
    y: np.ndarray
    m: np.ndarray

    @classmethod
    def build(cls, model: ValidatedModel, dt: float, y_min: float = -12.0) -> "MaturityGrid":
        J = int(round(-y_min / dt))
        y = dt * (np.arange(J + 1) - J)
        if not y[0] < flow.log_h(model, model.g1):
            raise ValueError(f"y_min={y_min} must lie below ln h(g(1))")
        m = flow.maturity_of_log_h(model, y)
        m[-1] = 1.0
        return cls(dt, J, y, m)

    @property
    def y_min(self) -> float:
        return float(self.y[0])

    def position(self, Y):
        """Fractional node index of log-maturity ``Y``."""
        return (np.asarray(Y, dtype=float) - self.y[0]) / self.dt


def _pchip4(v, p):
    """Monotone cubic (Fritsch-Butland) through 4 unit-spaced values.

    ``v`` has shape ``(..., 4)``; ``p`` in ``[0, 3]`` is the local position.
    """
    d01 = v[..., 1] - v[..., 0]
    d12 = v[..., 2] - v[..., 1]
    d23 = v[..., 3] - v[..., 2]

    def interior(a, b):
        same = a * b > 0
        return np.where(same, 2.0 * a * b / np.where(same, a + b, 1.0), 0.0)

    def endpoint(a, b):
        d = 0.5 * (3.0 * a - b)
        d = np.where(np.sign(d) != np.sign(a), 0.0, d)
        flip = (np.sign(a) != np.sign(b)) & (np.abs(d) > 3.0 * np.abs(a))
        return np.where(flip, 3.0 * a, d)

    s1 = interior(d01, d12)
    s2 = interior(d12, d23)
    s0 = endpoint(d01, d12)
    s3 = endpoint(d23, d12)

    k = np.clip(np.floor(p), 0, 2).astype(int)
    th = p - k
    slopes = np.stack([s0, s1, s2, s3], axis=-1)
    y0 = np.take_along_axis(v, k[..., None], -1)[..., 0]
    y1 = np.take_along_axis(v, (k + 1)[..., None], -1)[..., 0]
    m0 = np.take_along_axis(slopes, k[..., None], -1)[..., 0]
    m1 = np.take_along_axis(slopes, (k + 1)[..., None], -1)[..., 0]
    th2 = th * th
    th3 = th2 * th
    return (
        (2 * th3 - 3 * th2 + 1) * y0
        + (th3 - 2 * th2 + th) * m0
        + (-2 * th3 + 3 * th2) * y1
        + (th3 - th2) * m1
    )


def _lagrange4_limited(v, p):
    """Cubic Lagrange through 4 unit-spaced values, clipped to their range."""
    w0 = -(p - 1) * (p - 2) * (p - 3) / 6.0
    w1 = p * (p - 2) * (p - 3) / 2.0
    w2 = -p * (p - 1) * (p - 3) / 2.0
    w3 = p * (p - 1) * (p - 2) / 6.0
    out = w0 * v[..., 0] + w1 * v[..., 1] + w2 * v[..., 2] + w3 * v[..., 3]
    return np.clip(out, v.min(axis=-1), v.max(axis=-1))


class FieldHistory:
    """Time slices of ``N`` on a :class:`MaturityGrid` plus the boundary trace.

    Slice ``i`` sits at ``t = i * dt``; slice ``K`` is ``t = tau_max``, where
    the data switch from the prescribed initial function to the solution.
    Time interpolation never mixes slices from both sides of ``K``.
    """

    def __init__(self, grid: MaturityGrid, K: int, n_slices: int):
        self.grid = grid
        self.dt = grid.dt
        self.K = K
        self.F = np.zeros((n_slices, grid.J + 1))
        self.x = np.zeros(n_slices)
        self.top = K

    @classmethod
    def from_function(cls, phi, grid: MaturityGrid, K: int, n_slices: int | None = None) -> "FieldHistory":
        hist = cls(grid, K, K + 1 if n_slices is None else n_slices)
        t = grid.dt * np.arange(K + 1)
        hist.F[: K + 1] = np.broadcast_to(phi(t[:, None], grid.m[None, :]), (K + 1, grid.J + 1))
        hist.x[: K + 1] = np.broadcast_to(phi(t, np.zeros_like(t)), (K + 1,))
        return hist

    @property
    def times(self) -> np.ndarray:
        return self.dt * np.arange(self.top + 1)

    def norm(self) -> float:
        """Sup norm of the stored initial data on ``[0, tau_max]``."""
        return float(max(np.max(np.abs(self.F[: self.K + 1])), np.max(np.abs(self.x[: self.K + 1]))))

    def node_value(self, i, j):
        """Node lookup; ``j < 0`` reads the boundary trace of slice ``i``."""
        i = np.asarray(i)
        j = np.asarray(j)
        return np.where(j < 0, self.x[i], self.F[i, np.clip(j, 0, self.grid.J)])

    def sample(self, t, Y):
        """Interpolated ``N(t, m)`` at log-maturity ``Y = ln h(m)``."""
        t = np.asarray(t, dtype=float)
        Y = np.asarray(Y, dtype=float)
        t, Y = np.broadcast_arrays(t, Y)
        u = t / self.dt
        eps = 1e-9
        if np.any(u < -eps) or np.any(u > self.top + eps):
            raise HistoryGap(
                f"requested t in [{t.min():g}, {t.max():g}] outside stored [0, {self.top * self.dt:g}]"
            )
        K, top = self.K, self.top
        left = u <= K + eps
        lo = np.where(left, 0, K)
        hi = np.where(left, K, top)
        lo = np.minimum(lo, hi - 3)
        i_s = np.clip(np.floor(u).astype(int) - 1, lo, hi - 3)
        pt = np.clip(u - i_s, 0.0, 3.0)

        v = self.grid.position(Y)
        v = np.maximum(v, -1e6)
        j_s = np.minimum(np.floor(v).astype(int) - 1, self.grid.J - 3)
        py = np.clip(v - j_s, 0.0, 3.0)

        ii = i_s[..., None, None] + np.arange(4)[:, None]
        jj = j_s[..., None, None] + np.arange(4)[None, :]
        vals = self.node_value(ii, jj)
        in_y = _pchip4(vals, py[..., None])
        return _lagrange4_limited(in_y, pt)
