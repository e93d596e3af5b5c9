"""Initial data ``phi(t, m)`` on ``[0, tau_max] x [0, 1]`` from config blocks."""
from __future__ import annotations

import csv
from pathlib import Path

import numpy as np
from scipy.interpolate import RegularGridInterpolator


def constant(value: float):
    value = float(value)

    def phi(t, m):
        return np.full(np.broadcast(np.asarray(t), np.asarray(m)).shape, value)

    return phi


def product(amplitude: float = 1.0, t_amp: float = 0.0, t_freq: float = 1.0, m_slope: float = 0.0):
    """``amplitude (1 + t_amp sin(t_freq t)) (1 + m_slope m)``."""

    def phi(t, m):
        t = np.asarray(t, dtype=float)
        m = np.asarray(m, dtype=float)
        return amplitude * (1.0 + t_amp * np.sin(t_freq * t)) * (1.0 + m_slope * m)

    return phi


def bump(base: float = 1.0, amplitude: float = 0.5, center: float = 0.6, width: float = 0.2):
    """``base`` plus a smooth cosine bump in maturity on ``(center - width, center + width)``."""

    def phi(t, m):
        m = np.asarray(m, dtype=float)
        u = np.clip((m - center) / width, -1.0, 1.0)
        shape = 0.5 * (1.0 + np.cos(np.pi * u))
        return np.broadcast_to(base + amplitude * shape, np.broadcast(np.asarray(t), m).shape).copy()

    return phi


def from_csv(path) -> callable:
    """Gridded ``t,m,N`` table resampled by monotone cubic interpolation.

    Rows must cover a full tensor grid; order does not matter.
    """
    with open(Path(path), newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows or not {"t", "m", "N"} <= set(rows[0]):
        raise ValueError(f"{path}: expected a header with columns t,m,N")
    data = np.array([[float(r["t"]), float(r["m"]), float(r["N"])] for r in rows])
    ts = np.unique(data[:, 0])
    ms = np.unique(data[:, 1])
    if len(ts) * len(ms) != len(data):
        raise ValueError(f"{path}: rows do not form a full (t, m) grid")
    values = np.full((len(ts), len(ms)), np.nan)
    values[np.searchsorted(ts, data[:, 0]), np.searchsorted(ms, data[:, 1])] = data[:, 2]
    # pchip needs at least 4 points per axis
    method = "pchip" if min(len(ts), len(ms)) >= 4 else "linear"
    interp = RegularGridInterpolator((ts, ms), values, method=method, bounds_error=False, fill_value=None)

    def phi(t, m):
        t, m = np.broadcast_arrays(np.asarray(t, dtype=float), np.asarray(m, dtype=float))
        pts = np.stack([np.clip(t, ts[0], ts[-1]), np.clip(m, ms[0], ms[-1])], axis=-1)
        return interp(pts.reshape(-1, 2)).reshape(t.shape)

    return phi


def truncate_phi_b(phi, b: float):
    """``phi_b``: equal to ``phi`` for ``m <= b`` and to ``phi(t, b)`` above.

    The constant extension runs all the way to ``m = 1``.
    """
    if not 0.0 < b <= 1.0:
        raise ValueError("b must lie in (0, 1]")

    def phi_b(t, m):
        return phi(t, np.minimum(np.asarray(m, dtype=float), b))

    return phi_b


def zero_below(phi, b: float):
    """``phi`` with the stem compartment ``m <= b`` destroyed."""

    def out(t, m):
        m = np.asarray(m, dtype=float)
        return np.where(m <= b, 0.0, phi(t, m))

    return out


def from_config(block: dict, base_dir: Path | None = None):
    """Build ``phi`` from ``{"family": ..., ...}``; optional ``zero_below`` and ``truncate_b`` keys."""
    block = dict(block)
    family = block.pop("family")
    cut = block.pop("zero_below", None)
    trunc = block.pop("truncate_b", None)
    if family == "constant":
        phi = constant(block["value"])
    elif family == "product":
        phi = product(**block)
    elif family == "bump":
        phi = bump(**block)
    elif family == "csv":
        path = Path(block["path"])
        if base_dir is not None and not path.is_absolute():
            path = base_dir / path
        phi = from_csv(path)
    else:
        raise ValueError(f"unknown initial-data family {family!r}")
    if trunc is not None:
        phi = truncate_phi_b(phi, trunc)
    if cut is not None:
        phi = zero_below(phi, cut)
    return phi
