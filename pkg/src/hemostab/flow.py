"""Characteristic flow of the maturation velocity.

Everything here is closed form.  In the coordinate ``y = ln h(m)`` the
backward flow ``pi_{-t}`` is the unit-speed shift ``y -> y - t``, which is
what the field solver's grid is built on.
"""
from __future__ import annotations

import numpy as np
from scipy.optimize import minimize_scalar

from .model import ValidatedModel

TAU0_CAP = 1e6
_TAU0_GRID = 4096


class DegenerateMaturity(ValueError):
    pass


class Unbounded(ArithmeticError):
    """The re-maturation time of a daughter cell is not bounded."""


def log_h(model: ValidatedModel, m):
    return model.config.velocity.log_h(m)


def maturity_of_log_h(model: ValidatedModel, y):
    return model.config.velocity.maturity_of_log_h(y)


def h(model: ValidatedModel, m):
    m = np.asarray(m, dtype=float)
    out = np.exp(log_h(model, m))
    out = np.where(m == 1.0, 1.0, out)
    return np.where(m == 0.0, 0.0, out)


def h_inv(model: ValidatedModel, y):
    y = np.asarray(y, dtype=float)
    with np.errstate(divide="ignore"):
        m = maturity_of_log_h(model, np.log(y))
    m = np.where(y == 1.0, 1.0, m)
    return np.where(y == 0.0, 0.0, m)


def pi(model: ValidatedModel, s, m):
    """Maturity at time ``s <= 0`` of a cell that has maturity ``m`` at time 0."""
    s = np.asarray(s, dtype=float)
    m = np.asarray(m, dtype=float)
    if np.any(s > 0):
        raise ValueError("pi is defined for s <= 0")
    out = maturity_of_log_h(model, log_h(model, m) + s)
    return np.where(m == 0.0, 0.0, out)


def delta_map(model: ValidatedModel, a, m):
    """Maturity, ``a`` time units ago, of the mother of a cell now at ``m``."""
    a = np.asarray(a, dtype=float)
    if np.any(a < 0):
        raise ValueError("delta is defined for a >= 0")
    return pi(model, -a, model.g_inv(m))


def maturation_time(model: ValidatedModel, m1, m2):
    """Time to mature from ``m1`` to ``m2``: ``int_{m1}^{m2} dtheta / V``."""
    m1 = np.asarray(m1, dtype=float)
    m2 = np.asarray(m2, dtype=float)
    if np.any(m1 <= 0):
        raise DegenerateMaturity("maturation time from m = 0 diverges")
    if np.any(m2 < m1):
        raise ValueError("need m1 <= m2")
    return log_h(model, m2) - log_h(model, m1)


def remature_time(model: ValidatedModel, m):
    """``int_m^{g^{-1}(m)} dtheta / V`` for ``m > 0``."""
    m = np.asarray(m, dtype=float)
    return log_h(model, model.g_inv(m)) - log_h(model, m)


def tau0(model: ValidatedModel, cap: float = TAU0_CAP) -> float:
    """Supremum over ``m in (0, g(1)]`` of the daughter re-maturation time.

    Raises :class:`Unbounded` when the supremum exceeds ``cap`` or the
    integrand keeps growing toward ``m -> 0``.
    """
    vel = model.config.velocity
    g1 = model.g1
    if vel._linear_rate is not None:
        # constant in m for linear V and g
        return float(np.log(1.0 / model.config.division.ratio) / vel._linear_rate)

    # grid logarithmic in h(m): uniform in y = ln h(m)
    y_top = float(log_h(model, g1))
    y_grid = np.linspace(y_top - 60.0, y_top, _TAU0_GRID)
    m_grid = maturity_of_log_h(model, y_grid)
    m_grid = m_grid[m_grid > 0]
    vals = remature_time(model, m_grid)
    if not np.all(np.isfinite(vals)) or vals.max() > cap:
        raise Unbounded(f"re-maturation time exceeds {cap:g}; tau0 is infinite")
    i = int(np.argmax(vals))  # first maximum, i.e. smallest m on ties
    if i == 0 and vals[0] > vals[1]:
        raise Unbounded("re-maturation time grows toward m -> 0")
    lo = y_grid[max(i - 1, 0)]
    hi = y_grid[min(i + 1, len(y_grid) - 1)]
    res = minimize_scalar(
        lambda y: -float(remature_time(model, maturity_of_log_h(model, y))),
        bounds=(lo, hi),
        method="bounded",
        options={"xatol": 1e-12},
    )
    return float(max(vals[i], -res.fun))
