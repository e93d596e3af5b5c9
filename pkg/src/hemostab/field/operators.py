"""Gain and loss operators of the mild formulation, and the resting-phase field ``P``.

``operator_G`` and ``operator_J`` evaluate one window of the variation of
constants formula on stored history.  They are the reference versions of the
per-step terms inside :func:`solve_field`, which caches the same quantities.
Both take grid node indices ``j`` rather than maturities: pullbacks along
characteristics then land on nodes by index arithmetic alone.
"""
from __future__ import annotations

import numpy as np

from .. import flow, kernels
from ..model import ValidatedModel
from .history import FieldHistory


def _slice_index(hist: FieldHistory, t: float) -> int:
    i = int(round(t / hist.dt))
    if abs(i * hist.dt - t) > 1e-9 * max(1.0, abs(t)):
        raise ValueError(f"t={t} is not on the slice grid (dt={hist.dt})")
    return i


def _window(hist: FieldHistory, t: float, window) -> tuple[int, int]:
    t0, t1 = (t - hist.dt, t) if window is None else window
    if abs(t1 - t) > 1e-12:
        raise ValueError("window must end at t")
    i0, i1 = _slice_index(hist, t0), _slice_index(hist, t1)
    if i1 <= i0:
        raise ValueError("window must have positive length")
    return i0, i1


def _simpson_weights(n: int) -> np.ndarray:
    """Composite Simpson weights on ``n`` unit intervals (``n`` even)."""
    w = np.ones(n + 1)
    w[1:-1:2] = 4.0
    w[2:-1:2] = 2.0
    return w / 3.0


def _nodal_weights(n: int) -> np.ndarray:
    """Simpson for even ``n``, Simpson plus a closing 3/8 panel for odd ``n >= 3``."""
    if n == 1:
        return np.array([0.5, 0.5])
    if n % 2 == 0:
        return _simpson_weights(n)
    w = np.zeros(n + 1)
    w[: n - 2] = _simpson_weights(n - 3)
    w[n - 3:] += np.array([3.0, 9.0, 9.0, 3.0]) / 8.0
    return w


def delayed_gain_integrand(model: ValidatedModel, hist: FieldHistory, s: float, Y, order=kernels.DEFAULT_ORDER):
    """``2 int zeta(a, mu) lambda(Delta(a, mu), N(s - a, Delta(a, mu))) da`` at ``mu = m(Y)``."""
    Y = np.atleast_1d(np.asarray(Y, dtype=float))
    a, w = kernels.kernel_rule(model.config.kernel, order)
    mu = flow.maturity_of_log_h(model, Y)
    gip = model.g_inv_prime(mu)
    out = np.zeros(len(Y))
    act = gip > 0
    if not np.any(act):
        return out
    mother = model.g_inv(mu[act])
    Ym = flow.log_h(model, mother)[None, :] - a[:, None]
    N = hist.sample(np.broadcast_to((s - a)[:, None], Ym.shape), Ym)
    lam = model.flux(flow.maturity_of_log_h(model, Ym), N)
    weight = w[:, None] * kernels.xi(model, a[:, None], mother[None, :], order)
    out[act] = 2.0 * gip[act] * np.sum(weight * lam, axis=0)
    return out


def operator_G(model: ValidatedModel, hist: FieldHistory, t: float, j, window=None,
               order: int = kernels.DEFAULT_ORDER):
    """Gain term over ``window = (t0, t)`` at grid nodes ``j``.

    Composite Simpson in ``s`` on the slice grid refined by midpoints; the
    default window is the last step ``(t - dt, t)``.
    """
    i0, i1 = _window(hist, t, window)
    j = np.atleast_1d(np.asarray(j, dtype=int))
    y = hist.grid.y[j]
    m = hist.grid.m[j]
    n = 2 * (i1 - i0)
    h = 0.5 * hist.dt
    w = _simpson_weights(n)
    total = np.zeros(len(j))
    for k in range(n + 1):
        lag = (n - k) * h
        s = t - lag
        f = delayed_gain_integrand(model, hist, s, y - lag, order)
        total += w[k] * kernels.bigK(model, lag, m, order) * f
    return h * total


def operator_J(model: ValidatedModel, hist: FieldHistory, t: float, j, window=None,
               order: int = kernels.DEFAULT_ORDER):
    """Loss term over ``window = (t0, t)`` at grid nodes ``j``.

    The integrand is sampled only at slice times, where the pullback of node
    ``j`` by ``k`` steps is node ``j - k``.
    """
    i0, i1 = _window(hist, t, window)
    if i1 > hist.top:
        raise ValueError("operator_J needs the slice at t to be stored")
    j = np.atleast_1d(np.asarray(j, dtype=int))
    n = i1 - i0
    w = _nodal_weights(n)
    m = hist.grid.m[j]
    y = hist.grid.y[j]
    total = np.zeros(len(j))
    for k in range(n + 1):
        # k steps back along the characteristic
        N = hist.node_value(i1 - k, j - k)
        mu = flow.maturity_of_log_h(model, y - k * hist.dt)
        total += w[n - k] * kernels.bigK(model, k * hist.dt, m, order) * model.flux(mu, N)
    return hist.dt * total


def _efflux_parts(model: ValidatedModel, Y, order):
    Y = np.atleast_1d(np.asarray(Y, dtype=float))
    a, w = kernels.kernel_rule(model.config.kernel, order)
    mu = flow.maturity_of_log_h(model, Y)
    Yb = Y[None, :] - a[:, None]
    weight = w[:, None] * kernels.xi(model, a[:, None], mu[None, :], order)
    return a, weight, Yb, flow.maturity_of_log_h(model, Yb)


def _efflux_eval(model: ValidatedModel, hist: FieldHistory, s: float, parts):
    a, weight, Yb, mb = parts
    N = hist.sample(np.broadcast_to((s - a)[:, None], Yb.shape), Yb)
    return np.sum(weight * model.flux(mb, N), axis=0)


def efflux(model: ValidatedModel, hist: FieldHistory, s: float, Y, order=kernels.DEFAULT_ORDER):
    """Cells leaving the resting phase through division, ``int k xi lambda(pi_{-a} mu, ...) da``."""
    return _efflux_eval(model, hist, s, _efflux_parts(model, Y, order))


def reconstruct_P(model: ValidatedModel, hist: FieldHistory, P0, order: int = kernels.DEFAULT_ORDER):
    """Resting-phase density on the grid of a solved field.

    ``P0`` (callable of maturity, or constant) is the slice at ``t = tau_max``.
    Returns an array of shape ``(top - K + 1, J + 1)`` for slices ``K .. top``.
    The value at ``m = 0``, which feeds node 0 through transport, is carried
    along the floor characteristic as an extra scalar.
    """
    grid = hist.grid
    dt = hist.dt
    K, top = hist.K, hist.top
    ghost_y = grid.y[0] - 1e3
    y_ext = np.concatenate([[ghost_y], grid.y])
    m_ext = flow.maturity_of_log_h(model, y_ext)
    p0 = P0(m_ext) if callable(P0) else np.full(len(y_ext), float(P0))
    out = np.zeros((top - K + 1, grid.J + 1))
    out[0] = p0[1:]
    prev = np.asarray(p0, dtype=float).copy()

    Xi1 = kernels.xi(model, dt, m_ext, order)
    Xih = kernels.xi(model, 0.5 * dt, m_ext, order)
    # ghost follows its own characteristic; nodes take their left neighbour
    src_idx = np.concatenate([[0], np.arange(len(y_ext) - 1)])
    y_back = np.concatenate([[ghost_y], grid.y - dt])
    y_mid = np.concatenate([[ghost_y], grid.y - 0.5 * dt])

    sets = [(Y, flow.maturity_of_log_h(model, Y), _efflux_parts(model, Y, order)) for Y in (y_back, y_mid, y_ext)]

    def source(s, k):
        Y, mu, parts = sets[k]
        N = hist.sample(np.full(Y.shape, s), Y)
        return model.flux(mu, N) - _efflux_eval(model, hist, s, parts)

    for step, n in enumerate(range(K, top)):
        t_n = n * dt
        f0 = source(t_n, 0)
        fh = source(t_n + 0.5 * dt, 1)
        f1 = source(t_n + dt, 2)
        new = prev[src_idx] * Xi1 + dt / 6.0 * (Xi1 * f0 + 4.0 * Xih * fh + f1)
        out[step + 1] = new[1:]
        prev = new
    return out
