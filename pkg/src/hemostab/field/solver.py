"""Step-by-step solver for the integrated population equation.

One step from ``t_n`` to ``t_{n+1} = t_n + dt`` restarts the variation of
constants formula at ``t_n``:

    N(t_{n+1}, m_j) = N(t_n, m_{j-1}) K(dt, m_j) + G_step - J_step

The transport term is an exact node shift.  ``J_step`` integrates along the
characteristic through nodes ``(n+1-k, j-k)`` with Adams-Moulton weights and
is solved by Picard iteration; ``G_step`` (Simpson in ``s``, kernel rule in
``a``) only reads data at least ``tau_min`` old and is explicit whenever
``dt <= tau_min``.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .. import dde, flow, kernels
from ..model import ValidatedModel
from .history import FieldHistory, MaturityGrid

# Adams-Moulton weights over one step; index 0 is the new time level
_AM = {
    1: np.array([1.0, 1.0]) / 2.0,
    2: np.array([5.0, 8.0, -1.0]) / 12.0,
    3: np.array([9.0, 19.0, -5.0, 1.0]) / 24.0,
}


class PicardDiverged(ArithmeticError):
    pass


@dataclass
class Field:
    """Solution slices ``N(t_i, m_j)`` for ``t_i`` in ``[0, T]``."""

    history: FieldHistory
    picard_residuals: np.ndarray
    picard_iterations: np.ndarray
    picard_ratios: np.ndarray
    dde_solution: dde.DdeSolution
    meta: dict = field(default_factory=dict)

    @property
    def grid(self) -> MaturityGrid:
        return self.history.grid

    @property
    def dt(self) -> float:
        return self.history.dt

    @property
    def K(self) -> int:
        return self.history.K

    @property
    def t(self) -> np.ndarray:
        return self.history.times

    @property
    def values(self) -> np.ndarray:
        return self.history.F[: self.history.top + 1]

    @property
    def boundary(self) -> np.ndarray:
        return self.history.x[: self.history.top + 1]

    def sup_norm(self) -> np.ndarray:
        """``sup_m |N(t_i, m)|`` per slice, boundary trace included."""
        v = self.values
        return np.maximum(np.max(np.abs(v), axis=1), np.abs(self.boundary))


def default_step(model: ValidatedModel) -> float:
    tmax, tmin = model.tau_max, model.tau_min
    if tmin > 0:
        return tmax / max(32, math.ceil(tmax / tmin - 1e-12))
    return tmax / 64


def _dde_substeps(model: ValidatedModel, dt: float) -> int:
    sub = 1
    while True:
        try:
            dde.check_step(model, dt / sub)
            return sub
        except dde.StepTooLarge:
            sub += 1


class _GainTerm:
    """Precomputed pieces of the distributed-delay gain at fixed log-maturities."""

    def __init__(self, model: ValidatedModel, Y: np.ndarray, a: np.ndarray, w: np.ndarray, order: int):
        mu = flow.maturity_of_log_h(model, Y)
        gip = model.g_inv_prime(mu)
        self.active = np.nonzero(gip > 0)[0]
        mu_a = mu[self.active]
        mother = model.g_inv(mu_a)
        # rows: kernel nodes, columns: active maturities
        self.weight = w[:, None] * gip[self.active][None, :] * kernels.xi(model, a[:, None], mother[None, :], order)
        self.Y_mother = flow.log_h(model, mother)[None, :] - a[:, None]
        self.m_mother = flow.maturity_of_log_h(model, self.Y_mother)
        self.a = a
        self.size = len(Y)

    def evaluate(self, model: ValidatedModel, hist: FieldHistory, s: float, cols=None) -> np.ndarray:
        out = np.zeros(self.size)
        if len(self.active) == 0:
            return out
        sel = slice(None) if cols is None else cols
        times = (s - self.a)[:, None]
        Ym = self.Y_mother[:, sel]
        N = hist.sample(np.broadcast_to(times, Ym.shape), Ym)
        vals = np.sum(self.weight[:, sel] * model.flux(self.m_mother[:, sel], N), axis=0)
        idx = self.active if cols is None else self.active[cols]
        out[idx] = vals
        return out


def _initial_callable(phi):
    if callable(phi):
        return phi
    value = float(phi)
    return lambda t, m: np.full(np.broadcast(np.asarray(t), np.asarray(m)).shape, value)


def solve_field(
    model: ValidatedModel,
    phi,
    T: float,
    dt: float | None = None,
    y_min: float = -12.0,
    quad_order: int = kernels.DEFAULT_ORDER,
    picard_tol: float = 1e-11,
    picard_max: int = 60,
    workers: int = 1,
) -> Field:
    """Solve for ``N`` on ``[tau_max, T]`` from initial data ``phi(t, m)`` on ``[0, tau_max]``.

    ``phi`` is a vectorised callable or a constant.  The boundary node is
    driven by the boundary delay equation in its trace form.
    """
    phi = _initial_callable(phi)
    dt = default_step(model) if dt is None else float(dt)
    if model.tau_min > 0 and dt > model.tau_min + 1e-12:
        raise dde.StepTooLarge(f"dt={dt} exceeds tau_min={model.tau_min}; reduce dt")
    K = dde._steps_per(model.tau_max, dt, "tau_max")
    if not T > model.tau_max:
        raise ValueError("horizon T must exceed tau_max")
    n_steps = int(np.ceil((T - model.tau_max) / dt - 1e-9))
    N_last = K + n_steps
    grid = MaturityGrid.build(model, dt, y_min)
    J = grid.J
    hist = FieldHistory.from_function(phi, grid, K, N_last + 1)

    # boundary trace
    sub = _dde_substeps(model, dt)
    psi = dde.ScalarHistory.from_function(lambda t: phi(t, np.zeros_like(t)), model.tau_max, dt / sub)
    bsol = dde.integrate(model, psi, N_last * dt, dt / sub, quad_order, trace=True)
    hist.x[K + 1:] = bsol.x[::sub][K + 1: N_last + 1]

    a, w = kernels.kernel_rule(model.config.kernel, quad_order)
    y = grid.y
    Kdt = [np.ones(J + 1)] + [kernels.bigK(model, k * dt, grid.m, quad_order) for k in (1, 2, 3)]
    Khalf = kernels.bigK(model, 0.5 * dt, grid.m, quad_order)
    m_char = [flow.maturity_of_log_h(model, y - k * dt) for k in range(4)]
    m_char[0] = grid.m
    gain_sets = [
        _GainTerm(model, y - dt, a, w, quad_order),
        _GainTerm(model, y - 0.5 * dt, a, w, quad_order),
        _GainTerm(model, y, a, w, quad_order),
    ]
    explicit_gain = model.tau_min > 0 and dt <= model.tau_min + 1e-12
    jidx = np.arange(J + 1)

    pool = ThreadPoolExecutor(workers) if workers > 1 else None

    def gain(n: int) -> np.ndarray:
        t_n = n * dt
        points = ((0, t_n), (1, t_n + 0.5 * dt), (2, t_n + dt))
        if pool is None:
            g = [gain_sets[k].evaluate(model, hist, s) for k, s in points]
        else:
            g = []
            for k, s in points:
                gs = gain_sets[k]
                chunks = np.array_split(np.arange(len(gs.active)), workers)
                parts = pool.map(lambda c, gs=gs, s=s: gs.evaluate(model, hist, s, c), chunks)
                g.append(np.sum(list(parts), axis=0))
        return 2.0 * dt / 6.0 * (Kdt[1] * g[0] + 4.0 * Khalf * g[1] + g[2])

    residuals = np.zeros(n_steps)
    iterations = np.zeros(n_steps, dtype=int)
    ratios = np.zeros(n_steps)

    try:
        for step, n in enumerate(range(K, N_last)):
            transport = hist.node_value(n, jidx - 1) * Kdt[1]
            order = min(n + 1 - K, 3)
            coef = _AM[order]
            known = np.zeros(J + 1)
            for k in range(1, order + 1):
                vals = hist.node_value(n + 1 - k, jidx - k)
                known += coef[k] * Kdt[k] * model.flux(m_char[k], vals)
            known *= dt
            c0 = coef[0] * dt

            hist.top = n
            G = gain(n) if explicit_gain else None
            base = transport - known
            current = transport.copy()
            prev_res = None
            growth = 0
            worst_ratio = 0.0
            res = np.inf
            for it in range(1, picard_max + 1):
                if not explicit_gain:
                    hist.F[n + 1] = current
                    hist.top = n + 1
                    G = gain(n)
                new = base + G - c0 * model.flux(grid.m, current)
                res = float(np.max(np.abs(new - current)))
                if not np.all(np.isfinite(new)):
                    raise PicardDiverged(f"non-finite iterate at step {step + 1} (t={(n + 1) * dt:g})")
                if prev_res is not None:
                    if prev_res > 1e-10:
                        worst_ratio = max(worst_ratio, res / prev_res)
                    growth = growth + 1 if res > prev_res else 0
                    if growth >= 10:
                        raise PicardDiverged(
                            f"Picard residual grew for 10 iterations at step {step + 1} "
                            f"(t={(n + 1) * dt:g}); reduce dt"
                        )
                current = new
                prev_res = res
                if res < picard_tol:
                    break
            hist.F[n + 1] = current
            hist.top = n + 1
            residuals[step] = res
            iterations[step] = it
            ratios[step] = worst_ratio
    finally:
        if pool is not None:
            pool.shutdown()

    meta = {
        "dt": dt,
        "J": J,
        "y_min": grid.y_min,
        "K": K,
        "T": N_last * dt,
        "quad_order": quad_order,
        "picard_tol": picard_tol,
        "picard_max": picard_max,
        "dde_substeps": sub,
        "explicit_gain": explicit_gain,
        "max_picard_residual": float(residuals.max()) if n_steps else 0.0,
        "max_picard_ratio": float(ratios.max()) if n_steps else 0.0,
    }
    return Field(hist, residuals, iterations, ratios, bsol, meta)
