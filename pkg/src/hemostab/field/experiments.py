"""Finite extinction time and the numerical checks built on the field solver."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .. import dde, flow, kernels, stability
from ..model import ValidatedModel
from .solver import Field, solve_field

MAX_GENERATIONS = 10**6


class NotApplicable(ValueError):
    """The model violates a hypothesis the experiment relies on."""


@dataclass
class ExperimentReport:
    name: str
    passed: bool
    measured: float
    expected: float | None
    tolerance: float | None
    details: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "experiment": self.name,
            "verdict": "pass" if self.passed else "fail",
            "measured": self.measured,
            "expected": self.expected,
            "tolerance": self.tolerance,
            **self.details,
        }


def _require_structural(model: ValidatedModel) -> float:
    t0 = kernels.derived_constants(model).tau0
    if t0 is None:
        raise NotApplicable("re-maturation time is unbounded")
    if not model.tau_min > t0:
        raise NotApplicable(f"tau_min={model.tau_min:g} does not exceed tau0={t0:.6g}")
    return t0


def Lambda_inv_alpha(model: ValidatedModel, b: float) -> tuple[float, bool]:
    """Inverse of ``m -> Delta(tau_min, m)``, capped at ``g(1)``.

    Returns the value and whether the cap was hit.
    """
    hb = flow.h(model, b) * math.exp(model.tau_min)
    if hb >= 1.0:
        return model.g1, True
    val = float(model.g(flow.h_inv(model, hb)))
    if val >= model.g1:
        return model.g1, True
    return val, False


def extinction_sequence(model: ValidatedModel, b: float):
    """Maturity thresholds ``b_n`` and times ``t_n`` of the generation argument."""
    _require_structural(model)
    if not 0.0 < b <= 1.0:
        raise ValueError("b must lie in (0, 1]")
    bs, ts = [float(b)], [0.0]
    if b > model.g1:
        return bs, ts
    while True:
        nxt, capped = Lambda_inv_alpha(model, bs[-1])
        ts.append(ts[-1] + model.tau_max + flow.log_h(model, nxt) - flow.log_h(model, bs[-1]))
        bs.append(nxt)
        if capped:
            return bs, ts
        if len(bs) > MAX_GENERATIONS:
            raise ArithmeticError(f"more than {MAX_GENERATIONS} generations needed from b={b:g}")


def extinction_time(model: ValidatedModel, b: float) -> float:
    """Time after which data destroyed on ``[0, b]`` leaves no trace."""
    bs, ts = extinction_sequence(model, b)
    return float(ts[-1] + model.tau_max - flow.log_h(model, model.g1))


def _slice_at(f: Field, t: float) -> int:
    return int(math.ceil(t / f.dt - 1e-9))


def _data_norm(f: Field) -> float:
    return max(f.history.norm(), 1e-300)


def experiment_decay(model: ValidatedModel, phi, T: float = 30.0, **grid) -> ExperimentReport:
    """Invariance of the unit ball and exponential decay of ``sup_m |N|``."""
    c = kernels.derived_constants(model)
    if c.rho is None:
        raise NotApplicable("local stability condition fails; no decay rate")
    f = solve_field(model, phi, T, **grid)
    sup = f.sup_norm()
    eps = _data_norm(f)
    t = f.t
    after = t >= model.tau_max
    rate = dde.fit_decay_rate(t[after], sup[after])
    ratio = float(f.meta["max_picard_ratio"])
    bounded = bool(np.max(sup) <= eps * (1 + 1e-12))
    ok_rate = rate >= 0.9 * c.rho
    ok_picard = ratio <= c.alpha + 0.1
    return ExperimentReport(
        "decay",
        bounded and ok_rate and ok_picard,
        measured=float(rate),
        expected=float(c.rho),
        tolerance=0.1 * float(c.rho),
        details={
            "max_sup_norm": float(np.max(sup)),
            "data_norm": eps,
            "bounded": bounded,
            "rate_criterion": "rate >= 0.9 rho",
            "picard_ratio_max": ratio,
            "picard_ratio_bound": float(c.alpha + 0.1),
            "min_value": float(np.min(f.values)),
            "field_meta": f.meta,
        },
    )


def experiment_extinction(model: ValidatedModel, phi, b: float, margin: float = 0.5, **grid) -> ExperimentReport:
    """Data vanishing on ``[0, b]`` die out by the extinction time."""
    tbar = extinction_time(model, b)
    f = solve_field(model, phi, tbar + margin, **grid)
    eps = _data_norm(f)
    i = _slice_at(f, tbar + margin)
    measured = float(f.sup_norm()[i])
    tol = 1e-6 * eps
    return ExperimentReport(
        "extinction",
        measured < tol,
        measured=measured,
        expected=0.0,
        tolerance=tol,
        details={"extinction_time": tbar, "t_checked": float(f.t[i]), "field_meta": f.meta},
    )


def experiment_agreement(model: ValidatedModel, phi1, phi2, b: float, T: float | None = None,
                         **grid) -> ExperimentReport:
    """Two data sets equal on ``[0, b]`` give equal solutions after the extinction time."""
    tbar = extinction_time(model, b)
    T = tbar + 1.0 if T is None else T
    if not T > tbar:
        raise ValueError(f"horizon T={T:g} must exceed the extinction time {tbar:.6g}")
    f1 = solve_field(model, phi1, T, **grid)
    f2 = solve_field(model, phi2, T, **grid)
    diff = np.maximum(np.max(np.abs(f1.values - f2.values), axis=1), np.abs(f1.boundary - f2.boundary))
    i = _slice_at(f1, tbar)
    eps = max(_data_norm(f1), _data_norm(f2))
    measured = float(np.max(diff[i:]))
    tol = 1e-6 * eps
    return ExperimentReport(
        "agreement",
        measured < tol,
        measured=measured,
        expected=0.0,
        tolerance=tol,
        details={
            "extinction_time": tbar,
            "t_from": float(f1.t[i]),
            "sup_diff": diff.tolist(),
            "t": f1.t.tolist(),
            "field_meta": f1.meta,
        },
    )


def experiment_equilibrium(model: ValidatedModel, T: float = 50.0, dt: float | None = None,
                           tol: float = 1e-6) -> ExperimentReport:
    """The boundary equation started at its positive equilibrium stays there."""
    eq = stability.dde_equilibrium(model)
    if eq is None:
        raise NotApplicable("no positive equilibrium of the boundary equation")
    dt = dde.default_step(model) if dt is None else dt
    psi = dde.ScalarHistory.constant(eq.value, model.tau_max, dt)
    sol = dde.integrate(model, psi, T, dt)
    drift = float(np.max(np.abs(sol.x - eq.value)))
    return ExperimentReport(
        "equilibrium",
        drift < tol,
        measured=drift,
        expected=0.0,
        tolerance=tol,
        details={"equilibrium": eq.value, "equilibrium_residual": eq.residual, "T": T},
    )


def cross_solver(model: ValidatedModel, value: float = 1.0, T: float = 40.0, tol: float = 5e-4,
                 **grid) -> ExperimentReport:
    """Field nodes below ``g(1)`` against an independent boundary-equation run."""
    f = solve_field(model, value, T, **grid)
    psi = dde.ScalarHistory.constant(value, model.tau_max, f.dt)
    sol = dde.integrate(model, psi, f.t[-1], f.dt, trace=True)
    low = f.grid.m < model.g1
    measured = float(np.max(np.abs(f.values[:, low] - sol.x[: len(f.t), None])))
    return ExperimentReport(
        "cross_solver",
        measured < tol,
        measured=measured,
        expected=0.0,
        tolerance=tol,
        details={"nodes_compared": int(np.sum(low)), "field_meta": f.meta},
    )


def floor_sensitivity(model: ValidatedModel, phi, T: float, shift: float = 2.0, **grid) -> dict:
    """Rerun with the maturity floor lowered by ``shift`` and compare shared nodes."""
    y_min = grid.pop("y_min", -12.0)
    f1 = solve_field(model, phi, T, y_min=y_min, **grid)
    f2 = solve_field(model, phi, T, y_min=y_min - shift, **grid)
    off = f2.grid.J - f1.grid.J
    diff = float(np.max(np.abs(f2.values[:, off:] - f1.values)))
    return {"y_min": y_min, "y_min_lowered": y_min - shift, "max_abs_diff": diff}
