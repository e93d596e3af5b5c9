"""Boundary delay equation for the primitive-cell density ``x(t) = N(t, 0)``.

    x'(t) = -(I0 + beta0(x)) x + 2 int_{tau_min}^{tau_max} Z(a) beta0(x(t-a)) x(t-a) da

integrated by classical RK4 on a grid aligned with ``tau_max``; delayed
values are read through piecewise cubic Hermite interpolation of the stored
nodes and node derivatives (method of steps).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import cumulative_simpson, quad
from scipy.interpolate import CubicSpline

from . import kernels
from .model import ValidatedModel


class StepTooLarge(ValueError):
    pass


class NonFiniteState(ArithmeticError):
    pass


class DegenerateSeries(ValueError):
    pass


def _steps_per(span: float, dt: float, what: str) -> int:
    k = int(round(span / dt))
    if k < 1 or abs(k * dt - span) > 1e-9 * max(1.0, span):
        raise StepTooLarge(f"dt={dt!r} must divide {what}={span!r}")
    return k


def check_step(model: ValidatedModel, dt: float) -> None:
    if model.tau_min > 0:
        if dt > model.tau_min / 4 + 1e-15:
            raise StepTooLarge(f"dt={dt} exceeds tau_min/4={model.tau_min / 4}; reduce dt")
    elif dt > model.tau_max / 64 + 1e-15:
        raise StepTooLarge(f"dt={dt} exceeds tau_max/64 when tau_min = 0; reduce dt")


def default_step(model: ValidatedModel) -> float:
    """Largest ``tau_max / k`` with ``k >= 64`` that passes :func:`check_step`."""
    k = 64
    if model.tau_min > 0:
        k = max(k, math.ceil(4 * model.tau_max / model.tau_min - 1e-12))
    return model.tau_max / k


@dataclass(frozen=True)
class ScalarHistory:
    """Samples of a scalar function on one delay span ``[t0, t0 + tau_max]``."""

    dt: float
    values: np.ndarray
    derivs: np.ndarray
    t0: float = 0.0

    @property
    def times(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(len(self.values))

    @property
    def span(self) -> float:
        return self.dt * (len(self.values) - 1)

    @classmethod
    def from_function(cls, f, tau_max: float, dt: float, df=None) -> "ScalarHistory":
        k = _steps_per(tau_max, dt, "tau_max")
        t = dt * np.arange(k + 1)
        v = np.asarray(np.broadcast_to(f(t), t.shape), dtype=float).copy()
        if df is not None:
            d = np.asarray(np.broadcast_to(df(t), t.shape), dtype=float).copy()
        elif np.all(v == v[0]):
            d = np.zeros_like(v)
        else:
            d = CubicSpline(t, v)(t, 1)
        return cls(dt, v, d)

    @classmethod
    def constant(cls, value: float, tau_max: float, dt: float) -> "ScalarHistory":
        return cls.from_function(lambda t: np.full_like(t, value), tau_max, dt)

    @classmethod
    def from_samples(cls, values, dt: float) -> "ScalarHistory":
        v = np.asarray(values, dtype=float)
        t = dt * np.arange(len(v))
        d = np.zeros_like(v) if np.all(v == v[0]) else CubicSpline(t, v)(t, 1)
        return cls(dt, v, d)


@dataclass
class DdeSolution:
    """Node values on ``[0, T]``; the first ``K + 1`` nodes are the history."""

    dt: float
    K: int
    x: np.ndarray
    d_start: np.ndarray
    d_end: np.ndarray
    quad_order: int
    trace: bool
    interpolation: str = "hermite"
    H: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    @property
    def t(self) -> np.ndarray:
        return self.dt * np.arange(len(self.x))

    @property
    def tau_max(self) -> float:
        return self.K * self.dt

    def series(self):
        """``(t, x)`` on ``[tau_max, T]``."""
        return self.t[self.K:], self.x[self.K:]

    def value(self, s):
        """Interpolated ``x(s)`` for ``0 <= s <= T``."""
        p = np.asarray(s, dtype=float) / self.dt
        return _interp(self.x, self.d_start, self.d_end, p, len(self.x) - 1, self.dt, self.interpolation)

    def window(self, i: int) -> ScalarHistory:
        """History segment ending at node ``i`` (requires ``i >= K``)."""
        lo = i - self.K
        if lo < 0:
            raise ValueError("window needs a full delay span")
        d = self.d_end[lo:i + 1].copy()
        return ScalarHistory(self.dt, self.x[lo:i + 1].copy(), d, t0=lo * self.dt)


def _interp(x, d_start, d_end, p, top, dt, kind):
    i0 = np.clip(np.floor(p).astype(int), 0, max(top - 1, 0))
    th = p - i0
    y0, y1 = x[i0], x[i0 + 1]
    if kind == "linear":
        return y0 + th * (y1 - y0)
    th2 = th * th
    th3 = th2 * th
    return (
        (2 * th3 - 3 * th2 + 1) * y0
        + (th3 - 2 * th2 + th) * dt * d_start[i0]
        + (-2 * th3 + 3 * th2) * y1
        + (th3 - th2) * dt * d_end[i0 + 1]
    )


def boundary_weights(model: ValidatedModel, quad_order: int, trace: bool):
    """Kernel nodes and the weights of ``int Z(a) f(a) da``."""
    a, w = kernels.kernel_rule(model.config.kernel, quad_order)
    zw = w * np.exp(-kernels.nu(model) * a)
    if trace:
        zw = zw * float(model.g_inv_prime(0.0))
    return a, zw


def integrate(
    model: ValidatedModel,
    psi: ScalarHistory,
    T: float,
    dt: float | None = None,
    quad_order: int = kernels.DEFAULT_ORDER,
    trace: bool = False,
    interpolation: str = "hermite",
) -> DdeSolution:
    """Integrate the boundary equation from ``tau_max`` to ``T``.

    ``trace=True`` uses the transfer density evaluated at ``m = 0`` including
    the ``(g^-1)'(0)`` factor, which is the exact boundary trace of the
    field equation; the default uses ``Z`` without it.
    """
    dt = psi.dt if dt is None else dt
    if abs(dt - psi.dt) > 1e-15:
        raise StepTooLarge("history grid step must equal the solver step")
    check_step(model, dt)
    K = _steps_per(model.tau_max, dt, "tau_max")
    if len(psi.values) != K + 1:
        raise ValueError("history must span exactly tau_max")
    if not T > model.tau_max:
        raise ValueError("horizon T must exceed tau_max")
    n_steps = int(np.ceil((T - model.tau_max) / dt - 1e-9))
    N = K + n_steps

    a, zw = boundary_weights(model, quad_order, trace)
    I0 = float(model.delta(0.0) + model.dV(0.0))
    bcfg = model.config.beta
    a0, b0, hill_n = float(bcfg.a(0.0)), float(bcfg.b(0.0)), bcfg.n

    def lam(v):
        return v * (a0 / (np.maximum(v, 0.0) ** hill_n + b0))

    def rhs(v, delayed):
        return -(I0 + a0 / (max(v, 0.0) ** hill_n + b0)) * v + 2.0 * float(np.dot(zw, lam(delayed)))

    x = np.zeros(N + 1)
    d_start = np.zeros(N + 1)
    d_end = np.zeros(N + 1)
    x[: K + 1] = psi.values
    d_start[: K + 1] = psi.derivs
    d_end[: K + 1] = psi.derivs

    shift = a / dt
    for n in range(K, N):
        top = n
        p0 = n - shift
        ph = p0 + 0.5
        p1 = p0 + 1.0
        D0 = _interp(x, d_start, d_end, p0, top, dt, interpolation)
        Dh = _interp(x, d_start, d_end, ph, top, dt, interpolation)
        D1 = _interp(x, d_start, d_end, p1, top, dt, interpolation)
        xn = x[n]
        k1 = rhs(xn, D0)
        if n == K:
            d_start[K] = k1
        k2 = rhs(xn + 0.5 * dt * k1, Dh)
        k3 = rhs(xn + 0.5 * dt * k2, Dh)
        k4 = rhs(xn + dt * k3, D1)
        xnew = xn + dt * (k1 + 2 * k2 + 2 * k3 + k4) / 6.0
        if not np.isfinite(xnew):
            raise NonFiniteState(f"non-finite state at step {n - K + 1} (t={(n + 1) * dt:g})")
        x[n + 1] = xnew
        dnew = rhs(xnew, D1)
        d_start[n + 1] = dnew
        d_end[n + 1] = dnew

    return DdeSolution(
        dt=dt,
        K=K,
        x=x,
        d_start=d_start,
        d_end=d_end,
        quad_order=quad_order,
        trace=trace,
        interpolation=interpolation,
        meta={"dt": dt, "quad_order": quad_order, "trace": trace, "T": N * dt,
              "interpolation": interpolation, "method": "rk4"},
    )


def _Lambda_antideriv(model: ValidatedModel, v: float) -> float:
    """``int_0^v s beta0(s) ds``."""
    bcfg = model.config.beta
    a0, b0, n = float(bcfg.a(0.0)), float(bcfg.b(0.0)), bcfg.n
    if v <= 0:
        return a0 * v * v / (2 * b0)
    if n == 1.0:
        return a0 * (v - b0 * np.log1p(v / b0))
    val, _ = quad(lambda s: s * a0 / (s ** n + b0), 0.0, v, epsabs=1e-14, epsrel=1e-13)
    return val


def lyapunov_H(
    model: ValidatedModel,
    window: ScalarHistory,
    quad_order: int = kernels.DEFAULT_ORDER,
    trace: bool = False,
) -> float:
    """Lyapunov functional of a history window spanning ``tau_max``."""
    if abs(window.span - model.tau_max) > 1e-9:
        raise ValueError("window must span tau_max")
    v = window.values
    lam2 = model.flux(0.0, v) ** 2
    # C(theta) = int_theta^{tau_max} lambda^2, accumulated from the right end
    tail = cumulative_simpson(lam2[::-1], dx=window.dt, initial=0.0)[::-1]
    theta = window.dt * np.arange(len(v))
    if np.all(tail == 0):
        inner_int = 0.0
    else:
        a, zw = boundary_weights(model, quad_order, trace)
        C = CubicSpline(theta, tail)
        inner_int = float(np.dot(zw, C(window.span - a)))
    return _Lambda_antideriv(model, float(v[-1])) + inner_int


@dataclass(frozen=True)
class MonotoneReport:
    times: np.ndarray
    values: np.ndarray
    max_increase: float
    tolerance: float
    criterion_holds: bool
    passed: bool | None


def check_H_monotone(model: ValidatedModel, sol: DdeSolution, stride: float | None = None) -> MonotoneReport:
    """Sample ``H`` along a trajectory and measure its largest forward increase.

    Monotonicity is only asserted (``passed`` not ``None``) when the global
    stability inequality holds for the kernel the solution was built with.
    """
    c = kernels.derived_constants(model, sol.quad_order)
    z = c.z_trace if sol.trace else c.z
    holds = c.I0 > (2 * z - 1) * c.beta0_at_0
    stride = model.tau_max / 8 if stride is None else stride
    step = max(1, int(round(stride / sol.dt)))
    idx = np.arange(sol.K, len(sol.x), step)
    H = np.array([lyapunov_H(model, sol.window(i), sol.quad_order, sol.trace) for i in idx])
    inc = float(np.max(np.diff(H))) if len(H) > 1 else 0.0
    tol = 1e-6 * (1.0 + float(np.max(np.abs(H))))
    return MonotoneReport(idx * sol.dt, H, inc, tol, bool(holds), (inc <= tol) if holds else None)


def H_series(model: ValidatedModel, sol: DdeSolution) -> np.ndarray:
    """``H`` at every node from ``tau_max`` on."""
    return np.array(
        [lyapunov_H(model, sol.window(i), sol.quad_order, sol.trace) for i in range(sol.K, len(sol.x))]
    )


def fit_decay_rate(t, x) -> float:
    """Least-squares exponential rate of ``|x|`` over the last half of the series."""
    t = np.asarray(t, dtype=float)
    x = np.asarray(x, dtype=float)
    half = len(t) // 2
    tt, xx = t[half:], np.abs(x[half:])
    if len(tt) < 10:
        raise DegenerateSeries("tail shorter than 10 samples")
    if np.any(xx == 0) or not np.all(np.isfinite(xx)):
        raise DegenerateSeries("tail contains zeros or non-finite values")
    slope = np.polyfit(tt, np.log(xx), 1)[0]
    return float(-slope)
