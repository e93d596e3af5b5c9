"""Survival and transfer kernels and the scalar constants built from them.

Integrals against the age-at-division density ``k`` use a Gauss-Jacobi rule
whose weight function is ``k`` itself, so the endpoint behaviour
``(tau_max - a)**(shape - 1)`` (singular for ``shape < 1``) never reaches
the integrand.
"""
from __future__ import annotations

from dataclasses import dataclass, asdict
from functools import lru_cache

import numpy as np
from scipy.special import roots_jacobi, roots_legendre

from . import flow
from .model import DivisionKernel, ValidatedModel

DEFAULT_ORDER = 32
ZETA_GRID = 512


class OutOfRange(ValueError):
    pass


@lru_cache(maxsize=64)
def _jacobi_rule(shape: float, order: int):
    x, w = roots_jacobi(order, shape - 1.0, 0.0)
    return x, w * shape / 2.0 ** shape


def kernel_rule(kernel: DivisionKernel, order: int = DEFAULT_ORDER):
    """Nodes ``a_i`` and weights ``w_i`` with ``sum w_i f(a_i) ~ int f(a) k(a) da``.

    The weights sum to one: they already carry the density ``k``.
    """
    x, w = _jacobi_rule(float(kernel.shape), int(order))
    span = kernel.tau_max - kernel.tau_min
    a = kernel.tau_min + span * (x + 1.0) / 2.0
    return a, w.copy()


@lru_cache(maxsize=16)
def _legendre(order: int):
    return roots_legendre(order)


def survival(model: ValidatedModel, a):
    """Probability that a proliferating cell has not divided by age ``a``."""
    ker = model.config.kernel
    a = np.asarray(a, dtype=float)
    if np.any(a < 0) or np.any(a > ker.tau_max):
        raise OutOfRange(f"age must lie in [0, {ker.tau_max}]")
    frac = np.clip((ker.tau_max - a) / (ker.tau_max - ker.tau_min), 0.0, None)
    return np.where(a <= ker.tau_min, 1.0, frac ** ker.shape)


def k_density(model: ValidatedModel, a):
    """Age-at-division density ``c (tau_max - a)**(c-1) / (tau_max - tau_min)**c``."""
    ker = model.config.kernel
    a = np.asarray(a, dtype=float)
    if np.any(a < 0) or np.any(a > ker.tau_max):
        raise OutOfRange(f"age must lie in [0, {ker.tau_max}]")
    span = ker.tau_max - ker.tau_min
    with np.errstate(divide="ignore"):
        dens = ker.shape * (ker.tau_max - a) ** (ker.shape - 1.0) / span ** ker.shape
    return np.where(a < ker.tau_min, 0.0, dens)


def _attenuation(model: ValidatedModel, rate, t, m, order):
    t = np.asarray(t, dtype=float)
    m = np.asarray(m, dtype=float)
    if np.any(t < 0):
        raise ValueError("attenuation requires t >= 0")
    t, m = np.broadcast_arrays(t, m)
    x, w = _legendre(order)
    s = t[..., None] * (x + 1.0) / 2.0
    y = flow.log_h(model, m)[..., None] - s
    mu = flow.maturity_of_log_h(model, y)
    integrand = rate(mu) + model.dV(mu)
    expo = 0.5 * t * np.sum(w * integrand, axis=-1)
    return np.exp(-expo)


def xi(model: ValidatedModel, t, m, order: int = DEFAULT_ORDER):
    """Proliferating-phase attenuation along the backward characteristic."""
    return _attenuation(model, model.gamma, t, m, order)


def bigK(model: ValidatedModel, t, m, order: int = DEFAULT_ORDER):
    """Resting-phase attenuation; the kernel of the transport semigroup."""
    return _attenuation(model, model.delta, t, m, order)


def zeta(model: ValidatedModel, a, m, order: int = DEFAULT_ORDER):
    """Transfer density ``(g^-1)'(m) k(a) xi(a, g^-1(m))`` (age first, maturity second)."""
    a = np.asarray(a, dtype=float)
    m = np.asarray(m, dtype=float)
    return model.g_inv_prime(m) * k_density(model, a) * xi(model, a, model.g_inv(m), order)


def _sup_xi_over_mothers(model: ValidatedModel, a, order):
    """``sup_{mu in [0,1]} xi(a, mu)`` per age, grid scan plus one Newton step."""
    mu = np.linspace(0.0, 1.0, ZETA_GRID)
    vals = xi(model, a[:, None], mu[None, :], order)
    i = np.argmax(vals, axis=1)
    best = vals[np.arange(len(a)), i]
    h = mu[1] - mu[0]
    interior = (i > 0) & (i < ZETA_GRID - 1)
    if np.any(interior):
        r = np.nonzero(interior)[0]
        left, mid, right = vals[r, i[r] - 1], vals[r, i[r]], vals[r, i[r] + 1]
        d1 = (right - left) / (2 * h)
        d2 = (right - 2 * mid + left) / h ** 2
        ok = d2 < 0
        step = np.where(ok, -d1 / np.where(ok, d2, -1.0), 0.0)
        step = np.clip(step, -h, h)
        refined = xi(model, a[r], mu[i[r]] + step, order)
        best[r] = np.maximum(best[r], refined)
    return best


def zeta_hat(model: ValidatedModel, a, order: int = DEFAULT_ORDER):
    """``sup_m |zeta(a, m)|`` using the left-value convention at ``g(1)``."""
    a = np.atleast_1d(np.asarray(a, dtype=float))
    return k_density(model, a) * _sup_xi_over_mothers(model, a, order) / model.g1


def zeta_tilde(model: ValidatedModel, order: int = DEFAULT_ORDER) -> float:
    a, w = kernel_rule(model.config.kernel, order)
    return float(np.sum(w * _sup_xi_over_mothers(model, a, order)) / model.g1)


def nu(model: ValidatedModel) -> float:
    return float(model.gamma(0.0) + model.dV(0.0))


def Z(model: ValidatedModel, a, trace: bool = False):
    """Boundary transfer density ``exp(-nu a) k(a)``.

    ``trace=True`` multiplies by ``(g^-1)'(0)``, the factor carried by the
    transfer density at ``m = 0``; the plain form drops it.
    """
    a = np.asarray(a, dtype=float)
    out = np.exp(-nu(model) * a) * k_density(model, a)
    if trace:
        out = out * float(model.g_inv_prime(0.0))
    return out


def z_and_Z(model: ValidatedModel, order: int = DEFAULT_ORDER, trace: bool = False):
    """Return ``(Z, z)`` with ``z = int Z(a) da`` by the kernel rule."""
    a, w = kernel_rule(model.config.kernel, order)
    factor = float(model.g_inv_prime(0.0)) if trace else 1.0
    z = float(np.sum(w * np.exp(-nu(model) * a)) * factor)
    return (lambda s: Z(model, s, trace)), z


def hill_lipschitz_factor(n: float) -> float:
    """``sup_x |d/dx [x / (x**n + 1)]|`` in units of ``1/b``.

    Equals 1 for ``n <= 3 + 2 sqrt 2``; beyond that the negative slope past
    the hump dominates and the factor is ``(n-1)**2 / (4n)``.
    """
    return max(1.0, (n - 1.0) ** 2 / (4.0 * n))


def lipschitz_L(model: ValidatedModel) -> float:
    bet = model.config.beta
    m = np.linspace(0.0, 1.0, ZETA_GRID + 1)
    return float(np.max(bet.a(m) / bet.b(m))) * hill_lipschitz_factor(bet.n)


def decay_root(I: float, L: float, zt: float, tau_max: float, tol: float = 1e-12) -> float:
    """Root in ``(0, I)`` of ``L (1 + 2 zt exp(rho tau_max)) = I - rho`` by bisection."""

    def f(rho):
        return I - rho - L * (1.0 + 2.0 * zt * np.exp(rho * tau_max))

    lo, hi = 0.0, I - 1e-12
    if f(hi) >= 0:
        return hi
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if f(mid) > 0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


@dataclass(frozen=True)
class DerivedConstants:
    I: float
    I0: float
    nu: float
    z: float
    z_trace: float
    zeta_tilde: float
    tau0: float | None
    L: float
    alpha: float | None
    rho: float | None
    theta: float | None
    beta0_at_0: float
    g_inv_prime_at_0: float

    def to_dict(self) -> dict:
        return asdict(self)


@lru_cache(maxsize=64)
def derived_constants(model: ValidatedModel, order: int = DEFAULT_ORDER) -> DerivedConstants:
    grid = np.linspace(0.0, 1.0, ZETA_GRID + 1)
    I = float(np.min(model.delta(grid) + model.dV(grid)))
    I0 = float(model.delta(0.0) + model.dV(0.0))
    zt = zeta_tilde(model, order)
    _, z = z_and_Z(model, order)
    _, z_tr = z_and_Z(model, order, trace=True)
    try:
        t0 = flow.tau0(model)
    except flow.Unbounded:
        t0 = None
    L = lipschitz_L(model)
    alpha = L * (2 * zt + 1) / I if I > 0 else None
    rho = theta = None
    if L * (2 * zt + 1) < I:
        rho = decay_root(I, L, zt, model.tau_max)
        theta = (1 + 2 * zt * np.exp(rho * model.tau_max)) / (I - rho)
    return DerivedConstants(
        I=I,
        I0=I0,
        nu=nu(model),
        z=z,
        z_trace=z_tr,
        zeta_tilde=zt,
        tau0=t0,
        L=L,
        alpha=alpha,
        rho=rho,
        theta=None if theta is None else float(theta),
        beta0_at_0=float(model.beta0(0.0)),
        g_inv_prime_at_0=float(model.g_inv_prime(0.0)),
    )
