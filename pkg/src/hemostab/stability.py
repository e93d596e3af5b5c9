"""Machine-checkable stability certificates for one model instance."""
from __future__ import annotations

from dataclasses import dataclass, field, asdict

import numpy as np

from .kernels import DerivedConstants, derived_constants
from .model import ValidatedModel


@dataclass(frozen=True)
class Criterion:
    """Inequality ``lhs < rhs``; ``margin = rhs - lhs``."""

    holds: bool
    lhs: float
    rhs: float
    margin: float

    @classmethod
    def less(cls, lhs: float, rhs: float) -> "Criterion":
        return cls(bool(lhs < rhs), float(lhs), float(rhs), float(rhs - lhs))


@dataclass(frozen=True)
class Equilibrium:
    value: float
    residual: float


@dataclass(frozen=True)
class StabilityReport:
    constants: DerivedConstants
    local_exp_stable: Criterion
    dde_global_stable: Criterion
    dde_global_stable_trace: Criterion
    structural: Criterion
    remature_time_bounded: bool
    global_lipschitz_stable: Criterion
    decreasing_beta_stable: Criterion
    equilibrium: Equilibrium | None
    implications: list[str] = field(default_factory=list)
    notes: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return asdict(self)

    def all_hold(self) -> bool:
        return (
            self.local_exp_stable.holds
            and self.dde_global_stable.holds
            and self.structural.holds
        )


def equilibrium_from(I0: float, z: float, beta0, tol: float = 1e-12) -> Equilibrium | None:
    """Positive constant solution of the boundary equation, if any.

    Solves ``beta0(x) = I0 / (2z - 1)`` by bisection; ``beta0`` must be
    decreasing on ``[0, inf)`` and vanish at infinity.
    """
    gain = 2.0 * z - 1.0
    if gain <= 0:
        return None
    target = I0 / gain
    b0 = float(beta0(0.0))
    if not (0.0 < target < b0):
        return None

    def f(x):
        return float(beta0(x)) - target

    lo, hi = 0.0, 1.0
    while f(hi) > 0:
        hi *= 2.0
        if hi > 1e300:
            return None
    for _ in range(400):
        if hi - lo <= tol * max(1.0, hi):
            break
        mid = 0.5 * (lo + hi)
        if f(mid) > 0:
            lo = mid
        else:
            hi = mid
    x = 0.5 * (lo + hi)
    return Equilibrium(x, abs(gain * float(beta0(x)) - I0))


def dde_equilibrium(model: ValidatedModel, trace: bool = False) -> Equilibrium | None:
    c = derived_constants(model)
    return equilibrium_from(c.I0, c.z_trace if trace else c.z, model.beta0)


def evaluate(model: ValidatedModel) -> StabilityReport:
    c = derived_constants(model)
    bet = model.config.beta
    grid = np.linspace(0.0, 1.0, 513)
    notes: list[str] = []

    local = Criterion.less(c.L * (2 * c.zeta_tilde + 1), c.I)
    dde = Criterion.less((2 * c.z - 1) * c.beta0_at_0, c.I0)
    dde_tr = Criterion.less((2 * c.z_trace - 1) * c.beta0_at_0, c.I0)
    if c.tau0 is None:
        structural = Criterion(False, float("inf"), model.tau_min, float("-inf"))
    else:
        structural = Criterion.less(c.tau0, model.tau_min)
    sup_beta0 = float(np.max(bet.a(grid) / bet.b(grid)))
    decreasing = Criterion.less((2 * c.zeta_tilde + 1) * sup_beta0, c.I)

    if local.holds:
        assert c.alpha is not None and c.alpha < 1 and c.rho is not None
        if c.L * c.theta > 1 + 1e-9:
            notes.append("L*theta exceeds 1 at the decay-rate root")
    if c.g_inv_prime_at_0 != 1.0:
        notes.append(
            "boundary kernel Z omits the factor (g^-1)'(0) = "
            f"{c.g_inv_prime_at_0:.17g}; criterion with the factor reported as "
            "dde_global_stable_trace"
        )
    if np.any(model.delta(grid) == 0) or np.any(model.gamma(grid) == 0):
        notes.append("delta or gamma vanishes somewhere on [0, 1]")
    if c.tau0 is None:
        notes.append("re-maturation time unbounded: agreement and extinction results do not apply")
    if bet.n > 3 + 2 * np.sqrt(2):
        notes.append("Hill exponent large enough that sup a/b underestimates the Lipschitz constant")

    implications = []
    if local.holds:
        implications.append("trivial solution locally exponentially stable")
        implications.append("trivial solution globally exponentially stable (global Lipschitz bound)")
    if dde.holds:
        implications.append("boundary population tends to zero for every nonnegative history")
    if local.holds and dde.holds and structural.holds:
        implications.append(
            "nonnegative data lie in the set whose boundary trace decays; "
            "local stability then gives global stability on it"
        )
    if structural.holds:
        implications.append("data agreeing near m = 0 give identical solutions after finite time")

    eq = dde_equilibrium(model)
    return StabilityReport(
        constants=c,
        local_exp_stable=local,
        dde_global_stable=dde,
        dde_global_stable_trace=dde_tr,
        structural=structural,
        remature_time_bounded=c.tau0 is not None,
        global_lipschitz_stable=local,
        decreasing_beta_stable=decreasing,
        equilibrium=eq,
        implications=implications,
        notes=notes,
    )
