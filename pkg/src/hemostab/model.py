"""Parametric coefficient families for the maturity-structured model.

A model instance is assembled from five closed-form pieces: the maturation
velocity ``V``, the division map ``g``, the loss rates ``delta`` (resting)
and ``gamma`` (proliferating), the age-at-division kernel on
``[tau_min, tau_max]`` and the Hill-type reintroduction rate ``beta``.
:func:`validate` checks every invariant and returns an immutable
:class:`ValidatedModel` that the numerical modules consume.
"""
from __future__ import annotations

from dataclasses import dataclass, field, asdict
from typing import Any, Mapping

import numpy as np

N_VALIDATION_POINTS = 257


class ModelError(ValueError):
    """Base class for invalid model configurations."""

    def __init__(self, field_name: str, message: str):
        self.field = field_name
        super().__init__(f"{field_name}: {message}")


class InvalidVelocity(ModelError):
    pass


class InvalidDivisionMap(ModelError):
    pass


class InvalidKernel(ModelError):
    pass


class InvalidBeta(ModelError):
    pass


class InvalidRates(ModelError):
    pass


@dataclass(frozen=True)
class Coefficient:
    """``c(m) = intercept + slope * m``; ``family`` is ``constant`` or ``affine``."""

    family: str = "constant"
    intercept: float = 0.0
    slope: float = 0.0

    @classmethod
    def constant(cls, value: float) -> "Coefficient":
        return cls("constant", float(value), 0.0)

    @classmethod
    def affine(cls, intercept: float, slope: float) -> "Coefficient":
        return cls("affine", float(intercept), float(slope))

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "Coefficient":
        if d["family"] == "constant":
            return cls.constant(d["value"])
        return cls.affine(d["intercept"], d["slope"])

    def to_dict(self) -> dict:
        if self.family == "constant":
            return {"family": "constant", "value": self.intercept}
        return {"family": "affine", "intercept": self.intercept, "slope": self.slope}

    def __call__(self, m):
        return self.intercept + self.slope * np.asarray(m, dtype=float)


@dataclass(frozen=True)
class VelocityProfile:
    """Maturation velocity: ``linear`` (V = r m) or ``power`` (V = c m**p)."""

    family: str = "linear"
    rate: float = 1.0
    coefficient: float = 1.0
    exponent: float = 1.0

    @property
    def _linear_rate(self) -> float | None:
        # power with p == 1 is the linear family with rate = coefficient
        if self.family == "linear":
            return self.rate
        if self.exponent == 1.0:
            return self.coefficient
        return None

    def V(self, m):
        m = np.asarray(m, dtype=float)
        r = self._linear_rate
        if r is not None:
            return r * m
        return self.coefficient * m ** self.exponent

    def dV(self, m):
        m = np.asarray(m, dtype=float)
        r = self._linear_rate
        if r is not None:
            return np.full_like(m, r)
        p = self.exponent
        return self.coefficient * p * m ** (p - 1.0)

    def log_h(self, m):
        """``ln h(m) = -int_m^1 dtheta / V(theta)``; ``-inf`` at ``m = 0``."""
        m = np.asarray(m, dtype=float)
        r = self._linear_rate
        with np.errstate(divide="ignore"):
            if r is not None:
                return np.log(m) / r
            p, c = self.exponent, self.coefficient
            return -(m ** (1.0 - p) - 1.0) / (c * (p - 1.0))

    def maturity_of_log_h(self, y):
        """Inverse of :meth:`log_h` for ``y <= 0``."""
        y = np.asarray(y, dtype=float)
        r = self._linear_rate
        if r is not None:
            return np.exp(r * y)
        p, c = self.exponent, self.coefficient
        with np.errstate(divide="ignore"):
            return (1.0 - c * (p - 1.0) * y) ** (-1.0 / (p - 1.0))

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "VelocityProfile":
        if d["family"] == "linear":
            return cls("linear", rate=float(d["rate"]))
        return cls("power", coefficient=float(d["coefficient"]), exponent=float(d["exponent"]))

    def to_dict(self) -> dict:
        if self.family == "linear":
            return {"family": "linear", "rate": self.rate}
        return {"family": "power", "coefficient": self.coefficient, "exponent": self.exponent}


@dataclass(frozen=True)
class DivisionMap:
    """Linear division map ``g(m) = ratio * m``."""

    ratio: float = 0.5
    family: str = "linear"

    @property
    def g1(self) -> float:
        return self.ratio

    def g(self, m):
        return self.ratio * np.asarray(m, dtype=float)

    def g_inv(self, m):
        m = np.asarray(m, dtype=float)
        return np.where(m <= self.g1, m / self.ratio, 1.0)

    def g_inv_prime(self, m):
        # left value 1/ratio at m == g(1)
        m = np.asarray(m, dtype=float)
        return np.where(m <= self.g1, 1.0 / self.ratio, 0.0)

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "DivisionMap":
        return cls(ratio=float(d["ratio"]))

    def to_dict(self) -> dict:
        return {"family": "linear", "ratio": self.ratio}


@dataclass(frozen=True)
class RateProfile:
    delta: Coefficient = field(default_factory=lambda: Coefficient.constant(1.0))
    gamma: Coefficient = field(default_factory=lambda: Coefficient.constant(0.0))

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "RateProfile":
        return cls(Coefficient.from_dict(d["delta"]), Coefficient.from_dict(d["gamma"]))

    def to_dict(self) -> dict:
        return {"delta": self.delta.to_dict(), "gamma": self.gamma.to_dict()}


@dataclass(frozen=True)
class DivisionKernel:
    """Endpoint-pole hazard ``kappa(a) = shape / (tau_max - a)`` on ``(tau_min, tau_max)``."""

    tau_min: float = 1.0
    tau_max: float = 2.0
    shape: float = 2.0

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "DivisionKernel":
        return cls(float(d["tau_min"]), float(d["tau_max"]), float(d["shape"]))

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class Reintroduction:
    """Hill reintroduction rate ``beta(m, x) = a(m) / (x**n + b(m))``."""

    a: Coefficient = field(default_factory=lambda: Coefficient.constant(0.5))
    b: Coefficient = field(default_factory=lambda: Coefficient.constant(1.0))
    n: float = 1.0

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "Reintroduction":
        return cls(Coefficient.from_dict(d["a"]), Coefficient.from_dict(d["b"]), float(d["n"]))

    def to_dict(self) -> dict:
        return {"a": self.a.to_dict(), "b": self.b.to_dict(), "n": self.n}


@dataclass(frozen=True)
class ModelConfig:
    velocity: VelocityProfile = field(default_factory=VelocityProfile)
    division: DivisionMap = field(default_factory=DivisionMap)
    rates: RateProfile = field(default_factory=RateProfile)
    kernel: DivisionKernel = field(default_factory=DivisionKernel)
    beta: Reintroduction = field(default_factory=Reintroduction)

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "ModelConfig":
        return cls(
            velocity=VelocityProfile.from_dict(d["velocity"]),
            division=DivisionMap.from_dict(d["division"]),
            rates=RateProfile.from_dict(d["rates"]),
            kernel=DivisionKernel.from_dict(d["kernel"]),
            beta=Reintroduction.from_dict(d["beta"]),
        )

    def to_dict(self) -> dict:
        return {
            "velocity": self.velocity.to_dict(),
            "division": self.division.to_dict(),
            "rates": self.rates.to_dict(),
            "kernel": self.kernel.to_dict(),
            "beta": self.beta.to_dict(),
        }


@dataclass(frozen=True)
class ValidatedModel:
    """A checked, immutable model instance.

    Construct through :func:`validate`; the convenience methods below are
    vectorised over maturities and densities.
    """

    config: ModelConfig

    @property
    def tau_min(self) -> float:
        return self.config.kernel.tau_min

    @property
    def tau_max(self) -> float:
        return self.config.kernel.tau_max

    @property
    def g1(self) -> float:
        return self.config.division.g1

    def V(self, m):
        return self.config.velocity.V(m)

    def dV(self, m):
        return self.config.velocity.dV(m)

    def g(self, m):
        return self.config.division.g(m)

    def g_inv(self, m):
        return self.config.division.g_inv(m)

    def g_inv_prime(self, m):
        return self.config.division.g_inv_prime(m)

    def delta(self, m):
        return self.config.rates.delta(m)

    def gamma(self, m):
        return self.config.rates.gamma(m)

    def beta(self, m, x):
        """Reintroduction rate, constant at ``a(m)/b(m)`` for negative ``x``."""
        bcfg = self.config.beta
        m = np.asarray(m, dtype=float)
        x = np.asarray(x, dtype=float)
        xp = np.maximum(x, 0.0)
        return bcfg.a(m) / (xp ** bcfg.n + bcfg.b(m))

    def flux(self, m, x):
        """The nonlinearity ``x * beta(m, x)``."""
        return np.asarray(x, dtype=float) * self.beta(m, x)

    def beta0(self, x):
        return self.beta(0.0, x)


def beta_eval(model: ValidatedModel, m, x):
    return model.beta(m, x)


def validate(config: ModelConfig | Mapping[str, Any]) -> ValidatedModel:
    """Check every coefficient invariant and freeze the model."""
    if not isinstance(config, ModelConfig):
        config = ModelConfig.from_dict(config)
    grid = np.linspace(0.0, 1.0, N_VALIDATION_POINTS)

    vel = config.velocity
    if vel.family not in ("linear", "power"):
        raise InvalidVelocity("velocity.family", f"unknown family {vel.family!r}")
    if vel.family == "linear" and not vel.rate > 0:
        raise InvalidVelocity("velocity.rate", "must be > 0")
    if vel.family == "power":
        if not vel.coefficient > 0:
            raise InvalidVelocity("velocity.coefficient", "must be > 0")
        if not vel.exponent >= 1:
            raise InvalidVelocity("velocity.exponent", "must be >= 1")
    v = vel.V(grid)
    if v[0] != 0.0 or np.any(v[1:] <= 0) or not np.all(np.isfinite(vel.dV(grid))):
        raise InvalidVelocity("velocity", "V must vanish at 0 and be positive on (0, 1]")

    div = config.division
    if div.family != "linear":
        raise InvalidDivisionMap("division.family", f"unknown family {div.family!r}")
    if not 0.0 < div.ratio < 1.0:
        raise InvalidDivisionMap("division.ratio", f"must lie in (0, 1), got {div.ratio}")

    for name in ("delta", "gamma"):
        coef = getattr(config.rates, name)
        _check_coefficient(coef, f"rates.{name}", InvalidRates)
        if np.any(coef(grid) < 0):
            raise InvalidRates(f"rates.{name}", "must be >= 0 on [0, 1]")

    ker = config.kernel
    if not (ker.tau_min >= 0 and ker.tau_max > ker.tau_min):
        raise InvalidKernel("kernel.tau_min", "need 0 <= tau_min < tau_max")
    if not ker.shape > 0:
        raise InvalidKernel("kernel.shape", "must be > 0")

    bet = config.beta
    _check_coefficient(bet.a, "beta.a", InvalidBeta)
    _check_coefficient(bet.b, "beta.b", InvalidBeta)
    if np.any(bet.b(grid) <= 0):
        raise InvalidBeta("beta.b", "must be strictly positive on [0, 1]")
    if np.any(bet.a(grid) < 0):
        raise InvalidBeta("beta.a", "must be nonnegative on [0, 1]")
    if not bet.n >= 1:
        raise InvalidBeta("beta.n", "exponent must be >= 1")

    return ValidatedModel(config)


def _check_coefficient(coef: Coefficient, name: str, err):
    if coef.family not in ("constant", "affine"):
        raise err(f"{name}.family", f"unknown family {coef.family!r}")
    if coef.family == "constant" and coef.slope != 0.0:
        raise err(name, "constant coefficient carries a slope")
    if not (np.isfinite(coef.intercept) and np.isfinite(coef.slope)):
        raise err(name, "non-finite value")
