"""Reference model instances used by the examples, tests and CLI docs."""
from __future__ import annotations

from dataclasses import replace

from .model import (
    Coefficient,
    DivisionKernel,
    DivisionMap,
    ModelConfig,
    RateProfile,
    Reintroduction,
    VelocityProfile,
)


def decaying_config() -> ModelConfig:
    """V(m) = m, g(m) = m/2, delta = 1, gamma = 0, c = 2 on [1, 2], beta = 0.5/(x + 1).

    Every stability criterion holds for this instance.
    """
    return ModelConfig(
        velocity=VelocityProfile("linear", rate=1.0),
        division=DivisionMap(0.5),
        rates=RateProfile(Coefficient.constant(1.0), Coefficient.constant(0.0)),
        kernel=DivisionKernel(1.0, 2.0, 2.0),
        beta=Reintroduction(Coefficient.constant(0.5), Coefficient.constant(1.0), 1.0),
    )


def slow_config() -> ModelConfig:
    """:func:`decaying_config` with V(m) = 0.1 m and delta = 0.1.

    The boundary equation has a positive constant solution here.
    """
    base = decaying_config()
    return replace(
        base,
        velocity=VelocityProfile("linear", rate=0.1),
        rates=RateProfile(Coefficient.constant(0.1), Coefficient.constant(0.0)),
    )
