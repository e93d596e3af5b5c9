import pytest

from hemostab import presets, validate
from hemostab.field import solve_field


@pytest.fixture(scope="session")
def cfg_a():
    return validate(presets.decaying_config())


@pytest.fixture(scope="session")
def cfg_b():
    return validate(presets.slow_config())


@pytest.fixture(scope="session")
def field_a(cfg_a):
    """CFG-A field from unit data, shared by the solver tests."""
    return solve_field(cfg_a, 1.0, 8.0)
