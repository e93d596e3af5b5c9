from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, strategies as st

from hemostab import presets, validate
from hemostab.field import experiments as ex
from hemostab.field import initial
from hemostab.model import DivisionKernel


def test_extinction_time_golden(cfg_a):
    bs, ts = ex.extinction_sequence(cfg_a, 0.1)
    np.testing.assert_allclose(bs, [0.1, 0.1 * np.e / 2, 0.1 * (np.e / 2) ** 2, 0.1 * (np.e / 2) ** 3,
                                    0.1 * (np.e / 2) ** 4, 0.1 * (np.e / 2) ** 5, 0.5], rtol=1e-14)
    # telescoping: t_6 = 6 tau_max + ln(b_6 / b_0)
    assert ts[-1] == pytest.approx(12 + np.log(5), abs=1e-12)
    assert ex.extinction_time(cfg_a, 0.1) == pytest.approx(14 + np.log(10), abs=1e-12)
    assert ex.extinction_time(cfg_a, 0.1) == pytest.approx(16.3026, abs=1e-4)


def test_extinction_time_branches(cfg_a):
    # b = g(1): a single generation
    assert ex.extinction_time(cfg_a, 0.5) == pytest.approx(4 + np.log(2), abs=1e-14)
    # b above g(1): no generation at all
    assert ex.extinction_time(cfg_a, 0.8) == pytest.approx(2 + np.log(2), abs=1e-14)


def test_extinction_not_applicable():
    model = validate(replace(presets.decaying_config(), kernel=DivisionKernel(0.5, 2.0, 2.0)))
    with pytest.raises(ex.NotApplicable):
        ex.extinction_time(model, 0.1)


@given(b=st.floats(1e-6, 0.5))
def test_extinction_sequence_increasing(b):
    model = validate(presets.decaying_config())
    bs, ts = ex.extinction_sequence(model, b)
    # b = g(1) repeats once; otherwise strictly increasing
    assert np.all(np.diff(bs) >= 0) and np.all(np.diff(ts) > 0)
    assert bs[-1] == model.g1


def test_truncate_phi_b():
    phi = lambda t, m: np.broadcast_to(np.asarray(m, dtype=float), np.broadcast(t, m).shape)
    m = np.linspace(0, 1, 11)
    np.testing.assert_array_equal(initial.truncate_phi_b(phi, 0.3)(0.0, m), np.minimum(m, 0.3))
    np.testing.assert_array_equal(initial.truncate_phi_b(phi, 1.0)(0.0, m), m)
    np.testing.assert_array_equal(initial.truncate_phi_b(initial.constant(2.0), 0.4)(0.5, m), 2.0)


def test_zero_below_and_bump():
    phi = initial.zero_below(initial.bump(1.0, 0.5, 0.6, 0.2), 0.1)
    m = np.array([0.0, 0.1, 0.2, 0.6, 0.9])
    np.testing.assert_allclose(phi(0.0, m), [0.0, 0.0, 1.0, 1.5, 1.0])


def test_csv_family(tmp_path):
    t = np.linspace(0, 2, 9)
    m = np.linspace(0, 1, 11)
    rows = ["t,m,N"] + [f"{a:.17g},{b:.17g},{1 + a * b:.17g}" for a in t for b in m]
    (tmp_path / "phi.csv").write_text("\n".join(rows) + "\n")
    phi = initial.from_config({"family": "csv", "path": "phi.csv"}, tmp_path)
    # bilinear data is reproduced by the monotone cubic
    assert phi(1.1, 0.37) == pytest.approx(1 + 1.1 * 0.37, abs=1e-12)


def test_csv_needs_full_grid(tmp_path):
    (tmp_path / "bad.csv").write_text("t,m,N\n0,0,1\n0,1,1\n1,0,1\n")
    with pytest.raises(ValueError, match="full"):
        initial.from_csv(tmp_path / "bad.csv")


def test_equilibrium_experiment(cfg_b, cfg_a):
    rep = ex.experiment_equilibrium(cfg_b)
    assert rep.passed and rep.measured < 1e-6
    with pytest.raises(ex.NotApplicable):
        ex.experiment_equilibrium(cfg_a)


def test_agreement_identical_data(cfg_a):
    rep = ex.experiment_agreement(cfg_a, initial.constant(1.0), initial.constant(1.0), 0.5, 5.0)
    assert rep.passed and rep.measured == 0.0
    assert rep.to_dict()["verdict"] == "pass"
