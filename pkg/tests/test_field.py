from dataclasses import replace

import numpy as np
import pytest

from hemostab import dde, flow, kernels, presets, validate
from hemostab.field import FieldHistory, HistoryGap, MaturityGrid, PicardDiverged, solve_field
from hemostab.field.experiments import floor_sensitivity
from hemostab.field.operators import operator_G, operator_J, reconstruct_P
from hemostab.model import Coefficient, DivisionKernel, Reintroduction


def _constant_history(field, value, extra=4):
    h = FieldHistory.from_function(lambda t, m: np.full(np.broadcast(t, m).shape, value),
                                   field.grid, field.K, field.K + extra + 1)
    h.F[:] = value
    h.x[:] = value
    h.top = field.K + extra
    return h


def test_grid_alignment(cfg_a, field_a):
    g = field_a.grid
    assert g.y[-1] == 0.0 and g.m[-1] == 1.0
    np.testing.assert_allclose(np.diff(g.y), field_a.dt, rtol=0, atol=1e-13)
    # one step back along a characteristic is exactly one node down
    np.testing.assert_allclose(flow.pi(cfg_a, -field_a.dt, g.m[1:]), g.m[:-1], rtol=1e-13)
    assert g.y[0] < flow.log_h(cfg_a, cfg_a.g1)


def test_zero_data_zero_field(cfg_a):
    f = solve_field(cfg_a, 0.0, 4.0)
    assert np.all(f.values == 0.0) and np.all(f.boundary == 0.0)


def test_nonnegative_and_bounded(field_a):
    assert field_a.values.min() >= -1e-9
    assert field_a.sup_norm().max() <= 1.0 + 1e-12


def test_matches_boundary_equation_below_g1(cfg_a, field_a):
    psi = dde.ScalarHistory.constant(1.0, 2.0, field_a.dt)
    x = dde.integrate(cfg_a, psi, field_a.t[-1], field_a.dt, trace=True).x
    low = field_a.grid.m < cfg_a.g1
    assert np.max(np.abs(field_a.values[:, low] - x[:, None])) < 5e-4


def test_picard_contraction(cfg_a, field_a):
    c = kernels.derived_constants(cfg_a)
    assert field_a.picard_residuals.max() < 1e-11
    assert field_a.picard_ratios.max() <= c.alpha + 0.1


def test_step_identity(cfg_a, field_a):
    # stored slice = transport + gain - Adams-Moulton loss
    h, dt = field_a.history, field_a.dt
    n = field_a.K + 20
    j = np.arange(field_a.grid.J + 1)
    transport = h.node_value(n, j - 1) * kernels.bigK(cfg_a, dt, field_a.grid.m)
    f = [kernels.bigK(cfg_a, k * dt, field_a.grid.m)
         * cfg_a.flux(flow.maturity_of_log_h(cfg_a, field_a.grid.y - k * dt), h.node_value(n + 1 - k, j - k))
         for k in range(4)]
    loss = dt / 24 * (9 * f[0] + 19 * f[1] - 5 * f[2] + f[3])
    G = operator_G(cfg_a, h, (n + 1) * dt, j)
    assert np.max(np.abs(transport + G - loss - h.F[n + 1])) < 1e-10


def test_operator_J_closed_form(cfg_a, field_a):
    h = _constant_history(field_a, 0.7)
    dt, t = field_a.dt, h.top * field_a.dt
    lam = 0.7 * 0.5 / 1.7
    j = np.arange(field_a.grid.J + 1)
    got = operator_J(cfg_a, h, t, j, (t - 2 * dt, t))
    ref = lam * (1 - np.exp(-2 * 2 * dt)) / 2
    # Simpson error (2 dt) dt^4 max|f^(4)| / 180 is about 3.5e-8 here
    assert np.max(np.abs(got - ref)) < 5e-8
    assert np.max(np.abs(got)) <= 0.5 * 0.7 * 2 * dt
    assert np.all(operator_J(cfg_a, _constant_history(field_a, 0.0), t, j) == 0.0)


def test_operator_G_collapse(cfg_a, field_a):
    h = _constant_history(field_a, 0.7)
    dt, t = field_a.dt, h.top * field_a.dt
    c = kernels.derived_constants(cfg_a)
    j = np.nonzero(field_a.grid.m < cfg_a.g1 * np.exp(-dt))[0]
    got = operator_G(cfg_a, h, t, j)
    ref = 2 * (0.7 * 0.5 / 1.7) * c.zeta_tilde * (1 - np.exp(-2 * dt)) / 2
    # Simpson on half steps: error about dt (dt/2)^4 16 ref / 180 ~ 1.2e-9
    assert np.max(np.abs(got - ref)) < 2e-9
    # gain bound over one step
    bound = 2 * c.L * c.zeta_tilde * dt * 0.7
    jall = np.arange(field_a.grid.J + 1)
    assert np.max(np.abs(operator_G(cfg_a, h, t, jall))) <= bound * (1 + dt)
    assert np.all(operator_G(cfg_a, _constant_history(field_a, 0.0), t, jall) == 0.0)


def test_history_gap(cfg_a, field_a):
    h = field_a.history
    with pytest.raises(HistoryGap):
        h.sample(h.top * h.dt + 0.5, -1.0)
    with pytest.raises(HistoryGap):
        operator_G(cfg_a, h, (h.top + 20) * h.dt, [5])


def test_sample_hits_nodes(field_a):
    h = field_a.history
    i, j = field_a.K + 7, 100
    assert h.sample(i * h.dt, h.grid.y[j]) == pytest.approx(h.F[i, j], abs=1e-15)
    # below the floor the boundary trace answers
    assert h.sample(i * h.dt, h.grid.y[0] - 5.0) == pytest.approx(h.x[i], abs=1e-15)


def test_workers_bitwise_identical(cfg_a):
    phi = lambda t, m: 1 + 0.3 * np.sin(4 * m) * np.cos(t)
    f1 = solve_field(cfg_a, phi, 3.0)
    f2 = solve_field(cfg_a, phi, 3.0, workers=3)
    assert np.array_equal(f1.values, f2.values)


def test_step_too_large(cfg_a):
    with pytest.raises(dde.StepTooLarge):
        solve_field(cfg_a, 1.0, 4.0, dt=1.25)


def test_picard_diverges_for_stiff_loss():
    model = validate(replace(
        presets.decaying_config(),
        beta=Reintroduction(Coefficient.constant(400.0), Coefficient.constant(1.0), 1.0),
    ))
    with pytest.raises(PicardDiverged, match="reduce dt"):
        solve_field(model, 0.01, 3.0, dt=0.25)


def test_zero_tau_min_runs_implicit_gain():
    model = validate(replace(presets.decaying_config(), kernel=DivisionKernel(0.0, 2.0, 2.0)))
    f = solve_field(model, 1.0, 2.5)
    assert not f.meta["explicit_gain"]
    assert f.picard_residuals.max() < 1e-11
    assert np.all(np.isfinite(f.values))


def test_P_pure_decay(cfg_a):
    f = solve_field(cfg_a, 0.0, 4.0)
    P = reconstruct_P(cfg_a, f.history, 0.8)
    t = f.t[f.K:] - 2.0
    # gamma = 0, r = 1
    np.testing.assert_allclose(P, 0.8 * np.exp(-t)[:, None] * np.ones_like(P), rtol=1e-12)
    assert np.all(reconstruct_P(cfg_a, f.history, 0.0) == 0.0)


def test_P_bounded(cfg_a, field_a):
    P = reconstruct_P(cfg_a, field_a.history, 0.0)
    # sources are bounded by L sup|N| <= 0.5, attenuation rate gamma + r = 1
    assert np.all(np.isfinite(P)) and np.abs(P).max() <= 0.5


def test_floor_sensitivity(cfg_a):
    rep = floor_sensitivity(cfg_a, 1.0, 3.0)
    assert rep["y_min_lowered"] == -14.0
    # same size as the field/boundary-equation mismatch near m = 0
    assert rep["max_abs_diff"] < 1e-5
