"""Acceptance gate: one test per criterion, each printing a PASS/FAIL line.

Run alone with ``pytest tests/test_acceptance.py -v``.
"""
import time
from dataclasses import replace

import numpy as np
import pytest
from scipy.integrate import quad

from hemostab import dde, flow, kernels, presets, stability, validate
from hemostab.field import experiments as ex
from hemostab.field import initial, solve_field
from hemostab.model import DivisionKernel, VelocityProfile

E2 = np.exp(-2.0)


def verdict(request, number, ok, detail, elapsed, budget):
    ok = bool(ok) and elapsed < budget
    line = f"[criterion {number:2d}] {'PASS' if ok else 'FAIL'}  {detail}  ({elapsed:.2f} s < {budget:g} s)"
    capman = request.config.pluginmanager.getplugin("capturemanager")
    with capman.global_and_fixture_disabled():
        print("\n" + line)
    assert ok, line


class Timer:
    def __enter__(self):
        self.start = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.elapsed = time.perf_counter() - self.start


@pytest.fixture(scope="module")
def model_a():
    return validate(presets.decaying_config())


@pytest.fixture(scope="module")
def decay_run(model_a):
    with Timer() as tm:
        rep = ex.experiment_decay(model_a, initial.constant(1.0), 30.0)
    return rep, tm.elapsed


def test_01_flow_exactness(request):
    rng = np.random.default_rng(1)
    with Timer() as tm:
        lin = validate(presets.decaying_config())
        pw = validate(replace(presets.decaying_config(), velocity=VelocityProfile("power", coefficient=1.5,
                                                                                  exponent=2.0)))
        s, t = -rng.uniform(0, 5, 10**4), -rng.uniform(0, 5, 10**4)
        m = rng.uniform(0, 1, 10**4)
        err = 0.0
        for model in (lin, pw):
            err = max(err, np.max(np.abs(flow.pi(model, s, flow.pi(model, t, m)) - flow.pi(model, s + t, m))))
        err_cf = np.max(np.abs(flow.pi(lin, t, m) - m * np.exp(t)))
    worst = max(err, err_cf)
    verdict(request, 1, worst < 1e-10, f"semigroup/closed-form max error {worst:.2e} < 1e-10", tm.elapsed, 1)


def test_02_kernel_normalisation(request):
    with Timer() as tm:
        errs = []
        for c in (0.5, 1.0, 2.0, 5.0):
            model = validate(replace(presets.decaying_config(), kernel=DivisionKernel(1.0, 2.0, c)))
            _, w = kernels.kernel_rule(model.config.kernel)
            # independent adaptive quadrature of k itself
            total = quad(lambda a: float(kernels.k_density(model, a)), 1.0, 2.0, limit=200)[0]
            errs += [abs(w.sum() - 1.0), abs(total - 1.0)]
    worst = max(errs)
    verdict(request, 2, worst < 1e-8, f"max |int k - 1| = {worst:.2e} < 1e-8", tm.elapsed, 1)


def test_03_constants_golden(request):
    kernels.derived_constants.cache_clear()
    with Timer() as tm:
        c = kernels.derived_constants(validate(presets.decaying_config()))
    errs = {
        "I": abs(c.I - 2.0),
        "tau0": abs(c.tau0 - np.log(2.0)),
        "L": abs(c.L - 0.5),
        "zeta_tilde": abs(c.zeta_tilde - 4 * E2),
        "z": abs(c.z - 2 * E2),
    }
    worst = max(errs, key=errs.get)
    verdict(request, 3, errs[worst] < 1e-9, f"worst constant {worst} off by {errs[worst]:.2e} < 1e-9",
            tm.elapsed, 1)


def test_04_trivial_invariance(request, model_a):
    with Timer() as tm:
        sol = dde.integrate(model_a, dde.ScalarHistory.constant(0.0, 2.0, 0.03125), 20.0)
        f = solve_field(model_a, 0.0, 6.0)
    ok = np.all(sol.x == 0.0) and np.all(f.values == 0.0) and np.all(f.boundary == 0.0)
    verdict(request, 4, ok, "zero data give identically zero DDE and field", tm.elapsed, 5)


def _random_history(rng):
    c0 = rng.uniform(0, 2) * rng.integers(0, 2)
    amps = rng.uniform(0, 3, 3)
    freqs = rng.uniform(0.2, 6, 3)
    phases = rng.uniform(0, 2 * np.pi, 3)

    def f(t):
        t = np.asarray(t)[..., None]
        return c0 + np.sum(amps * (1 + np.sin(freqs * t + phases)) / 2, axis=-1)

    return f


def test_05_dde_global_stability(request, model_a):
    rng = np.random.default_rng(5)
    assert stability.evaluate(model_a).dde_global_stable.holds
    min_x, max_end, max_rel_inc = np.inf, 0.0, -np.inf
    with Timer() as tm:
        for _ in range(100):
            psi = dde.ScalarHistory.from_function(_random_history(rng), 2.0, 0.03125)
            sol = dde.integrate(model_a, psi, 60.0)
            mono = dde.check_H_monotone(model_a, sol)
            min_x = min(min_x, sol.x.min())
            max_end = max(max_end, sol.x[-1])
            max_rel_inc = max(max_rel_inc, mono.max_increase / (1 + np.max(np.abs(mono.values))))
    ok = min_x >= -1e-9 and max_end < 1e-4 and max_rel_inc <= 1e-6
    verdict(request, 5, ok,
            f"min x {min_x:.2e} >= -1e-9, max x(60) {max_end:.2e} < 1e-4, "
            f"max relative H increase {max_rel_inc:.2e} <= 1e-6", tm.elapsed, 60)


def test_06_constant_solution(request):
    model = validate(presets.slow_config())
    with Timer() as tm:
        rep = ex.experiment_equilibrium(model, 50.0)
    verdict(request, 6, rep.passed, f"drift from x* = {rep.details['equilibrium']:.6f}: {rep.measured:.2e} < 1e-6",
            tm.elapsed, 10)


def test_07_exponential_decay(request, decay_run):
    rep, elapsed = decay_run
    d = rep.details
    ok = d["bounded"] and rep.measured >= 0.9 * rep.expected
    verdict(request, 7, ok,
            f"max sup|N| {d['max_sup_norm']:.6f} <= 1, fitted rate {rep.measured:.4f} >= 0.9 rho = "
            f"{0.9 * rep.expected:.4f} (J = {d['field_meta']['J']})", elapsed, 120)


def test_08_picard_contraction(request, decay_run):
    rep, elapsed = decay_run
    d = rep.details
    ok = d["picard_ratio_max"] <= d["picard_ratio_bound"]
    verdict(request, 8, ok, f"max iterate ratio {d['picard_ratio_max']:.4f} <= alpha + 0.1 = "
            f"{d['picard_ratio_bound']:.4f}", elapsed, 120)


def test_09_extinction(request, model_a):
    phi = initial.zero_below(initial.bump(1.0, 0.5, 0.6, 0.2), 0.1)
    with Timer() as tm:
        rep = ex.experiment_extinction(model_a, phi, 0.1, 0.5)
    tbar = rep.details["extinction_time"]
    ok = rep.passed and abs(tbar - 16.3026) < 1e-4
    verdict(request, 9, ok, f"t_bar = {tbar:.4f}, sup|N| at t_bar + 0.5: {rep.measured:.2e} < {rep.tolerance:.2e}",
            tm.elapsed, 120)


def test_10_agreement(request, model_a):
    with Timer() as tm:
        rep = ex.experiment_agreement(model_a, initial.constant(1.0), initial.bump(1.0, 0.5, 0.6, 0.2), 0.1, 20.0)
    verdict(request, 10, rep.passed, f"sup|N1 - N2| for t >= {rep.details['t_from']:.4f}: {rep.measured:.2e} < "
            f"{rep.tolerance:.2e}", tm.elapsed, 240)


def test_11_cross_solver(request, model_a):
    with Timer() as tm:
        rep = ex.cross_solver(model_a, 1.0, 40.0)
    verdict(request, 11, rep.passed, f"max |N(t, m_j) - x(t)| over m_j < g(1): {rep.measured:.2e} < 5e-4",
            tm.elapsed, 120)


def test_12_dde_order(request, model_a):
    with Timer() as tm:
        vals = []
        for dt in (0.125, 0.0625, 0.03125):
            psi = dde.ScalarHistory.from_function(lambda t: 1 + 0.5 * np.sin(t), 2.0, dt,
                                                  df=lambda t: 0.5 * np.cos(t))
            vals.append(dde.integrate(model_a, psi, 6.0, dt).x[-1])
        ratio = (vals[0] - vals[1]) / (vals[1] - vals[2])
    verdict(request, 12, 11 <= ratio <= 21, f"Richardson ratio {ratio:.2f} in [11, 21]", tm.elapsed, 30)
