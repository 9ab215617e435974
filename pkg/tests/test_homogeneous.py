from __future__ import annotations

import numpy as np
import pytest

from backend.equilibria import build_equilibrium, mu_norm2
from backend.errors import DomainError
from backend.fields import tail_profile
from backend.homogeneous import (
    centered_dissipation_defects,
    dissipation_defects,
    fokker_planck_for,
    holder_split_margin,
    prop_b_bound,
    r_form_optimum,
    r_form_rhs,
    random_bounded_h,
    relaxation_audit,
    relaxation_constants,
    run_homogeneous,
    stroock_audit,
    tail_summary,
    tau_from_eta,
    weak_poincare_audit,
    weak_poincare_constant,
    weak_poincare_sides,
)
from backend.spectral import micro_coercivity_constant
from models import SolverConfig


@pytest.fixture(scope="module")
def eq_exp():
    """alpha = 1: exponential equilibrium on a coarse grid."""
    return build_equilibrium(1.0, 1, k_max=2.0, n=41)


@pytest.fixture(scope="module")
def tail_run(eq_half):
    g = tail_profile(eq_half, 2.0, 0.05)
    cfg = SolverConfig(dt=0.5, t_end=400.0, output_every=4)
    return g, run_homogeneous(eq_half, g, cfg, k=2.0)


@pytest.fixture(scope="module")
def bounded_run(eq_half):
    g = eq_half.density * (1.0 + 0.5 * np.tanh(eq_half.grid.nodes / 10.0))
    cfg = SolverConfig(dt=0.25, t_end=50.0, output_every=4)
    return run_homogeneous(eq_half, g, cfg, k=2.0)


def test_equilibrium_is_stationary(eq_half):
    g = 2.0 * eq_half.density
    run = run_homogeneous(eq_half, g, SolverConfig(dt=0.5, t_end=5.0, output_every=2))
    np.testing.assert_allclose(run.g[-1], g, rtol=1e-10)
    assert np.all(run.y <= 1e-20)
    np.testing.assert_allclose(run.gbar, g, rtol=1e-13)


def test_negative_data_is_rejected(eq_half):
    g = eq_half.density.copy()
    g[0] = -1e-3
    with pytest.raises(DomainError):
        run_homogeneous(eq_half, g, SolverConfig(dt=0.5, t_end=1.0))


def test_mass_is_conserved_and_y_decreases(tail_run):
    _, run = tail_run
    np.testing.assert_allclose(run.mass, run.mass[0], rtol=1e-11)
    assert run.mass[0] == pytest.approx(1.0, rel=1e-12)
    assert np.all(np.diff(run.y) <= 1e-12 * run.y[:-1])
    assert np.all(run.energy >= 0.0)


def test_crank_nicolson_dissipation_is_exact(eq_half):
    g = eq_half.density * (1.0 + 0.5 * np.tanh(eq_half.grid.nodes / 10.0))
    cfg = SolverConfig(dt=0.05, t_end=1.0, collision_solver="crank_nicolson", output_every=1)
    run = run_homogeneous(eq_half, g, cfg)
    defects = dissipation_defects(run, fokker_planck_for(eq_half))
    scale = np.abs(np.diff(run.y)) / 0.05
    assert np.all(np.abs(defects) <= 1e-9 * scale + 1e-14 * run.y[0])


def test_implicit_euler_dissipates_at_least_the_endpoint_energy(eq_half):
    # y_{n+1} - y_n = -2 dt E_{n+1} - dt^2 ||L g_{n+1}||^2 for a single step
    g = eq_half.density * (1.0 + 0.5 * np.tanh(eq_half.grid.nodes / 10.0))
    run = run_homogeneous(eq_half, g, SolverConfig(dt=0.25, t_end=5.0, output_every=1))
    drop = -np.diff(run.y) / 0.25
    assert np.all(drop >= 2.0 * run.energy[1:] * (1.0 - 1e-10))


def _centered_defect(eq, dt, times):
    v = eq.grid.nodes
    g = eq.density * (1.0 + 0.3 * np.tanh(v / 2.0))
    cfg = SolverConfig(dt=dt, t_end=0.4, collision_solver="crank_nicolson", output_every=1)
    defects = centered_dissipation_defects(run_homogeneous(eq, g, cfg))
    # defects[n - 1] is centred on output n
    return sum(abs(defects[int(round(t / dt)) - 1]) for t in times)


def test_dissipation_identity_is_second_order_in_time(eq_exp):
    times = (0.1, 0.2, 0.3)
    coarse = _centered_defect(eq_exp, 0.02, times)
    fine = _centered_defect(eq_exp, 0.01, times)
    assert 3.2 <= coarse / fine <= 4.8


def test_prop_b_bound_limits():
    assert prop_b_bound(3.0, 10.0, 0.2, 1.0, 2.0, 0.0) == pytest.approx(3.0)
    t = np.array([1e10, 2e10])
    values = prop_b_bound(1.0, 1.0, 1.0, 1.0, 2.0, t)
    assert np.log(values[1] / values[0]) / np.log(2.0) == pytest.approx(-2.0, rel=1e-6)
    # rate constant 2 beta C / (k K^{beta/k})
    rate = 2.0 * 1.0 * 1.0 / 2.0
    assert values[0] == pytest.approx((rate * 1e10) ** (-2.0), rel=1e-6)
    assert prop_b_bound(0.0, 1.0, 1.0, 1.0, 2.0, 5.0) == 0.0


def test_relaxation_constants(eq_half, tail_run):
    g, run = tail_run
    constants = relaxation_constants(eq_half, g, 2.0)
    assert constants.beta == pytest.approx(1.0)
    assert constants.theta == pytest.approx(2.0 / 3.0)
    assert constants.y0 == pytest.approx(run.y[0], rel=1e-12)
    assert constants.kk > constants.kk_k**2 * run.norm_k[0] ** 2
    assert 0.0 < constants.c < 1.0


def test_relaxation_constants_need_a_sub_exponential_equilibrium(eq_exp):
    with pytest.raises(DomainError):
        relaxation_constants(eq_exp, eq_exp.density, 2.0)


def test_algebraic_bound_holds_along_the_tail_run(eq_half, tail_run):
    g, run = tail_run
    audit = relaxation_audit(run, relaxation_constants(eq_half, g, 2.0))
    assert audit["passed"]
    assert audit["bound_margin"] >= -1e-8
    assert audit["ode_margin"] >= -1e-8
    assert audit["moment_ratio"] <= relaxation_constants(eq_half, g, 2.0).kk_k


def test_bound_uses_the_moment_constant_itself(eq_half, tail_run):
    g, run = tail_run
    constants = relaxation_constants(eq_half, g, 2.0)
    deviation_k = np.array([mu_norm2(eq_half, s - run.gbar, 2.0) for s in run.g])
    assert np.all(deviation_k <= constants.kk * (1.0 + 1e-12))
    audit = relaxation_audit(run, constants)
    expected = prop_b_bound(run.y[0], constants.kk, constants.c, constants.beta, constants.k, run.times)
    np.testing.assert_allclose(audit["bound"], expected, rtol=1e-14)
    assert np.all(run.y <= expected * (1.0 + 1e-8))


def test_tail_is_algebraic(eq_half, tail_run):
    g, run = tail_run
    constants = relaxation_constants(eq_half, g, 2.0)
    summary = tail_summary(run, constants, 50.0)
    assert summary["predicted"] == pytest.approx(-2.0)
    assert -3.0 < summary["slope"] < -1.0
    assert not summary["fallback"]
    # beyond the transient y falls slower than any fixed exponential
    log_y = np.log(run.y)
    i50, i100, i300 = (int(np.searchsorted(run.times, t)) for t in (50.0, 100.0, 300.0))
    early_rate = (log_y[i50] - log_y[i100]) / (run.times[i100] - run.times[i50])
    late_rate = (log_y[i300] - log_y[-1]) / (run.times[-1] - run.times[i300])
    assert 0.0 < late_rate < 0.5 * early_rate
    assert late_rate < 2.0 * constants.c


@pytest.mark.parametrize("k", [0.5, 2.0, 6.0])
def test_holder_split_on_random_functions(eq_half, rng, k):
    for _ in range(200):
        h = random_bounded_h(eq_half, rng) * np.exp(rng.normal() * eq_half.grid.mapped / 10.0)
        assert holder_split_margin(eq_half, h, k, 1.0) >= -1e-12


def test_tau_from_eta():
    assert tau_from_eta(0.5, 1.0) == pytest.approx(1.0)
    assert tau_from_eta(0.9, 1.0) == pytest.approx(9.0)
    with pytest.raises(DomainError):
        tau_from_eta(1.0, 1.0)


def test_weak_poincare_sides_vanish_on_constants(eq_half):
    op = fokker_planck_for(eq_half)
    variance, energy, sup2 = weak_poincare_sides(op, np.full(eq_half.grid.size, 3.0))
    assert variance == pytest.approx(0.0, abs=1e-24)
    assert energy == pytest.approx(0.0, abs=1e-24)
    assert sup2 == pytest.approx(0.0, abs=1e-24)


def test_weak_poincare_on_random_bounded_functions(eq_half, rng):
    audit = weak_poincare_audit(eq_half, tau=1.0, eta=0.5, samples=500, rng=rng)
    assert audit["tau"] == pytest.approx(1.0)
    assert audit["violations"] == 0
    assert audit["min_margin"] >= -1e-8
    assert audit["min_r_margin"] >= -1e-8


def test_weak_poincare_constant_blows_up_as_eta_approaches_beta(eq_half):
    c = micro_coercivity_constant(eq_half, 1.0)
    values = [weak_poincare_constant(eq_half, tau_from_eta(f, 1.0), c) for f in (0.5, 0.9, 0.99, 0.999)]
    assert np.all(np.diff(values) > 0.0)
    assert values[-1] > 100.0 * values[0]


def test_r_form_minimum_is_the_product_form(eq_half, rng):
    op = fokker_planck_for(eq_half)
    tau = 3.0
    for _ in range(20):
        _, energy, sup2 = weak_poincare_sides(op, random_bounded_h(eq_half, rng))
        r_star = r_form_optimum(energy, sup2, tau)
        product = energy ** (tau / (1.0 + tau)) * sup2 ** (1.0 / (1.0 + tau))
        assert r_form_rhs(energy, sup2, tau, r_star) == pytest.approx(product, rel=1e-10)
        assert np.all(r_form_rhs(energy, sup2, tau, r_star * np.array([0.5, 2.0])) > product)


def test_stroock_bound_holds_for_bounded_data(eq_half, bounded_run):
    tau = 1.0
    c = micro_coercivity_constant(eq_half, 1.0)
    audit = stroock_audit(bounded_run, weak_poincare_constant(eq_half, tau, c), tau)
    assert audit["passed"]
    assert audit["sup_growth"] <= 1.0 + 1e-10
    assert audit["bound"][0] == pytest.approx(bounded_run.y[0])
