from __future__ import annotations

import numpy as np
import pytest

from backend.decay import (
    build_rate_model,
    count_violations,
    fit_rate,
    groenwall_bound,
    linearization_constant,
    nash_constant,
    nash_margin,
    nash_ratio,
    phi_inverse,
    phi_lower,
    predicted_zeta,
    psi_constant,
    psi_lower,
    trajectory_margins,
)
from backend.diagnostics import HypocoercivityDiagnostics, choose_delta, step_constants
from backend.equilibria import moments, temperature
from backend.errors import DomainError
from backend.fields import bump_initial_field, fluctuation
from backend.moments import build_splitting, moment_bound
from backend.spectral import micro_coercivity_constant
from backend.transport import KineticSolver, spatial_grid, torus_extent
from models import InitialConfig, SolverConfig

SHARP_NASH_1D = (27.0 / (16.0 * np.pi**2)) ** (1.0 / 3.0)


@pytest.fixture(scope="module")
def nash_1d():
    return nash_constant(1)


@pytest.mark.parametrize(
    "dim, k, beta, expected",
    [(1, 4.0, 1.0, 0.5), (1, 0.25, 1.0, 0.25), (2, 2.0, 0.5, 1.0), (1, 1.0, 2.0, 0.5)],
)
def test_predicted_zeta(dim, k, beta, expected):
    assert predicted_zeta(dim, k, beta) == expected


def test_predicted_zeta_needs_positive_parameters():
    with pytest.raises(DomainError):
        predicted_zeta(1, 0.0, 1.0)


def test_gaussian_nash_quotients():
    assert nash_ratio(2.0, 1) == pytest.approx((np.pi / 2.0) ** (1.0 / 3.0) / np.pi ** (2.0 / 3.0), rel=1e-8)
    assert nash_ratio(2.0, 2) == pytest.approx(1.0 / (2.0 * np.sqrt(np.pi)), rel=1e-8)


@pytest.mark.parametrize("sigma", [0.5, 1.0, 2.0])
def test_nash_quotient_is_scale_invariant_on_the_grid(sigma):
    x_extent, nx = 40.0, 801
    x = spatial_grid(x_extent, nx)
    u = 3.0 * np.exp(-((x - 20.0) ** 2) / (2.0 * sigma**2))
    quotient = 1.0 / (1.0 + nash_margin(u, x_extent, 1.0))
    assert quotient == pytest.approx(nash_ratio(2.0, 1), rel=1e-6)


def test_certified_constant_exceeds_the_sharp_one(nash_1d):
    assert nash_1d > SHARP_NASH_1D
    assert nash_constant(2) >= 1.25 / (2.0 * np.sqrt(np.pi))


def test_nash_dimension_is_checked():
    with pytest.raises(DomainError):
        nash_constant(3)


def test_nash_on_zero_and_on_a_cosine_bump(nash_1d):
    x_extent, nx = 8.0, 801
    assert nash_margin(np.zeros(nx), x_extent, nash_1d) == 0.0
    x = spatial_grid(x_extent, nx) - 4.0
    bump = np.where(np.abs(x) < 1.0, 1.0 + np.cos(np.pi * x), 0.0)
    assert nash_margin(bump, x_extent, nash_1d) > 0.0


def test_nash_on_random_bumps(nash_1d):
    rng = np.random.default_rng(11)
    x_extent, nx = 60.0, 1201
    x = spatial_grid(x_extent, nx)
    for _ in range(500):
        count = rng.integers(1, 4)
        u = np.zeros(nx)
        for _ in range(count):
            centre = rng.uniform(20.0, 40.0)
            width = rng.uniform(0.3, 3.0)
            u += rng.normal() * np.exp(-((x - centre) ** 2) / (2.0 * width**2))
        assert nash_margin(u, x_extent, nash_1d) >= 0.0


def test_phi_is_the_inverse_of_phi_inverse():
    c_small = 0.3
    assert phi_lower(0.0, c_small, 1) == 0.0
    ys = np.logspace(-8, 2, 41)
    phis = np.array([phi_lower(y, c_small, 1) for y in ys])
    np.testing.assert_allclose(phi_inverse(phis, c_small, 1), ys, rtol=1e-12)
    assert np.all(np.diff(phis) > 0.0)
    assert np.all(phis <= 0.5 * ys)


def test_phi_rejects_negative_arguments():
    with pytest.raises(DomainError):
        phi_lower(-1.0, 0.3, 1)


def test_linearization_holds_on_the_sublevel_set():
    c_small, z0 = 0.05, 3.0
    c1 = linearization_constant(z0, c_small, 1)
    for y in np.linspace(0.0, z0, 201):
        assert phi_lower(y, c_small, 1) >= c1 * y**3 * (1.0 - 1e-12)


def test_psi_constant_and_lower_bound():
    c0 = psi_constant(10.0, 3.0, 2.0, 1.0, 2.0)
    assert c0 == pytest.approx(1.0 / 80.0)
    assert psi_lower(0.0, c0, 1.0, 2.0) == 0.0
    assert psi_lower(4.0, c0, 1.0, 2.0) == pytest.approx(8.0 / 80.0)


def test_groenwall_bound_shape():
    assert groenwall_bound(2.0, 0.3, 0.5, 0.0) == pytest.approx(2.0)
    t = np.array([1e10, 2e10])
    values = groenwall_bound(2.0, 0.3, 0.5, t)
    assert np.log(values[1] / values[0]) / np.log(2.0) == pytest.approx(-0.5, rel=1e-6)


def test_fit_rate_on_an_exact_power_law():
    t = np.linspace(0.0, 100.0, 201)
    fit = fit_rate(t, 3.0 * (1.0 + t) ** (-0.7), 25.0)
    assert fit["slope"] == pytest.approx(-0.7, rel=1e-10)
    assert fit["ci_low"] == pytest.approx(fit["ci_high"], abs=1e-8)
    assert not fit["fallback"]
    assert fit["t_start"] >= 25.0


def test_fit_rate_interval_on_noisy_data():
    rng = np.random.default_rng(3)
    t = np.linspace(0.0, 100.0, 201)
    values = (1.0 + t) ** (-0.5) * np.exp(0.01 * rng.normal(size=t.size))
    fit = fit_rate(t, values, 25.0)
    assert fit["ci_low"] < fit["slope"] < fit["ci_high"]
    assert abs(fit["slope"] + 0.5) < 0.02


def test_fit_rate_falls_back_when_the_window_is_empty():
    t = np.linspace(0.0, 10.0, 11)
    fit = fit_rate(t, (1.0 + t) ** (-1.0), 50.0, t_stop=8.0)
    assert fit["fallback"]
    assert fit["t_stop"] == 8.0
    assert fit["slope"] == pytest.approx(-1.0)


@pytest.fixture(scope="module")
def bump_run(eq_half, fp_half):
    k, t_end = 2.0, 2.0
    theta = temperature(eq_half)
    x_extent, nx = torus_extent(theta, t_end), 33
    diag = HypocoercivityDiagnostics(eq_half, fp_half, x_extent, nx, 1.0)
    constants = step_constants(eq_half, fp_half, 1.0, micro_coercivity_constant(eq_half, 1.0))
    delta, kappa = choose_delta(constants)
    field = bump_initial_field(eq_half, x_extent, nx, k, InitialConfig())
    solver = KineticSolver(eq_half, fp_half, x_extent, nx, SolverConfig(dt=0.05, t_end=t_end, output_every=4))
    _, states = solver.run(field, observer=lambda f: diag.snapshot(fluctuation(eq_half, f), delta, k))
    first = states[0]
    g0 = fluctuation(eq_half, field).values
    model = build_rate_model(
        dim=1,
        k=k,
        beta=1.0,
        theta=theta,
        theta_k=moments(eq_half, [k]).theta_k[k],
        kk=moment_bound(build_splitting(fp_half, k)).kk,
        norm2_init=first.norm2,
        norm_k_init=first.norm_k,
        l1_init=diag.l1_norm(g0),
        h0=first.h_entropy,
        delta=delta,
        kappa=kappa,
    )
    return states, model


def test_rate_model_constants(bump_run):
    _, model = bump_run
    assert model.zeta == 0.5
    for value in (model.c_nash, model.c_small, model.c0, model.c1, model.c_rate, model.combined):
        assert np.isfinite(value) and value > 0.0
    expected = (model.kappa / model.zeta) * model.combined * (2.0 / (1.0 + model.delta)) ** 3.0
    assert model.c_rate == pytest.approx(expected)


def test_decay_inequalities_hold_along_a_run(bump_run):
    states, model = bump_run
    margins = trajectory_margins(states, model)
    assert set(margins) == {"groenwall", "phi", "psi", "combined", "h_monotone"}
    assert all(len(values) == len(states) for values in margins.values())
    assert count_violations(margins) == {name: 0 for name in margins}
    assert margins["groenwall"][0] == pytest.approx(0.0, abs=1e-14)
