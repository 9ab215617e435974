from __future__ import annotations

import numpy as np
import pytest

from backend.equilibria import mu_inner, mu_norm2
from backend.errors import DomainError, ResolutionError
from backend.spectral import (
    build_schrodinger,
    centered_norm2,
    compute_c_corollary,
    compute_c_star,
    dirichlet_form,
    eigenfunction,
    micro_coercivity_constant,
    rayleigh_audit,
    sigma0_limit,
    sigma0_profile,
    threshold_sweep,
)


@pytest.fixture(scope="module")
def threshold_problem():
    return build_schrodinger(0.5, 1.0)


@pytest.fixture(scope="module")
def threshold_result(threshold_problem):
    return compute_c_star(threshold_problem)


def test_ground_state_is_a_zero_mode(threshold_problem):
    assert threshold_problem.residual < 1e-6
    assert threshold_problem.potential_defect < 1e-3
    centre = threshold_problem.resolution // 2
    assert threshold_problem.nodes[centre] == 0.0
    assert threshold_problem.potential[centre] == pytest.approx(-0.25)
    assert threshold_problem.discrete_potential[centre] == pytest.approx(-0.25, rel=1e-3)


def test_weight_is_positive_and_normalized(threshold_problem):
    p = threshold_problem
    assert np.all(p.weight > 0.0)
    assert p.mass @ (p.weight * p.kernel_vector**2) == pytest.approx(1.0, rel=1e-12)


def test_gaussian_potential_is_resolved():
    problem = build_schrodinger(2.0, 0.0, 5.0, 1601, scale=3.0)
    v = problem.nodes[1:-1]
    assert problem.residual < 1e-6
    np.testing.assert_allclose(problem.potential[1:-1], v**2 - 1.0, rtol=1e-12, atol=1e-12)
    np.testing.assert_allclose(problem.discrete_potential[1:-1], v**2 - 1.0, atol=1e-3 * 24.0)


def test_coarse_grid_is_rejected():
    with pytest.raises(ResolutionError):
        build_schrodinger(0.5, 1.0, 60.0, 7)


@pytest.mark.parametrize("kwargs", [{"dim": 2}, {"resolution": 800}, {"domain_R": -1.0}])
def test_invalid_problems_rejected(kwargs):
    with pytest.raises(DomainError):
        build_schrodinger(0.5, 1.0, **kwargs)


def test_c_star_at_threshold(threshold_result):
    assert 0.0 < threshold_result.c_star <= 0.0625
    assert threshold_result.c_star_weighted <= 0.0625 * (1.0 + 1e-12)
    assert threshold_result.converged
    assert set(threshold_result.refinements) == {"domain", "resolution", "domain_micro", "resolution_micro"}
    for label in ("domain", "resolution"):
        assert threshold_result.refinements[f"{label}_micro"] == pytest.approx(threshold_result.c_micro, rel=0.02)


def test_short_domain_leaves_the_micro_constant_unconverged():
    result = compute_c_star(build_schrodinger(0.5, 1.0, 60.0, 801))
    assert result.refinements["domain_micro"] < 0.9 * result.c_micro
    assert not result.converged


def test_grid_micro_constant_matches_the_spectral_one(eq_half, threshold_result):
    assert micro_coercivity_constant(eq_half, 1.0) == pytest.approx(threshold_result.c_micro, rel=0.02)


def test_corollary_constant_is_below_c_star(threshold_problem, threshold_result):
    assert 0.0 < threshold_result.c_corollary <= threshold_result.c_star * (1.0 + 1e-12)
    assert compute_c_corollary(threshold_problem) == pytest.approx(threshold_result.c_corollary)
    assert threshold_result.c_micro == pytest.approx(threshold_result.c_corollary / threshold_problem.c_alpha_beta)


def test_classical_poincare_case_is_stable():
    result = compute_c_star(build_schrodinger(1.0, 0.0, 40.0, 801, scale=0.5))
    assert result.c_star > 0.0
    assert result.sigma0 == pytest.approx(0.25, rel=1e-10)
    assert result.converged


def test_eigenfunction_attains_the_quotient(threshold_problem, threshold_result):
    h = eigenfunction(threshold_problem, threshold_result.eigenvector)
    quotient = dirichlet_form(threshold_problem, h) / centered_norm2(threshold_problem, h)
    assert quotient == pytest.approx(threshold_result.lambda1, rel=1e-8)


def test_rayleigh_audit_on_random_functions(threshold_problem, threshold_result):
    rng = np.random.default_rng(7)
    nu = rayleigh_audit(threshold_problem, threshold_result.c_star, 1000, rng)
    assert nu["min_margin"] >= -1e-8
    assert nu["centering_gap"] >= -1e-12
    xi = rayleigh_audit(threshold_problem, threshold_result.c_corollary, 1000, rng, centering="xi")
    assert xi["min_margin"] >= -1e-8


def test_constant_functions_have_no_spread(threshold_problem):
    h = np.full(threshold_problem.resolution, 3.0)
    assert dirichlet_form(threshold_problem, h) == 0.0
    assert centered_norm2(threshold_problem, h) == pytest.approx(0.0, abs=1e-24)


def test_sigma0_limit_cases():
    assert sigma0_limit(0.5, 1.5, 0.3) == np.inf
    assert sigma0_limit(0.5, 0.5, 0.3) == 0.0
    assert sigma0_limit(0.5, 1.0, 0.3) == pytest.approx(0.0625 * 0.3)
    assert sigma0_limit(2.0, 0.0, 1.0) == np.inf


def test_sigma0_profile_approaches_the_limit(threshold_problem, threshold_result):
    r, q = sigma0_profile(threshold_problem)
    assert r[0] == 0.0
    assert np.all(np.diff(q) >= 0.0)
    assert threshold_result.sigma0_grid == pytest.approx(q[-1])
    assert threshold_result.sigma0 <= threshold_result.sigma0_grid


def test_no_spectral_gap_below_threshold():
    rows = threshold_sweep(0.5, [0.5], [60.0, 120.0, 240.0, 480.0], resolution=1601)
    lambdas = [row["lambda1"] for row in rows]
    assert all(row["c_star"] == 0.0 for row in rows)
    for coarse, fine in zip(lambdas, lambdas[1:]):
        assert fine < 0.7 * coarse


def test_micro_coercivity_holds_on_the_simulation_grid(eq_half, fp_half, rng):
    constant = micro_coercivity_constant(eq_half, 1.0)
    assert constant > 0.0
    F = eq_half.density
    for _ in range(50):
        f = F * (1.0 + 0.3 * rng.normal(size=F.size)) + 0.05 * np.sqrt(F) * rng.normal(size=F.size)
        micro = f - eq_half.grid.integrate(f) * F
        lhs = -mu_inner(eq_half, fp_half.apply(f), f)
        assert lhs >= constant * mu_norm2(eq_half, micro, -1.0) * (1.0 - 1e-10)
