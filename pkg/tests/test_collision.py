from __future__ import annotations

import numpy as np
import pytest

from backend.collision import (
    apply_L1,
    apply_L2,
    build_operator,
    drift_constants,
    drift_profile,
    lyapunov_sides,
    micro_constant_scattering,
    nu2_bounds,
    nu2_profile,
)
from backend.equilibria import moment_unchecked, mu_inner, mu_norm2
from backend.errors import ConfigError, ShapeError
from models import CollisionSpec


def _random_fields(eq, rng, count=6):
    s = eq.grid.mapped / np.max(np.abs(eq.grid.mapped))
    fields = []
    for _ in range(count):
        coeffs = rng.normal(size=5)
        profile = sum(c * np.cos((j + 1) * np.pi * s + rng.uniform(0, np.pi)) for j, c in enumerate(coeffs))
        fields.append(eq.density * (1.0 + 0.3 * profile) + 0.01 * rng.normal(size=s.size) * np.sqrt(eq.density))
    return fields


@pytest.fixture(params=["fp_half", "separable_half", "boltzmann_half"])
def operator(request):
    return request.getfixturevalue(request.param)


def test_equilibrium_is_in_the_kernel(operator):
    F = operator.eq.density
    assert np.max(np.abs(operator.apply(F))) <= 1e-12 * np.max(np.abs(operator.matrix())) * np.max(F)


def test_mass_is_conserved(operator, rng):
    w = operator.eq.grid.weights
    for f in _random_fields(operator.eq, rng):
        out = operator.apply(f)
        scale = np.sum(w * (np.abs(operator.matrix()) @ np.abs(f)))
        assert abs(np.sum(w * out)) <= 1e-12 * scale


def test_operator_is_symmetric_and_dissipative(operator, rng):
    eq = operator.eq
    f, g = _random_fields(eq, rng, 2)
    left = mu_inner(eq, operator.apply(f), g)
    right = mu_inner(eq, f, operator.apply(g))
    assert left == pytest.approx(right, rel=1e-10)
    assert mu_inner(eq, operator.apply(f), f) <= 0.0


def test_dissipation_matches_direct_evaluation(operator, rng):
    eq = operator.eq
    for f in _random_fields(eq, rng, 3):
        assert -mu_inner(eq, operator.apply(f), f) == pytest.approx(operator.dissipation(f), rel=1e-10)


def test_dense_matrix_agrees_with_apply(operator, rng):
    f = _random_fields(operator.eq, rng, 1)[0]
    np.testing.assert_allclose(operator.matrix() @ f, operator.apply(f), rtol=1e-10, atol=1e-14)


def test_fields_with_leading_axes(operator, rng):
    stack = np.stack(_random_fields(operator.eq, rng, 3))
    out = operator.apply(stack)
    np.testing.assert_allclose(out[1], operator.apply(stack[1]), rtol=1e-13, atol=1e-16)


def test_shape_mismatch_rejected(fp_half):
    with pytest.raises(ShapeError):
        fp_half.apply(np.ones(fp_half.eq.grid.size + 1))


def test_fokker_planck_needs_matching_beta(eq_half):
    with pytest.raises(ConfigError) as info:
        build_operator(CollisionSpec(kind="fokker_planck", beta=0.5), eq_half)
    assert info.value.field == "collision.beta"


@pytest.mark.parametrize(
    "spec",
    [
        CollisionSpec(kind="scattering", beta=1.0, kernel_family="boltzmann"),
        CollisionSpec(kind="scattering", beta=0.5, gamma=0.7, kernel_family="boltzmann"),
        CollisionSpec(kind="scattering", beta=1.0, kernel_family="gaussian"),
        CollisionSpec(kind="bgk", beta=1.0),
    ],
)
def test_invalid_scattering_specs_rejected(eq_half, spec):
    with pytest.raises(ConfigError):
        build_operator(spec, eq_half)


def test_kernel_bounds(separable_half, boltzmann_half):
    assert separable_half.spec.b_lower == 1.0
    assert boltzmann_half.spec.b_lower >= 2.0 ** (-boltzmann_half.spec.beta) * (1.0 - 1e-12)
    assert np.isfinite(boltzmann_half.spec.b_upper)
    assert separable_half.h1_residual() == 0.0
    assert boltzmann_half.h1_residual() <= 1e-12


def test_separable_collision_frequency_is_exactly_weighted(separable_half):
    lower, upper = nu2_bounds(separable_half)
    theta = moment_unchecked(separable_half.eq, -1.0)
    assert lower == pytest.approx(theta, rel=1e-12)
    assert upper == pytest.approx(theta, rel=1e-12)


def test_boltzmann_collision_frequency_decays_like_weight(boltzmann_half):
    lower, upper = nu2_bounds(boltzmann_half)
    assert 0.0 < lower <= upper < np.inf


def test_nu2_profile_of_the_separable_kernel(eq_half):
    spec = CollisionSpec(kind="scattering", beta=1.0, kernel_family="separable")
    nu, (lower, upper) = nu2_profile(spec, eq_half)
    expected = eq_half.grid.bracket ** (-1.0) * moment_unchecked(eq_half, -1.0)
    np.testing.assert_allclose(nu, expected, rtol=1e-12)
    assert lower == pytest.approx(upper, rel=1e-12)


def test_nu2_profile_of_the_boltzmann_kernel(eq_half, boltzmann_half):
    nu, (lower, upper) = nu2_profile(boltzmann_half.spec, eq_half)
    np.testing.assert_allclose(nu, boltzmann_half.nu, rtol=1e-12)
    assert lower > 0.0
    assert upper / lower < 10.0


def test_nu2_profile_needs_a_scattering_kernel(eq_half):
    with pytest.raises(ConfigError):
        nu2_profile(CollisionSpec(kind="fokker_planck", beta=1.0), eq_half)


def test_functional_forms_match_the_operators(eq_half, fp_half, boltzmann_half, rng):
    f = _random_fields(eq_half, rng, count=1)[0]
    np.testing.assert_allclose(apply_L1(eq_half, f), fp_half.apply(f), rtol=1e-12, atol=1e-15)
    np.testing.assert_allclose(apply_L2(boltzmann_half.spec, eq_half, f), boltzmann_half.apply(f), rtol=1e-12, atol=1e-15)


def test_fokker_planck_drift_constants_at_alpha_half(fp_half):
    drift = drift_constants(fp_half, 2.0)
    assert drift.c_k == pytest.approx(1.5)
    assert drift.a_k == pytest.approx(1.5)
    assert drift.b_k == pytest.approx(0.25)
    assert drift.ell == pytest.approx(1.5)
    assert drift.R_k == pytest.approx(36.0)


@pytest.mark.parametrize("k", [1.0, 2.0, 4.0])
def test_lyapunov_profile_holds_pointwise(operator, k):
    eq = operator.eq
    drift = drift_constants(operator, k)
    inside = (np.abs(eq.grid.nodes) < drift.R_k).astype(float)
    bound = drift.a_k * inside - drift.b_k * eq.grid.bracket ** (-drift.ell)
    profile = drift_profile(operator, k)
    scale = drift.a_k + drift.b_k
    assert np.all(profile <= bound + 1e-10 * scale)


@pytest.mark.parametrize("k", [1.0, 2.0])
def test_lyapunov_inequality_on_random_fields(operator, rng, k):
    eq = operator.eq
    drift = drift_constants(operator, k)
    fields = [np.abs(f) for f in _random_fields(eq, rng)] + [eq.density]
    for f in fields:
        lhs, rhs = lyapunov_sides(operator, drift, f)
        assert lhs <= rhs + 1e-10 * (drift.a_k + drift.b_k) * mu_norm2(eq, f, k)


def test_scattering_micro_coercivity(separable_half, boltzmann_half, rng):
    for op in (separable_half, boltzmann_half):
        eq = op.eq
        constant = micro_constant_scattering(op)
        for f in _random_fields(eq, rng):
            micro = f - eq.grid.integrate(f) * eq.density
            assert -mu_inner(eq, op.apply(f), f) >= constant * mu_norm2(eq, micro, -op.spec.beta) * (1.0 - 1e-10)
