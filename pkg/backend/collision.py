"""Collision operators: weighted Fokker-Planck (L1) and scattering (L2).

Both operators act on the last axis of an array of shape (..., nv) and
are symmetric and non-positive in L^2(d mu) on the grid, with kernel
spanned by F.
"""

from __future__ import annotations

from dataclasses import replace
from typing import Optional, Union

import numpy as np
import scipy.sparse as sp

from backend.equilibria import moment_unchecked, mu_inner
from backend.errors import ConfigError, DomainError, ShapeError
from models import CollisionSpec, DriftConstants, Equilibrium

H1_TOLERANCE = 1e-10
KERNEL_FAMILIES = ("separable", "boltzmann")


def _check_shape(eq: Equilibrium, f: np.ndarray) -> np.ndarray:
    f = np.asarray(f, dtype=float)
    if f.shape[-1] != eq.grid.size:
        raise ShapeError(f"last axis has {f.shape[-1]} entries, the velocity grid has {eq.grid.size}")
    return f


def validate_collision_spec(spec: CollisionSpec, eq: Equilibrium) -> CollisionSpec:
    """Check collision settings against the equilibrium and fill in defaults."""
    if eq.dim != 1:
        raise DomainError("collision operators are discretized for d = 1 only")
    if spec.kind == "fokker_planck":
        expected = 2.0 * (1.0 - eq.alpha)
        if abs(spec.beta - expected) > 1e-12:
            raise ConfigError("collision.beta", f"Fokker-Planck needs beta = 2(1 - alpha) = {expected:g}, got {spec.beta:g}")
        return spec
    if spec.kind != "scattering":
        raise ConfigError("collision.kind", f"unknown operator {spec.kind!r}")
    family = spec.kernel_family or "separable"
    if family not in KERNEL_FAMILIES:
        raise ConfigError("collision.kernel_family", f"expected one of {KERNEL_FAMILIES}, got {family!r}")
    if not spec.beta > 0.0:
        raise ConfigError("collision.beta", f"scattering needs beta > 0, got {spec.beta:g}")
    gamma = spec.beta if spec.gamma is None else spec.gamma
    if gamma > spec.beta:
        raise ConfigError("collision.gamma", f"gamma = {gamma:g} exceeds beta = {spec.beta:g}")
    if gamma >= eq.dim:
        raise ConfigError("collision.gamma", f"gamma = {gamma:g} must be below d = {eq.dim}")
    if family == "boltzmann" and spec.beta >= eq.dim:
        raise ConfigError("collision.beta", f"the Boltzmann kernel needs beta < d, got {spec.beta:g}")
    return replace(spec, gamma=gamma, kernel_family=family)


class FokkerPlanckOperator:
    """Handles the flux-form Fokker-Planck operator L1 f = div(F grad(f/F)).

    Face densities are geometric means of the neighbouring nodes, so the
    discrete operator keeps F in its kernel exactly and stays symmetric in
    the grid L^2(d mu) inner product. Both ends are no-flux.
    """

    kind = "fokker_planck"

    def __init__(self, spec: CollisionSpec, eq: Equilibrium):
        self.spec = spec
        self.eq = eq
        F = eq.density
        self.face_density = np.sqrt(F[:-1] * F[1:])
        self.face_spacing = np.diff(eq.grid.nodes)
        self.face_coeff = self.face_density / self.face_spacing
        self._dense: Optional[np.ndarray] = None

    def apply(self, f: np.ndarray) -> np.ndarray:
        f = _check_shape(self.eq, f)
        g = f / self.eq.density
        flux = self.face_coeff * (g[..., 1:] - g[..., :-1])
        out = np.zeros_like(f)
        out[..., :-1] += flux
        out[..., 1:] -= flux
        return out / self.eq.grid.weights

    def sparse_matrix(self) -> sp.csr_matrix:
        F = self.eq.density
        w = self.eq.grid.weights
        c = self.face_coeff
        upper = c / (w[:-1] * F[1:])
        lower = c / (w[1:] * F[:-1])
        c_left = np.concatenate([[0.0], c])
        c_right = np.concatenate([c, [0.0]])
        diag = -(c_left + c_right) / (w * F)
        return sp.diags([lower, diag, upper], [-1, 0, 1], format="csr")

    def matrix(self) -> np.ndarray:
        if self._dense is None:
            self._dense = self.sparse_matrix().toarray()
        return self._dense

    def dissipation(self, f: np.ndarray) -> float:
        """int |grad(f/F)|^2 F evaluated face by face."""
        f = _check_shape(self.eq, f)
        grad = np.diff(f / self.eq.density, axis=-1) / self.face_spacing
        return float(np.sum(grad * grad * self.face_density * self.face_spacing))

    def h1_residual(self) -> float:
        return 0.0


class ScatteringOperator:
    """Handles the scattering operator L2 f = F int b f' dv' - f nu2.

    The separable kernel b = <v>^{-beta}<v'>^{-beta} is applied matrix-free;
    the Boltzmann-type kernel |v - v'|^{-beta} is stored densely, with the
    singular diagonal replaced by its cell average.
    """

    kind = "scattering"

    def __init__(self, spec: CollisionSpec, eq: Equilibrium):
        self.eq = eq
        w = eq.grid.weights
        F = eq.density
        v = eq.grid.nodes
        self.separable = spec.kernel_family == "separable"
        if self.separable:
            self.factor = eq.grid.bracket ** (-spec.beta)
            self.kernel = np.outer(self.factor, self.factor)
            self.nu = self.factor * float(np.sum(w * self.factor * F))
        else:
            gap = np.abs(v[:, None] - v[None, :])
            np.fill_diagonal(gap, 1.0)
            self.kernel = gap ** (-spec.beta)
            np.fill_diagonal(self.kernel, (0.5 * w) ** (-spec.beta) / (1.0 - spec.beta))
            self.nu = self.kernel @ (w * F)
        self.spec = replace(spec, **self._fit_bounds(spec))
        residual = self.h1_residual()
        if residual > H1_TOLERANCE:
            raise ConfigError("collision.kernel_family", f"kernel violates mass conservation (residual {residual:.3e})")
        self._dense: Optional[np.ndarray] = None

    def _fit_bounds(self, spec: CollisionSpec) -> dict:
        v = self.eq.grid.nodes
        bv = self.eq.grid.bracket
        gap = np.abs(v[:, None] - v[None, :])
        off = ~np.eye(v.size, dtype=bool)
        lower_ref = np.outer(bv, bv) ** (-spec.beta)
        upper_ref = np.minimum(gap[off] ** (-spec.beta), gap[off] ** (-spec.gamma))
        b_lower = 1.0 if self.separable else float(np.min(self.kernel[off] / lower_ref[off]))
        b_upper = float(np.max(self.kernel[off] / upper_ref))
        return {"b_lower": b_lower, "b_upper": b_upper}

    def apply(self, f: np.ndarray) -> np.ndarray:
        f = _check_shape(self.eq, f)
        w = self.eq.grid.weights
        if self.separable:
            gain = (f @ (w * self.factor))[..., None] * self.factor
        else:
            gain = (f * w) @ self.kernel.T
        return self.eq.density * gain - self.nu * f

    def matrix(self) -> np.ndarray:
        if self._dense is None:
            w = self.eq.grid.weights
            self._dense = self.eq.density[:, None] * self.kernel * w[None, :] - np.diag(self.nu)
        return self._dense

    def dissipation(self, f: np.ndarray) -> float:
        """Double-integral form 1/2 sum w w' b (f' F - f F')^2 / (F F')."""
        f = _check_shape(self.eq, f)
        w = self.eq.grid.weights
        F = self.eq.density
        rows = f.reshape(-1, f.shape[-1])
        total = 0.0
        for row in rows:
            diff = row[None, :] * F[:, None] - row[:, None] * F[None, :]
            total += 0.5 * float(np.sum(np.outer(w, w) * self.kernel * diff * diff / np.outer(F, F)))
        return total

    def h1_residual(self) -> float:
        """max_v |int (b(v,v') - b(v',v)) F' dv'|."""
        w = self.eq.grid.weights
        return float(np.max(np.abs((self.kernel - self.kernel.T) @ (w * self.eq.density))))


CollisionOperator = Union[FokkerPlanckOperator, ScatteringOperator]


def build_operator(spec: CollisionSpec, eq: Equilibrium) -> CollisionOperator:
    spec = validate_collision_spec(spec, eq)
    if spec.kind == "fokker_planck":
        return FokkerPlanckOperator(spec, eq)
    return ScatteringOperator(spec, eq)


def apply_L1(eq: Equilibrium, f: np.ndarray) -> np.ndarray:
    spec = CollisionSpec(kind="fokker_planck", beta=2.0 * (1.0 - eq.alpha))
    return FokkerPlanckOperator(validate_collision_spec(spec, eq), eq).apply(f)


def apply_L2(spec: CollisionSpec, eq: Equilibrium, f: np.ndarray) -> np.ndarray:
    return build_operator(spec, eq).apply(f)


def nu2_bounds(op: ScatteringOperator) -> tuple[float, float]:
    """Grid fit of nu_lower <v>^{-beta} <= nu2 <= nu_upper <v>^{-beta}."""
    scaled = op.nu * op.eq.grid.bracket**op.spec.beta
    return float(np.min(scaled)), float(np.max(scaled))


def nu2_profile(spec: CollisionSpec, eq: Equilibrium) -> tuple[np.ndarray, tuple[float, float]]:
    """nu2(v) = int b(v, v') F' dv' on the grid, with its tightest <v>^{-beta} bounds."""
    if spec.kind != "scattering":
        raise ConfigError("collision.kind", f"nu2 is defined for scattering kernels, got {spec.kind!r}")
    op = build_operator(spec, eq)
    return op.nu.copy(), nu2_bounds(op)


def drift_constants(op: CollisionOperator, k: float) -> DriftConstants:
    """Constants (a_k, b_k, R_k, ell) of the weighted Lyapunov inequality."""
    if k <= 0.0:
        raise DomainError(f"the Lyapunov inequality needs k > 0, got {k}")
    eq = op.eq
    if op.kind == "fokker_planck":
        alpha, d = eq.alpha, eq.dim
        c_k = abs(k - 2.0) + abs(d + k - 2.0) + alpha
        return DriftConstants(
            k=k,
            a_k=c_k * k / 2.0,
            b_k=alpha * k / 4.0,
            R_k=(2.0 * c_k / alpha) ** (1.0 / alpha),
            ell=2.0 - alpha,
            c_k=c_k,
        )
    nu_lower, _ = nu2_bounds(op)
    w = eq.grid.weights
    bv = eq.grid.bracket
    gain = op.kernel.T @ (w * bv**k * eq.density)
    a_k = 0.5 * float(np.max(bv**op.spec.beta * gain))
    return DriftConstants(
        k=k,
        a_k=a_k,
        b_k=nu_lower / 4.0,
        R_k=(4.0 * a_k / nu_lower) ** (1.0 / k),
        ell=op.spec.beta,
    )


def drift_profile(op: CollisionOperator, k: float) -> np.ndarray:
    """P with <L f, f <v>^k>_mu <= sum_v w (f^2/F) <v>^k P for every f."""
    eq = op.eq
    m = eq.grid.bracket**k
    if op.kind == "fokker_planck":
        return op.apply(m * eq.density) / (2.0 * eq.density * m)
    w = eq.grid.weights
    gain = op.kernel.T @ (w * m * eq.density)
    return 0.5 * gain / m - 0.5 * op.nu


def lyapunov_sides(op: CollisionOperator, drift: DriftConstants, f: np.ndarray) -> tuple[float, float]:
    """Left and right sides of <L f, f <v>^k>_mu <= int (a 1_{|v|<R} - b <v>^{-ell}) f^2 <v>^k d mu."""
    eq = op.eq
    bv = eq.grid.bracket
    lhs = mu_inner(eq, op.apply(f), f, drift.k)
    inside = (np.abs(eq.grid.nodes) < drift.R_k).astype(float)
    profile = drift.a_k * inside - drift.b_k * bv ** (-drift.ell)
    rhs = mu_inner(eq, f, f * profile, drift.k)
    return lhs, rhs


def micro_constant_scattering(op: ScatteringOperator) -> float:
    """b_lower / (2 Theta_beta): coercivity of L2 on the micro part in the <v>^{-beta} norm."""
    return op.spec.b_lower / (2.0 * moment_unchecked(op.eq, op.spec.beta))
