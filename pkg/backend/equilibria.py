"""Sub-exponential equilibria, velocity grids and weighted moments."""

from __future__ import annotations

from math import gamma, pi
from typing import Iterable, Optional

import numpy as np
from scipy.optimize import brentq

from backend.errors import DomainError, TruncationError
from models import Equilibrium, MomentTable, VelocityGrid, WeightedMeasure

TAIL_TOLERANCE = 1e-12
NORMALIZATION_TOLERANCE = 1e-10


def bracket(v) -> np.ndarray:
    """Japanese bracket <v> = sqrt(1 + |v|^2)."""
    return np.sqrt(1.0 + np.asarray(v, dtype=float) ** 2)


def unit_ball_volume(dim: int) -> float:
    return pi ** (dim / 2.0) / gamma(dim / 2.0 + 1.0)


def sphere_area(dim: int) -> float:
    """Surface measure of S^{d-1}; 2 for d = 1."""
    return 2.0 * pi ** (dim / 2.0) / gamma(dim / 2.0)


def _check_alpha(alpha: float) -> None:
    if not np.isfinite(alpha) or alpha <= 0.0 or alpha > 2.0:
        raise DomainError(f"alpha must lie in (0, 2], got {alpha}")


def _check_dim(dim: int) -> None:
    if int(dim) != dim or dim < 1:
        raise DomainError(f"dimension must be a positive integer, got {dim}")


def potential_derivatives(alpha: float, r, dim: int = 1):
    """Closed-form radial derivatives of <r>^alpha.

    Returns (phi', phi'', Laplacian). The Laplacian is finite at r = 0,
    where it equals d * alpha.
    """
    r = np.abs(np.asarray(r, dtype=float))
    br = np.sqrt(1.0 + r * r)
    d1 = alpha * r * br ** (alpha - 2.0)
    d2 = alpha * br ** (alpha - 4.0) * (1.0 + (alpha - 1.0) * r * r)
    # phi'/r written without the division so r = 0 is regular
    lap = d2 + (dim - 1) * alpha * br ** (alpha - 2.0)
    return d1, d2, lap


def schrodinger_potential(alpha: float, v, dim: int = 1) -> np.ndarray:
    """Phi = |grad phi|^2 / 4 - (Laplacian phi) / 2."""
    d1, _, lap = potential_derivatives(alpha, v, dim)
    return 0.25 * d1 * d1 - 0.5 * lap


def collision_frequency_nu1(eq: Equilibrium, v) -> np.ndarray:
    """Fokker-Planck collision frequency nu1(v); decays like (alpha^2/4)|v|^{-beta}."""
    return schrodinger_potential(eq.alpha, v, eq.dim)


def velocity_cutoff(alpha: float, k_max: float, tol: float = TAIL_TOLERANCE, dim: int = 1) -> float:
    """Smallest V with F(V) <V>^k_max <= tol for the normalized F.

    The normalization is bounded by 1/Z <= e^{2^{alpha/2}} / |B_1|, so the
    cutoff holds before F is known.
    """
    _check_alpha(alpha)
    if tol <= 0.0:
        raise DomainError(f"tail tolerance must be positive, got {tol}")
    k_max = max(float(k_max), 0.0)
    log_tol = np.log(tol * unit_ball_volume(dim) * np.exp(-(2.0 ** (alpha / 2.0))))

    def excess(x: float) -> float:
        return k_max * np.log(x) - x**alpha - log_tol

    x_lo = max(1.0, (k_max / alpha) ** (1.0 / alpha)) if k_max > 0 else 1.0
    if excess(x_lo) <= 0.0:
        return float(max(np.sqrt(x_lo * x_lo - 1.0), 1.0))
    x_hi = 2.0 * x_lo
    while excess(x_hi) > 0.0:
        x_hi *= 2.0
    x = brentq(excess, x_lo, x_hi, xtol=1e-12, rtol=1e-14)
    # round up so the inequality holds after the brackets are recomputed
    return float(np.sqrt(x * x - 1.0) * (1.0 + 1e-9))


def build_velocity_grid(v_max: float, n: int, dim: int = 1, scale: float = 1.0) -> VelocityGrid:
    """Stretched grid v = scale * sinh(s) with trapezoid weights in s.

    For d = 1 the grid has an odd number of nodes, is mirror symmetric and
    contains v = 0. For d >= 2 it is a radial half-line grid.
    """
    _check_dim(dim)
    if v_max <= 0.0 or scale <= 0.0:
        raise DomainError("v_max and scale must be positive")
    s_max = float(np.arcsinh(v_max / scale))
    if dim == 1:
        if n < 3 or n % 2 == 0:
            raise DomainError(f"one-dimensional velocity grids need an odd size >= 3, got {n}")
        m = (n - 1) // 2
        ds = s_max / m
        s_pos = ds * np.arange(1, m + 1)
        v_pos = scale * np.sinh(s_pos)
        v_pos[-1] = v_max
        w_pos = ds * scale * np.cosh(s_pos)
        w_pos[-1] *= 0.5
        nodes = np.concatenate([-v_pos[::-1], [0.0], v_pos])
        weights = np.concatenate([w_pos[::-1], [ds * scale], w_pos])
        mapped = np.concatenate([-s_pos[::-1], [0.0], s_pos])
    else:
        if n < 3:
            raise DomainError(f"radial grids need at least 3 nodes, got {n}")
        mapped = np.linspace(0.0, s_max, n)
        ds = mapped[1] - mapped[0]
        nodes = scale * np.sinh(mapped)
        nodes[-1] = v_max
        trap = np.full(n, ds)
        trap[0] *= 0.5
        trap[-1] *= 0.5
        weights = trap * scale * np.cosh(mapped) * sphere_area(dim) * nodes ** (dim - 1)
    return VelocityGrid(nodes=nodes, weights=weights, mapped=mapped, scale=scale, v_max=float(v_max), dim=dim)


def build_equilibrium(
    alpha: float,
    dim: int = 1,
    vgrid: Optional[VelocityGrid] = None,
    *,
    k_max: float = 2.0,
    n: int = 401,
    scale: float = 1.0,
    tail_tol: float = TAIL_TOLERANCE,
) -> Equilibrium:
    """Normalized F = C_alpha exp(-<v>^alpha) on a grid covering moments up to k_max."""
    _check_alpha(alpha)
    _check_dim(dim)
    if vgrid is None:
        v_max = velocity_cutoff(alpha, k_max, tail_tol, dim)
        vgrid = build_velocity_grid(v_max, n, dim, scale)
    elif vgrid.dim != dim:
        raise DomainError(f"grid dimension {vgrid.dim} does not match d = {dim}")

    shape = np.exp(-vgrid.bracket**alpha)
    z = float(vgrid.integrate(shape))
    if not np.isfinite(z) or z <= 0.0:
        raise DomainError(f"equilibrium normalization failed (Z = {z})")
    c_alpha = 1.0 / z
    density = c_alpha * shape

    mass = float(vgrid.integrate(density))
    if abs(mass - 1.0) > NORMALIZATION_TOLERANCE:
        raise DomainError(f"equilibrium mass {mass!r} is not 1")

    eq = Equilibrium(
        alpha=float(alpha),
        dim=int(dim),
        c_alpha=c_alpha,
        grid=vgrid,
        density=density,
        k_max=float(k_max),
        tail_tol=float(tail_tol),
    )
    _check_tail(eq, k_max)
    return eq


def tail_indicator(eq: Equilibrium, k: float) -> float:
    """F(V) <V>^k at the grid edge."""
    edge = np.sqrt(1.0 + eq.grid.v_max**2)
    return float(eq.density_at(eq.grid.v_max) * edge**k)


def _check_tail(eq: Equilibrium, k: float) -> None:
    indicator = tail_indicator(eq, k)
    if indicator > eq.tail_tol * (1.0 + 1e-9):
        raise TruncationError(
            f"cutoff V = {eq.grid.v_max:.6g} leaves F(V)<V>^{k:g} = {indicator:.3e} "
            f"above the tolerance {eq.tail_tol:.1e}"
        )


def temperature(eq: Equilibrium) -> float:
    """Theta = (1/d) int |v|^2 F."""
    return float(eq.grid.integrate(eq.grid.nodes**2 * eq.density)) / eq.dim


def moments(eq: Equilibrium, k_list: Iterable[float]) -> MomentTable:
    """Theta and Theta_k = int <v>^k F for each k, refusing unresolved orders."""
    table = MomentTable(theta=temperature(eq))
    bracket_v = eq.grid.bracket
    for k in k_list:
        k = float(k)
        _check_tail(eq, k)
        table.theta_k[k] = float(eq.grid.integrate(bracket_v**k * eq.density))
    return table


def moment_unchecked(eq: Equilibrium, k: float) -> float:
    """Grid quadrature of <v>^k F without the tail check (discrete identities only)."""
    return float(eq.grid.integrate(eq.grid.bracket**k * eq.density))


def weighted_measure(eq: Equilibrium, kind: str, k: float = 0.0, beta: Optional[float] = None) -> WeightedMeasure:
    """Quadrature weights of <v>^k d(mu), <v>^k d(xi) or <v>^k d(nu)."""
    w = eq.grid.weights
    bv = eq.grid.bracket
    if kind == "mu":
        return WeightedMeasure(kind, k, w * bv**k / eq.density)
    if kind == "xi":
        return WeightedMeasure(kind, k, w * bv**k * eq.density)
    if kind == "nu":
        if beta is None:
            raise DomainError("the nu measure needs beta")
        c_ab = float(eq.grid.integrate(bv ** (-beta) * eq.density))
        return WeightedMeasure(kind, k, w * bv ** (k - beta) * eq.density / c_ab, normalization=c_ab)
    raise DomainError(f"unknown measure kind {kind!r}")


def mu_inner(eq: Equilibrium, f: np.ndarray, g: np.ndarray, k: float = 0.0) -> float:
    """Sum of the L^2(<v>^k d mu) inner products over every leading index."""
    weights = eq.grid.weights * eq.grid.bracket**k / eq.density
    return float(np.sum((np.asarray(f) * np.asarray(g)) @ weights))


def mu_norm2(eq: Equilibrium, f: np.ndarray, k: float = 0.0) -> float:
    return mu_inner(eq, f, f, k)
