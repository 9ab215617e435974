"""Initial data and random test fields on the torus times the velocity grid."""

from __future__ import annotations

import numpy as np

from backend.transport import spatial_grid
from models import DistributionField, Equilibrium, InitialConfig


def tail_profile(eq: Equilibrium, k: float, excess: float) -> np.ndarray:
    """Unit-mass velocity profile sqrt(F) <v>^{-q}, q = (k + 1)/2 + excess.

    It has a finite L^2(<v>^k d mu) norm only because excess > 0, so the
    velocity tail decays no faster than the k-moment allows.
    """
    q = 0.5 * (k + 1.0) + excess
    profile = np.sqrt(eq.density) * eq.grid.bracket ** (-q)
    return profile / eq.grid.integrate(profile)


def periodic_bump(x_extent: float, nx: int, width: float) -> np.ndarray:
    """Gaussian of standard deviation `width` centred on the torus, unit integral."""
    x = spatial_grid(x_extent, nx)
    centre = 0.5 * x_extent
    images = sum(np.exp(-0.5 * ((x - centre + m * x_extent) / width) ** 2) for m in (-2, -1, 0, 1, 2))
    return images / (np.sum(images) * x_extent / nx)


def bump_initial_field(eq: Equilibrium, x_extent: float, nx: int, k: float, cfg: InitialConfig, mass: float = 1.0) -> DistributionField:
    """Macroscopic density bump carried by F plus an x-uniform heavy velocity tail."""
    bump = periodic_bump(x_extent, nx, cfg.bump_width * x_extent)
    tail = tail_profile(eq, k, cfg.tail_excess)
    values = (1.0 - cfg.tail_weight) * np.outer(bump, eq.density) + cfg.tail_weight / x_extent * np.tile(tail, (nx, 1))
    return DistributionField(mass * values, x_extent)


def total_mass(eq: Equilibrium, field: DistributionField) -> float:
    return float(np.sum(eq.grid.integrate(field.values)) * field.dx)


def global_equilibrium(eq: Equilibrium, field: DistributionField) -> np.ndarray:
    """Stationary state <rho>_x F with the mass of `field`."""
    density = total_mass(eq, field) / field.x_extent
    return np.tile(density * eq.density, (field.nx, 1))


def fluctuation(eq: Equilibrium, field: DistributionField) -> DistributionField:
    return DistributionField(field.values - global_equilibrium(eq, field), field.x_extent, field.time)


def random_field(eq: Equilibrium, x_extent: float, nx: int, rng: np.random.Generator, modes: int = 3, rough: float = 0.05) -> DistributionField:
    """Smooth random field in x and v plus a small node-wise rough part."""
    x = spatial_grid(x_extent, nx)
    s = eq.grid.mapped / np.max(np.abs(eq.grid.mapped))
    sqrt_f = np.sqrt(eq.density)
    values = np.zeros((nx, eq.grid.size))
    for m in range(modes + 1):
        phase = rng.uniform(0.0, 2.0 * np.pi)
        spatial = np.cos(2.0 * np.pi * m * x / x_extent + phase)
        coeffs = rng.normal(size=4)
        velocity = sum(c * np.cos(j * np.pi * s + rng.uniform(0.0, np.pi)) for j, c in enumerate(coeffs))
        # mix F-like and sqrt(F)-like velocity shapes so both macro and micro parts are present
        values += np.outer(spatial, eq.density * velocity + rng.normal() * sqrt_f * velocity * eq.grid.bracket ** (-1.0))
    values += rough * rng.normal(size=values.shape) * sqrt_f * eq.grid.bracket ** (-1.0)
    return DistributionField(values, x_extent)
