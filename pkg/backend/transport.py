"""Free transport on the periodic torus and split-step time integration."""

from __future__ import annotations

from typing import Callable, Optional

import numpy as np
from scipy import fft
from scipy.linalg import lu_factor, lu_solve
from tqdm import tqdm

from backend.collision import CollisionOperator
from backend.errors import ConfigError, NumericError, SolverError
from models import DistributionField, Equilibrium, SolverConfig

SPLITTINGS = ("strang", "lie")
COLLISION_SOLVERS = ("implicit_euler", "crank_nicolson")
RESIDUAL_TOLERANCE = 1e-10
WIDTH_FACTOR = 6.0


def spatial_grid(x_extent: float, nx: int) -> np.ndarray:
    return np.arange(nx) * (x_extent / nx)


def wavenumbers(x_extent: float, nx: int) -> np.ndarray:
    """Non-negative angular wavenumbers of the real FFT."""
    return 2.0 * np.pi * fft.rfftfreq(nx, d=x_extent / nx)


def check_spatial_size(nx: int) -> None:
    # an even grid carries a Nyquist mode whose phase shift cannot stay real
    if nx < 3 or nx % 2 == 0:
        raise ConfigError("grid.nx", f"the torus needs an odd number of points >= 3, got {nx}")


def check_solver_config(cfg: SolverConfig) -> None:
    if not cfg.dt > 0.0:
        raise ConfigError("solver.dt", f"time step must be positive, got {cfg.dt}")
    if not cfg.t_end >= cfg.dt:
        raise ConfigError("solver.t_end", f"end time {cfg.t_end} is shorter than one step")
    if abs(cfg.n_steps * cfg.dt - cfg.t_end) > 1e-9 * cfg.t_end:
        raise ConfigError("solver.t_end", f"end time {cfg.t_end} is not a multiple of dt = {cfg.dt}")
    if cfg.splitting not in SPLITTINGS:
        raise ConfigError("solver.splitting", f"expected one of {SPLITTINGS}, got {cfg.splitting!r}")
    if cfg.collision_solver not in COLLISION_SOLVERS:
        raise ConfigError("solver.collision_solver", f"expected one of {COLLISION_SOLVERS}, got {cfg.collision_solver!r}")
    if cfg.output_every < 1:
        raise ConfigError("outputs.every", f"output cadence must be >= 1, got {cfg.output_every}")


def advect(field: DistributionField, velocities: np.ndarray, dt: float) -> DistributionField:
    """Exact solution of f_t + v f_x = 0 over dt by a Fourier phase shift."""
    nx = field.nx
    xi = wavenumbers(field.x_extent, nx)
    spectrum = fft.rfft(field.values, axis=0)
    spectrum *= np.exp(-1j * np.outer(xi, velocities) * dt)
    values = fft.irfft(spectrum, n=nx, axis=0)
    return DistributionField(values, field.x_extent, field.time)


class CollisionStepper:
    """Handles implicit collision sub-steps with cached LU factorizations.

    Implicit Euler solves (I - dt K) f1 = f0; Crank-Nicolson solves
    (I - dt/2 K) f1 = (I + dt/2 K) f0. K is the collision matrix minus an
    optional absorption profile.
    """

    def __init__(self, operator: CollisionOperator, scheme: str = "implicit_euler", absorption: Optional[np.ndarray] = None):
        if scheme not in COLLISION_SOLVERS:
            raise ConfigError("solver.collision_solver", f"expected one of {COLLISION_SOLVERS}, got {scheme!r}")
        self.scheme = scheme
        matrix = operator.matrix()
        if absorption is not None:
            matrix = matrix - np.diag(absorption)
        self.matrix = matrix
        self._factors: dict[float, tuple] = {}

    def _factor(self, dt: float):
        key = float(dt)
        if key not in self._factors:
            theta = 1.0 if self.scheme == "implicit_euler" else 0.5
            lhs = np.eye(self.matrix.shape[0]) - theta * dt * self.matrix
            try:
                self._factors[key] = (lhs, lu_factor(lhs, check_finite=True))
            except (ValueError, np.linalg.LinAlgError) as exc:
                raise SolverError(f"collision matrix factorization failed for dt = {dt:g}") from exc
        return self._factors[key]

    def step(self, values: np.ndarray, dt: float) -> np.ndarray:
        lhs, factors = self._factor(dt)
        rhs = values.T
        if self.scheme == "crank_nicolson":
            rhs = rhs + 0.5 * dt * (self.matrix @ rhs)
        out = lu_solve(factors, rhs)
        residual = np.max(np.abs(lhs @ out - rhs))
        scale = np.max(np.abs(lhs)) * np.max(np.abs(out)) + np.max(np.abs(rhs))
        if not np.isfinite(residual) or residual > RESIDUAL_TOLERANCE * max(scale, 1e-300):
            raise SolverError("collision step left a large residual", residual=float(residual))
        return out.T


class KineticSolver:
    """Handles split-step integration of f_t + v f_x = L f on the torus."""

    def __init__(
        self,
        eq: Equilibrium,
        operator: CollisionOperator,
        x_extent: float,
        nx: int,
        config: SolverConfig,
        absorption: Optional[np.ndarray] = None,
    ):
        check_spatial_size(nx)
        check_solver_config(config)
        if not x_extent > 0.0:
            raise ConfigError("grid.x_extent", f"torus width must be positive, got {x_extent}")
        self.eq = eq
        self.operator = operator
        self.x_extent = float(x_extent)
        self.nx = int(nx)
        self.config = config
        self.stepper = CollisionStepper(operator, config.collision_solver, absorption)

    def advect(self, field: DistributionField, dt: float) -> DistributionField:
        return advect(field, self.eq.grid.nodes, dt)

    def collide(self, field: DistributionField, dt: float) -> DistributionField:
        return DistributionField(self.stepper.step(field.values, dt), field.x_extent, field.time)

    def step(self, field: DistributionField) -> DistributionField:
        dt = self.config.dt
        if self.config.splitting == "strang":
            out = self.advect(self.collide(self.advect(field, 0.5 * dt), dt), 0.5 * dt)
        else:
            out = self.collide(self.advect(field, dt), dt)
        out.time = field.time + dt
        return out

    def run(
        self,
        f_init: DistributionField,
        observer: Optional[Callable[[DistributionField], dict]] = None,
        progress: bool = False,
    ) -> tuple[DistributionField, list[dict]]:
        """Integrate to t_end, recording observer output every output_every steps."""
        if f_init.values.shape != (self.nx, self.eq.grid.size):
            raise ConfigError("initial", f"initial field has shape {f_init.values.shape}")
        field = f_init.copy()
        records: list[dict] = []
        if observer is not None:
            records.append(observer(field))
        n_steps = self.config.n_steps
        for n in tqdm(range(1, n_steps + 1), disable=not progress, desc="[transport]", leave=False):
            field = self.step(field)
            field.time = n * self.config.dt
            if not np.all(np.isfinite(field.values)):
                raise NumericError(f"non-finite values at t = {field.time:g}")
            if observer is not None and (n % self.config.output_every == 0 or n == n_steps):
                records.append(observer(field))
        return field, records


def torus_extent(theta: float, t_end: float) -> float:
    """Smallest torus width with sqrt(2 Theta t_end) < L_x / 6."""
    return WIDTH_FACTOR * np.sqrt(2.0 * theta * t_end) * (1.0 + 1e-6)


def check_torus_extent(x_extent: float, theta: float, t_end: float) -> None:
    width = np.sqrt(2.0 * theta * t_end)
    if not width < x_extent / WIDTH_FACTOR:
        raise ConfigError(
            "grid.x_extent",
            f"heat-kernel width {width:.4g} at t_end is not below L_x / {WIDTH_FACTOR:g} = {x_extent / WIDTH_FACTOR:.4g}",
        )


def autocorrelation_width(rho: np.ndarray, x_extent: float) -> float:
    """Gaussian width matching the two lowest Fourier modes of the density autocorrelation."""
    power = np.abs(fft.rfft(rho - np.mean(rho))) ** 2
    if power.size < 3 or power[1] <= 0.0:
        return np.inf
    ratio = power[2] / power[1]
    if ratio <= 0.0:
        return np.inf
    k1 = 2.0 * np.pi / x_extent
    # |rho_m|^2 ~ exp(-(m k1 sigma)^2)
    sigma2 = -np.log(ratio) / (3.0 * k1 * k1)
    return float(np.sqrt(sigma2)) if sigma2 > 0.0 else 0.0


def wrap_time(times: np.ndarray, widths: np.ndarray, x_extent: float, theta: float) -> float:
    """Earliest time the density or the heat kernel reaches L_x / 6."""
    limit = x_extent / WIDTH_FACTOR
    t_heat = limit**2 / (2.0 * theta)
    hits = np.nonzero(np.asarray(widths) >= limit)[0]
    t_auto = float(np.asarray(times)[hits[0]]) if hits.size else np.inf
    return min(t_heat, t_auto)
