"""Experiment files: sectioned key = value text with environment overrides.

Every key may be overridden from the environment (or a .env file) as
HYPO_<SECTION>_<KEY>, e.g. HYPO_SOLVER_DT=0.005.
"""

from __future__ import annotations

import configparser
import os
from dataclasses import asdict, replace
from typing import Mapping, Optional

from dotenv import load_dotenv

from backend.errors import ConfigError
from backend.transport import COLLISION_SOLVERS, SPLITTINGS
from models import (
    CollisionSpec,
    ExperimentConfig,
    GridConfig,
    InitialConfig,
    OutputConfig,
    SolverConfig,
    SpectralConfig,
    SweepConfig,
)

SECTIONS = ("experiment", "equilibrium", "collision", "grid", "solver", "initial", "spectral", "sweep", "outputs")
MODES = ("kinetic", "homogeneous", "spectral", "rates-sweep", "audit")
SWEEP_AXES = ("k", "alpha")
ENV_PREFIX = "HYPO_"
_TRUE = ("true", "yes", "on", "1")
_FALSE = ("false", "no", "off", "0")


class ConfigReader:
    """Handles typed access to one parsed experiment file."""

    def __init__(self, parser: configparser.ConfigParser):
        self.parser = parser

    def _raw(self, section: str, key: str) -> Optional[str]:
        if not self.parser.has_option(section, key):
            return None
        value = self.parser.get(section, key).strip()
        return value if value else None

    def text(self, section: str, key: str, default: Optional[str] = None) -> Optional[str]:
        raw = self._raw(section, key)
        return default if raw is None else raw

    def number(self, section: str, key: str, default: Optional[float] = None) -> Optional[float]:
        raw = self._raw(section, key)
        if raw is None:
            return default
        try:
            return float(raw)
        except ValueError:
            raise ConfigError(f"{section}.{key}", f"expected a decimal number, got {raw!r}") from None

    def integer(self, section: str, key: str, default: int) -> int:
        raw = self._raw(section, key)
        if raw is None:
            return default
        try:
            return int(raw)
        except ValueError:
            raise ConfigError(f"{section}.{key}", f"expected an integer, got {raw!r}") from None

    def flag(self, section: str, key: str, default: bool) -> bool:
        raw = self._raw(section, key)
        if raw is None:
            return default
        if raw.lower() in _TRUE:
            return True
        if raw.lower() in _FALSE:
            return False
        raise ConfigError(f"{section}.{key}", f"expected true or false, got {raw!r}")

    def numbers(self, section: str, key: str, default: tuple[float, ...]) -> tuple[float, ...]:
        raw = self._raw(section, key)
        if raw is None:
            return default
        try:
            return tuple(float(item) for item in raw.split(",") if item.strip())
        except ValueError:
            raise ConfigError(f"{section}.{key}", f"expected comma-separated numbers, got {raw!r}") from None


def read_config(path: str) -> configparser.ConfigParser:
    """Parse an experiment file; unknown sections are rejected."""
    if not os.path.isfile(path):
        raise FileNotFoundError(f"config file not found: {path}")
    parser = configparser.ConfigParser(interpolation=None)
    try:
        with open(path, "r", encoding="utf-8") as handle:
            parser.read_file(handle)
    except configparser.Error as exc:
        raise ConfigError("file", f"cannot parse {path}: {exc}") from exc
    for section in parser.sections():
        if section not in SECTIONS:
            raise ConfigError(section, f"unknown section, expected one of {SECTIONS}")
    return parser


def apply_env_overrides(parser: configparser.ConfigParser, environ: Optional[Mapping[str, str]] = None) -> list[str]:
    """Copy HYPO_<SECTION>_<KEY> variables into the parser; returns the keys that changed."""
    if environ is None:
        load_dotenv()
        environ = os.environ
    applied = []
    for name, value in sorted(environ.items()):
        if not name.startswith(ENV_PREFIX):
            continue
        rest = name[len(ENV_PREFIX) :].lower()
        section = next((s for s in SECTIONS if rest.startswith(s + "_")), None)
        if section is None:
            continue
        key = rest[len(section) + 1 :]
        if not parser.has_section(section):
            parser.add_section(section)
        parser.set(section, key, value)
        applied.append(f"{section}.{key}")
    return applied


def build_config(reader: ConfigReader) -> ExperimentConfig:
    """Type-convert every field; validate() checks ranges afterwards."""
    alpha = reader.number("equilibrium", "alpha")
    if alpha is None:
        raise ConfigError("equilibrium.alpha", "alpha is required")
    kind = reader.text("collision", "kind", "fokker_planck")
    if kind not in ("fokker_planck", "scattering"):
        raise ConfigError("collision.kind", f"expected fokker_planck or scattering, got {kind!r}")
    default_beta = 2.0 * (1.0 - alpha) if kind == "fokker_planck" else None
    beta = reader.number("collision", "beta", default_beta)
    if beta is None:
        raise ConfigError("collision.beta", "beta is required for the scattering operator")
    collision = CollisionSpec(
        kind=kind,
        beta=beta,
        gamma=reader.number("collision", "gamma"),
        kernel_family=reader.text("collision", "kernel_family"),
        b_lower=reader.number("collision", "b_lower"),
        b_upper=reader.number("collision", "b_upper"),
    )
    grid = GridConfig(
        nx=reader.integer("grid", "nx", GridConfig.nx),
        nv=reader.integer("grid", "nv", GridConfig.nv),
        v_max=reader.number("grid", "v_max"),
        x_extent=reader.number("grid", "x_extent"),
        v_scale=reader.number("grid", "v_scale", GridConfig.v_scale),
    )
    outputs = OutputConfig(
        directory=reader.text("outputs", "directory", OutputConfig.directory),
        every=reader.integer("outputs", "every", OutputConfig.every),
        progress=reader.flag("outputs", "progress", OutputConfig.progress),
    )
    solver = SolverConfig(
        dt=reader.number("solver", "dt", 0.01),
        t_end=reader.number("solver", "t_end", 1.0),
        splitting=reader.text("solver", "splitting", "strang"),
        collision_solver=reader.text("solver", "collision_solver", "implicit_euler"),
        output_every=outputs.every,
    )
    return ExperimentConfig(
        mode=reader.text("experiment", "mode", "kinetic"),
        alpha=alpha,
        collision=collision,
        k=reader.number("equilibrium", "k", 2.0),
        dim=reader.integer("equilibrium", "dim", 1),
        seed=reader.integer("experiment", "seed", 0),
        grid=grid,
        solver=solver,
        initial=InitialConfig(
            bump_width=reader.number("initial", "bump_width", InitialConfig.bump_width),
            tail_weight=reader.number("initial", "tail_weight", InitialConfig.tail_weight),
            tail_excess=reader.number("initial", "tail_excess", InitialConfig.tail_excess),
        ),
        spectral=SpectralConfig(
            domain_R=reader.number("spectral", "domain_r", SpectralConfig.domain_R),
            resolution=reader.integer("spectral", "resolution", SpectralConfig.resolution),
            scale=reader.number("spectral", "scale", SpectralConfig.scale),
        ),
        sweep=SweepConfig(
            axis=reader.text("sweep", "axis", SweepConfig.axis),
            values=reader.numbers("sweep", "values", SweepConfig.values),
            workers=reader.integer("sweep", "workers", SweepConfig.workers),
        ),
        outputs=outputs,
        tail_tol=reader.number("equilibrium", "tail_tol", 1e-12),
        audit_samples=reader.integer("experiment", "audit_samples", 32),
    )


def _check_collision(cfg: ExperimentConfig, alpha: float, beta: float) -> None:
    spec = cfg.collision
    if spec.kind == "fokker_planck":
        expected = 2.0 * (1.0 - alpha)
        if abs(beta - expected) > 1e-12:
            raise ConfigError("collision.beta", f"Fokker-Planck needs beta = 2(1 - alpha) = {expected:g}, got {beta:g}")
    elif spec.kind != "scattering":
        raise ConfigError("collision.kind", f"expected fokker_planck or scattering, got {spec.kind!r}")
    if not beta > 0.0:
        raise ConfigError("collision.beta", f"beta must be positive, got {beta:g}")
    if spec.kind == "scattering":
        gamma = beta if spec.gamma is None else spec.gamma
        if gamma > beta:
            raise ConfigError("collision.gamma", f"gamma = {gamma:g} exceeds beta = {beta:g}")
        if gamma >= cfg.dim:
            raise ConfigError("collision.gamma", f"gamma = {gamma:g} must be below d = {cfg.dim}")
        if spec.kernel_family == "boltzmann" and beta >= cfg.dim:
            raise ConfigError("collision.beta", f"the Boltzmann kernel needs 0 < beta < d, got {beta:g}")
        for key in ("b_lower", "b_upper"):
            value = getattr(spec, key)
            if value is not None and not value > 0.0:
                raise ConfigError(f"collision.{key}", f"kernel bound must be positive, got {value:g}")


def validate(cfg: ExperimentConfig) -> ExperimentConfig:
    """Range and cross-field checks; raises ConfigError naming section.key."""
    if cfg.mode not in MODES:
        raise ConfigError("experiment.mode", f"expected one of {MODES}, got {cfg.mode!r}")
    if not 0.0 < cfg.alpha <= 2.0:
        raise ConfigError("equilibrium.alpha", f"alpha must lie in (0, 2], got {cfg.alpha:g}")
    if cfg.dim != 1:
        raise ConfigError("equilibrium.dim", f"experiments are discretized for d = 1 only, got d = {cfg.dim}")
    if not cfg.k > 0.0:
        raise ConfigError("equilibrium.k", f"k must be positive, got {cfg.k:g}")
    if not 0.0 < cfg.tail_tol < 1.0:
        raise ConfigError("equilibrium.tail_tol", f"tail tolerance must lie in (0, 1), got {cfg.tail_tol:g}")
    _check_collision(cfg, cfg.alpha, cfg.beta)

    grid = cfg.grid
    if grid.nx < 3 or grid.nx % 2 == 0:
        raise ConfigError("grid.nx", f"the torus needs an odd number of points >= 3, got {grid.nx}")
    if grid.nv < 5 or grid.nv % 2 == 0:
        raise ConfigError("grid.nv", f"the velocity grid needs an odd number of points >= 5, got {grid.nv}")
    for key in ("v_max", "x_extent"):
        value = getattr(grid, key)
        if value is not None and not value > 0.0:
            raise ConfigError(f"grid.{key}", f"must be positive, got {value:g}")
    if not grid.v_scale > 0.0:
        raise ConfigError("grid.v_scale", f"must be positive, got {grid.v_scale:g}")

    solver = cfg.solver
    if not solver.dt > 0.0:
        raise ConfigError("solver.dt", f"time step must be positive, got {solver.dt:g}")
    if not solver.t_end > solver.dt:
        raise ConfigError("solver.t_end", f"end time {solver.t_end:g} must exceed dt = {solver.dt:g}")
    if abs(solver.n_steps * solver.dt - solver.t_end) > 1e-9 * solver.t_end:
        raise ConfigError("solver.t_end", f"end time {solver.t_end:g} is not a multiple of dt = {solver.dt:g}")
    if solver.splitting not in SPLITTINGS:
        raise ConfigError("solver.splitting", f"expected one of {SPLITTINGS}, got {solver.splitting!r}")
    if solver.collision_solver not in COLLISION_SOLVERS:
        raise ConfigError("solver.collision_solver", f"expected one of {COLLISION_SOLVERS}, got {solver.collision_solver!r}")

    initial = cfg.initial
    if not 0.0 < initial.bump_width < 0.5:
        raise ConfigError("initial.bump_width", f"bump width is a fraction of L_x in (0, 0.5), got {initial.bump_width:g}")
    if not 0.0 <= initial.tail_weight <= 1.0:
        raise ConfigError("initial.tail_weight", f"must lie in [0, 1], got {initial.tail_weight:g}")
    if not initial.tail_excess > 0.0:
        raise ConfigError("initial.tail_excess", f"must be positive, got {initial.tail_excess:g}")

    spectral = cfg.spectral
    if not spectral.domain_R > 0.0:
        raise ConfigError("spectral.domain_r", f"must be positive, got {spectral.domain_R:g}")
    if spectral.resolution < 5 or spectral.resolution % 2 == 0:
        raise ConfigError("spectral.resolution", f"needs an odd number of points >= 5, got {spectral.resolution}")
    if not spectral.scale > 0.0:
        raise ConfigError("spectral.scale", f"must be positive, got {spectral.scale:g}")

    sweep = cfg.sweep
    if sweep.axis not in SWEEP_AXES:
        raise ConfigError("sweep.axis", f"expected one of {SWEEP_AXES}, got {sweep.axis!r}")
    if not sweep.values:
        raise ConfigError("sweep.values", "at least one value is required")
    if len(set(sweep.values)) != len(sweep.values):
        raise ConfigError("sweep.values", f"values must be distinct, got {sweep.values}")
    for value in sweep.values:
        if sweep.axis == "k" and not value > 0.0:
            raise ConfigError("sweep.values", f"k must be positive, got {value:g}")
        if sweep.axis == "alpha":
            if not 0.0 < value <= 2.0:
                raise ConfigError("sweep.values", f"alpha must lie in (0, 2], got {value:g}")
            beta = 2.0 * (1.0 - value) if cfg.collision.kind == "fokker_planck" else cfg.beta
            _check_collision(cfg, value, beta)
    if sweep.workers < 1:
        raise ConfigError("sweep.workers", f"must be >= 1, got {sweep.workers}")

    if cfg.outputs.every < 1:
        raise ConfigError("outputs.every", f"output cadence must be >= 1, got {cfg.outputs.every}")
    if cfg.mode in ("kinetic", "homogeneous", "rates-sweep") and solver.n_steps // cfg.outputs.every < 2:
        raise ConfigError("outputs.every", f"{solver.n_steps} steps written every {cfg.outputs.every} give fewer than three outputs")
    if cfg.audit_samples < 1:
        raise ConfigError("experiment.audit_samples", f"must be >= 1, got {cfg.audit_samples}")
    return cfg


def parse_config(path: str, environ: Optional[Mapping[str, str]] = None) -> ExperimentConfig:
    """Read, override from the environment, convert and validate an experiment file."""
    parser = read_config(path)
    apply_env_overrides(parser, environ)
    return validate(build_config(ConfigReader(parser)))


def with_overrides(
    cfg: ExperimentConfig,
    *,
    mode: Optional[str] = None,
    seed: Optional[int] = None,
    out_dir: Optional[str] = None,
) -> ExperimentConfig:
    """Apply command-line overrides, which win over the file and the environment."""
    if mode is not None:
        cfg = replace(cfg, mode=mode)
    if seed is not None:
        cfg = replace(cfg, seed=int(seed))
    if out_dir is not None:
        cfg = replace(cfg, outputs=replace(cfg.outputs, directory=out_dir))
    return validate(cfg)


def config_to_dict(cfg: ExperimentConfig) -> dict:
    """Resolved configuration as plain data, embedded in every report."""
    data = asdict(cfg)
    data["beta"] = cfg.beta
    data["sweep"]["values"] = list(cfg.sweep.values)
    return data
