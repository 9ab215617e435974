"""Data models for the hypocoercivity test suite."""

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.sparse as sp


@dataclass(frozen=True, eq=False)
class VelocityGrid:
    """Represents a stretched velocity grid with its quadrature weights."""

    nodes: np.ndarray  # v for d = 1, radius r for d >= 2
    weights: np.ndarray  # trapezoid weights in v (radial weights carry |S^{d-1}| r^{d-1})
    mapped: np.ndarray  # uniform computational coordinate s with v = scale * sinh(s)
    scale: float
    v_max: float
    dim: int = 1

    @property
    def radial(self) -> bool:
        return self.dim > 1

    @property
    def size(self) -> int:
        return int(self.nodes.size)

    @property
    def bracket(self) -> np.ndarray:
        """Japanese bracket <v> at every node."""
        return np.sqrt(1.0 + self.nodes**2)

    def integrate(self, values: np.ndarray) -> np.ndarray:
        """Quadrature along the last (velocity) axis."""
        return np.asarray(values) @ self.weights


@dataclass(frozen=True, eq=False)
class Equilibrium:
    """Represents the normalized sub-exponential equilibrium F on a grid."""

    alpha: float
    dim: int
    c_alpha: float  # normalization constant 1/Z
    grid: VelocityGrid
    density: np.ndarray  # F at the grid nodes
    k_max: float  # largest moment order the cutoff was sized for
    tail_tol: float = 1e-12

    @property
    def log_z(self) -> float:
        return float(-np.log(self.c_alpha))

    def phi(self, v) -> np.ndarray:
        """Potential <v>^alpha + log Z."""
        return np.sqrt(1.0 + np.asarray(v, dtype=float) ** 2) ** self.alpha + self.log_z

    def density_at(self, v) -> np.ndarray:
        return self.c_alpha * np.exp(-np.sqrt(1.0 + np.asarray(v, dtype=float) ** 2) ** self.alpha)


@dataclass
class MomentTable:
    """Represents the temperature and the weighted moments of F."""

    theta: float  # (1/d) * int |v|^2 F
    theta_k: dict[float, float] = field(default_factory=dict)

    def __getitem__(self, k: float) -> float:
        return self.theta_k[float(k)]


@dataclass(frozen=True, eq=False)
class WeightedMeasure:
    """Represents quadrature weights for d(mu), d(xi) or d(nu) with a <v>^k factor."""

    kind: str  # 'mu', 'xi' or 'nu'
    weight_exponent: float
    weights: np.ndarray
    normalization: float = 1.0  # c_{alpha,beta} for 'nu', 1 otherwise


@dataclass(frozen=True)
class CollisionSpec:
    """Represents the choice of collision operator and its kernel bounds."""

    kind: str  # 'fokker_planck' or 'scattering'
    beta: float
    gamma: Optional[float] = None  # near-diagonal exponent of the kernel bound
    kernel_family: Optional[str] = None  # 'separable' or 'boltzmann' for scattering
    b_lower: Optional[float] = None
    b_upper: Optional[float] = None


@dataclass(frozen=True)
class DriftConstants:
    """Represents the constants of the weighted Lyapunov inequality for one k."""

    k: float
    a_k: float
    b_k: float
    R_k: float
    ell: float
    c_k: Optional[float] = None  # only defined for the Fokker-Planck operator


@dataclass
class DistributionField:
    """Represents f(x, v) on the periodic torus times the velocity grid."""

    values: np.ndarray  # shape (nx, nv)
    x_extent: float
    time: float = 0.0

    @property
    def nx(self) -> int:
        return int(self.values.shape[0])

    @property
    def dx(self) -> float:
        return self.x_extent / self.nx

    def copy(self) -> "DistributionField":
        return DistributionField(self.values.copy(), self.x_extent, self.time)


@dataclass(frozen=True)
class SolverConfig:
    """Represents the time integration settings."""

    dt: float
    t_end: float
    splitting: str = "strang"  # 'strang' or 'lie'
    collision_solver: str = "implicit_euler"  # or 'crank_nicolson'
    output_every: int = 10

    @property
    def n_steps(self) -> int:
        return int(round(self.t_end / self.dt))


@dataclass(frozen=True)
class StepConstants:
    """Represents the constants that enter the entropy production bound."""

    c2: float
    c4: float
    c_f: float
    c_micro: float
    theta: float


@dataclass
class HypoState:
    """Represents the diagnostics of one snapshot."""

    time: float
    norm2: float
    h_entropy: float
    d_production: float
    d_terms: tuple[float, ...]
    micro2: float  # ||(I - Pi) f||^2 in the <v>^{-beta} norm
    pairing: float  # <A T Pi f, Pi f>
    l1_norm: float
    norm_k: float = float("nan")
    macro2: float = float("nan")  # ||Pi f||^2


@dataclass
class HypoReport:
    """Represents one output row: a snapshot plus its audit margins."""

    state: HypoState
    margins: dict[str, float] = field(default_factory=dict)
    wrap_indicator: float = 0.0


@dataclass(frozen=True)
class SplittingSpec:
    """Represents the Duhamel splitting L - T = B + C with C = a 1_{|v|<R}."""

    k1: float
    k2: float
    a: float
    R: float
    ell: float
    b_k1: float

    @property
    def decay_exponent(self) -> float:
        return (self.k2 - self.k1) / (2.0 * self.ell)


@dataclass
class SemigroupDecay:
    """Represents a trajectory of the dissipative semigroup e^{tB}."""

    times: np.ndarray
    norm_k1: np.ndarray
    norm_k2: np.ndarray
    ratio: np.ndarray  # ||e^{tB} f||_{k1} / ||f||_{k2}
    monotone: bool
    slope: float
    closed_form_margin: float  # min over t of bound - ||e^{tB} f||_{k1}^2, relative
    prefactor_fit: float

    @property
    def relative(self) -> np.ndarray:
        """||e^{tB} f||_{k1} / ||f||_{k1}."""
        return self.norm_k1 / self.norm_k1[0]


@dataclass(frozen=True)
class MomentBound:
    """Represents the moment propagation constant and how it was obtained."""

    kk: float
    exponent: float  # p = (k2 - k1) / (2 ell)
    prefactor: float  # max of the fitted and closed-form prefactors
    prefactor_fit: float
    prefactor_closed: float
    absorption_norm: float  # a <R>^{k2/2}

    @property
    def duhamel_integral(self) -> float:
        return self.kk


@dataclass(frozen=True)
class RateModel:
    """Represents the constants of the algebraic decay estimate."""

    dim: int
    k: float
    beta: float
    zeta: float
    c_nash: float
    c_small: float  # Nash constant after the L1 bound is folded in
    c0: float
    c1: float
    c_rate: float
    z0: float
    h0: float
    delta: float
    kappa: float
    combined: float  # constant of the joint macro/micro lower bound


@dataclass(eq=False)
class SchrodingerProblem:
    """Represents the truncated Schrodinger eigenproblem on [-R, R]."""

    alpha: float
    beta: float
    dim: int
    domain_R: float
    scale: float  # stretch of the velocity grid
    nodes: np.ndarray
    mass: np.ndarray  # lumped mass per node
    stiffness: sp.csr_matrix  # second-difference Laplacian with no-flux ends
    potential: np.ndarray  # closed-form Phi at the nodes
    discrete_potential: np.ndarray  # Phi seen by the discrete ground-state transform
    weight: np.ndarray  # psi = c_{alpha,beta}^{-1} <v>^{-beta}
    kernel_vector: np.ndarray  # w0 = sqrt(F)
    c_alpha_beta: float
    residual: float = 0.0  # zero-mode residual
    potential_defect: float = 0.0  # max |Phi_h - Phi| / max |Phi| away from the ends

    @property
    def resolution(self) -> int:
        return int(self.nodes.size)


@dataclass
class SpectralResult:
    """Represents the spectral constants and their convergence."""

    c_star: float
    c_corollary: float
    sigma0: float
    lambda1: float
    c_star_weighted: float
    c_micro: float
    domain_R: float
    resolution: int
    converged: bool
    sigma0_grid: float = float("nan")
    refinements: dict[str, float] = field(default_factory=dict)
    eigenvector: Optional[np.ndarray] = None


@dataclass
class HomogeneousRun:
    """Represents a space-homogeneous relaxation g(t, v)."""

    times: np.ndarray
    g: np.ndarray  # shape (n_out, nv)
    gbar: np.ndarray  # (int g) F
    y: np.ndarray  # int |g - gbar|^2 d(mu)
    energy: np.ndarray  # int |grad h|^2 d(xi)
    mass: np.ndarray
    norm_k: np.ndarray  # ||g||_{L^2(<v>^k d mu)}
    k: float
    h_sup: np.ndarray = field(default_factory=lambda: np.zeros(0))  # ||g/F - int g||_inf
    scheme: str = "implicit_euler"


@dataclass(frozen=True)
class RelaxationConstants:
    """Represents the constants of the algebraic relaxation bound."""

    kk: float  # K_k^2 ||g_init||_k^2 + Theta_k (int g_init)^2
    kk_k: float  # moment propagation constant K_k
    c: float  # weighted Poincare constant
    beta: float
    k: float
    y0: float

    @property
    def theta(self) -> float:
        """Holder exponent k / (k + beta)."""
        return self.k / (self.k + self.beta)


@dataclass(frozen=True)
class GridConfig:
    """Represents the discretization sizes."""

    nx: int = 65
    nv: int = 129
    v_max: Optional[float] = None  # None: sized from the tail tolerance
    x_extent: Optional[float] = None  # None: sized from the heat-kernel width
    v_scale: float = 1.0


@dataclass(frozen=True)
class InitialConfig:
    """Represents the initial datum: a density bump in x plus a velocity tail."""

    bump_width: float = 0.05  # fraction of the torus width
    tail_weight: float = 0.5
    tail_excess: float = 0.05  # epsilon in q = (k + 1)/2 + epsilon


@dataclass(frozen=True)
class SpectralConfig:
    """Represents the truncation of the Schrodinger problem."""

    domain_R: float = 240.0
    resolution: int = 1601
    scale: float = 0.25


@dataclass(frozen=True)
class SweepConfig:
    """Represents a parameter sweep."""

    axis: str = "k"
    values: tuple[float, ...] = (0.25, 0.5, 1.0, 2.0, 4.0)
    workers: int = 1


@dataclass(frozen=True)
class OutputConfig:
    """Represents where and how often results are written."""

    directory: str = "out"
    every: int = 10
    progress: bool = True


@dataclass(frozen=True)
class ExperimentConfig:
    """Represents a fully validated experiment description."""

    mode: str
    alpha: float
    collision: CollisionSpec
    k: float = 2.0
    dim: int = 1
    seed: int = 0
    grid: GridConfig = field(default_factory=GridConfig)
    solver: SolverConfig = field(default_factory=lambda: SolverConfig(dt=0.01, t_end=1.0))
    initial: InitialConfig = field(default_factory=InitialConfig)
    spectral: SpectralConfig = field(default_factory=SpectralConfig)
    sweep: SweepConfig = field(default_factory=SweepConfig)
    outputs: OutputConfig = field(default_factory=OutputConfig)
    tail_tol: float = 1e-12
    audit_samples: int = 32

    @property
    def beta(self) -> float:
        return self.collision.beta


@dataclass
class ExperimentResult:
    """Represents the files one experiment wrote and the audits it failed."""

    mode: str
    files: list[str] = field(default_factory=list)
    summary: dict = field(default_factory=dict)
    failures: dict[str, float] = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return not self.failures
