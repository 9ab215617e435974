"""Weighted Poincare constants through the ground-state (Schrodinger) transform.

With w = h sqrt(F) the Dirichlet form int |h'|^2 F dv becomes
int |w'|^2 + Phi w^2 dv with Phi = |phi'|^2/4 - phi''/2. The transform is
applied to the discrete flux form on a truncated stretched grid, so
w0 = sqrt(F) is an exact zero mode of the discrete operator and the
potential it induces can be compared with the closed-form Phi.
"""

from __future__ import annotations

from typing import Iterable, Optional

import numpy as np
import scipy.sparse as sp
from scipy.linalg import eigh

from backend.equilibria import bracket, build_velocity_grid, schrodinger_potential
from backend.errors import DomainError, ResolutionError, SolverError
from models import Equilibrium, SchrodingerProblem, SpectralResult

RESIDUAL_TOLERANCE = 1e-6
POTENTIAL_TOLERANCE = 1e-3
REFINEMENT_TOLERANCE = 0.02


def _check_arguments(alpha: float, beta: float, dim: int, domain_R: float, resolution: int) -> None:
    if dim != 1:
        raise DomainError(f"spectral constants are computed for d = 1 only, got d = {dim}")
    if not 0.0 < alpha <= 2.0:
        raise DomainError(f"alpha must lie in (0, 2], got {alpha}")
    if beta < 0.0:
        raise DomainError(f"beta must be non-negative, got {beta}")
    if not domain_R > 0.0:
        raise DomainError(f"truncation radius must be positive, got {domain_R}")
    if resolution < 5 or resolution % 2 == 0:
        raise DomainError(f"resolution must be odd and >= 5, got {resolution}")


def build_schrodinger(
    alpha: float,
    beta: float,
    domain_R: float = 240.0,
    resolution: int = 1601,
    *,
    dim: int = 1,
    scale: float = 0.25,
) -> SchrodingerProblem:
    _check_arguments(alpha, beta, dim, domain_R, resolution)
    grid = build_velocity_grid(domain_R, resolution, 1, scale)
    v = grid.nodes
    mass = grid.weights
    spacing = np.diff(v)
    phi = bracket(v) ** alpha

    shape = np.exp(-(phi - phi.min()))
    density = shape / float(mass @ shape)
    w0 = np.sqrt(density)

    inv = 1.0 / spacing
    diag = np.zeros_like(v)
    diag[:-1] += inv
    diag[1:] += inv
    stiffness = sp.diags([-inv, diag, -inv], [-1, 0, 1], format="csr")

    # sqrt(F_j / F_i) - 1 through potential differences, so nothing underflows
    left = np.zeros_like(v)
    right = np.zeros_like(v)
    left[1:] = np.expm1(-0.5 * (phi[:-1] - phi[1:])) * inv
    right[:-1] = np.expm1(-0.5 * (phi[1:] - phi[:-1])) * inv
    discrete = (left + right) / mass

    potential = schrodinger_potential(alpha, v, 1)
    c_ab = float(mass @ (bracket(v) ** (-beta) * density))
    weight = bracket(v) ** (-beta) / c_ab

    hamiltonian = stiffness + sp.diags(mass * discrete)
    residual = float(np.max(np.abs(hamiltonian @ w0)) / (np.max(np.abs(hamiltonian.diagonal())) * np.max(w0)))
    if not np.isfinite(residual) or residual > RESIDUAL_TOLERANCE:
        raise ResolutionError("ground state is not a zero mode of the discrete operator", residual=residual)
    # the end nodes carry the boundary term of the truncated form, not Phi
    inner = slice(1, -1)
    defect = float(np.max(np.abs(discrete[inner] - potential[inner])) / np.max(np.abs(potential[inner])))
    if not np.isfinite(defect) or defect > POTENTIAL_TOLERANCE:
        raise ResolutionError(f"{resolution} nodes do not resolve the potential on [-{domain_R:g}, {domain_R:g}]", residual=defect)

    return SchrodingerProblem(
        alpha=float(alpha),
        beta=float(beta),
        dim=int(dim),
        domain_R=float(domain_R),
        scale=float(scale),
        nodes=v,
        mass=mass,
        stiffness=stiffness,
        potential=potential,
        discrete_potential=discrete,
        weight=weight,
        kernel_vector=w0,
        c_alpha_beta=c_ab,
        residual=residual,
        potential_defect=defect,
    )


def hamiltonian(problem: SchrodingerProblem) -> np.ndarray:
    """Dense symmetric matrix of the quadratic form w -> int |w'|^2 + Phi w^2."""
    return (problem.stiffness + sp.diags(problem.mass * problem.discrete_potential)).toarray()


def _householder(x: np.ndarray) -> np.ndarray:
    """Unit u such that (I - 2 u u^T) x is a multiple of e_1."""
    x = x / np.linalg.norm(x)
    u = x.copy()
    u[0] += np.copysign(1.0, x[0])
    return u / np.linalg.norm(u)


def deflated_lowest(matrix: np.ndarray, weight: np.ndarray, constraint: np.ndarray) -> tuple[float, np.ndarray]:
    """Smallest value of x^T A x / x^T W x over constraint^T x = 0.

    W is diagonal and positive. In y = W^{1/2} x the constraint is a single
    direction; a Householder reflection sends it to e_1 and the trailing
    block is solved for its lowest eigenpair.
    """
    scale = 1.0 / np.sqrt(weight)
    a = matrix * scale[:, None] * scale[None, :]
    u = _householder(constraint * scale)
    au = a @ u
    # (I - 2uu^T) a (I - 2uu^T) = a - 2(u p^T + p u^T), p = au - (u.au) u
    p = au - float(u @ au) * u
    a -= 2.0 * np.outer(u, p)
    a -= 2.0 * np.outer(p, u)
    block = a[1:, 1:]
    block = 0.5 * (block + block.T)
    try:
        values, vectors = eigh(block, subset_by_index=[0, 0])
    except (ValueError, np.linalg.LinAlgError) as exc:
        raise SolverError("deflated eigenproblem did not converge") from exc
    y = np.concatenate([[0.0], vectors[:, 0]])
    y -= 2.0 * u * float(u @ y)
    return float(values[0]), y * scale


def sigma0_limit(alpha: float, beta: float, c_alpha_beta: float) -> float:
    """Closed-form limit of Phi / psi as |v| -> infinity."""
    threshold = 2.0 * (1.0 - alpha)
    if beta > threshold + 1e-12:
        return np.inf
    if beta < threshold - 1e-12:
        return 0.0
    return 0.25 * alpha * alpha * c_alpha_beta


def sigma0_profile(problem: SchrodingerProblem) -> tuple[np.ndarray, np.ndarray]:
    """q(r) = min over grid nodes v >= r of Phi(v) / psi(v)."""
    keep = problem.nodes >= 0.0
    r = problem.nodes[keep]
    ratio = problem.potential[keep] / problem.weight[keep]
    q = np.minimum.accumulate(ratio[::-1])[::-1]
    return r, q


def _lowest_nu(problem: SchrodingerProblem) -> tuple[float, np.ndarray]:
    # psi-orthogonal complement of w0: centering with respect to d(nu)
    weight = problem.mass * problem.weight
    return deflated_lowest(hamiltonian(problem), weight, weight * problem.kernel_vector)


def _lowest_xi(problem: SchrodingerProblem) -> tuple[float, np.ndarray]:
    # centering with respect to d(xi), denominator still in d(nu)
    weight = problem.mass * problem.weight
    return deflated_lowest(hamiltonian(problem), weight, problem.mass * problem.kernel_vector)


def compute_c_corollary(problem: SchrodingerProblem) -> float:
    """Optimal constant of int |h'|^2 d(xi) >= C int |h - int h d(xi)|^2 d(nu)."""
    inverse = float(problem.mass @ (problem.kernel_vector**2 / problem.weight))
    if not np.isfinite(inverse):
        raise DomainError("1/psi is not integrable against F on this grid")
    value, _ = _lowest_xi(problem)
    return min(value, sigma0_limit(problem.alpha, problem.beta, problem.c_alpha_beta))


def _agrees(value: float, reference: float) -> bool:
    return abs(value - reference) <= REFINEMENT_TOLERANCE * abs(reference)


def compute_c_star(problem: SchrodingerProblem, refine: bool = True) -> SpectralResult:
    """C_star = min(lambda_1, sigma_0) with an R- and n-refinement study."""
    lambda1, w1 = _lowest_nu(problem)
    sigma0 = sigma0_limit(problem.alpha, problem.beta, problem.c_alpha_beta)
    c_star = min(lambda1, sigma0)
    c_corollary = compute_c_corollary(problem)
    _, q = sigma0_profile(problem)

    c_micro = c_corollary / problem.c_alpha_beta
    refinements: dict[str, float] = {}
    converged = False
    if refine:
        for label, (radius, n) in (
            ("domain", (2.0 * problem.domain_R, problem.resolution)),
            ("resolution", (problem.domain_R, 2 * problem.resolution - 1)),
        ):
            other = build_schrodinger(problem.alpha, problem.beta, radius, n, scale=problem.scale)
            value, _ = _lowest_nu(other)
            refinements[label] = min(value, sigma0_limit(other.alpha, other.beta, other.c_alpha_beta))
            refinements[f"{label}_micro"] = compute_c_corollary(other) / other.c_alpha_beta
        converged = all(
            _agrees(refinements[label], c_star) and _agrees(refinements[f"{label}_micro"], c_micro)
            for label in ("domain", "resolution")
        )

    return SpectralResult(
        c_star=c_star,
        c_corollary=c_corollary,
        sigma0=sigma0,
        lambda1=lambda1,
        c_star_weighted=c_star / problem.c_alpha_beta,
        c_micro=c_micro,
        domain_R=problem.domain_R,
        resolution=problem.resolution,
        converged=converged,
        sigma0_grid=float(q[-1]),
        refinements=refinements,
        eigenvector=w1,
    )


def dirichlet_form(problem: SchrodingerProblem, h: np.ndarray) -> np.ndarray:
    """int |h'|^2 F dv face by face, along the last axis."""
    w0 = problem.kernel_vector
    face = w0[:-1] * w0[1:] / np.diff(problem.nodes)
    return np.sum(face * np.diff(h, axis=-1) ** 2, axis=-1)


def centered_norm2(problem: SchrodingerProblem, h: np.ndarray, centering: str = "nu") -> np.ndarray:
    """int |h - c|^2 d(nu) with c the d(nu) or d(xi) average of h."""
    density = problem.kernel_vector**2
    nu = problem.mass * problem.weight * density
    if centering == "nu":
        centre = h @ nu
    elif centering == "xi":
        centre = h @ (problem.mass * density)
    else:
        raise DomainError(f"unknown centering {centering!r}")
    return ((h - np.asarray(centre)[..., None]) ** 2) @ nu


def random_test_functions(problem: SchrodingerProblem, count: int, rng: np.random.Generator, modes: int = 6) -> np.ndarray:
    """Bounded smooth functions of the stretched coordinate."""
    s = np.arcsinh(problem.nodes / problem.scale)
    s /= np.max(np.abs(s))
    coeffs = rng.normal(size=(count, modes))
    phases = rng.uniform(0.0, 2.0 * np.pi, size=(count, modes))
    j = np.arange(1, modes + 1)
    waves = np.cos(0.5 * np.pi * j[None, :, None] * (s[None, None, :] + 1.0) + phases[:, :, None])
    return np.einsum("cm,cmv->cv", coeffs / j, waves)


def rayleigh_audit(
    problem: SchrodingerProblem,
    c: float,
    n_samples: int = 100,
    rng: Optional[np.random.Generator] = None,
    centering: str = "nu",
    extra: Optional[np.ndarray] = None,
) -> dict[str, float]:
    """Relative margins quotient / c - 1 of the weighted Poincare inequality on random h."""
    rng = np.random.default_rng(0) if rng is None else rng
    h = random_test_functions(problem, n_samples, rng)
    if extra is not None:
        h = np.vstack([h, np.atleast_2d(extra)])
    energy = dirichlet_form(problem, h)
    spread = centered_norm2(problem, h, centering)
    margins = energy / (c * spread) - 1.0
    # the d(nu) average minimizes the d(nu) spread
    gap = centered_norm2(problem, h, "xi") - centered_norm2(problem, h, "nu")
    return {
        "min_margin": float(np.min(margins)),
        "mean_margin": float(np.mean(margins)),
        "centering_gap": float(np.min(gap / centered_norm2(problem, h, "xi"))),
        "samples": float(h.shape[0]),
    }


def eigenfunction(problem: SchrodingerProblem, w: np.ndarray) -> np.ndarray:
    """h = w / sqrt(F) for a vector in Schrodinger coordinates."""
    return w / problem.kernel_vector


def micro_coercivity_constant(eq: Equilibrium, beta: float) -> float:
    """Grid constant C with int |(f/F)'|^2 F >= C int |f/F - rho|^2 <v>^{-beta} F for every f.

    This is the weighted Poincare constant with d(xi) centering on the
    velocity grid of `eq`, in the flux discretization used by the
    Fokker-Planck operator, so the micro-coercivity audit holds to round-off.
    """
    if eq.dim != 1:
        raise DomainError("micro-coercivity constants are computed for d = 1 only")
    F = eq.density
    w = eq.grid.weights
    face = np.sqrt(F[:-1] * F[1:]) / np.diff(eq.grid.nodes)
    diag = np.zeros_like(F)
    diag[:-1] += face
    diag[1:] += face
    stiffness = np.diag(diag) - np.diag(face, 1) - np.diag(face, -1)
    value, _ = deflated_lowest(stiffness, w * F * eq.grid.bracket ** (-beta), w * F)
    if not value > 0.0:
        raise ResolutionError(f"micro-coercivity constant {value:g} is not positive")
    return value


def threshold_sweep(
    alpha: float,
    betas: Iterable[float],
    radii: Iterable[float],
    resolution: int = 801,
    scale: float = 0.25,
) -> list[dict[str, float]]:
    """lambda_1, sigma_0, C_star and the xi-centred constant over beta and the truncation radius."""
    rows = []
    for beta in betas:
        for radius in radii:
            problem = build_schrodinger(alpha, beta, radius, resolution, scale=scale)
            lambda1, _ = _lowest_nu(problem)
            sigma0 = sigma0_limit(alpha, beta, problem.c_alpha_beta)
            c_corollary = compute_c_corollary(problem)
            rows.append(
                {
                    "alpha": float(alpha),
                    "beta": float(beta),
                    "R": float(radius),
                    "n": float(resolution),
                    "lambda1": lambda1,
                    "sigma0": sigma0,
                    "c_star": min(lambda1, sigma0),
                    "c_corollary": c_corollary,
                }
            )
    return rows
