"""Propagation of velocity moments through the splitting L - T = B + C.

C = a 1_{|v|<R} is a bounded absorption localized at small velocities and
B = L - T - C is dissipative in every weight <v>^k with k1 <= k <= k2.
The Duhamel formula then turns the algebraic decay of e^{tB} from the
k2 to the k1 norm into a uniform-in-time bound on ||f(t)||_{k1}.
"""

from __future__ import annotations

from typing import Optional

import numpy as np

from backend.collision import CollisionOperator, drift_constants
from backend.decay import fit_rate
from backend.equilibria import mu_norm2
from backend.errors import DomainError
from backend.transport import KineticSolver
from models import DistributionField, Equilibrium, MomentBound, SemigroupDecay, SolverConfig, SplittingSpec

MONOTONE_TOLERANCE = 1e-12
DEFAULT_GAP = 2.0  # k2 = k1 + 2 ell + DEFAULT_GAP


def build_splitting(op: CollisionOperator, k: float, k2: Optional[float] = None) -> SplittingSpec:
    """Splitting for ||.||_k, with a and R the larger of the k1 and k2 drift constants."""
    low = drift_constants(op, k)
    ell = low.ell
    k2 = k + 2.0 * ell + DEFAULT_GAP if k2 is None else float(k2)
    if not k2 > k + 2.0 * ell:
        raise DomainError(f"k2 = {k2:g} must exceed k1 + 2 ell = {k + 2.0 * ell:g}")
    high = drift_constants(op, k2)
    return SplittingSpec(
        k1=float(k),
        k2=k2,
        a=max(low.a_k, high.a_k),
        R=max(low.R_k, high.R_k),
        ell=ell,
        b_k1=low.b_k,
    )


def absorption_profile(eq: Equilibrium, spec: SplittingSpec) -> np.ndarray:
    return np.where(np.abs(eq.grid.nodes) < spec.R, spec.a, 0.0)


def apply_C(eq: Equilibrium, spec: SplittingSpec, f: np.ndarray) -> np.ndarray:
    return absorption_profile(eq, spec) * f


def field_norm2(eq: Equilibrium, values: np.ndarray, k: float, dx: float = 1.0) -> float:
    """||f||_k^2 on the torus (dx > 0) or for a single velocity profile (dx = 1)."""
    return dx * mu_norm2(eq, values, k)


def closed_form_bound(spec: SplittingSpec, norm2_k2: float, t, norm2_k1: Optional[float] = None) -> np.ndarray:
    """Gronwall bound on ||e^{tB} f||_{k1}^2.

    Without norm2_k1 this is M ((k2 - k1) / (k2 - k1 + 2 ell b t))^{(k2 - k1)/ell}
    with M = ||f||_{k2}^2. Passing norm2_k1 = ||f||_{k1}^2 keeps the initial
    value, (y0^{-q} + 2 b q t M^{-q})^{-1/q} with q = ell / (k2 - k1), which is
    never larger.
    """
    t = np.asarray(t, dtype=float)
    gap = spec.k2 - spec.k1
    q = spec.ell / gap
    if norm2_k1 is None:
        return norm2_k2 * (gap / (gap + 2.0 * spec.ell * spec.b_k1 * t)) ** (gap / spec.ell)
    if norm2_k1 <= 0.0:
        return np.zeros_like(t)
    return (norm2_k1 ** (-q) + 2.0 * spec.b_k1 * q * t * norm2_k2 ** (-q)) ** (-1.0 / q)


def closed_form_prefactor(spec: SplittingSpec) -> float:
    """C with ||e^{tB} f||_{k1} <= C (1 + t)^{-p} ||f||_{k2}, read off the Gronwall bound."""
    gap = spec.k2 - spec.k1
    return max(1.0, gap / (2.0 * spec.ell * spec.b_k1)) ** spec.decay_exponent


def holder_margin(eq: Equilibrium, spec: SplittingSpec, values: np.ndarray, dx: float = 1.0) -> float:
    """Relative margin of ||f||_{k1}^2 <= ||f||_{k1-ell}^{2 theta} ||f||_{k2}^{2(1-theta)}."""
    gap = spec.k2 - spec.k1
    theta = gap / (gap + spec.ell)
    lhs = field_norm2(eq, values, spec.k1, dx)
    rhs = field_norm2(eq, values, spec.k1 - spec.ell, dx) ** theta * field_norm2(eq, values, spec.k2, dx) ** (1.0 - theta)
    return (rhs - lhs) / (rhs + 1e-300)


def absorption_margin(eq: Equilibrium, spec: SplittingSpec, values: np.ndarray, dx: float = 1.0) -> float:
    """Relative margin of ||C f||_{k2} <= a <R>^{k2/2} ||f||_0."""
    bound = absorption_norm(spec) * np.sqrt(field_norm2(eq, values, 0.0, dx))
    lhs = np.sqrt(field_norm2(eq, apply_C(eq, spec, values), spec.k2, dx))
    return float((bound - lhs) / (bound + 1e-300))


def absorption_norm(spec: SplittingSpec) -> float:
    return spec.a * (1.0 + spec.R**2) ** (0.25 * spec.k2)


def semigroup_B_decay(
    op: CollisionOperator,
    spec: SplittingSpec,
    f_init: DistributionField,
    config: SolverConfig,
    progress: bool = False,
) -> SemigroupDecay:
    """Run e^{tB} f_init with the kinetic integrator plus absorption and collect its norms."""
    eq = op.eq
    solver = KineticSolver(eq, op, f_init.x_extent, f_init.nx, config, absorption=absorption_profile(eq, spec))
    dx = f_init.dx

    def observe(field: DistributionField) -> dict:
        return {
            "t": field.time,
            "k1": field_norm2(eq, field.values, spec.k1, dx),
            "k2": field_norm2(eq, field.values, spec.k2, dx),
        }

    _, records = solver.run(f_init, observer=observe, progress=progress)
    times = np.array([r["t"] for r in records])
    norm2_k1 = np.array([r["k1"] for r in records])
    norm2_k2 = np.array([r["k2"] for r in records])
    norm_k1 = np.sqrt(norm2_k1)
    ratio = norm_k1 / np.sqrt(norm2_k2[0])
    monotone = bool(np.all(np.diff(norm_k1) <= MONOTONE_TOLERANCE * norm_k1[:-1]))
    bound = closed_form_bound(spec, norm2_k2[0], times, norm2_k1[0])
    margin = float(np.min((bound - norm2_k1) / norm2_k2[0]))
    slope = fit_rate(times, ratio, 0.25 * config.t_end)["slope"]
    return SemigroupDecay(
        times=times,
        norm_k1=norm_k1,
        norm_k2=np.sqrt(norm2_k2),
        ratio=ratio,
        monotone=monotone,
        slope=slope,
        closed_form_margin=margin,
        prefactor_fit=float(np.max(ratio * (1.0 + times) ** spec.decay_exponent)),
    )


def moment_bound(spec: SplittingSpec, prefactor_fit: Optional[float] = None) -> MomentBound:
    """K_k = 1 + a <R>^{k2/2} C int_0^inf (1 + s)^{-p} ds with C the larger prefactor."""
    p = spec.decay_exponent
    if not p > 1.0:
        raise DomainError(f"the Duhamel integral diverges for p = {p:g}")
    closed = closed_form_prefactor(spec)
    fitted = float("nan") if prefactor_fit is None else float(prefactor_fit)
    prefactor = closed if prefactor_fit is None else max(closed, fitted)
    norm = absorption_norm(spec)
    return MomentBound(
        kk=1.0 + norm * prefactor / (p - 1.0),
        exponent=p,
        prefactor=prefactor,
        prefactor_fit=fitted,
        prefactor_closed=closed,
        absorption_norm=norm,
    )


def moment_propagation_audit(norms_k: np.ndarray, bound: MomentBound) -> dict:
    """Compare sup_t ||f(t)||_k / ||f_init||_k with the Duhamel constant."""
    norms_k = np.asarray(norms_k, dtype=float)
    if norms_k.size == 0 or not norms_k[0] > 0.0:
        raise DomainError("moment audit needs a non-zero initial norm")
    sup_ratio = float(np.max(norms_k) / norms_k[0])
    return {
        "sup_ratio": sup_ratio,
        "kk": bound.kk,
        "margin": (bound.kk - sup_ratio) / bound.kk,
        "passed": sup_ratio <= bound.kk,
    }
