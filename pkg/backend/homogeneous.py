"""Space-homogeneous relaxation g_t = L1 g and its algebraic bounds.

In h = g / F the equation reads h_t = F^{-1} (F h')' and
y(t) = int |g - gbar|^2 d(mu) = int |h - h~|^2 d(xi) with h~ = int g dv
fixed in time. Two routes bound y(t):

* weighted L^2: the weighted Poincare constant plus Holder between the
  <v>^{-beta} and <v>^k norms, which needs only the propagation of the
  k-th moment;
* weak Poincare: the same constant plus Holder against ||h - h~||_inf,
  which needs a uniform bound on h.
"""

from __future__ import annotations

from typing import Optional

import numpy as np
from scipy.special import logsumexp
from tqdm import tqdm

from backend.collision import FokkerPlanckOperator, build_operator
from backend.decay import fit_rate
from backend.equilibria import moments, mu_norm2
from backend.errors import DomainError, NumericError
from backend.moments import build_splitting, moment_bound
from backend.spectral import micro_coercivity_constant
from backend.transport import CollisionStepper, check_solver_config
from models import CollisionSpec, Equilibrium, HomogeneousRun, RelaxationConstants, SolverConfig

MASS_TOLERANCE = 1e-11
BOUND_TOLERANCE = 1e-8


def fokker_planck_for(eq: Equilibrium) -> FokkerPlanckOperator:
    return build_operator(CollisionSpec(kind="fokker_planck", beta=2.0 * (1.0 - eq.alpha)), eq)


def xi_average(eq: Equilibrium, h: np.ndarray) -> np.ndarray:
    """h~ = int h d(xi) along the last axis."""
    return eq.grid.integrate(np.asarray(h) * eq.density)


def xi_norm2(eq: Equilibrium, u: np.ndarray, m: float = 0.0) -> np.ndarray:
    """int |u|^2 <v>^m d(xi) along the last axis."""
    return eq.grid.integrate(np.asarray(u) ** 2 * eq.grid.bracket**m * eq.density)


def dirichlet_energy(op: FokkerPlanckOperator, h: np.ndarray) -> float:
    """int |h'|^2 d(xi) in the face discretization of L1."""
    return op.dissipation(np.asarray(h) * op.eq.density)


def _check_initial(eq: Equilibrium, g_init: np.ndarray) -> np.ndarray:
    g = np.asarray(g_init, dtype=float)
    if g.shape != (eq.grid.size,):
        raise DomainError(f"initial datum has shape {g.shape}, expected ({eq.grid.size},)")
    if not np.all(np.isfinite(g)):
        raise DomainError("initial datum is not finite")
    if np.any(g < 0.0):
        raise DomainError("the relaxation bounds are stated for non-negative initial data")
    return g


def run_homogeneous(
    eq: Equilibrium,
    g_init: np.ndarray,
    cfg: SolverConfig,
    k: float = 2.0,
    progress: bool = False,
) -> HomogeneousRun:
    """Integrate g_t = L1 g with the implicit collision stepper only."""
    check_solver_config(cfg)
    g = _check_initial(eq, g_init).copy()
    op = fokker_planck_for(eq)
    stepper = CollisionStepper(op, cfg.collision_solver)
    mass0 = float(eq.grid.integrate(g))
    gbar = mass0 * eq.density

    times, snapshots = [], []

    def record(t: float, values: np.ndarray) -> None:
        times.append(t)
        snapshots.append(values.copy())

    record(0.0, g)
    n_steps = cfg.n_steps
    for n in tqdm(range(1, n_steps + 1), disable=not progress, desc="[homogeneous]", leave=False):
        g = stepper.step(g, cfg.dt)
        if not np.all(np.isfinite(g)):
            raise NumericError(f"non-finite values at t = {n * cfg.dt:g}")
        if n % cfg.output_every == 0 or n == n_steps:
            record(n * cfg.dt, g)

    series = np.array(snapshots)
    mass = eq.grid.integrate(series)
    drift = float(np.max(np.abs(mass - mass0)))
    if drift > MASS_TOLERANCE * max(abs(mass0), 1e-300):
        raise NumericError(f"mass drifted by {drift:.3e} during the homogeneous run")
    h_dev = series / eq.density - mass0
    return HomogeneousRun(
        times=np.array(times),
        g=series,
        gbar=gbar,
        y=np.array([mu_norm2(eq, s - gbar) for s in series]),
        energy=np.array([op.dissipation(s) for s in series]),
        mass=mass,
        norm_k=np.sqrt([mu_norm2(eq, s, k) for s in series]),
        k=float(k),
        h_sup=np.max(np.abs(h_dev), axis=-1),
        scheme=cfg.collision_solver,
    )


def dissipation_defects(run: HomogeneousRun, op: FokkerPlanckOperator) -> np.ndarray:
    """(y_{n+1} - y_n)/dt + 2 int |h'_{n+1/2}|^2 d(xi) between consecutive outputs.

    Crank-Nicolson makes this vanish to round-off when every step is
    recorded; the midpoint is h_{n+1/2} = (h_n + h_{n+1}) / 2.
    """
    dt = np.diff(run.times)
    mid = 0.5 * (run.g[1:] + run.g[:-1])
    energy = np.array([op.dissipation(m) for m in mid])
    return np.diff(run.y) / dt + 2.0 * energy


def centered_dissipation_defects(run: HomogeneousRun) -> np.ndarray:
    """(y_{n+1} - y_{n-1}) / (2 dt) + 2 int |h_n'|^2 d(xi); O(dt^2) on uniform outputs."""
    dt = run.times[2:] - run.times[:-2]
    return (run.y[2:] - run.y[:-2]) / dt + 2.0 * run.energy[1:-1]


def relaxation_constants(
    eq: Equilibrium,
    g_init: np.ndarray,
    k: float,
    c: Optional[float] = None,
    kk_k: Optional[float] = None,
) -> RelaxationConstants:
    """K = K_k^2 ||g_init||_k^2 + Theta_k (int g_init)^2 and the Poincare constant."""
    beta = 2.0 * (1.0 - eq.alpha)
    if not beta > 0.0:
        raise DomainError(f"the algebraic relaxation bound needs alpha < 1, got {eq.alpha:g}")
    if not k > 0.0:
        raise DomainError(f"the relaxation bound needs k > 0, got {k:g}")
    g = _check_initial(eq, g_init)
    if c is None:
        c = micro_coercivity_constant(eq, beta)
    if kk_k is None:
        kk_k = moment_bound(build_splitting(fokker_planck_for(eq), k)).kk
    mass = float(eq.grid.integrate(g))
    theta_k = moments(eq, [k]).theta_k[float(k)]
    kk = kk_k**2 * mu_norm2(eq, g, k) + theta_k * mass**2
    return RelaxationConstants(
        kk=kk,
        kk_k=float(kk_k),
        c=float(c),
        beta=beta,
        k=float(k),
        y0=mu_norm2(eq, g - mass * eq.density),
    )


def prop_b_bound(y0: float, kk_const: float, c_const: float, beta: float, k: float, t):
    """(y0^{-beta/k} + 2 beta C t / (k K^{beta/k}))^{-k/beta}."""
    t = np.asarray(t, dtype=float)
    if y0 <= 0.0:
        return np.zeros_like(t)
    rate = 2.0 * beta * c_const / (k * kk_const ** (beta / k))
    return (y0 ** (-beta / k) + rate * t) ** (-k / beta)


def relaxation_audit(run: HomogeneousRun, constants: RelaxationConstants, tolerance: float = BOUND_TOLERANCE) -> dict:
    """Check y(t) against the algebraic bound, the moment bound and the discrete Gronwall inequality.

    For g >= 0 the cross term of int |h - h~|^2 <v>^k d(xi) is non-positive,
    so the k-weighted deviation stays below K itself.
    """
    c, beta, k = constants.c, constants.beta, constants.k
    bound = prop_b_bound(run.y[0], constants.kk, c, beta, k, run.times)
    scale = run.y[0] + 1e-300
    margins = (bound - run.y) / scale
    moment_ratio = float(np.max(run.norm_k) / run.norm_k[0])
    theta = constants.theta
    rate = 2.0 * c * constants.kk ** (1.0 - 1.0 / theta)
    decrease = -np.diff(run.y) / np.diff(run.times)
    required = rate * run.y[1:] ** (1.0 / theta)
    ode = (decrease - required) / (np.abs(decrease) + required + 1e-300)
    ode_min = float(np.min(ode)) if ode.size else 0.0
    result = {
        "bound": bound,
        "margins": margins,
        "bound_margin": float(np.min(margins)),
        "moment_ratio": moment_ratio,
        "moment_margin": (constants.kk_k - moment_ratio) / constants.kk_k,
        "ode_margin": ode_min,
        "monotone": bool(np.all(np.diff(run.y) <= 1e-12 * run.y[:-1])),
    }
    result["passed"] = (
        result["bound_margin"] >= -tolerance
        and result["moment_margin"] >= 0.0
        and ode_min >= -tolerance
        and result["monotone"]
    )
    return result


def holder_split_margin(eq: Equilibrium, h: np.ndarray, k: float, beta: float) -> float:
    """Relative margin of int |u|^2 <= (int |u|^2 <v>^{-beta})^theta (int |u|^2 <v>^k)^{1-theta}, u = h - h~."""
    u = np.asarray(h) - xi_average(eq, h)
    theta = k / (k + beta)
    lhs = float(xi_norm2(eq, u))
    rhs = float(xi_norm2(eq, u, -beta)) ** theta * float(xi_norm2(eq, u, k)) ** (1.0 - theta)
    return (rhs - lhs) / (rhs + 1e-300)


def tau_from_eta(eta: float, beta: float) -> float:
    """tau with (tau + 1) / tau = beta / eta."""
    if not 0.0 < eta < beta:
        raise DomainError(f"eta must lie in (0, beta) = (0, {beta:g}), got {eta:g}")
    return eta / (beta - eta)


def grid_log_moment(eq: Equilibrium, m: float) -> float:
    """log int <v>^m F on the grid, safe for large m."""
    return float(logsumexp(m * np.log(eq.grid.bracket) + np.log(eq.grid.weights * eq.density)))


def weak_poincare_constant(eq: Equilibrium, tau: float, c: Optional[float] = None) -> float:
    """C_{alpha,tau} = C^{-tau/(1+tau)} Theta_{beta tau}^{1/(1+tau)}."""
    beta = 2.0 * (1.0 - eq.alpha)
    if not beta > 0.0:
        raise DomainError(f"the weak Poincare route needs alpha < 1, got {eq.alpha:g}")
    if not tau > 0.0:
        raise DomainError(f"tau must be positive, got {tau:g}")
    if c is None:
        c = micro_coercivity_constant(eq, beta)
    return float(np.exp((-tau * np.log(c) + grid_log_moment(eq, beta * tau)) / (1.0 + tau)))


def weak_poincare_sides(op: FokkerPlanckOperator, h: np.ndarray) -> tuple[float, float, float]:
    """(int |h - h~|^2 d(xi), int |h'|^2 d(xi), ||h - h~||_inf^2) for a grid function."""
    eq = op.eq
    u = np.asarray(h) - xi_average(eq, h)
    return float(xi_norm2(eq, u)), dirichlet_energy(op, h), float(np.max(np.abs(u)) ** 2)


def weak_poincare_margin(op: FokkerPlanckOperator, h: np.ndarray, tau: float, c_wp: float) -> float:
    """Relative margin of int |h - h~|^2 <= C E^{tau/(1+tau)} ||h - h~||_inf^{2/(1+tau)}."""
    variance, energy, sup2 = weak_poincare_sides(op, h)
    rhs = c_wp * energy ** (tau / (1.0 + tau)) * sup2 ** (1.0 / (1.0 + tau))
    return (rhs - variance) / (rhs + 1e-300)


def r_form_rhs(energy: float, sup2: float, tau: float, r):
    """tau (1 + tau)^{-1 - 1/tau} r^{-1/tau} E + r ||h - h~||_inf^2."""
    r = np.asarray(r, dtype=float)
    return tau * (1.0 + tau) ** (-1.0 - 1.0 / tau) * r ** (-1.0 / tau) * energy + r * sup2


def r_form_optimum(energy: float, sup2: float, tau: float) -> float:
    """Minimizing r of r_form_rhs."""
    kappa = tau * (1.0 + tau) ** (-1.0 - 1.0 / tau)
    return (kappa * energy / (tau * sup2)) ** (tau / (1.0 + tau))


def random_bounded_h(eq: Equilibrium, rng: np.random.Generator, modes: int = 4) -> np.ndarray:
    """Random h with |h| <= 1 built from a few oscillations in the stretched coordinate."""
    s = eq.grid.mapped / np.max(np.abs(eq.grid.mapped))
    h = sum(rng.normal() * np.cos(j * np.pi * s + rng.uniform(0.0, np.pi)) for j in range(1, modes + 1))
    return np.tanh(h + 0.1 * rng.normal(size=s.size))


def weak_poincare_audit(
    eq: Equilibrium,
    tau: float,
    eta: Optional[float] = None,
    samples: int = 500,
    rng: Optional[np.random.Generator] = None,
    c: Optional[float] = None,
) -> dict:
    """Check the product and r-forms of the weak Poincare inequality on random bounded h.

    With eta given, tau is recomputed from (tau + 1) / tau = beta / eta.
    """
    op = fokker_planck_for(eq)
    if eta is not None:
        tau = tau_from_eta(eta, op.spec.beta)
    c_wp = weak_poincare_constant(eq, tau, c)
    rng = np.random.default_rng(0) if rng is None else rng
    product, r_form = [], []
    for _ in range(samples):
        h = random_bounded_h(eq, rng)
        product.append(weak_poincare_margin(op, h, tau, c_wp))
        variance, energy, sup2 = weak_poincare_sides(op, h)
        radii = np.logspace(-6, 6, 25) * r_form_optimum(energy, sup2, tau)
        rhs = r_form_rhs(energy, sup2, tau, radii)
        r_form.append(float(np.min((rhs - variance / c_wp) / (rhs + 1e-300))))
    product = np.array(product)
    r_form = np.array(r_form)
    return {
        "tau": tau,
        "c_weak": c_wp,
        "min_margin": float(np.min(product)),
        "min_r_margin": float(np.min(r_form)),
        "violations": int(np.count_nonzero(product < -BOUND_TOLERANCE) + np.count_nonzero(r_form < -BOUND_TOLERANCE)),
    }


def stroock_bound(y0: float, c_wp: float, tau: float, m_sup: float, t):
    """(y0^{-1/tau} + 2 t / (tau C^{1+1/tau} M))^{-tau} with M = sup ||h - h~||_inf^{2/tau}."""
    t = np.asarray(t, dtype=float)
    if y0 <= 0.0:
        return np.zeros_like(t)
    return (y0 ** (-1.0 / tau) + 2.0 * t / (tau * c_wp ** (1.0 + 1.0 / tau) * m_sup)) ** (-tau)


def stroock_audit(run: HomogeneousRun, c_wp: float, tau: float, tolerance: float = BOUND_TOLERANCE) -> dict:
    """y(t) against the weak Poincare decay bound with the running sup of ||h - h~||_inf."""
    m_running = np.maximum.accumulate(run.h_sup ** (2.0 / tau))
    bound = np.array([stroock_bound(run.y[0], c_wp, tau, m, t) for m, t in zip(m_running, run.times)])
    margins = (bound - run.y) / (run.y[0] + 1e-300)
    return {
        "bound": bound,
        "margins": margins,
        "min_margin": float(np.min(margins)),
        "sup_growth": float(m_running[-1] / m_running[0]) if m_running[0] > 0.0 else 1.0,
        "passed": bool(np.min(margins) >= -tolerance),
    }


def exponential_proxy(y0: float, c: float, t):
    """y0 exp(-2 C t): the decay a spectral gap of size C would give."""
    return y0 * np.exp(-2.0 * c * np.asarray(t, dtype=float))


def tail_summary(run: HomogeneousRun, constants: RelaxationConstants, t_start: float) -> dict:
    """Fitted log-log slope of y on [t_start, t_end] against the predicted -k/beta."""
    fit = fit_rate(run.times, run.y, t_start)
    proxy = exponential_proxy(run.y[0], constants.c, run.times)
    below = np.nonzero(run.y <= proxy)[0]
    if below.size == 0:
        crossing = float(run.times[0])
    elif below[-1] + 1 < run.times.size:
        crossing = float(run.times[below[-1] + 1])
    else:
        crossing = float("nan")
    return {
        **fit,
        "predicted": -constants.k / constants.beta,
        "above_proxy_from": crossing,
        "final_over_proxy": float(run.y[-1] / max(proxy[-1], 1e-300)),
    }
