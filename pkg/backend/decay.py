"""Algebraic decay: Nash and Holder lower bounds, the Gronwall closure and rate fits.

Everything here post-processes recorded snapshots; no time stepping.
"""

from __future__ import annotations

from typing import Optional, Sequence

import numpy as np
from scipy import integrate, stats
from scipy.optimize import brentq, minimize_scalar

from backend.diagnostics import spectral_derivative
from backend.equilibria import sphere_area
from backend.errors import DomainError, NumericError
from models import HypoState, RateModel

NASH_SAFETY = 1.25
SHAPE_BOUNDS = (1.0, 8.0)
BOUND_TOLERANCE = 1e-8


def predicted_zeta(dim: int, k: float, beta: float) -> float:
    """zeta = min(d/2, k/beta)."""
    if not k > 0.0 or not beta > 0.0:
        raise DomainError(f"the decay rate needs k > 0 and beta > 0, got k = {k:g}, beta = {beta:g}")
    return min(0.5 * dim, k / beta)


def nash_ratio(shape: float, dim: int) -> float:
    """||u||_2^2 / (||u||_1^{4/(d+2)} ||grad u||_2^{2d/(d+2)}) for u = exp(-|x|^shape).

    The quotient is invariant under dilation and scaling of u.
    """
    area = sphere_area(dim)

    def radial(fn) -> float:
        value, _ = integrate.quad(lambda r: fn(r) * r ** (dim - 1), 0.0, np.inf, limit=200)
        return area * value

    l1 = radial(lambda r: np.exp(-(r**shape)))
    l2 = radial(lambda r: np.exp(-2.0 * r**shape))
    grad = radial(lambda r: shape**2 * r ** (2.0 * shape - 2.0) * np.exp(-2.0 * r**shape))
    return l2 / (l1 ** (4.0 / (dim + 2)) * grad ** (dim / (dim + 2)))


def nash_constant(dim: int) -> float:
    """Certified C_Nash: the best generalized Gaussian quotient times NASH_SAFETY."""
    if dim not in (1, 2):
        raise DomainError(f"Nash constants are certified for d = 1, 2 only, got d = {dim}")
    result = minimize_scalar(lambda s: -nash_ratio(s, dim), bounds=SHAPE_BOUNDS, method="bounded")
    best = max(-float(result.fun), nash_ratio(2.0, dim))
    return NASH_SAFETY * best


def nash_margin(u: np.ndarray, x_extent: float, c_nash: float) -> float:
    """Relative margin of the d = 1 Nash inequality for a periodic grid function."""
    dx = x_extent / u.shape[0]
    l2 = dx * float(np.sum(u * u))
    l1 = dx * float(np.sum(np.abs(u)))
    du = spectral_derivative(u, x_extent)
    grad = dx * float(np.sum(du * du))
    rhs = c_nash * l1 ** (4.0 / 3.0) * grad ** (1.0 / 3.0)
    return (rhs - l2) / (l2 + 1e-300)


def small_constant(theta: float, c_nash: float, l1: float, dim: int) -> float:
    """c = Theta C_Nash^{-(d+2)/d} ||f||_{L^1}^{-4/d}."""
    if not l1 > 0.0:
        raise DomainError("the Nash route needs a non-zero L1 norm")
    return theta * c_nash ** (-(dim + 2.0) / dim) * l1 ** (-4.0 / dim)


def phi_inverse(y, c_small: float, dim: int):
    """Phi^{-1}(y) = 2 y + (y / c)^{d/(d+2)}, strictly increasing on [0, inf)."""
    y = np.asarray(y, dtype=float)
    return 2.0 * y + (y / c_small) ** (dim / (dim + 2.0))


def phi_lower(y: float, c_small: float, dim: int) -> float:
    """Phi(y): lower bound of the macroscopic pairing in terms of ||Pi f||^2 = y."""
    if y < 0.0:
        raise DomainError(f"Phi is defined on [0, inf), got {y:g}")
    if y == 0.0:
        return 0.0
    # Phi^{-1}(s) >= 2 s and >= (s / c)^{d/(d+2)}, so the root lies below both bounds
    upper = min(0.5 * y, c_small * y ** ((dim + 2.0) / dim))
    try:
        return float(brentq(lambda s: float(phi_inverse(s, c_small, dim)) - y, 0.0, upper, xtol=1e-300, rtol=1e-15))
    except ValueError as exc:
        raise NumericError(f"Phi^-1 does not bracket {y:g} on [0, {upper:g}]") from exc


def psi_constant(kk: float, theta_k: float, norm_k_init: float, beta: float, k: float) -> float:
    """C0 = (K_k (1 + Theta_k) ||f_init||_k)^{-2 beta/k}."""
    return (kk * (1.0 + theta_k) * norm_k_init) ** (-2.0 * beta / k)


def psi_lower(y, c0: float, beta: float, k: float):
    """Psi(y) = C0 y^{1 + beta/k}: lower bound of the weighted micro norm."""
    return c0 * np.asarray(y, dtype=float) ** (1.0 + beta / k)


def linearization_constant(z0: float, c_small: float, dim: int) -> float:
    """C1 with Phi(y) >= C1 y^{1 + 2/d} for 0 <= y <= z0."""
    top = phi_lower(z0, c_small, dim)
    return (2.0 * top ** (2.0 / (dim + 2.0)) + c_small ** (-dim / (dim + 2.0))) ** (-(dim + 2.0) / dim)


def build_rate_model(
    *,
    dim: int,
    k: float,
    beta: float,
    theta: float,
    theta_k: float,
    kk: float,
    norm2_init: float,
    norm_k_init: float,
    l1_init: float,
    h0: float,
    delta: float,
    kappa: float,
    c_nash: Optional[float] = None,
) -> RateModel:
    """Assemble the constants of H(t) <= H0 (1 + C H0^{1/zeta} t)^{-zeta}.

    Splitting ||f||^2 = ||Pi f||^2 + ||(I - Pi) f||^2, one part carries at
    least half of it, which gives the factors 2^{-1-beta/k} and 2^{-1-2/d}
    of the joint lower bound
        micro^2 + pairing >= combined * ||f||^{2 + 2/zeta}
    on the sublevel set ||f||^2 <= z0.
    """
    zeta = predicted_zeta(dim, k, beta)
    c_nash = nash_constant(dim) if c_nash is None else c_nash
    c_small = small_constant(theta, c_nash, l1_init, dim)
    c0 = psi_constant(kk, theta_k, norm_k_init, beta, k)
    c1 = linearization_constant(norm2_init, c_small, dim)
    z0 = norm2_init
    micro_side = c0 * 2.0 ** (-1.0 - beta / k) * z0 ** (beta / k - 1.0 / zeta)
    macro_side = c1 * 2.0 ** (-1.0 - 2.0 / dim) * z0 ** (2.0 / dim - 1.0 / zeta)
    combined = min(micro_side, macro_side)
    c_rate = (kappa / zeta) * combined * (2.0 / (1.0 + delta)) ** (1.0 + 1.0 / zeta)
    return RateModel(
        dim=dim,
        k=k,
        beta=beta,
        zeta=zeta,
        c_nash=c_nash,
        c_small=c_small,
        c0=c0,
        c1=c1,
        c_rate=c_rate,
        z0=z0,
        h0=h0,
        delta=delta,
        kappa=kappa,
        combined=combined,
    )


def groenwall_bound(h0: float, c_rate: float, zeta: float, t):
    """H0 (1 + C H0^{1/zeta} t)^{-zeta}."""
    t = np.asarray(t, dtype=float)
    return h0 * (1.0 + c_rate * h0 ** (1.0 / zeta) * t) ** (-zeta)


def fit_rate(
    times: Sequence[float],
    values: Sequence[float],
    t_start: float,
    t_stop: float = np.inf,
    confidence: float = 0.95,
) -> dict:
    """Slope of log(values) against log(1 + t) on [t_start, t_stop] with a Student t interval.

    With fewer than three samples in the window the last half of the samples
    up to t_stop is used instead and `fallback` is set.
    """
    times = np.asarray(times, dtype=float)
    values = np.asarray(values, dtype=float)
    usable = (times <= t_stop) & (values > 0.0)
    mask = usable & (times >= t_start)
    fallback = False
    if np.count_nonzero(mask) < 3:
        fallback = True
        index = np.nonzero(usable)[0]
        mask = np.zeros_like(usable)
        mask[index[len(index) // 2 :]] = True
    n = int(np.count_nonzero(mask))
    if n < 3:
        raise NumericError(f"only {n} usable samples for a rate fit")
    fit = stats.linregress(np.log1p(times[mask]), np.log(values[mask]))
    half = float(stats.t.ppf(0.5 + 0.5 * confidence, n - 2)) * float(fit.stderr)
    return {
        "slope": float(fit.slope),
        "ci_low": float(fit.slope) - half,
        "ci_high": float(fit.slope) + half,
        "n": n,
        "fallback": fallback,
        "t_start": float(times[mask][0]),
        "t_stop": float(times[mask][-1]),
    }


def trajectory_margins(states: Sequence[HypoState], model: RateModel) -> dict[str, np.ndarray]:
    """Relative margins of every decay inequality along a run; negative means violated."""
    h = np.array([s.h_entropy for s in states])
    norm2 = np.array([s.norm2 for s in states])
    macro2 = np.array([s.macro2 for s in states])
    micro_plain = np.maximum(norm2 - macro2, 0.0)
    micro2 = np.array([s.micro2 for s in states])
    pairing = np.array([s.pairing for s in states])
    times = np.array([s.time for s in states])
    scale = norm2[0] + 1e-300
    phi = np.array([phi_lower(y, model.c_small, model.dim) for y in macro2])
    bound = groenwall_bound(model.h0, model.c_rate, model.zeta, times)
    rise = np.concatenate([[0.0], np.diff(h)])
    return {
        "groenwall": (bound - h) / scale,
        "phi": (pairing - phi) / scale,
        "psi": (micro2 - psi_lower(micro_plain, model.c0, model.beta, model.k)) / scale,
        "combined": (micro2 + pairing - model.combined * norm2 ** (1.0 + 1.0 / model.zeta)) / scale,
        "h_monotone": -rise / scale,
    }


def count_violations(margins: dict[str, np.ndarray], tolerance: float = BOUND_TOLERANCE) -> dict[str, int]:
    return {name: int(np.count_nonzero(values < -tolerance)) for name, values in margins.items()}
