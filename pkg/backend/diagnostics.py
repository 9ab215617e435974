"""Macroscopic projection, auxiliary operator and modified entropy on the torus.

All quantities use the grid inner product
    <f, g> = dx * sum_x sum_v w f g / F
and spectral derivatives in x, so the algebraic identities behind the
entropy production (Pi L = 0, L Pi = 0, T skew, Pi T Pi = 0) hold to
round-off on the grid.
"""

from __future__ import annotations

from typing import Optional

import numpy as np
from scipy import fft
from scipy.optimize import minimize_scalar

from backend.collision import CollisionOperator
from backend.equilibria import moments, temperature
from backend.errors import ConfigError
from backend.transport import wavenumbers
from models import DistributionField, Equilibrium, HypoState, StepConstants

AUDIT_TOLERANCE = 1e-10


def spectral_derivative(u: np.ndarray, x_extent: float, order: int = 1) -> np.ndarray:
    """d^order/dx^order along axis 0."""
    nx = u.shape[0]
    xi = wavenumbers(x_extent, nx)
    factor = (1j * xi) ** order
    if u.ndim > 1:
        factor = factor.reshape((-1,) + (1,) * (u.ndim - 1))
    return fft.irfft(factor * fft.rfft(u, axis=0), n=nx, axis=0)


def solve_elliptic(rho: np.ndarray, theta: float, x_extent: float) -> np.ndarray:
    """u - Theta u'' = rho on the torus."""
    nx = rho.shape[0]
    xi = wavenumbers(x_extent, nx)
    return fft.irfft(fft.rfft(rho) / (1.0 + theta * xi * xi), n=nx)


def atpi_pairing(u: np.ndarray, theta: float, x_extent: float) -> float:
    """<A T Pi f, Pi f> = Theta ||u'||^2 + Theta^2 ||u''||^2."""
    dx = x_extent / u.shape[0]
    du = spectral_derivative(u, x_extent, 1)
    d2u = spectral_derivative(u, x_extent, 2)
    return float(dx * (theta * np.sum(du * du) + theta * theta * np.sum(d2u * d2u)))


class HypocoercivityDiagnostics:
    """Handles Pi, T, A, the modified entropy H and its production D on one grid."""

    def __init__(self, eq: Equilibrium, operator: CollisionOperator, x_extent: float, nx: int, beta: float):
        self.eq = eq
        self.operator = operator
        self.x_extent = float(x_extent)
        self.nx = int(nx)
        self.beta = float(beta)
        self.dx = self.x_extent / self.nx
        self.theta = temperature(eq)
        self.xi = wavenumbers(self.x_extent, self.nx)
        self._weights = eq.grid.weights / eq.density

    def rho(self, values: np.ndarray) -> np.ndarray:
        return values @ self.eq.grid.weights

    def first_moment(self, values: np.ndarray) -> np.ndarray:
        return values @ (self.eq.grid.weights * self.eq.grid.nodes)

    def project_pi(self, values: np.ndarray) -> np.ndarray:
        return np.outer(self.rho(values), self.eq.density)

    def apply_T(self, values: np.ndarray) -> np.ndarray:
        return spectral_derivative(values, self.x_extent) * self.eq.grid.nodes

    def apply_A(self, values: np.ndarray) -> np.ndarray:
        j_hat = fft.rfft(self.first_moment(values))
        w_hat = -1j * self.xi * j_hat / (1.0 + self.theta * self.xi**2)
        return np.outer(fft.irfft(w_hat, n=self.nx), self.eq.density)

    def apply_TA(self, values: np.ndarray) -> np.ndarray:
        return self.apply_T(self.apply_A(values))

    def inner(self, f: np.ndarray, g: np.ndarray, k: float = 0.0) -> float:
        weights = self._weights if k == 0.0 else self._weights * self.eq.grid.bracket**k
        return float(self.dx * np.sum((f * g) @ weights))

    def norm2(self, values: np.ndarray, k: float = 0.0) -> float:
        return self.inner(values, values, k)

    def micro_norm2(self, values: np.ndarray) -> float:
        """||(I - Pi) f||^2 in L^2(<v>^{-beta} d mu)."""
        return self.norm2(values - self.project_pi(values), -self.beta)

    def l1_norm(self, values: np.ndarray) -> float:
        return float(self.dx * np.sum(np.abs(values) @ self.eq.grid.weights))

    def pairing(self, values: np.ndarray) -> float:
        u = solve_elliptic(self.rho(values), self.theta, self.x_extent)
        return atpi_pairing(u, self.theta, self.x_extent)

    def entropy_H(self, values: np.ndarray, delta: float) -> float:
        return 0.5 * self.norm2(values) + delta * self.inner(self.apply_A(values), values)

    def production_terms(self, values: np.ndarray, delta: float) -> tuple[float, float, float, float, float]:
        """The five pieces of D; their sum is -dH/dt along f_t = (L - T) f."""
        macro = self.project_pi(values)
        micro = values - macro
        collision = -self.inner(self.operator.apply(values), values)
        macro_pairing = delta * self.inner(self.apply_A(self.apply_T(macro)), macro)
        transport_cross = delta * self.inner(self.apply_A(self.apply_T(micro)), macro)
        micro_transport = -delta * self.inner(self.apply_TA(micro), micro)
        collision_cross = -delta * self.inner(self.apply_A(self.operator.apply(micro)), macro)
        return collision, macro_pairing, transport_cross, micro_transport, collision_cross

    def production_D(self, values: np.ndarray, delta: float) -> float:
        return float(sum(self.production_terms(values, delta)))

    def snapshot(self, field: DistributionField, delta: float, k: Optional[float] = None) -> HypoState:
        values = field.values
        terms = self.production_terms(values, delta)
        return HypoState(
            time=field.time,
            norm2=self.norm2(values),
            h_entropy=self.entropy_H(values, delta),
            d_production=float(sum(terms)),
            d_terms=terms,
            micro2=self.micro_norm2(values),
            pairing=self.pairing(values),
            l1_norm=self.l1_norm(values),
            norm_k=float(np.sqrt(self.norm2(values, k))) if k is not None else float("nan"),
            macro2=self.norm2(self.project_pi(values)),
        )


def step_constants(eq: Equilibrium, operator: CollisionOperator, beta: float, c_micro: float) -> StepConstants:
    """C2 = Theta_{beta+2}/Theta, C4 = Theta_{beta+4}/Theta, C_F = ||L(vF)||_beta / sqrt(Theta)."""
    table = moments(eq, [beta + 2.0, beta + 4.0])
    theta = temperature(eq)
    flux_image = operator.apply(eq.grid.nodes * eq.density)
    weights = eq.grid.weights * eq.grid.bracket**beta / eq.density
    c_f = float(np.sqrt(np.sum(weights * flux_image**2)) / np.sqrt(theta))
    return StepConstants(
        c2=table[beta + 2.0] / theta,
        c4=table[beta + 4.0] / theta,
        c_f=c_f,
        c_micro=float(c_micro),
        theta=theta,
    )


def kappa_of_delta(constants: StepConstants, delta: float) -> float:
    """Smallest eigenvalue of the quadratic form bounding D from below."""
    off = -0.5 * delta * (constants.c4 + constants.c_f)
    form = np.array([[constants.c_micro - delta * constants.c2, off], [off, delta]])
    return float(np.linalg.eigvalsh(form)[0])


def choose_delta(constants: StepConstants) -> tuple[float, float]:
    """delta in (0, 1) maximizing kappa.

    The optimum scales like c_micro / (c4 + c_f)^2, which is tiny for heavy
    tails, so the search runs over log(delta).
    """
    if not constants.c_micro > 0.0:
        raise ConfigError("collision", f"micro-coercivity constant {constants.c_micro:g} is not positive")
    result = minimize_scalar(
        lambda t: -kappa_of_delta(constants, float(np.exp(t))),
        bounds=(np.log(1e-30), 0.0),
        method="bounded",
        options={"xatol": 1e-10},
    )
    delta = float(np.exp(result.x))
    kappa = kappa_of_delta(constants, delta)
    if not (0.0 < delta < 1.0 and kappa > 0.0):
        raise ConfigError("collision", "no delta in (0, 1) makes the entropy production coercive")
    return delta, kappa


def audit_field(
    diag: HypocoercivityDiagnostics,
    constants: StepConstants,
    delta: float,
    kappa: float,
    values: np.ndarray,
    other: Optional[np.ndarray] = None,
) -> dict[str, float]:
    """Relative margins of every inequality behind the entropy production bound.

    A margin below -AUDIT_TOLERANCE is a violation.
    """
    norm2 = diag.norm2(values)
    scale = norm2 * (1.0 + constants.c2 + constants.c4 + constants.c_f) + 1e-300
    macro = diag.project_pi(values)
    x = np.sqrt(diag.micro_norm2(values))
    y = np.sqrt(diag.pairing(values))
    terms = diag.production_terms(values, 1.0)
    h = diag.entropy_H(values, delta)
    other = values[::-1] if other is None else other
    margins = {
        "pi_idempotent": -float(np.max(np.abs(diag.project_pi(macro) - macro))) / (np.max(np.abs(macro)) + 1e-300),
        "pi_selfadjoint": -abs(diag.inner(macro, other) - diag.inner(values, diag.project_pi(other)))
        / (np.sqrt(norm2 * diag.norm2(other)) + 1e-300),
        "ta_nonnegative": diag.inner(diag.apply_TA(values), values) / scale,
        "micro": (terms[0] - constants.c_micro * x * x) / scale,
        "step2": (constants.c4 * x * y - abs(terms[2])) / scale,
        "step3": (constants.c2 * x * x - abs(terms[3])) / scale,
        "step4": (constants.c_f * x * y - abs(terms[4])) / scale,
        "prop2": (diag.production_D(values, delta) - kappa * (x * x + y * y)) / scale,
        "h_equivalence": min(h - 0.5 * (1.0 - delta) * norm2, 0.5 * (1.0 + delta) * norm2 - h) / scale,
    }
    # the pairing term itself must equal Y^2
    margins["pairing_identity"] = -abs(terms[1] - y * y) / scale
    return margins
