"""Experiment orchestration: model setup, runs, audits and report files.

Every mode writes a CSV time series or table, a plain-text constants
report and a JSON summary into the output directory. Audit margins are
relative; a margin below the slack of its inequality is a failure.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, replace
from typing import Optional

import numpy as np

from backend.collision import CollisionOperator, build_operator, drift_constants, lyapunov_sides, micro_constant_scattering
from backend.decay import (
    BOUND_TOLERANCE,
    build_rate_model,
    count_violations,
    fit_rate,
    nash_constant,
    nash_margin,
    predicted_zeta,
    trajectory_margins,
)
from backend.diagnostics import AUDIT_TOLERANCE, HypocoercivityDiagnostics, audit_field, choose_delta, step_constants
from backend.equilibria import build_equilibrium, build_velocity_grid, moments, mu_norm2, temperature
from backend.errors import ConfigError
from backend.fields import bump_initial_field, fluctuation, random_field, tail_profile
from backend.homogeneous import (
    holder_split_margin,
    random_bounded_h,
    relaxation_audit,
    relaxation_constants,
    run_homogeneous,
    stroock_audit,
    tail_summary,
    weak_poincare_audit,
    weak_poincare_constant,
)
from backend.moments import (
    absorption_margin,
    build_splitting,
    holder_margin,
    moment_bound,
    moment_propagation_audit,
    semigroup_B_decay,
)
from backend.services.config_loader import config_to_dict
from backend.services.report_writer import read_csv, write_csv, write_json, write_records, write_report
from backend.spectral import (
    REFINEMENT_TOLERANCE,
    build_schrodinger,
    compute_c_star,
    micro_coercivity_constant,
    rayleigh_audit,
    threshold_sweep,
)
from backend.transport import (
    WIDTH_FACTOR,
    KineticSolver,
    autocorrelation_width,
    check_torus_extent,
    spatial_grid,
    torus_extent,
    wrap_time,
)
from models import (
    Equilibrium,
    ExperimentConfig,
    ExperimentResult,
    HypoReport,
    HypoState,
    StepConstants,
)

STATE_COLUMNS = (
    "t",
    "norm2",
    "H",
    "D",
    "micro2",
    "pairing",
    "margin_prop2",
    "margin_h_equivalence",
    "margin_groenwall",
    "margin_phi",
    "margin_psi",
    "margin_combined",
    "margin_h_monotone",
    "norm_k",
    "l1",
    "wrap",
    "D1",
    "D2",
    "D3",
    "D4",
    "D5",
)
HOMOGENEOUS_COLUMNS = (
    "t",
    "y",
    "bound",
    "margin_bound",
    "energy",
    "mass",
    "norm_k",
    "h_sup",
    "stroock_bound",
    "margin_stroock",
)
SPECTRAL_COLUMNS = ("alpha", "beta", "R", "n", "lambda1", "sigma0", "c_star", "c_corollary", "converged")
SWEEP_COLUMNS = (
    "zeta_pred",
    "zeta_fit",
    "ci_low",
    "ci_high",
    "bound_violations",
    "moment_ratio",
    "groenwall_margin",
    "norm2_ratio",
    "passed",
)
FIELD_AUDITS = (
    "pi_idempotent",
    "pi_selfadjoint",
    "ta_nonnegative",
    "micro",
    "step2",
    "step3",
    "step4",
    "prop2",
    "h_equivalence",
    "pairing_identity",
)
OPERATOR_AUDITS = ("symmetry", "negativity", "kernel", "mass", "lyapunov")

PROP2_SLACK = 1e-7  # relative slack of the entropy production bound along a run
HOMOGENEOUS_TAU = 1.0  # weak Poincare exponent of the homogeneous audit (eta = beta / 2)
THRESHOLD_DOUBLINGS = 3
NASH_GRID = (60.0, 1201)  # torus width and points of the Nash battery
TREND_TOLERANCE = 0.05  # fitted rates may dip this much between neighbouring k
MICRO_AGREEMENT = 0.02  # grid and spectral micro-coercivity constants, relative


@dataclass
class KineticSetup:
    """Represents everything a kinetic run or audit shares."""

    eq: Equilibrium
    operator: CollisionOperator
    diag: HypocoercivityDiagnostics
    constants: StepConstants
    delta: float
    kappa: float
    x_extent: float
    theta: float


def state_margins(state: HypoState, constants: StepConstants, delta: float, kappa: float) -> dict[str, float]:
    """Relative margins of D >= kappa (micro2 + pairing) and of the H ~ ||f||^2 equivalence."""
    scale = state.norm2 * (1.0 + constants.c2 + constants.c4 + constants.c_f) + 1e-300
    return {
        "prop2": (state.d_production - kappa * (state.micro2 + state.pairing)) / scale,
        "h_equivalence": min(
            state.h_entropy - 0.5 * (1.0 - delta) * state.norm2,
            0.5 * (1.0 + delta) * state.norm2 - state.h_entropy,
        )
        / scale,
    }


def entropy_identity_defect(states: list[HypoState]) -> float:
    """max |dH/dt + D| between outputs, trapezoid in D, relative to max D."""
    if len(states) < 2:
        return 0.0
    t = np.array([s.time for s in states])
    h = np.array([s.h_entropy for s in states])
    d = np.array([s.d_production for s in states])
    defect = np.diff(h) / np.diff(t) + 0.5 * (d[:-1] + d[1:])
    return float(np.max(np.abs(defect)) / (np.max(np.abs(d)) + 1e-300))


def build_model_equilibrium(cfg: ExperimentConfig) -> Equilibrium:
    """F on the configured velocity grid, resolving the moments the entropy constants need."""
    k_max = max(cfg.k, cfg.beta + 4.0)
    if cfg.grid.v_max is None:
        return build_equilibrium(
            cfg.alpha, cfg.dim, k_max=k_max, n=cfg.grid.nv, scale=cfg.grid.v_scale, tail_tol=cfg.tail_tol
        )
    vgrid = build_velocity_grid(cfg.grid.v_max, cfg.grid.nv, cfg.dim, cfg.grid.v_scale)
    return build_equilibrium(cfg.alpha, cfg.dim, vgrid, k_max=k_max, tail_tol=cfg.tail_tol)


def micro_constant(op: CollisionOperator) -> float:
    if op.kind == "fokker_planck":
        return micro_coercivity_constant(op.eq, op.spec.beta)
    return micro_constant_scattering(op)


def sweep_config(cfg: ExperimentConfig, value: float) -> ExperimentConfig:
    """One point of the sweep: a kinetic run with the swept parameter replaced."""
    out_dir = os.path.join(cfg.outputs.directory, f"{cfg.sweep.axis}={value:g}")
    base = replace(cfg, mode="kinetic", outputs=replace(cfg.outputs, directory=out_dir))
    if cfg.sweep.axis == "k":
        return replace(base, k=float(value))
    collision = cfg.collision
    if collision.kind == "fokker_planck":
        collision = replace(collision, beta=2.0 * (1.0 - value))
    return replace(base, alpha=float(value), collision=collision)


def _min_margins(margins: dict[str, list[float]]) -> dict[str, float]:
    return {name: float(np.min(values)) for name, values in margins.items() if len(values)}


def _failures(minima: dict[str, float], tolerances: dict[str, float]) -> dict[str, float]:
    return {name: value for name, value in minima.items() if value < -tolerances.get(name, BOUND_TOLERANCE)}


class HypoSuite:
    """Handles one configured experiment from model setup to report files."""

    def __init__(self, cfg: ExperimentConfig, progress: Optional[bool] = None):
        self.cfg = cfg
        self.progress = cfg.outputs.progress if progress is None else bool(progress)
        self._eq: Optional[Equilibrium] = None
        self._operator: Optional[CollisionOperator] = None

    @property
    def eq(self) -> Equilibrium:
        if self._eq is None:
            self._eq = build_model_equilibrium(self.cfg)
        return self._eq

    @property
    def operator(self) -> CollisionOperator:
        if self._operator is None:
            self._operator = build_operator(self.cfg.collision, self.eq)
        return self._operator

    def path(self, name: str) -> str:
        return os.path.join(self.cfg.outputs.directory, name)

    def kinetic_setup(self) -> KineticSetup:
        cfg = self.cfg
        eq, op = self.eq, self.operator
        theta = temperature(eq)
        if cfg.grid.x_extent is None:
            x_extent = torus_extent(theta, cfg.solver.t_end)
        else:
            x_extent = cfg.grid.x_extent
            check_torus_extent(x_extent, theta, cfg.solver.t_end)
        constants = step_constants(eq, op, cfg.beta, micro_constant(op))
        delta, kappa = choose_delta(constants)
        diag = HypocoercivityDiagnostics(eq, op, x_extent, cfg.grid.nx, cfg.beta)
        return KineticSetup(eq, op, diag, constants, delta, kappa, x_extent, theta)

    def run(self) -> ExperimentResult:
        modes = {
            "kinetic": self.simulate,
            "homogeneous": self.homogeneous,
            "spectral": self.spectral,
            "rates-sweep": self.sweep,
            "audit": self.audit,
        }
        if self.cfg.mode not in modes:
            raise ConfigError("experiment.mode", f"unknown mode {self.cfg.mode!r}")
        return modes[self.cfg.mode]()

    def _write_report(self, title: str, constants: dict, summary: dict, failures: dict, **extra: dict) -> list[str]:
        sections = {
            "config": config_to_dict(self.cfg),
            "constants": constants,
            "summary": summary,
            **extra,
            "failures": failures or {"none": 0},
        }
        report = write_report(self.path("constants.txt"), title, sections)
        data = write_json(self.path("summary.json"), sections)
        return [report, data]

    def simulate(self) -> ExperimentResult:
        """Kinetic run from a density bump plus a heavy tail, audited at every output."""
        cfg = self.cfg
        setup = self.kinetic_setup()
        eq, diag, k = setup.eq, setup.diag, cfg.k
        f_init = bump_initial_field(eq, setup.x_extent, cfg.grid.nx, k, cfg.initial)
        limit = setup.x_extent / WIDTH_FACTOR

        def observe(field) -> HypoReport:
            g = fluctuation(eq, field)
            state = diag.snapshot(g, setup.delta, k)
            width = autocorrelation_width(diag.rho(g.values), setup.x_extent)
            return HypoReport(state, state_margins(state, setup.constants, setup.delta, setup.kappa), width / limit)

        solver = KineticSolver(eq, setup.operator, setup.x_extent, cfg.grid.nx, cfg.solver)
        _, reports = solver.run(f_init, observer=observe, progress=self.progress)
        states = [r.state for r in reports]
        times = np.array([s.time for s in states])

        splitting = build_splitting(setup.operator, k)
        decay = semigroup_B_decay(
            setup.operator, splitting, fluctuation(eq, f_init), cfg.solver, progress=self.progress
        )
        bound = moment_bound(splitting, prefactor_fit=decay.prefactor_fit)
        model = build_rate_model(
            dim=cfg.dim,
            k=k,
            beta=cfg.beta,
            theta=setup.theta,
            theta_k=moments(eq, [k])[k],
            kk=bound.kk,
            norm2_init=states[0].norm2,
            norm_k_init=states[0].norm_k,
            l1_init=diag.l1_norm(fluctuation(eq, f_init).values),
            h0=states[0].h_entropy,
            delta=setup.delta,
            kappa=setup.kappa,
        )
        margins = trajectory_margins(states, model)
        violations = count_violations(margins)
        moment = moment_propagation_audit(np.array([s.norm_k for s in states]), bound)

        widths = np.array([r.wrap_indicator for r in reports]) * limit
        t_wrap = wrap_time(times, widths, setup.x_extent, setup.theta)
        t_stop = min(cfg.solver.t_end, t_wrap)
        if np.count_nonzero(times <= t_stop) < 3:
            t_stop = cfg.solver.t_end
        fit = fit_rate(times, [s.norm2 for s in states], 0.25 * cfg.solver.t_end, t_stop=t_stop)

        rows = []
        for i, report in enumerate(reports):
            s = report.state
            rows.append(
                (
                    s.time,
                    s.norm2,
                    s.h_entropy,
                    s.d_production,
                    s.micro2,
                    s.pairing,
                    report.margins["prop2"],
                    report.margins["h_equivalence"],
                    margins["groenwall"][i],
                    margins["phi"][i],
                    margins["psi"][i],
                    margins["combined"][i],
                    margins["h_monotone"][i],
                    s.norm_k,
                    s.l1_norm,
                    report.wrap_indicator,
                    *s.d_terms,
                )
            )
        csv_path = write_csv(self.path("timeseries.csv"), STATE_COLUMNS, rows)

        minima = {
            "prop2": min(r.margins["prop2"] for r in reports),
            "h_equivalence": min(r.margins["h_equivalence"] for r in reports),
        }
        minima.update({name: float(np.min(values)) for name, values in margins.items()})
        failures = _failures(minima, {"prop2": PROP2_SLACK, "h_equivalence": PROP2_SLACK})
        if not moment["passed"]:
            failures["moment_propagation"] = moment["margin"]
        if not decay.monotone:
            failures["b_monotone"] = float(np.min(-np.diff(decay.norm_k1) / decay.norm_k1[:-1]))
        if decay.closed_form_margin < -BOUND_TOLERANCE:
            failures["b_closed_form"] = decay.closed_form_margin
        moments_section = {
            "kk": bound.kk,
            "observed_sup": moment["sup_ratio"],
            "duhamel_bound": bound.duhamel_integral,
            "margin": moment["margin"],
            "exponent": bound.exponent,
            "prefactor": bound.prefactor,
            "prefactor_fit": bound.prefactor_fit,
            "prefactor_closed": bound.prefactor_closed,
            "prefactor_fitted": bool(bound.prefactor_fit >= bound.prefactor_closed),
            "b_monotone": decay.monotone,
            "b_slope": decay.slope,
            "b_slope_predicted": -bound.exponent,
            "b_closed_form_margin": decay.closed_form_margin,
        }

        zeta = predicted_zeta(cfg.dim, k, cfg.beta)
        summary = {
            "zeta_pred": zeta,
            "zeta_fit": -fit["slope"],
            "ci_low": -fit["ci_high"],
            "ci_high": -fit["ci_low"],
            "fit_window": [fit["t_start"], fit["t_stop"]],
            "fit_fallback": fit["fallback"],
            "t_wrap": t_wrap,
            "bound_violations": int(sum(violations.values())),
            "violations": violations,
            "min_margins": minima,
            "moment_ratio": moment["sup_ratio"],
            "entropy_identity_defect": entropy_identity_defect(states),
            "outputs": len(states),
        }
        constants = {
            "step": asdict(setup.constants),
            "delta": setup.delta,
            "kappa": setup.kappa,
            "x_extent": setup.x_extent,
            "v_max": eq.grid.v_max,
            "rate_model": asdict(model),
            "splitting": asdict(splitting),
            "moment_bound": asdict(bound),
        }
        files = [csv_path] + self._write_report("kinetic run", constants, summary, failures, moments=moments_section)
        return ExperimentResult("kinetic", files, summary, failures)

    def homogeneous(self) -> ExperimentResult:
        """Space-homogeneous relaxation of a heavy-tailed datum against the algebraic bounds."""
        cfg = self.cfg
        if cfg.collision.kind != "fokker_planck":
            raise ConfigError("collision.kind", "homogeneous runs use the Fokker-Planck operator")
        eq, k = self.eq, cfg.k
        g_init = tail_profile(eq, k, cfg.initial.tail_excess)
        run = run_homogeneous(eq, g_init, cfg.solver, k=k, progress=self.progress)
        constants = relaxation_constants(eq, g_init, k)
        audit = relaxation_audit(run, constants)
        tail = tail_summary(run, constants, 0.25 * cfg.solver.t_end)
        c_weak = weak_poincare_constant(eq, HOMOGENEOUS_TAU, constants.c)
        stroock = stroock_audit(run, c_weak, HOMOGENEOUS_TAU)
        weak = weak_poincare_audit(
            eq, HOMOGENEOUS_TAU, samples=cfg.audit_samples, rng=np.random.default_rng(cfg.seed), c=constants.c
        )

        rows = zip(
            run.times,
            run.y,
            audit["bound"],
            audit["margins"],
            run.energy,
            run.mass,
            run.norm_k,
            run.h_sup,
            stroock["bound"],
            stroock["margins"],
        )
        csv_path = write_csv(self.path("homogeneous.csv"), HOMOGENEOUS_COLUMNS, list(rows))

        failures = {}
        if not audit["passed"]:
            failures["relaxation_bound"] = min(audit["bound_margin"], audit["ode_margin"], audit["moment_margin"])
        if not stroock["passed"]:
            failures["stroock_bound"] = stroock["min_margin"]
        if weak["violations"]:
            failures["weak_poincare"] = min(weak["min_margin"], weak["min_r_margin"])

        summary = {
            "slope": tail["slope"],
            "slope_predicted": tail["predicted"],
            "ci_low": tail["ci_low"],
            "ci_high": tail["ci_high"],
            "fit_fallback": tail["fallback"],
            "above_exponential_from": tail["above_proxy_from"],
            "final_over_exponential": tail["final_over_proxy"],
            "bound_margin": audit["bound_margin"],
            "ode_margin": audit["ode_margin"],
            "moment_ratio": audit["moment_ratio"],
            "stroock_margin": stroock["min_margin"],
            "weak_poincare_margin": weak["min_margin"],
            "weak_poincare_r_margin": weak["min_r_margin"],
            "audit_seed": cfg.seed,
        }
        report_constants = {
            "relaxation": {**asdict(constants), "theta": constants.theta},
            "weak_poincare": {"tau": HOMOGENEOUS_TAU, "c_weak": c_weak},
            "v_max": eq.grid.v_max,
        }
        files = [csv_path] + self._write_report("homogeneous run", report_constants, summary, failures)
        return ExperimentResult("homogeneous", files, summary, failures)

    def spectral(self) -> ExperimentResult:
        """C_star with its refinement study, the Rayleigh audit and the threshold table."""
        cfg = self.cfg
        sc = cfg.spectral
        problem = build_schrodinger(cfg.alpha, cfg.beta, sc.domain_R, sc.resolution, scale=sc.scale)
        result = compute_c_star(problem)
        if result.c_star > 0.0:
            rayleigh = rayleigh_audit(problem, result.c_star, cfg.audit_samples, np.random.default_rng(cfg.seed))
        else:
            # no spectral gap below the threshold: nothing to audit
            rayleigh = {"min_margin": float("inf"), "centering_gap": 0.0}
        radii = [sc.domain_R * 2.0**j for j in range(THRESHOLD_DOUBLINGS + 1)]
        rows = threshold_sweep(cfg.alpha, [cfg.beta], radii, sc.resolution, sc.scale)
        for i, row in enumerate(rows):
            # each radius is checked against its neighbouring doubling
            other = rows[i + 1] if i + 1 < len(rows) else rows[i - 1]
            row["converged"] = int(
                all(
                    abs(other[name] - row[name]) <= REFINEMENT_TOLERANCE * abs(row[name])
                    for name in ("c_star", "c_corollary")
                )
            )
        csv_path = write_records(self.path("spectral.csv"), rows, SPECTRAL_COLUMNS)
        lambdas = np.array([row["lambda1"] for row in rows])

        failures = {}
        if rayleigh["min_margin"] < -BOUND_TOLERANCE:
            failures["rayleigh"] = rayleigh["min_margin"]
        if rayleigh["centering_gap"] < -BOUND_TOLERANCE:
            failures["centering"] = rayleigh["centering_gap"]
        c_micro_grid = None
        micro_gap = None
        if cfg.collision.kind == "fokker_planck":
            c_micro_grid = micro_coercivity_constant(self.eq, cfg.beta)
            micro_gap = abs(c_micro_grid - result.c_micro) / result.c_micro
            if result.converged and micro_gap > MICRO_AGREEMENT:
                failures["micro_agreement"] = -micro_gap

        summary = {
            "converged": result.converged,
            "refinements": result.refinements,
            "sigma0_grid": result.sigma0_grid,
            "lambda_ratios": (lambdas[1:] / lambdas[:-1]).tolist(),
            "rayleigh_margin": rayleigh["min_margin"],
            "micro_gap": micro_gap,
            "audit_seed": cfg.seed,
        }
        constants = {
            "c_star": result.c_star,
            "c_corollary": result.c_corollary,
            "sigma0": result.sigma0,
            "lambda1": result.lambda1,
            "c_star_weighted": result.c_star_weighted,
            "c_micro": result.c_micro,
            "c_micro_grid": c_micro_grid,
            "c_alpha_beta": problem.c_alpha_beta,
            "domain_R": result.domain_R,
            "resolution": result.resolution,
        }
        files = [csv_path] + self._write_report("spectral constants", constants, summary, failures)
        return ExperimentResult("spectral", files, summary, failures)

    def sweep(self) -> ExperimentResult:
        """Independent kinetic runs over the sweep axis, tabulated in axis order."""
        cfg = self.cfg
        values = sorted(cfg.sweep.values)
        progress = self.progress and cfg.sweep.workers == 1

        def run_one(value: float) -> ExperimentResult:
            return HypoSuite(sweep_config(cfg, value), progress=progress).simulate()

        with ThreadPoolExecutor(max_workers=cfg.sweep.workers) as pool:
            results = list(pool.map(run_one, values))

        rows, failures, files = [], {}, []
        for value, result in zip(values, results):
            s = result.summary
            header, series = read_csv(result.files[0])
            norm2 = series[:, header.index("norm2")]
            rows.append(
                (
                    value,
                    s["zeta_pred"],
                    s["zeta_fit"],
                    s["ci_low"],
                    s["ci_high"],
                    s["bound_violations"],
                    s["moment_ratio"],
                    s["min_margins"].get("groenwall", 0.0),
                    norm2[-1] / norm2[0],
                    int(result.passed),
                )
            )
            failures.update({f"{cfg.sweep.axis}={value:g}:{name}": m for name, m in result.failures.items()})
            files.extend(result.files)
        table = write_csv(self.path("sweep.csv"), (cfg.sweep.axis,) + SWEEP_COLUMNS, rows)

        fitted = np.array([row[2] for row in rows])
        summary = {
            "axis": cfg.sweep.axis,
            "values": values,
            "zeta_fit": fitted.tolist(),
            "trend_monotone": bool(np.all(np.diff(fitted) >= -TREND_TOLERANCE)) if cfg.sweep.axis == "k" else None,
            "bound_violations": int(sum(row[5] for row in rows)),
        }
        files = [table] + files + self._write_report("rate sweep", {"runs": len(rows)}, summary, failures)
        return ExperimentResult("rates-sweep", files, summary, failures)

    def audit(self) -> ExperimentResult:
        """Operator identities and every pointwise inequality on seeded random fields, no time stepping."""
        cfg = self.cfg
        rng = np.random.default_rng(cfg.seed)
        setup = self.kinetic_setup()
        eq, op = setup.eq, setup.operator
        margins: dict[str, list[float]] = {}

        def record(name: str, value: float) -> None:
            margins.setdefault(name, []).append(float(value))

        for name, value in operator_margins(op).items():
            record(name, value)

        drift = drift_constants(op, cfg.k)
        splitting = build_splitting(op, cfg.k)
        dx = setup.x_extent / cfg.grid.nx
        for _ in range(cfg.audit_samples):
            values = random_field(eq, setup.x_extent, cfg.grid.nx, rng).values
            other = random_field(eq, setup.x_extent, cfg.grid.nx, rng).values
            for name, value in audit_field(setup.diag, setup.constants, setup.delta, setup.kappa, values, other).items():
                record(name, value)
            record("holder_moments", holder_margin(eq, splitting, values, dx))
            record("absorption", absorption_margin(eq, splitting, values, dx))
            profile = np.abs(values[int(rng.integers(values.shape[0]))])
            lhs, rhs = lyapunov_sides(op, drift, profile)
            record("lyapunov", (rhs - lhs) / ((drift.a_k + drift.b_k) * mu_norm2(eq, profile, cfg.k) + 1e-300))

        c_nash = nash_constant(cfg.dim)
        x_extent, nx = NASH_GRID
        x = spatial_grid(x_extent, nx)
        for _ in range(cfg.audit_samples):
            u = np.zeros(nx)
            for _ in range(int(rng.integers(1, 4))):
                centre = rng.uniform(0.35 * x_extent, 0.65 * x_extent)
                width = rng.uniform(0.3, 3.0)
                u += rng.normal() * np.exp(-((x - centre) ** 2) / (2.0 * width**2))
            record("nash", nash_margin(u, x_extent, c_nash))

        if op.kind == "fokker_planck":
            c = micro_coercivity_constant(eq, cfg.beta)
            weak = weak_poincare_audit(eq, HOMOGENEOUS_TAU, samples=cfg.audit_samples, rng=rng, c=c)
            record("weak_poincare", weak["min_margin"])
            record("weak_poincare_r", weak["min_r_margin"])
            for _ in range(cfg.audit_samples):
                record("holder_split", holder_split_margin(eq, random_bounded_h(eq, rng), cfg.k, cfg.beta))

        minima = _min_margins(margins)
        tolerances = {name: AUDIT_TOLERANCE for name in FIELD_AUDITS + OPERATOR_AUDITS}
        failures = _failures(minima, tolerances)

        counts = {name: len(values) for name, values in margins.items()}
        summary = {"min_margins": minima, "samples": counts, "audit_seed": cfg.seed}
        constants = {
            "step": asdict(setup.constants),
            "delta": setup.delta,
            "kappa": setup.kappa,
            "drift": asdict(drift),
            "splitting": asdict(splitting),
            "c_nash": c_nash,
            "x_extent": setup.x_extent,
        }
        rows = [(name, minima[name], counts[name]) for name in sorted(minima)]
        table = write_csv(self.path("audit.csv"), ("inequality", "min_margin", "samples"), rows)
        files = [table] + self._write_report("random-field audit", constants, summary, failures)
        return ExperimentResult("audit", files, summary, failures)


def operator_margins(op: CollisionOperator) -> dict[str, float]:
    """Relative defects of mu-symmetry, negativity, L F = 0 and mass conservation."""
    eq = op.eq
    w, F = eq.grid.weights, eq.density
    matrix = op.matrix()
    gram = (w / F)[:, None] * matrix
    half = np.sqrt(w / F)
    similar = half[:, None] * matrix / half[None, :]
    spectrum = np.linalg.eigvalsh(0.5 * (similar + similar.T))
    scale = float(np.max(np.abs(spectrum))) + 1e-300
    return {
        "symmetry": -float(np.max(np.abs(gram - gram.T))) / (float(np.max(np.abs(gram))) + 1e-300),
        "negativity": -max(float(spectrum[-1]), 0.0) / scale,
        "kernel": -float(np.max(np.abs(op.apply(F)))) / (float(np.max(np.abs(matrix))) * float(np.max(F)) + 1e-300),
        "mass": -float(np.max(np.abs(w @ matrix) / (w @ np.abs(matrix) + 1e-300))),
    }
