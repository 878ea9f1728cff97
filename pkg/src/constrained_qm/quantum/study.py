"""hbar-convergence studies: reference propagation against the evolved approximant."""

from __future__ import annotations

import logging
import time
from dataclasses import asdict, dataclass, field, replace
from typing import Optional

import numpy as np
from scipy.fft import next_fast_len

from ..classical import integrate_flat
from ..errors import ConfigurationError, ConstrainedQMError, StudyAbortedError
from ..packets import PacketParams, evaluate_packet
from .approximant import (
    SemiclassicalData,
    assemble,
    default_cut,
    map_grid,
    residual_at,
)
from .grid import Grid2D, GridState, l2_error, observables, x_marginal
from .propagate import boundary_fraction, split_step_propagate

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class GridRules:
    """Per-hbar discretization rules.

    ``points_per_width`` grid points resolve the narrowest packet width,
    ``pad`` is the relative box margin around the cut support (``pad_long``
    along the flat longitudinal axis, where small excited-mode components
    travel further than the packet), and the time step is ``dt_factor * hbar``.
    """

    points_per_width: float = 4.0
    dt_factor: float = 0.02
    pad: float = 0.1
    pad_long: float = 0.4
    pad_curve: float = 0.1
    classical_dt: float = 2e-3
    refine: int = 1
    max_points: int = 2**24


@dataclass
class RunRecord:
    hbar: float
    grid_nx: int
    grid_ny: int
    dt: float
    T: float
    l2_error_raw: float
    l2_error_phase_opt: float
    residual_norm: float
    runtime_seconds: float
    renorm_initial: float = 1.0
    renorm_final: float = 1.0
    boundary_fraction: float = 0.0
    transverse_spread: float = float("nan")
    mean_x_difference: float = float("nan")
    energy_drift: float = 0.0

    CSV_COLUMNS = (
        "hbar",
        "grid_nx",
        "grid_ny",
        "dt",
        "T",
        "l2_error_raw",
        "l2_error_phase_opt",
        "residual_norm",
        "runtime_seconds",
    )

    def row(self):
        return [getattr(self, c) for c in self.CSV_COLUMNS]


@dataclass
class StudyResult:
    scenario_id: str
    hbars: list
    records: list
    slope: float
    intercept: float
    threshold: float
    fit_residuals: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return bool(self.slope >= self.threshold)

    def to_dict(self) -> dict:
        return {
            "scenario": self.scenario_id,
            "hbar_list": list(map(float, self.hbars)),
            "slope": float(self.slope),
            "intercept": float(self.intercept),
            "threshold": float(self.threshold),
            "passed": self.passed,
            "fit_residuals": list(map(float, self.fit_residuals)),
            "records": [{k: v for k, v in asdict(r).items()} for r in self.records],
        }


def fit_slope(hbars, errors, floor: float = 1e-10):
    """Least-squares slope of log(error) vs log(hbar).

    When every error is below ``floor`` (e.g. a self-comparison) there is
    nothing to fit and the slope is reported as 0.
    """
    h = np.asarray(hbars, dtype=float)
    e = np.asarray(errors, dtype=float)
    if np.all(e < floor):
        return 0.0, float(np.log10(max(np.max(e), 1e-300))), [0.0] * len(e)
    if np.any(e <= 0):
        raise ValueError("errors must be positive to fit a log-log slope")
    X = np.log10(h)
    Y = np.log10(e)
    slope, intercept = np.polyfit(X, Y, 1)
    return float(slope), float(intercept), list(Y - (slope * X + intercept))


def check_hbar_list(hbars):
    h = [float(x) for x in hbars]
    if len(h) < 3:
        raise ConfigurationError("a convergence study needs at least three hbar values")
    if any(x <= 0 for x in h) or any(b >= a for a, b in zip(h, h[1:])):
        raise ConfigurationError("hbar values must be positive and strictly decreasing")
    return h


# ---------------------------------------------------------------------------
# per-hbar planning


@dataclass
class RunPlan:
    scenario: object
    hbar: float
    T: float
    profile: object
    trajectory: object
    cut: object
    grid: Grid2D
    dt: float
    steps: int
    initial: SemiclassicalData


def _packet_extents(traj, hbar, k=0):
    c = np.sqrt(hbar * (2 * k + 1) / 2)
    sig_min = c * np.min(np.abs(traj.A[:, 0, 0]))
    pmax = np.max(np.abs(traj.eta[:, 0])) + 6 * c * np.max(np.abs(traj.B[:, 0, 0]))
    return sig_min, pmax


def plan_grid(profile, cut, traj, hbar: float, rules: GridRules, k: int = 0) -> Grid2D:
    """Box around the cut support and spacings from the packet and transverse widths."""
    frame = profile.frame
    s = np.linspace(cut.s_outer[0], cut.s_outer[1], 400)
    pts = []
    for v in (-cut.v_outer, 0.0, cut.v_outer):
        pts.append(frame.position(s) + v * frame.normal(s))
    pts = np.concatenate(pts)
    lo = pts.min(axis=0)
    hi = pts.max(axis=0)
    ext = hi - lo
    if frame.kind == "flat":
        margin = np.array([rules.pad_long, rules.pad]) * ext
    else:
        margin = rules.pad_curve * np.full(2, ext.max())
    lo = lo - margin
    hi = hi + margin
    sig_s, pmax = _packet_extents(traj, hbar, k)
    ppw = rules.points_per_width
    wv = hbar**profile.beta * profile.transverse_width(traj.a[:, 0]) / np.sqrt(2 * profile.n + 1)
    d_long = min(np.sqrt(hbar) / 16.0, sig_s / ppw, np.pi * hbar / (1.5 * max(pmax, 1e-12)))
    d_trans = wv / ppw
    if frame.kind == "flat":
        dx, dy = d_long, d_trans
    else:
        dx = dy = min(d_long, d_trans)
    nx = next_fast_len(int(np.ceil((hi[0] - lo[0]) / dx)) * rules.refine)
    ny = next_fast_len(int(np.ceil((hi[1] - lo[1]) / dy)) * rules.refine)
    nx += nx % 2
    ny += ny % 2
    if nx * ny > rules.max_points:
        raise ConfigurationError(f"grid {nx}x{ny} exceeds the point budget {rules.max_points}")
    return Grid2D((float(lo[0]), float(hi[0])), (float(lo[1]), float(hi[1])), nx, ny)


def plan_run(scenario, hbar: float, T: Optional[float] = None, rules: GridRules = GridRules(), initial=None) -> RunPlan:
    T = scenario.T if T is None else float(T)
    profile = scenario.profile
    init = scenario.initial_data() if initial is None else initial
    E = profile.energy_field(hbar)
    traj = integrate_flat(
        E,
        [init.a],
        [init.eta],
        T,
        min(rules.classical_dt, T / 50),
        A0=[[init.A]],
        B0=[[init.B]],
        domain=scenario.classical_domain,
    )
    cut = default_cut(profile, traj, hbar, init.k)
    grid = plan_grid(profile, cut, traj, hbar, rules, init.k)
    steps = max(1, int(np.ceil(T / (rules.dt_factor * hbar))))
    return RunPlan(scenario, hbar, T, profile, traj, cut, grid, T / steps, steps, init)


# ---------------------------------------------------------------------------
# single runs and studies


@dataclass
class RunOutput:
    record: RunRecord
    propagated: GridState
    approximant: GridState
    plan: RunPlan


def run_single(
    scenario,
    hbar: float,
    T: Optional[float] = None,
    rules: GridRules = GridRules(),
    correction: bool = False,
    workers: int = 1,
    self_compare: bool = False,
    with_residual: bool = True,
    with_observables: bool = True,
    initial=None,
) -> RunOutput:
    t_start = time.perf_counter()
    plan = plan_run(scenario, hbar, T, rules, initial)
    profile = plan.profile
    mapping = map_grid(profile, plan.grid, plan.cut)
    init = SemiclassicalData.from_trajectory(plan.trajectory, 0, plan.initial.k)
    final = SemiclassicalData.from_trajectory(plan.trajectory, -1, plan.initial.k)
    psi0 = assemble(profile, init, plan.cut, plan.grid, hbar, correction, mapping)
    psiT = assemble(profile, final, plan.cut, plan.grid, hbar, correction, mapping)
    X, Y = plan.grid.mesh()
    V = scenario.potential(np.stack([X, Y], axis=-1), hbar)
    log.info("hbar=%g grid %dx%d steps %d", hbar, plan.grid.nx, plan.grid.ny, plan.steps)
    prop = split_step_propagate(psi0.state, V, plan.dt, plan.steps, workers=workers)
    other = prop if self_compare else psiT.state
    err = l2_error(prop, other)
    res = float("nan")
    if with_residual and not self_compare:
        try:
            res = residual_at(
                profile,
                lambda q: scenario.potential(q, hbar),
                profile.energy_field(hbar),
                init,
                plan.T,
                hbar,
                plan.cut,
                correction=correction,
            )
        except ConstrainedQMError as exc:
            log.warning("residual skipped at hbar=%g: %s", hbar, exc)
    spread = float("nan")
    dmean = float("nan")
    if with_observables:
        chart = getattr(profile.frame, "chart", None)
        ob_p = observables(prop, chart)
        ob_a = observables(psiT.state, chart)
        spread = ob_p["transverse_spread"]
        dmean = float(np.hypot(ob_p["mean_x"] - ob_a["mean_x"], ob_p["mean_y"] - ob_a["mean_y"]))
    rec = RunRecord(
        hbar=float(hbar),
        grid_nx=plan.grid.nx,
        grid_ny=plan.grid.ny,
        dt=float(plan.dt),
        T=float(plan.T),
        l2_error_raw=err.raw,
        l2_error_phase_opt=err.phase_optimized,
        residual_norm=res,
        runtime_seconds=time.perf_counter() - t_start,
        renorm_initial=psi0.renormalization,
        renorm_final=psiT.renormalization,
        boundary_fraction=boundary_fraction(prop.values),
        transverse_spread=spread,
        mean_x_difference=dmean,
        energy_drift=float(np.max(np.abs(plan.trajectory.energy_drift))),
    )
    return RunOutput(rec, prop, psiT.state, plan)


def convergence_study(
    scenario,
    hbar_list,
    T: Optional[float] = None,
    rules: GridRules = GridRules(),
    threshold: float = 0.45,
    correction: bool = False,
    workers: int = 1,
    self_compare: bool = False,
    with_residual: bool = True,
) -> StudyResult:
    """Run every hbar, fit the phase-optimized error slope."""
    hbars = check_hbar_list(hbar_list)
    records = []
    for h in hbars:
        try:
            out = run_single(scenario, h, T, rules, correction, workers, self_compare, with_residual)
        except ConstrainedQMError as exc:
            raise StudyAbortedError(f"run at hbar={h} rejected: {exc}", h) from exc
        records.append(out.record)
    slope, intercept, resid = fit_slope(hbars, [r.l2_error_phase_opt for r in records])
    return StudyResult(scenario.id, hbars, records, slope, intercept, threshold, resid)


def refinement_check(scenario, hbar: float, T: Optional[float] = None, rules: GridRules = GridRules(), workers: int = 1) -> dict:
    """Relative change of the error under doubled grids and under halved dt."""
    base = run_single(scenario, hbar, T, rules, workers=workers, with_residual=False, with_observables=False).record
    fine = run_single(scenario, hbar, T, replace(rules, refine=2), workers=workers, with_residual=False, with_observables=False).record
    half = run_single(
        scenario, hbar, T, replace(rules, dt_factor=0.5 * rules.dt_factor), workers=workers, with_residual=False, with_observables=False
    ).record
    e = base.l2_error_phase_opt
    return {
        "error": e,
        "grid_change": abs(fine.l2_error_phase_opt - e) / e,
        "dt_change": abs(half.l2_error_phase_opt - e) / e,
    }


# ---------------------------------------------------------------------------
# weak-confinement (alpha < 1) marginal study


def wide_packet(scenario, hbar: float, sigma0: float) -> SemiclassicalData:
    """Initial data with an hbar-independent position spread sigma0."""
    init = scenario.initial_data()
    A = sigma0 * np.sqrt(2.0 / hbar)
    return replace(init, A=complex(A), B=complex(1.0 / A), sqrt_det=complex(np.sqrt(A)))


def free_marginal(init: SemiclassicalData, hbar: float, t: float, x) -> np.ndarray:
    """|phi_k|^2 for the free flow a' = eta, A' = iB."""
    p = PacketParams([[init.A + 1j * t * init.B]], [[init.B]], hbar, [init.a + t * init.eta], [init.eta], (init.k,))
    return np.abs(evaluate_packet(p, np.asarray(x, dtype=float)[:, None])) ** 2


@dataclass
class MarginalRecord:
    hbar: float
    distance: float
    grid_nx: int
    grid_ny: int


def marginal_study(scenario, hbar_list, T: Optional[float] = None, sigma0: float = 0.25, rules: GridRules = GridRules(), workers: int = 1):
    """L2 distance between the propagated x-marginal and free evolution, per hbar, plus its slope."""
    hbars = check_hbar_list(hbar_list)
    T = scenario.T if T is None else float(T)
    recs = []
    for h in hbars:
        init = wide_packet(scenario, h, sigma0)
        try:
            plan = plan_run(scenario, h, T, rules, init)
            psi0 = assemble(plan.profile, init, plan.cut, plan.grid, h)
            X, Y = plan.grid.mesh()
            V = scenario.potential(np.stack([X, Y], axis=-1), h)
            prop = split_step_propagate(psi0.state, V, plan.dt, plan.steps, workers=workers)
        except ConstrainedQMError as exc:
            raise StudyAbortedError(f"run at hbar={h} rejected: {exc}", h) from exc
        rho = x_marginal(prop)
        ref = free_marginal(init, h, T, plan.grid.x)
        dist = float(np.sqrt(np.sum((rho - ref) ** 2) * plan.grid.dx))
        recs.append(MarginalRecord(h, dist, plan.grid.nx, plan.grid.ny))
    slope, intercept, _ = fit_slope(hbars, [r.distance for r in recs])
    return recs, slope, intercept
