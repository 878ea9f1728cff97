import numpy as np
import pytest

from constrained_qm.errors import BoundaryBreachError, ConfigurationError, GridMismatchError, StudyAbortedError
from constrained_qm.fields import ScalarField
from constrained_qm.geometry import TubularChart, line_curve
from constrained_qm.packets import PacketParams, evaluate_packet
from constrained_qm.quantum import (
    CurveFrame,
    FlatFrame,
    Grid2D,
    GridState,
    HarmonicProfile,
    SemiclassicalData,
    assemble,
    assemble_curve,
    assemble_flat,
    l2_error,
    observables,
    residual_at,
    split_step_propagate,
)
from constrained_qm.quantum.approximant import CutFunction, correction_overlaps
from constrained_qm.quantum.study import (
    GridRules,
    check_hbar_list,
    convergence_study,
    fit_slope,
    plan_run,
    refinement_check,
)
from constrained_qm.scenarios import build_scenario


def packet2d(grid, hbar, a, eta, A=1.0, B=1.0, t=0.0):
    """Product of two 1D packets with the free-flow dispersion A + i t B."""
    At = A + 1j * t * B
    px = PacketParams(At, B, hbar, a[0] + t * eta[0], eta[0])
    py = PacketParams(At, B, hbar, a[1] + t * eta[1], eta[1])
    S = 0.5 * (eta[0] ** 2 + eta[1] ** 2) * t
    vals = np.exp(1j * S / hbar) * np.outer(evaluate_packet(px, grid.x), evaluate_packet(py, grid.y))
    return GridState(grid, vals, hbar, t)


def const_field(c):
    return ScalarField(
        2,
        lambda q: np.full(q.shape[:-1], float(c)),
        lambda q: np.zeros(q.shape),
        lambda q: np.zeros(q.shape + (2,)),
    )


# reference solver ---------------------------------------------------------


def test_free_gaussian():
    grid = Grid2D((-20.0, 20.0), (-20.0, 20.0), 256, 256)
    psi0 = packet2d(grid, 1.0, (-1.0, 0.5), (1.0, -0.5))
    out = split_step_propagate(psi0, np.zeros((256, 256)), 0.01, 100)
    exact = packet2d(grid, 1.0, (-1.0, 0.5), (1.0, -0.5), t=1.0)
    assert l2_error(out, exact).raw < 1e-6


def test_coherent_state_period():
    hbar = 0.1
    grid = Grid2D((-4.0, 4.0), (-4.0, 4.0), 128, 128)
    X, Y = grid.mesh()
    V = 0.5 * (X**2 + Y**2)
    psi0 = packet2d(grid, hbar, (0.6, 0.0), (0.0, 0.4))
    steps = 4000
    out = split_step_propagate(psi0, V, 2 * np.pi / steps, steps)
    assert abs(psi0.inner(out)) > 1 - 1e-6


def test_norm_drift_ten_thousand_steps():
    hbar = 0.2
    grid = Grid2D((-6.0, 6.0), (-6.0, 6.0), 64, 64)
    X, Y = grid.mesh()
    psi0 = packet2d(grid, hbar, (0.5, 0.0), (0.0, 0.0))
    out = split_step_propagate(psi0, 0.5 * X**2 + 2.0 * Y**2 + 0.1 * X * Y, 1e-3, 10_000)
    assert abs(out.norm() - psi0.norm()) < 1e-10


def test_boundary_breach():
    grid = Grid2D((-3.0, 3.0), (-3.0, 3.0), 64, 64)
    psi0 = packet2d(grid, 1.0, (0.0, 0.0), (3.0, 0.0))
    with pytest.raises(BoundaryBreachError):
        split_step_propagate(psi0, np.zeros((64, 64)), 0.01, 200, check_every=10)


# grid states ----------------------------------------------------------------


def test_l2_error_trivial_cases():
    grid = Grid2D((-8.0, 8.0), (-8.0, 8.0), 128, 128)
    psi = packet2d(grid, 1.0, (0.0, 0.0), (0.0, 0.0))
    assert l2_error(psi, psi).raw == 0
    odd = GridState(grid, psi.values * np.sign(grid.x)[:, None] * 0 + packet_odd(grid), 1.0)
    e = l2_error(psi, odd)
    assert e.raw == pytest.approx(np.sqrt(2), abs=1e-10)
    theta = 0.7
    rot = psi.with_values(np.exp(1j * theta) * psi.values)
    e = l2_error(psi, rot)
    assert e.phase_optimized < 1e-14
    assert e.raw == pytest.approx(2 * abs(np.sin(theta / 2)), abs=1e-12)


def packet_odd(grid):
    p = PacketParams(1, 1, 1.0, 0.0, 0.0, k=1)
    q = PacketParams(1, 1, 1.0, 0.0, 0.0)
    return np.outer(evaluate_packet(p, grid.x), evaluate_packet(q, grid.y))


def test_grid_mismatch():
    g1 = Grid2D((-1.0, 1.0), (-1.0, 1.0), 8, 8)
    g2 = Grid2D((-1.0, 1.0), (-1.0, 1.0), 8, 10)
    a = GridState(g1, np.ones((8, 8), dtype=complex), 1.0)
    b = GridState(g2, np.ones((8, 10), dtype=complex), 1.0)
    with pytest.raises(GridMismatchError):
        l2_error(a, b)
    with pytest.raises(GridMismatchError):
        l2_error(a, GridState(g1, np.ones((8, 8), dtype=complex), 0.5))
    with pytest.raises(GridMismatchError):
        GridState(g1, np.ones((8, 9)), 1.0)


def test_observables_centred_gaussian():
    hbar = 0.5
    grid = Grid2D((-8.0, 8.0), (-8.0, 8.0), 128, 128)
    ob = observables(packet2d(grid, hbar, (0.0, 0.0), (0.0, 0.0)))
    assert abs(ob["mean_x"]) < 1e-12 and abs(ob["mean_y"]) < 1e-12
    assert ob["var_x"] == pytest.approx(hbar / 2, abs=1e-8)
    assert ob["var_y"] == pytest.approx(hbar / 2, abs=1e-8)


# assembly ----------------------------------------------------------------------


@pytest.fixture(scope="module")
def standard():
    return build_scenario("standard")


def test_assemble_flat_constant_omega_moments():
    hbar, w = 0.04, 2.0
    prof = HarmonicProfile(FlatFrame(), const_field(w))
    data = SemiclassicalData(0.0, 0.3, 0.0, 0.0, 1.0 + 0j, 1.0 + 0j, 1.0 + 0j)
    grid = Grid2D((-1.2, 1.8), (-0.5, 0.5), 384, 256)
    cut = CutFunction((-0.9, 1.5), 0.1, 0.35, 0.45)
    st = assemble_flat(prof, data, cut, grid, hbar)
    ob = observables(st.state)
    assert abs(st.renormalization - 1) < 1e-8
    assert ob["mean_x"] == pytest.approx(0.3, abs=1e-6)
    assert ob["var_x"] == pytest.approx(hbar / 2, rel=1e-6)
    assert ob["var_y"] == pytest.approx(hbar**2 / (2 * w), rel=1e-6)


def test_assemble_standard_renormalization_and_parity(standard):
    for hbar in (0.08, 0.04):
        plan = plan_run(standard, hbar)
        st = assemble(standard.profile, plan.initial, plan.cut, plan.grid, hbar)
        assert abs(st.renormalization - 1) < 1e-8
        assert abs(observables(st.state)["mean_y"]) < 1e-14


def test_assembled_transverse_spread_slope(standard):
    hbars = [0.08, 0.04, 0.02, 0.01]
    spreads = []
    for hbar in hbars:
        plan = plan_run(standard, hbar)
        st = assemble(standard.profile, plan.initial, plan.cut, plan.grid, hbar)
        spreads.append(observables(st.state)["transverse_spread"])
    slope, _, _ = fit_slope(hbars, spreads)
    assert abs(slope - 1.0) <= 0.1


def test_assemble_cut_outside_grid(standard):
    plan = plan_run(standard, 0.08)
    small = Grid2D((-0.5, 0.5), (-0.5, 0.5), 32, 32)
    with pytest.raises(ConfigurationError):
        assemble(standard.profile, plan.initial, plan.cut, small, 0.08)


def test_straight_line_chart_matches_flat(standard):
    hbar = 0.04
    flat = standard.profile
    chart = TubularChart(line_curve(8.0), (-4.0, 4.0), (-1.0, 1.0), 1.0)
    curved = HarmonicProfile(CurveFrame(chart), flat.omega_field, flat.a, flat.n, flat.V_field, flat.W, flat.alpha)
    plan = plan_run(standard, hbar)
    data = SemiclassicalData(0.0, 1.0, 0.7, 0.0, 1.0 + 0j, 1.0 + 0j, 1.0 + 0j)
    for corr in (False, True):
        a = assemble(flat, data, plan.cut, plan.grid, hbar, corr)
        b = assemble_curve(curved, data, plan.cut, plan.grid, hbar, corr)
        assert np.max(np.abs(a.state.values - b.state.values)) < 1e-12


def test_circle_spread_on_curve():
    sc = build_scenario("circle")
    hbars = [0.08, 0.04, 0.02]
    spreads, means = [], []
    for hbar in hbars:
        plan = plan_run(sc, hbar)
        st = assemble(sc.profile, plan.initial, plan.cut, plan.grid, hbar)
        ob = observables(st.state, sc.chart)
        assert abs(st.renormalization - 1) < 1e-8
        spreads.append(ob["transverse_spread"])
        means.append(abs(ob["mean_u"]))
    slope, _, _ = fit_slope(hbars, spreads)
    assert abs(slope - 1.0) <= 0.1
    # the radial density sits on the circle: mean offset far below the spread
    assert max(m / s for m, s in zip(means, spreads)) < 0.05


@pytest.mark.parametrize("sid,eta", [("standard", 0.8), ("circle", 0.5)])
def test_correction_orthogonal_to_phi(sid, eta):
    sc = build_scenario(sid)
    data = SemiclassicalData(0.0, 0.2, eta, 0.0, 1.0 + 0j, 1.0 + 0j, 1.0 + 0j)
    ov = correction_overlaps(sc.profile, data, 0.04, np.linspace(-0.5, 1.0, 31))
    assert np.max(np.abs(ov)) < 1e-8
    c = sc.profile.correction_coefficients(np.linspace(-0.5, 1.0, 5), eta)
    assert np.max(np.abs(c[..., sc.profile.n])) == 0


# residual --------------------------------------------------------------------


def test_residual_orders(standard):
    """Corrected residual falls faster than O(hbar); the uncorrected one about O(hbar)."""
    on, off = [], []
    hbars = [0.08, 0.04]
    for h in hbars:
        plan = plan_run(standard, h)
        pot = lambda q, h=h: standard.potential(q, h)  # noqa: E731
        E = standard.profile.energy_field(h)
        on.append(residual_at(standard.profile, pot, E, plan.initial, 1.0, h, plan.cut, correction=True))
        off.append(residual_at(standard.profile, pot, E, plan.initial, 1.0, h, plan.cut, correction=False))
    s_on = np.log(on[0] / on[1]) / np.log(2)
    s_off = np.log(off[0] / off[1]) / np.log(2)
    assert s_on > 1.3
    assert 0.8 < s_off < 1.25
    assert on[1] < off[1]


# study harness ---------------------------------------------------------------


def test_fit_slope():
    h = np.array([0.08, 0.04, 0.02])
    s, c, r = fit_slope(h, 3.0 * h**1.5)
    assert s == pytest.approx(1.5) and c == pytest.approx(np.log10(3.0))
    assert np.allclose(r, 0, atol=1e-12)
    assert fit_slope(h, [0.0, 0.0, 0.0])[0] == 0.0


def test_check_hbar_list():
    assert check_hbar_list([0.08, 0.04, 0.02]) == [0.08, 0.04, 0.02]
    for bad in ([0.08, 0.04], [0.04, 0.08, 0.02], [0.08, 0.0, -0.01]):
        with pytest.raises(ConfigurationError):
            check_hbar_list(bad)


def test_self_compare_slope_zero(standard):
    res = convergence_study(standard, [0.08, 0.04, 0.02], self_compare=True, with_residual=False)
    assert all(r.l2_error_phase_opt < 1e-10 for r in res.records)
    assert res.slope == 0.0


def test_study_aborts_with_offending_hbar(standard):
    with pytest.raises(StudyAbortedError) as exc:
        convergence_study(standard, [0.08, 0.04, 0.02], rules=GridRules(max_points=1000), with_residual=False)
    assert exc.value.hbar == 0.08


@pytest.mark.slow
def test_grid_refinement_stability(standard):
    out = refinement_check(standard, 0.01)
    assert out["grid_change"] < 0.05
    assert out["dt_change"] < 0.05
