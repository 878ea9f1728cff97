import numpy as np
import pytest

from constrained_qm.classical import (
    PAPER_LITERAL,
    FunnelSpec,
    evolve_dispersion,
    homogenized_potential,
    integrate_flat,
    integrate_riemannian,
    takens_funnel,
)
from constrained_qm.errors import DegenerateMetricError, DomainExitError, GenericityError
from constrained_qm.fields import ScalarField, constant_field
from constrained_qm.transverse import RellichModel, rellich_spectrum

harmonic = ScalarField(1, lambda x: 0.5 * x[..., 0] ** 2, lambda x: x.copy(), lambda x: np.ones(x.shape + (1,)))


def standard_E(a=1.0):
    def value(x):
        return np.sqrt(1 + x[..., 0] ** 2) / (2 * a)

    def grad(x):
        return x / (2 * a * np.sqrt(1 + x**2))

    def hess(x):
        return ((1 + x**2) ** -1.5 / (2 * a))[..., None]

    return ScalarField(1, value, grad, hess)


def test_harmonic_cosine():
    tr = integrate_flat(harmonic, [1.0], [0.0], 2 * np.pi, 1e-3)
    np.testing.assert_allclose(tr.a[:, 0], np.cos(tr.times), atol=1e-8)
    np.testing.assert_allclose(tr.eta[:, 0], -np.sin(tr.times), atol=1e-8)


def test_fourth_order():
    errs = []
    for dt in (0.1, 0.05):
        tr = integrate_flat(harmonic, [1.0], [0.0], 2.0, dt)
        errs.append(abs(tr.a[-1, 0] - np.cos(2.0)))
    assert 12 < errs[0] / errs[1] < 20


def test_constant_potential_straight_line():
    E = constant_field(2, 0.3)
    tr = integrate_flat(E, [0.0, 1.0], [1.0, -2.0], 1.5, 0.01)
    np.testing.assert_allclose(tr.a[-1], [1.5, -2.0], atol=1e-13)
    np.testing.assert_allclose(tr.S, (0.5 * 5 - 0.3) * tr.times, atol=1e-12)


def test_energy_conservation_standard():
    tr = integrate_flat(standard_E(), [1.0], [0.0], 10.0, 1e-3)
    assert np.max(np.abs(tr.energy_drift)) < 1e-10


def test_riemannian_identity_matches_flat():
    E = standard_E()
    a = integrate_flat(E, [1.0], [0.2], 1.0, 1e-2)
    b = integrate_riemannian(lambda x: np.eye(1), lambda x: np.zeros((1, 1, 1)), E, [1.0], [0.2], 1.0, 1e-2)
    np.testing.assert_allclose(b.a, a.a, rtol=0, atol=1e-14)
    np.testing.assert_allclose(b.eta, a.eta, rtol=0, atol=1e-14)


def test_polar_metric_angular_momentum():
    G = lambda x: np.diag([1.0, x[0] ** 2])
    tr = integrate_riemannian(G, None, constant_field(2, 0.0), [1.0, 0.0], [0.3, 0.7], 3.0, 1e-3)
    L = tr.a[:, 0] ** 2 * tr.eta[:, 1]
    assert np.max(np.abs(L - L[0])) < 1e-8
    assert np.max(np.abs(tr.energy_drift)) < 1e-8


def test_circle_uniform_speed():
    # arc-length chart of a circle: metric 1, constant E
    tr = integrate_riemannian(lambda x: np.eye(1), None, constant_field(1, 0.5), [0.0], [0.5], 2.0, 1e-3)
    np.testing.assert_allclose(np.abs(tr.eta[:, 0]), 0.5, atol=1e-10)


def test_degenerate_metric():
    G = lambda x: np.diag([1.0, x[0] ** 2])
    with pytest.raises(DegenerateMetricError):
        integrate_riemannian(G, None, constant_field(2, 0.0), [0.0, 0.0], [0.0, 1.0], 1.0, 1e-2)


def test_domain_exit_reports_time():
    with pytest.raises(DomainExitError) as exc:
        integrate_flat(constant_field(1, 0.0), [0.0], [1.0], 2.0, 1e-2, domain=([-0.5], [0.5]))
    assert 0.5 - 1e-12 <= exc.value.time <= 0.51 + 1e-12


def test_dispersion_harmonic():
    tr = integrate_flat(harmonic, [1.0], [0.0], 3.0, 1e-3)
    A, B = evolve_dispersion(tr, harmonic, 1.0, 1.0)
    np.testing.assert_allclose(A[:, 0, 0], np.exp(1j * tr.times), atol=1e-8)
    np.testing.assert_allclose(B[:, 0, 0], np.exp(1j * tr.times), atol=1e-8)


def test_dispersion_free():
    E = constant_field(1, 0.0)
    tr = integrate_flat(E, [0.0], [1.0], 2.0, 1e-2)
    A0, B0 = 0.8 + 0.6j, (1 + 0.7j) / (0.8 - 0.6j)
    A, B = evolve_dispersion(tr, E, A0, B0)
    np.testing.assert_allclose(A[:, 0, 0], A0 + 1j * tr.times * B0, atol=1e-12)
    np.testing.assert_allclose(B[:, 0, 0], B0, atol=1e-14)
    A2, B2 = evolve_dispersion(tr, E, A0, B0, convention=PAPER_LITERAL)
    np.testing.assert_array_equal(A, A2)
    np.testing.assert_array_equal(B, B2)


def test_harmonic_flow_conditions_over_ten():
    tr = integrate_flat(standard_E(), [1.0], [0.0], 10.0, 1e-3, A0=[[1.0]], B0=[[1.0]])
    assert np.max(tr.condition_residuals()) < 1e-10


# Takens funnel --------------------------------------------------------------


def test_equal_split_moves_on_ray():
    v = np.array([0.3, 0.1])
    tr = takens_funnel(FunnelSpec(0.5, 0.5, tuple(v), 0.8), 1e-3)
    cross = tr.a[:, 0] * v[1] - tr.a[:, 1] * v[0]
    assert np.max(np.abs(cross)) < 1e-14


def test_funnel_energy_and_divergence():
    v = (0.3, 0.1)
    t1 = takens_funnel(FunnelSpec(1.0, 0.0, v, 0.8), 1e-3)
    t2 = takens_funnel(FunnelSpec(0.0, 1.0, v, 0.8), 1e-3)
    for t in (t1, t2):
        assert np.max(np.abs(t.energy_drift)) < 1e-8
    assert np.max(np.abs(t1.a - t2.a)) > 1e-3


def test_funnel_rejects_zero_velocity():
    with pytest.raises(GenericityError):
        takens_funnel(FunnelSpec(0.5, 0.5, (0.0, 0.0), 1.0), 1e-3)


def test_quantum_selection_gradient():
    m = RellichModel(1.0)
    U = homogenized_potential(0.5, 0.5)
    rng = np.random.default_rng(5)
    h = 1e-5
    for x in rng.uniform(-0.35, 0.35, (20, 2)):
        g = [(rellich_spectrum(m, x + h * e, 0, 0) - rellich_spectrum(m, x - h * e, 0, 0)) / (2 * h) for e in np.eye(2)]
        np.testing.assert_allclose(U.gradient(x), g, atol=1e-10)
