"""Constrained classical dynamics with fixed-step fourth-order Runge-Kutta.

Positions, momenta, the action and (optionally) the dispersion matrices
are packed into one complex state and advanced in the same stage loop.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .errors import DegenerateMetricError, DomainExitError, GenericityError, IntegratorToleranceError
from .fields import ScalarField
from .packets import continuous_sqrt_det, validate_params

FLAT_CONSISTENT = "flat-consistent"
PAPER_LITERAL = "paper-literal"


@dataclass(frozen=True)
class ClassicalTrajectory:
    times: np.ndarray
    a: np.ndarray  # (N, n)
    eta: np.ndarray  # (N, n)
    S: np.ndarray  # (N,)
    energy: np.ndarray  # (N,)
    A: Optional[np.ndarray] = None  # (N, n, n)
    B: Optional[np.ndarray] = None

    @property
    def dim(self) -> int:
        return self.a.shape[1]

    @property
    def energy_drift(self) -> np.ndarray:
        return self.energy - self.energy[0]

    def sqrt_det(self) -> np.ndarray:
        return continuous_sqrt_det(self.A)

    def final(self) -> dict:
        out = {"t": self.times[-1], "a": self.a[-1], "eta": self.eta[-1], "S": self.S[-1]}
        if self.A is not None:
            out["A"] = self.A[-1]
            out["B"] = self.B[-1]
            out["sqrt_det"] = self.sqrt_det()[-1]
        return out

    def condition_residuals(self) -> np.ndarray:
        """Max of the two packet-condition residuals at every sample."""
        if self.A is None:
            raise ValueError("trajectory carries no dispersion matrices")
        reps = [validate_params(A, B) for A, B in zip(self.A, self.B)]
        return np.array([max(r.symplectic_residual, r.normalization_residual) for r in reps])

    def columns(self):
        n = self.dim
        names = ["t"] + [f"a{i}" for i in range(n)] + [f"eta{i}" for i in range(n)] + ["S", "energy"]
        cols = [self.times, *self.a.T, *self.eta.T, self.S, self.energy]
        if self.A is not None:
            for tag, M in (("A", self.A), ("B", self.B)):
                flat = M.reshape(len(self.times), -1)
                names += [f"{tag}_re{i}" for i in range(n * n)]
                cols += list(flat.real.T)
                names += [f"{tag}_im{i}" for i in range(n * n)]
                cols += list(flat.imag.T)
        return names, np.column_stack(cols)


def _n_steps(T: float, dt: float) -> int:
    if dt <= 0 or T < 0:
        raise ValueError("need dt > 0 and T >= 0")
    return max(1, int(np.ceil(T / dt - 1e-9))) if T > 0 else 0


def _domain_check(domain):
    if domain is None:
        return lambda x: True
    if callable(domain):
        return domain
    lo, hi = domain
    lo = np.atleast_1d(np.asarray(lo, dtype=float))
    hi = np.atleast_1d(np.asarray(hi, dtype=float))
    return lambda x: bool(np.all(x >= lo) and np.all(x <= hi))


class _Packer:
    def __init__(self, n, with_disp):
        self.n = n
        self.with_disp = with_disp

    def pack(self, a, eta, S, A=None, B=None):
        parts = [np.asarray(a, dtype=complex), np.asarray(eta, dtype=complex), np.array([S], dtype=complex)]
        if self.with_disp:
            parts += [np.asarray(A, dtype=complex).ravel(), np.asarray(B, dtype=complex).ravel()]
        return np.concatenate(parts)

    def unpack(self, y):
        n = self.n
        a = y[:n].real
        eta = y[n : 2 * n].real
        S = y[2 * n].real
        if not self.with_disp:
            return a, eta, S, None, None
        A = y[2 * n + 1 : 2 * n + 1 + n * n].reshape(n, n)
        B = y[2 * n + 1 + n * n :].reshape(n, n)
        return a, eta, S, A, B


def _integrate(rhs, packer, y0, T, dt, energy, inside):
    steps = _n_steps(T, dt)
    h = T / steps if steps else 0.0
    ys = np.empty((steps + 1, len(y0)), dtype=complex)
    ys[0] = y0
    y = y0
    for i in range(steps):
        k1 = rhs(y)
        k2 = rhs(y + 0.5 * h * k1)
        k3 = rhs(y + 0.5 * h * k2)
        k4 = rhs(y + h * k3)
        y = y + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        ys[i + 1] = y
        a = y[: packer.n].real
        if not np.all(np.isfinite(y)) or not inside(a):
            raise DomainExitError(f"trajectory left the domain at t = {(i + 1) * h:.6g}", (i + 1) * h)
    times = h * np.arange(steps + 1)
    parts = [packer.unpack(v) for v in ys]
    a = np.array([p[0] for p in parts])
    eta = np.array([p[1] for p in parts])
    S = np.array([p[2] for p in parts])
    E = np.array([energy(p[0], p[1]) for p in parts])
    if packer.with_disp:
        A = np.array([p[3] for p in parts])
        B = np.array([p[4] for p in parts])
    else:
        A = B = None
    return ClassicalTrajectory(times, a, eta, S, E, A, B)


def _as_field(E, n):
    if isinstance(E, ScalarField):
        return E
    return ScalarField(n, E)


def integrate_flat(
    E: ScalarField,
    a0,
    eta0,
    T: float,
    dt: float,
    A0=None,
    B0=None,
    domain=None,
) -> ClassicalTrajectory:
    """a' = eta, eta' = -grad E(a), S' = |eta|^2/2 - E(a).

    With ``A0``/``B0`` the flat dispersion system A' = i B, B' = i Hess E(a) A
    is carried along.
    """
    return integrate_riemannian(None, None, E, a0, eta0, T, dt, A0=A0, B0=B0, domain=domain)


def _metric_tools(G, n, fd_step=1e-4):
    """Return callables for G, G^-1, d_j G^-1 and d_i d_j G^-1 by central differences."""

    def Ginv(x):
        return np.linalg.inv(G(x))

    def dGinv(x):
        out = np.empty((n, n, n))
        for j in range(n):
            e = np.zeros(n)
            hh = fd_step * max(1.0, abs(x[j]))
            e[j] = hh
            out[j] = (8 * (Ginv(x + e) - Ginv(x - e)) - (Ginv(x + 2 * e) - Ginv(x - 2 * e))) / (12 * hh)
        return out

    def d2Ginv(x):
        out = np.empty((n, n, n, n))
        for i in range(n):
            e = np.zeros(n)
            hh = 1e-3 * max(1.0, abs(x[i]))
            e[i] = hh
            out[i] = (8 * (dGinv(x + e) - dGinv(x - e)) - (dGinv(x + 2 * e) - dGinv(x - 2 * e))) / (12 * hh)
        return out

    return Ginv, dGinv, d2Ginv


def integrate_riemannian(
    G: Optional[Callable],
    Gamma: Optional[Callable],
    E: ScalarField,
    a0,
    eta0,
    T: float,
    dt: float,
    A0=None,
    B0=None,
    convention: str = FLAT_CONSISTENT,
    domain=None,
) -> ClassicalTrajectory:
    """Geodesic motion with potential: a' = eta, eta' = -Gamma(eta, eta) - G^-1 grad E.

    ``G=None`` selects the flat metric.  ``Gamma`` defaults to the
    Levi-Civita symbols of ``G`` by finite differences.  Dispersion matrices
    follow the curved (A, B) system in the chosen ``convention``.
    """
    from .geometry import christoffel_from_metric

    a0 = np.atleast_1d(np.asarray(a0, dtype=float))
    eta0 = np.atleast_1d(np.asarray(eta0, dtype=float))
    n = len(a0)
    E = _as_field(E, n)
    with_disp = A0 is not None
    packer = _Packer(n, with_disp)
    flat = G is None
    hess_factor = 1j if convention == FLAT_CONSISTENT else 1.0
    if convention not in (FLAT_CONSISTENT, PAPER_LITERAL):
        raise ValueError(f"unknown dispersion convention {convention!r}")

    if not flat:
        if Gamma is None:
            Gamma = lambda x: christoffel_from_metric(G, x)  # noqa: E731
        Ginv, dGinv, d2Ginv = _metric_tools(G, n)

    def metric_at(a):
        g = np.asarray(G(a), dtype=float)
        w = np.linalg.eigvalsh(g)
        if w[0] <= 1e-12 * max(1.0, w[-1]):
            raise DegenerateMetricError(f"metric is not positive definite at {a}")
        return g

    def rhs(y):
        a, eta, S, A, B = packer.unpack(y)
        grad = E.gradient(a)
        if flat:
            force = -grad
            kin = 0.5 * eta @ eta
        else:
            g = metric_at(a)
            force = -np.einsum("ijk,j,k->i", Gamma(a), eta, eta) - np.linalg.solve(g, grad)
            kin = 0.5 * eta @ g @ eta
        dS = kin - E(a)
        if not with_disp:
            return packer.pack(eta, force, dS)
        H = E.hessian(a)
        if flat:
            dA = 1j * B
            dB = hess_factor * (H @ A)
        else:
            dG = dGinv(a)  # dG[j] = d_j G^-1
            GdG = np.einsum("kp,jpi->jki", g, dG)  # [G d_j G^-1]_{ki} stored at [j, k, i]
            dA = np.einsum("k,jki,jl->il", eta, GdG, A) + 1j * Ginv(a) @ B
            d2 = d2Ginv(a)
            curv = np.einsum("p,pq,ijqr,rs,s->ij", eta, g, d2, g, eta)
            dB = 0.5j * curv @ A + hess_factor * (H @ A) - np.einsum("k,ikj,jl->il", eta, GdG, B)
        return packer.pack(eta, force, dS, dA, dB)

    def energy(a, eta):
        if flat:
            return 0.5 * eta @ eta + float(E(a))
        return 0.5 * eta @ G(a) @ eta + float(E(a))

    y0 = packer.pack(a0, eta0, 0.0, A0, B0)
    traj = _integrate(rhs, packer, y0, T, dt, energy, _domain_check(domain))
    return traj


def evolve_dispersion(
    trajectory: ClassicalTrajectory,
    E: ScalarField,
    A0,
    B0,
    convention: str = FLAT_CONSISTENT,
    G: Optional[Callable] = None,
    Gamma: Optional[Callable] = None,
    tol: float = 1e-6,
):
    """Integrate the dispersion system along ``trajectory``; returns (A(t), B(t)).

    The classical variables are re-integrated in the same stage loop with the
    trajectory's step, so the centre path is reproduced exactly.  In the flat
    consistent convention a packet-condition residual above ``tol`` raises.
    """
    t = trajectory.times
    T = t[-1]
    dt = t[1] - t[0] if len(t) > 1 else T
    A0 = np.atleast_2d(np.asarray(A0, dtype=complex))
    B0 = np.atleast_2d(np.asarray(B0, dtype=complex))
    full = integrate_riemannian(G, Gamma, E, trajectory.a[0], trajectory.eta[0], T, dt, A0, B0, convention)
    if np.max(np.abs(full.a - trajectory.a)) > 1e-9 * max(1.0, np.max(np.abs(trajectory.a))):
        raise IntegratorToleranceError("re-integrated centre path departs from the given trajectory")
    if convention == FLAT_CONSISTENT and G is None:
        worst = np.max(full.condition_residuals())
        if worst > tol:
            raise IntegratorToleranceError(f"packet conditions drifted by {worst:.3e}")
    return full.A, full.B


# ---------------------------------------------------------------------------
# Takens funnel


def takens_omegas(x):
    r = np.linalg.norm(x)
    return 0.5 * np.sqrt(1 + r), 0.5 * np.sqrt(1 - r)


def homogenized_potential(theta_plus: float, theta_minus: float) -> ScalarField:
    """U_hom(x) = theta+ w+(x) + theta- w-(x), w+-(x) = sqrt(1 +- |x|)/2."""

    def value(x):
        r = np.linalg.norm(np.asarray(x, dtype=float), axis=-1)
        return 0.5 * (theta_plus * np.sqrt(1 + r) + theta_minus * np.sqrt(1 - r))

    def grad(x, direction=None):
        x = np.asarray(x, dtype=float)
        r = np.linalg.norm(x, axis=-1)
        safe = np.where(r > 0, r, 1.0)
        xhat = x / safe[..., None]
        dr = 0.25 * (theta_plus / np.sqrt(1 + r) - theta_minus / np.sqrt(1 - r))
        return dr[..., None] * xhat

    return ScalarField(2, value, grad)


@dataclass(frozen=True)
class FunnelSpec:
    theta_plus: float
    theta_minus: float
    v_star: tuple
    T: float

    def __post_init__(self):
        if self.theta_plus < 0 or self.theta_minus < 0:
            raise ValueError("adiabatic invariants must be nonnegative")

    @property
    def initial_velocity(self) -> np.ndarray:
        return np.asarray(self.v_star, dtype=float)[:2]


def takens_funnel(spec: FunnelSpec, dt: float) -> ClassicalTrajectory:
    """x'' = -grad U_hom(x) from x(0) = 0, x'(0) = Q v_*, inside |x| < 1/2.

    At x = 0 the gradient is the one-sided limit along the initial ray.
    """
    v0 = spec.initial_velocity
    if np.linalg.norm(v0) == 0:
        raise GenericityError("Q v_* = 0: the constrained limit is not known for this initial velocity")
    ray = v0 / np.linalg.norm(v0)
    U = homogenized_potential(spec.theta_plus, spec.theta_minus)
    dr_at = lambda r: 0.25 * (spec.theta_plus / np.sqrt(1 + r) - spec.theta_minus / np.sqrt(1 - r))  # noqa: E731

    def gradient(x):
        r = np.linalg.norm(x)
        if r < 1e-300:
            return dr_at(0.0) * ray
        return dr_at(r) * x / r

    field = ScalarField(2, U.value, gradient)
    return integrate_flat(field, np.zeros(2), v0, spec.T, dt, domain=lambda x: np.linalg.norm(x) < 0.5)
