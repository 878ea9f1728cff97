"""Semiclassical approximants on the constraint and their residual.

A *frame* supplies the base curve (the x-axis for flat constraints or a
tubular chart), a *profile* supplies the transverse eigenfunction and the
effective potential along it, and :class:`SemiclassicalData` carries the
packet parameters at one instant.  The approximant in (s, u) coordinates is

    psi(s, u) = exp(iS/hbar) phi_k(s) F(s, hbar^beta u) [Phi(s, u) + hbar psi2_perp(s, u)],

and its Cartesian image is hbar^(-beta/2) J^(-1/2) psi(s, v / hbar^beta) with
J = 1 - k(s) v.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
import scipy.fft as sfft
from scipy.spatial import cKDTree

from ..errors import ConfigurationError, OrthogonalityError, StepError
from ..fields import ScalarField
from ..geometry import TubularChart, extrapotential_from_curvature
from ..packets import PacketParams, evaluate_packet
from ..transverse import hermite_functions, smoothstep_cut
from .grid import Grid2D, GridState


# ---------------------------------------------------------------------------
# frames


class FlatFrame:
    """The x-axis with normal +y: s = x, v = y, J = 1."""

    kind = "flat"
    half_width = np.inf
    s_interval = (-np.inf, np.inf)

    def position(self, s):
        s = np.asarray(s, dtype=float)
        return np.stack([s, np.zeros_like(s)], axis=-1)

    def tangent(self, s):
        s = np.asarray(s, dtype=float)
        return np.stack([np.ones_like(s), np.zeros_like(s)], axis=-1)

    def normal(self, s):
        s = np.asarray(s, dtype=float)
        return np.stack([np.zeros_like(s), np.ones_like(s)], axis=-1)

    def curvature_derivatives(self, s):
        z = np.zeros_like(np.asarray(s, dtype=float))
        return z, z, z

    def to_sv(self, points, s_range, v_max):
        s = points[..., 0]
        v = points[..., 1]
        inside = (s >= s_range[0]) & (s <= s_range[1]) & (np.abs(v) <= v_max)
        return s, v, np.ones_like(s), inside


@dataclass(frozen=True)
class CurveFrame:
    """Frame built on a tubular chart of a plane curve."""

    chart: TubularChart
    kind: str = "curve"

    @property
    def half_width(self):
        return self.chart.half_width

    @property
    def s_interval(self):
        return self.chart.s_interval

    def position(self, s):
        return self.chart.curve.position(s)

    def tangent(self, s):
        return self.chart.curve.tangent(s)

    def normal(self, s):
        return self.chart.curve.normal(s)

    def curvature_derivatives(self, s):
        return self.chart.curve.curvature_derivatives(s)

    def to_sv(self, points, s_range, v_max):
        """Tubular coordinates of the points near the cut support; others are outside."""
        shape = points.shape[:-1]
        flat = points.reshape(-1, 2)
        lo = max(s_range[0], self.chart.s_interval[0])
        hi = min(s_range[1], self.chart.s_interval[1])
        ss = np.linspace(lo, hi, max(64, int((hi - lo) / max(v_max, 1e-3) * 8)))
        samples = self.position(ss)
        spacing = np.max(np.linalg.norm(np.diff(samples, axis=0), axis=-1))
        dist, _ = cKDTree(samples).query(flat, distance_upper_bound=v_max + spacing)
        near = np.isfinite(dist)
        s = np.full(len(flat), np.nan)
        v = np.full(len(flat), np.nan)
        inside = np.zeros(len(flat), dtype=bool)
        if near.any():
            sn, vn, ok = self.chart.cartesian_to_tubular(flat[near], strict=False)
            s[near] = sn
            v[near] = vn
            inside[near] = ok & (sn >= s_range[0]) & (sn <= s_range[1]) & (np.abs(vn) <= v_max)
        J = np.ones(len(flat))
        if inside.any():
            k = self.chart.curve.curvature(s[inside])
            J[inside] = 1.0 - k * v[inside]
        return s.reshape(shape), v.reshape(shape), J.reshape(shape), inside.reshape(shape)


# ---------------------------------------------------------------------------
# transverse profiles


def _u_times(c, Omega):
    """Multiply Hermite coefficient arrays (..., L) by u at frequency Omega (...)."""
    L = c.shape[-1]
    j = np.arange(L)
    out = np.zeros_like(c)
    out[..., 1:] += np.sqrt(j[1:]) * c[..., :-1]
    out[..., :-1] += np.sqrt(j[1:]) * c[..., 1:]
    return out / np.sqrt(2.0 * Omega)[..., None]


@dataclass(frozen=True)
class HarmonicProfile:
    """Harmonic transverse state Phi_n(u; omega(s)/a) along a frame.

    ``omega_field`` and ``V_field`` are planar fields evaluated on the base
    curve; ``W`` is the planar confining potential, used only for the cubic
    term of the first-order correction.  ``alpha`` is the exponent in
    eps = a hbar^alpha.
    """

    frame: object
    omega_field: ScalarField
    a: float = 1.0
    n: int = 0
    V_field: Optional[ScalarField] = None
    W: Optional[Callable] = None
    alpha: float = 1.0
    kind: str = "analytic-harmonic"

    @property
    def beta(self) -> float:
        return 0.5 * (1.0 + self.alpha)

    @property
    def theta(self) -> float:
        return (self.n + 0.5) / self.a

    def omega(self, s):
        """omega(s) and its first two arc-length derivatives."""
        s = np.asarray(s, dtype=float)
        q = self.frame.position(s)
        t = self.frame.tangent(s)
        nrm = self.frame.normal(s)
        k, _, _ = self.frame.curvature_derivatives(s)
        w = self.omega_field(q)
        g = self.omega_field.gradient(q)
        H = self.omega_field.hessian(q)
        ws = np.sum(g * t, axis=-1)
        wss = np.einsum("...i,...ij,...j->...", t, H, t) + k * np.sum(g * nrm, axis=-1)
        return w, ws, wss

    def Omega(self, s):
        return self.omega(s)[0] / self.a

    def _V_on_curve(self, s):
        s = np.asarray(s, dtype=float)
        if self.V_field is None:
            z = np.zeros_like(s)
            return z, z, z, z
        q = self.frame.position(s)
        t = self.frame.tangent(s)
        nrm = self.frame.normal(s)
        k, _, _ = self.frame.curvature_derivatives(s)
        g = self.V_field.gradient(q)
        H = self.V_field.hessian(q)
        V = self.V_field(q)
        Vs = np.sum(g * t, axis=-1)
        Vss = np.einsum("...i,...ij,...j->...", t, H, t) + k * np.sum(g * nrm, axis=-1)
        Vu = np.sum(g * nrm, axis=-1)
        return V, Vs, Vss, Vu

    def energy_scale(self, hbar: float) -> float:
        return hbar ** (1.0 - self.alpha)

    def energy_field(self, hbar: float = 1.0) -> ScalarField:
        """E(s) = theta omega(s) (times hbar^(1-alpha)) + V(q_M(s)) as a 1D field."""
        f = self.energy_scale(hbar)
        th = self.theta
        memo = {}

        def parts(s):
            key = s.tobytes()
            if key not in memo:
                memo.clear()
                w = self.omega(s)
                V = self._V_on_curve(s)
                memo[key] = tuple(th * f * w[i] + V[i] for i in range(3))
            return memo[key]

        def value(x):
            return parts(np.asarray(x[..., 0], dtype=float))[0]

        def grad(x):
            return parts(np.asarray(x[..., 0], dtype=float))[1][..., None]

        def hess(x):
            return parts(np.asarray(x[..., 0], dtype=float))[2][..., None, None]

        return ScalarField(1, value, grad, hess)

    def phi(self, s, u):
        """Phi(s, u) for arrays of matching shape."""
        return hermite_functions(self.n, u, self.Omega(s))[self.n]

    def third_normal_derivative_W(self, s, h: float = 0.05):
        """d^3/dv^3 of W(q_M(s) + v n(s)) at v = 0 (five-point stencil)."""
        s = np.asarray(s, dtype=float)
        if self.W is None:
            return np.zeros_like(s)
        q = self.frame.position(s)
        nrm = self.frame.normal(s)
        f = lambda v: self.W(q + v * nrm)  # noqa: E731
        return (f(2 * h) - 2 * f(h) + 2 * f(-h) - f(-2 * h)) / (2 * h**3)

    def correction_coefficients(self, s, eta: float) -> np.ndarray:
        """Hermite coefficients (..., n+5) of psi2_perp = r[i eta dPhi/ds - eta^2 k u Phi - V_u u Phi - W_uuu u^3 Phi/(6a^2)]."""
        s = np.asarray(s, dtype=float)
        n = self.n
        L = n + 5
        w, ws, _ = self.omega(s)
        Om = w / self.a
        Om_s = ws / self.a
        k, _, _ = self.frame.curvature_derivatives(s)
        Vu = self._V_on_curve(s)[3]
        Wuuu = self.third_normal_derivative_W(s)
        e = np.zeros(s.shape + (L,), dtype=complex)
        e[..., n] = 1.0
        u1 = _u_times(e, Om)
        u3 = _u_times(_u_times(u1, Om), Om)
        dO = np.zeros_like(e)
        if n >= 2:
            dO[..., n - 2] = np.sqrt(n * (n - 1)) / (4 * Om)
        dO[..., n + 2] = -np.sqrt((n + 1) * (n + 2)) / (4 * Om)
        rhs = (
            1j * eta * Om_s[..., None] * dO
            - (eta**2 * k + Vu)[..., None] * u1
            - (Wuuu / (6 * self.a**2))[..., None] * u3
        )
        if np.max(np.abs(rhs[..., n])) > 1e-12 * max(1.0, np.max(np.abs(rhs))):
            raise OrthogonalityError("correction source has a component along Phi")
        j = np.arange(L)
        gap = (j - n)[None, :] * Om.reshape(-1, 1)
        gap = gap.reshape(s.shape + (L,))
        out = np.zeros_like(rhs)
        mask = j != n
        out[..., mask] = rhs[..., mask] / gap[..., mask]
        return out

    def psi2_perp(self, s, u, eta: float):
        c = self.correction_coefficients(s, eta)
        basis = hermite_functions(c.shape[-1] - 1, u, self.Omega(s))
        return np.einsum("j...,...j->...", basis, c)

    def transverse_width(self, s_values) -> float:
        """sqrt((2n+1)/Omega_min): rms-type width of Phi in u units."""
        return float(np.sqrt((2 * self.n + 1) / np.min(self.Omega(np.asarray(s_values)))))


@dataclass(frozen=True)
class FixedProfile:
    """Base-point independent transverse eigenpair (e.g. the sextic ground state).

    ``eigenpair`` is callable on u; the effective potential is its energy.
    """

    frame: object
    eigenpair: object
    energy: float
    width: float = 1.0
    alpha: float = 1.0
    V_field: Optional[ScalarField] = None
    kind: str = "numeric-1d"
    n: int = 0

    @property
    def beta(self) -> float:
        return 0.5 * (1.0 + self.alpha)

    def energy_field(self, hbar: float = 1.0) -> ScalarField:
        E0 = self.energy * hbar ** (1.0 - self.alpha)
        V = self.V_field
        if V is None:
            return ScalarField(
                1,
                lambda x: np.full(np.shape(x)[:-1], E0),
                lambda x: np.zeros(np.shape(x)),
                lambda x: np.zeros(np.shape(x) + (1,)),
            )
        return ScalarField(
            1,
            lambda x: E0 + V(np.stack([x[..., 0], np.zeros_like(x[..., 0])], -1)),
            lambda x: V.gradient(np.stack([x[..., 0], np.zeros_like(x[..., 0])], -1))[..., :1],
            lambda x: V.hessian(np.stack([x[..., 0], np.zeros_like(x[..., 0])], -1))[..., :1, :1],
        )

    def phi(self, s, u):
        return self.eigenpair(u)

    def psi2_perp(self, s, u, eta):
        raise ConfigurationError("the first-order correction needs a harmonic profile")

    def transverse_width(self, s_values) -> float:
        return float(self.width)


# ---------------------------------------------------------------------------
# cut function and semiclassical data


@dataclass(frozen=True)
class CutFunction:
    """F(s, v) = ramp_s(s) ramp_v(v) with quintic smoothstep ramps."""

    s_inner: tuple
    s_ramp: float
    v_inner: float
    v_outer: float

    @property
    def s_outer(self):
        return (self.s_inner[0] - self.s_ramp, self.s_inner[1] + self.s_ramp)

    def __call__(self, s, v):
        s = np.asarray(s, dtype=float)
        dist = np.maximum(np.maximum(self.s_inner[0] - s, s - self.s_inner[1]), 0.0)
        return smoothstep_cut(dist, 0.0, self.s_ramp) * smoothstep_cut(v, self.v_inner, self.v_outer)


@dataclass(frozen=True)
class SemiclassicalData:
    """Packet state along the constraint at one time."""

    t: float
    a: float
    eta: float
    S: float
    A: complex
    B: complex
    sqrt_det: Optional[complex] = None
    k: int = 0

    def packet(self, hbar: float) -> PacketParams:
        return PacketParams(
            [[self.A]], [[self.B]], hbar, [self.a], [self.eta], (self.k,), sqrt_det=self.sqrt_det
        )

    @classmethod
    def from_trajectory(cls, traj, index: int = -1, k: int = 0) -> "SemiclassicalData":
        roots = traj.sqrt_det()
        return cls(
            float(traj.times[index]),
            float(traj.a[index, 0]),
            float(traj.eta[index, 0]),
            float(traj.S[index]),
            complex(traj.A[index, 0, 0]),
            complex(traj.B[index, 0, 0]),
            complex(roots[index]),
            k,
        )


def default_cut(profile, traj, hbar: float, k: int = 0, s_widths: float = 6.0, s_ramp_widths: float = 2.0) -> CutFunction:
    """Cut equal to one on the trajectory plus ``s_widths`` packet widths."""
    sig = np.sqrt(hbar * (2 * k + 1) / 2) * np.max(np.abs(traj.A[:, 0, 0]))
    lo = float(np.min(traj.a[:, 0]) - s_widths * sig)
    hi = float(np.max(traj.a[:, 0]) + s_widths * sig)
    wv = hbar**profile.beta * profile.transverse_width(traj.a[:, 0])
    v_in = 5.0 * wv
    v_out = 7.0 * wv
    limit = 0.9 * profile.frame.half_width
    if v_out > limit:
        v_in *= limit / v_out
        v_out = limit
    cut = CutFunction((lo, hi), s_ramp_widths * sig, v_in, v_out)
    s0, s1 = profile.frame.s_interval
    if cut.s_outer[0] < s0 or cut.s_outer[1] > s1:
        raise ConfigurationError("cut support leaves the chart interval")
    return cut


# ---------------------------------------------------------------------------
# evaluation


def approximant_su(profile, data: SemiclassicalData, cut: CutFunction, hbar: float, s, u, correction: bool = False):
    """psi(s, u) in L^2(ds du) with u the dilated normal coordinate."""
    s = np.asarray(s, dtype=float)
    u = np.asarray(u, dtype=float)
    pk = evaluate_packet(data.packet(hbar), s.reshape(-1), check=False).reshape(s.shape)
    trans = profile.phi(s, u).astype(complex)
    if correction:
        trans = trans + hbar * profile.psi2_perp(s, u, data.eta)
    F = cut(s, hbar**profile.beta * u)
    return np.exp(1j * data.S / hbar) * pk * F * trans


@dataclass
class AssembledState:
    state: GridState
    renormalization: float


@dataclass
class FrameMapping:
    """Cached tubular coordinates of grid points for one cut."""

    s: np.ndarray
    v: np.ndarray
    J: np.ndarray
    inside: np.ndarray


def map_grid(profile, grid: Grid2D, cut: CutFunction) -> FrameMapping:
    X, Y = grid.mesh()
    pts = np.stack([X, Y], axis=-1)
    s, v, J, inside = profile.frame.to_sv(pts, cut.s_outer, cut.v_outer)
    return FrameMapping(s, v, J, inside)


def assemble(
    profile,
    data: SemiclassicalData,
    cut: CutFunction,
    grid: Grid2D,
    hbar: float,
    correction: bool = False,
    mapping: Optional[FrameMapping] = None,
    renormalize: bool = True,
) -> AssembledState:
    """Sample the approximant on a Cartesian grid (inverse isometry and dilation)."""
    if mapping is None:
        mapping = map_grid(profile, grid, cut)
    X, Y = grid.mesh()
    if profile.frame.kind == "flat":
        if cut.s_outer[0] < grid.x_range[0] or cut.s_outer[1] > grid.x_range[1] or cut.v_outer > min(
            -grid.y_range[0], grid.y_range[1]
        ):
            raise ConfigurationError("cut support is not contained in the grid")
    vals = np.zeros(grid.nx * grid.ny, dtype=complex)
    ins = mapping.inside.ravel()
    if ins.any():
        s = mapping.s.ravel()[ins]
        v = mapping.v.ravel()[ins]
        J = mapping.J.ravel()[ins]
        scale = hbar**profile.beta
        psi = approximant_su(profile, data, cut, hbar, s, v / scale, correction)
        vals[ins] = psi * scale**-0.5 * J**-0.5
    vals = vals.reshape(grid.nx, grid.ny)
    norm = np.sqrt(np.sum(np.abs(vals) ** 2) * grid.cell)
    if renormalize and norm > 0:
        vals = vals / norm
    return AssembledState(GridState(grid, vals, hbar, data.t), float(norm))


def assemble_flat(profile, data, cut, grid, hbar, correction=False) -> AssembledState:
    if profile.frame.kind != "flat":
        raise ConfigurationError("assemble_flat needs a flat frame")
    return assemble(profile, data, cut, grid, hbar, correction)


def assemble_curve(profile, data, cut, grid, hbar, correction=False, mapping=None) -> AssembledState:
    return assemble(profile, data, cut, grid, hbar, correction, mapping)


def correction_overlaps(profile, data: SemiclassicalData, hbar: float, s_values, n_u: int = 512) -> np.ndarray:
    """<Phi(s, .), psi2_perp(s, .)> on a u grid for every s sample."""
    s_values = np.asarray(s_values, dtype=float)
    U = 14.0 * profile.transverse_width(s_values)
    u = np.linspace(-U, U, n_u, endpoint=False)
    S, Uu = np.meshgrid(s_values, u, indexing="ij")
    phi = profile.phi(S, Uu)
    corr = profile.psi2_perp(S, Uu, data.eta)
    return np.sum(phi * corr, axis=1) * (u[1] - u[0])


# ---------------------------------------------------------------------------
# residual of the local Schroedinger equation


def _spectral_derivs(psi, ds, du):
    ns, nu = psi.shape
    ks = 2 * np.pi * np.fft.fftfreq(ns, d=ds)
    ku = 2 * np.pi * np.fft.fftfreq(nu, d=du)
    Ps = sfft.fft(psi, axis=0)
    psi_s = sfft.ifft(1j * ks[:, None] * Ps, axis=0)
    psi_ss = sfft.ifft(-(ks[:, None] ** 2) * Ps, axis=0)
    psi_uu = sfft.ifft(-(ku[None, :] ** 2) * sfft.fft(psi, axis=1), axis=1)
    return psi_s, psi_ss, psi_uu


def local_hamiltonian_apply(profile, potential: Callable, hbar: float, s, u, psi):
    """H_BO psi on a uniform (s, u) grid with spectral derivatives.

    H_BO = -hbar^2/(2J^2) d_s^2 - hbar^3 k' u/J^3 d_s - hbar^2 Q(s, hbar u)
           - 1/2 d_u^2 + V~(s, hbar u) + (a hbar)^-2 W~(s, hbar u),  J = 1 - hbar k u.

    ``potential(q)`` is the Cartesian potential V + (a hbar)^-2 W.
    """
    ds = s[1] - s[0]
    du = u[1] - u[0]
    S, U = np.meshgrid(s, u, indexing="ij")
    k, kd, kdd = profile.frame.curvature_derivatives(s)
    k = k[:, None]
    kd = kd[:, None]
    kdd = kdd[:, None]
    v = hbar * U
    J = 1.0 - k * v
    Q = extrapotential_from_curvature(k, kd, kdd, v)
    q = profile.frame.position(s)[:, None, :] + v[..., None] * profile.frame.normal(s)[:, None, :]
    pot = potential(q)
    psi_s, psi_ss, psi_uu = _spectral_derivs(psi, ds, du)
    return (
        -(hbar**2) / (2 * J**2) * psi_ss
        - hbar**3 * kd * U / J**3 * psi_s
        - hbar**2 * Q * psi
        - 0.5 * psi_uu
        + pot * psi
    )


def residual_norm(
    profile,
    potential: Callable,
    states: tuple,
    delta: float,
    cut: CutFunction,
    hbar: float,
    correction: bool = True,
    ns: Optional[int] = None,
    nu: int = 128,
) -> float:
    """||zeta|| with zeta = i hbar d_t psi_ap - H_BO psi_ap at the middle state.

    ``states`` holds SemiclassicalData at t - delta, t, t + delta.
    """
    before, mid, after = states
    sig = np.sqrt(hbar * (2 * mid.k + 1) / 2) * abs(mid.A)
    sig_p = np.sqrt(hbar * (2 * mid.k + 1) / 2) * abs(mid.B)
    Ls = 11.0 * sig
    kmax = (abs(mid.eta) + 10 * sig_p) / hbar
    if ns is None:
        ds_target = min(sig / 6.0, np.pi / (1.5 * kmax))
        ns = int(2 ** np.ceil(np.log2(2 * Ls / ds_target)))
    # psi_ap vanishes outside the cut support, so the periodic s grid may stop there
    lo = max(mid.a - Ls, cut.s_outer[0])
    hi = min(mid.a + Ls, cut.s_outer[1])
    s = lo + (hi - lo) * np.arange(ns) / ns
    if s[0] < profile.frame.s_interval[0] or s[-1] > profile.frame.s_interval[1]:
        raise ConfigurationError("residual grid leaves the chart interval")
    U = min(13.0 * profile.transverse_width(s), cut.v_outer / hbar**profile.beta)
    u = np.linspace(-U, U, nu, endpoint=False)
    S, Uu = np.meshgrid(s, u, indexing="ij")
    psi = [approximant_su(profile, st, cut, hbar, S, Uu, correction) for st in states]
    dpsi = (psi[2] - psi[0]) / (after.t - before.t)
    zeta = 1j * hbar * dpsi - local_hamiltonian_apply(profile, potential, hbar, s, u, psi[1])
    return float(np.sqrt(np.sum(np.abs(zeta) ** 2) * (s[1] - s[0]) * (u[1] - u[0])))


def residual_at(
    profile,
    potential: Callable,
    E: ScalarField,
    start: SemiclassicalData,
    t: float,
    hbar: float,
    cut: CutFunction,
    correction: bool = True,
    delta_factor: float = 1e-3,
    dt: float = 5e-3,
    richardson_tol: float = 0.01,
) -> float:
    """Residual norm at time ``t`` with a Richardson check on the time difference.

    The classical data is integrated to t - delta, then advanced by two RK4
    steps of size delta to give the three states of the central difference.
    """
    from ..classical import integrate_flat

    def around(delta):
        t0 = t - delta
        if t0 > 0:
            base = integrate_flat(E, [start.a], [start.eta], t0, min(dt, t0), A0=[[start.A]], B0=[[start.B]])
            s0 = SemiclassicalData.from_trajectory(base, -1, start.k)
        else:
            s0 = start
        tr = integrate_flat(E, [s0.a], [s0.eta], 2 * delta, delta, A0=[[s0.A]], B0=[[s0.B]])
        roots = tr.sqrt_det()
        if s0.sqrt_det is not None and abs(roots[0] - s0.sqrt_det) > abs(roots[0] + s0.sqrt_det):
            roots = -roots
        out = []
        for i in range(3):
            out.append(
                SemiclassicalData(
                    t0 + float(tr.times[i]),
                    float(tr.a[i, 0]),
                    float(tr.eta[i, 0]),
                    s0.S + float(tr.S[i]),
                    complex(tr.A[i, 0, 0]),
                    complex(tr.B[i, 0, 0]),
                    complex(roots[i]),
                    s0.k,
                )
            )
        return tuple(out)

    d = delta_factor * hbar**2
    r1 = residual_norm(profile, potential, around(d), d, cut, hbar, correction)
    r2 = residual_norm(profile, potential, around(0.5 * d), 0.5 * d, cut, hbar, correction)
    if abs(r1 - r2) > richardson_tol * max(r1, r2, 1e-300):
        raise StepError(f"time-difference residual not converged: {r1:.6e} vs {r2:.6e}")
    return r2
