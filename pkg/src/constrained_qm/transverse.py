"""Reduced (transverse) Hamiltonians at a frozen base point.

Covers the harmonic effective potential, finite-difference eigensolvers in
one and two normal dimensions, the sextic quasi-exactly-solvable check, the
Rellich model with its smooth basis and crossing element, and the reduced
resolvent used by the first-order correction.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
import scipy.sparse as sps
from scipy.interpolate import CubicSpline
from scipy.linalg import eigh_tridiagonal
from scipy.sparse.linalg import eigsh

from .errors import ConfinementError, IntervalTooSmallError, OrthogonalityError, OutOfRegionError

BOUNDARY_DECAY = 1e-12


# ---------------------------------------------------------------------------
# harmonic transverse models


@dataclass(frozen=True)
class TransverseModel:
    """Reduced Hamiltonian data: sum_i [-1/2 d^2/du_i^2 + w_i(x)^2 u_i^2/(2 a_i^2)] + V(x)."""

    frequencies: Callable  # x -> array of omega_i(x)
    squeeze: Sequence[float] = (1.0,)
    longitudinal_potential: Optional[Callable] = None
    kind: str = "analytic-harmonic"
    base_point: Optional[np.ndarray] = None
    omega_star: float = 0.0

    def thetas(self, n):
        n = np.atleast_1d(n)
        return (n + 0.5) / np.asarray(self.squeeze, dtype=float)

    def omega(self, x):
        w = np.atleast_1d(np.asarray(self.frequencies(x), dtype=float))
        if np.any(w <= self.omega_star) or np.any(w <= 0):
            raise ConfinementError("transverse frequency is not bounded away from zero")
        return w

    def V(self, x):
        if self.longitudinal_potential is None:
            return 0.0
        return self.longitudinal_potential(x)


def harmonic_effective_potential(model: TransverseModel, n, x) -> float:
    """E_n(x) = sum_i (n_i + 1/2) omega_i(x)/a_i + V(x)."""
    if model.kind != "analytic-harmonic":
        raise ValueError("harmonic effective potential needs an analytic-harmonic model")
    w = model.omega(x)
    theta = model.thetas(n)
    if theta.shape != w.shape:
        raise ValueError("mode index and frequency count differ")
    return float(np.dot(theta, w) + model.V(x))


def hermite_functions(nmax: int, u, Omega: float = 1.0) -> np.ndarray:
    """Normalized eigenfunctions of -1/2 d^2/du^2 + Omega^2 u^2/2, rows j = 0..nmax."""
    u = np.asarray(u, dtype=float)
    xi = np.sqrt(Omega) * u
    out = np.empty((nmax + 1,) + u.shape)
    out[0] = (Omega / np.pi) ** 0.25 * np.exp(-0.5 * xi**2)
    if nmax >= 1:
        out[1] = np.sqrt(2.0) * xi * out[0]
    for j in range(2, nmax + 1):
        out[j] = np.sqrt(2.0 / j) * xi * out[j - 1] - np.sqrt((j - 1) / j) * out[j - 2]
    return out


def ladder_u(c: np.ndarray, Omega: float) -> np.ndarray:
    """Coefficients of u*f given Hermite coefficients c of f (length grows by one)."""
    out = np.zeros(len(c) + 1, dtype=np.result_type(c, float))
    j = np.arange(len(c))
    out[1:] += np.sqrt(j + 1) * c
    out[:-2] += np.sqrt(j[1:]) * c[1:]
    return out / np.sqrt(2.0 * Omega)


def ladder_dOmega(n: int, Omega: float, size: int) -> np.ndarray:
    """Coefficients of d(Phi_n)/d(Omega) in the Hermite basis of frequency Omega."""
    out = np.zeros(size)
    if n >= 2:
        out[n - 2] = np.sqrt(n * (n - 1)) / (4 * Omega)
    out[n + 2] = -np.sqrt((n + 1) * (n + 2)) / (4 * Omega)
    return out


# ---------------------------------------------------------------------------
# eigenpairs and finite-difference solvers


@dataclass
class TransverseEigenpair:
    """Eigenvalue with a real normalized eigenfunction.

    Either ``frequency`` is set (closed-form Hermite function of index
    ``index``) or samples ``values`` on the grid ``u`` are stored.
    """

    energy: float
    index: object = 0
    u: Optional[np.ndarray] = None
    values: Optional[np.ndarray] = None
    frequency: Optional[float] = None
    _spline: Optional[CubicSpline] = field(default=None, repr=False)

    def __call__(self, u):
        u = np.asarray(u, dtype=float)
        if self.frequency is not None:
            return hermite_functions(int(self.index), u, self.frequency)[int(self.index)]
        if self.values is None or np.ndim(self.values) != 1:
            raise ValueError("only one-dimensional sampled eigenfunctions can be interpolated")
        if self._spline is None:
            self._spline = CubicSpline(self.u, self.values)
        out = self._spline(u)
        return np.where((u < self.u[0]) | (u > self.u[-1]), 0.0, out)


def _fix_sign(v, axis_order=None):
    flat = v.ravel()
    thresh = 1e-6 * np.max(np.abs(flat))
    first = np.argmax(np.abs(flat) > thresh)
    return v if flat[first] > 0 else -v


def _boundary_ok(v, width):
    peak = np.max(np.abs(v))
    edge = np.concatenate([np.abs(v[:width]), np.abs(v[-width:])])
    return np.max(edge) <= BOUNDARY_DECAY * peak


def _fd1d_once(V, L, n, count, kinetic):
    u = np.linspace(-L, L, n + 2)[1:-1]
    h = u[1] - u[0]
    d = 2 * kinetic / h**2 + V(u)
    e = np.full(n - 1, -kinetic / h**2)
    w, vec = eigh_tridiagonal(d, e, select="i", select_range=(0, count - 1))
    return u, h, w, vec


def fd_eigensolve_1d(
    potential: Callable,
    count: int,
    half_width: float = 8.0,
    spacing: float = 0.01,
    kinetic: float = 0.5,
    richardson: bool = True,
    auto_widen: bool = True,
    max_half_width: float = 200.0,
) -> list:
    """Lowest eigenpairs of -kinetic d^2/du^2 + potential(u) with Dirichlet ends.

    Second-order differences; with ``richardson`` the eigenvalues from
    spacings h and h/2 are combined to fourth order.  The box is widened
    until every requested eigenfunction has decayed to 1e-12 of its peak at
    the boundary.
    """
    if count < 1:
        raise ValueError("count must be positive")
    L = float(half_width)
    while True:
        n = int(round(2 * L / spacing)) - 1
        u, h, w, vec = _fd1d_once(potential, L, n, count, kinetic)
        band = max(2, n // 100)
        ok = all(_boundary_ok(vec[:, j], band) for j in range(count))
        if ok:
            break
        if not auto_widen or 1.5 * L > max_half_width:
            raise IntervalTooSmallError(f"eigenfunctions do not decay to {BOUNDARY_DECAY} at |u| = {L}")
        L *= 1.5
    if richardson:
        u2, h2, w2, vec2 = _fd1d_once(potential, L, 2 * n + 1, count, kinetic)
        energies = (4 * w2 - w) / 3
        u, h, vec = u2, h2, vec2
    else:
        energies = w
    pairs = []
    for j in range(count):
        v = vec[:, j] / np.sqrt(h * np.sum(vec[:, j] ** 2))
        pairs.append(TransverseEigenpair(float(energies[j]), j, u, _fix_sign(v)))
    return pairs


def _laplacian_2d(n, h):
    main = np.full(n, 2.0)
    off = np.full(n - 1, -1.0)
    D = sps.diags([off, main, off], [-1, 0, 1], format="csr") / h**2
    I = sps.identity(n, format="csr")
    return sps.kron(D, I, format="csr") + sps.kron(I, D, format="csr")


def _fd2d_once(V, L, n, count):
    y = np.linspace(-L, L, n + 2)[1:-1]
    h = y[1] - y[0]
    Y1, Y2 = np.meshgrid(y, y, indexing="ij")
    Vg = V(Y1, Y2)
    H = 0.5 * _laplacian_2d(n, h) + sps.diags(Vg.ravel())
    sigma = float(Vg.min()) - 1.0
    w, vec = eigsh(H.tocsc(), k=count, sigma=sigma, which="LM")
    order = np.argsort(w)
    return y, h, w[order], vec[:, order].reshape(n, n, count)


def fd_eigensolve_2d(
    potential: Callable,
    count: int,
    half_width: float = 8.0,
    spacing: float = 0.1,
    richardson: bool = True,
    auto_widen: bool = True,
    max_half_width: float = 60.0,
) -> list:
    """Lowest eigenpairs of -1/2 Laplacian + potential(y1, y2) on a Dirichlet box."""
    L = float(half_width)
    while True:
        n = int(round(2 * L / spacing)) - 1
        y, h, w, vec = _fd2d_once(potential, L, n, count)
        band = max(2, n // 100)
        ok = True
        for j in range(count):
            v = np.abs(vec[:, :, j])
            edge = max(v[:band].max(), v[-band:].max(), v[:, :band].max(), v[:, -band:].max())
            ok &= edge <= BOUNDARY_DECAY * v.max()
        if ok:
            break
        if not auto_widen or 1.5 * L > max_half_width:
            raise IntervalTooSmallError(f"eigenfunctions do not decay to {BOUNDARY_DECAY} at the box edge {L}")
        L *= 1.5
    if richardson:
        y2, h2, w2, vec2 = _fd2d_once(potential, L, 2 * n + 1, count)
        energies = (4 * w2 - w) / 3
        y, h, vec = y2, h2, vec2
    else:
        energies = w
    pairs = []
    for j in range(count):
        v = vec[:, :, j] / np.sqrt(h * h * np.sum(vec[:, :, j] ** 2))
        pairs.append(TransverseEigenpair(float(energies[j]), j, y, _fix_sign(v)))
    return pairs


# ---------------------------------------------------------------------------
# sextic quasi-exactly-solvable oscillator


@dataclass(frozen=True)
class SexticCheck:
    convention: str
    closed_form_energy: float
    qes_condition_satisfied: bool
    condition_residual: float
    numeric_energy: float

    @property
    def abs_diff(self):
        return abs(self.numeric_energy - self.closed_form_energy)


def sextic_condition(V4: float, V6: float, kinetic_convention: str = "unit"):
    """Return (required V4^2, closed-form E0) for the chosen kinetic convention.

    ``unit``: -d^2/du^2 + V4 u^4 + V6 u^6, needs V4^2 = 12 V6^(3/2), E0 = V4/(2 sqrt V6).
    ``half``: -1/2 d^2/du^2 + ...,      needs V4^2 = 6 sqrt2 V6^(3/2), E0 = V4/(2 sqrt(2 V6)).
    """
    if kinetic_convention == "unit":
        return 12.0 * V6**1.5, V4 / (2.0 * np.sqrt(V6))
    if kinetic_convention == "half":
        return 6.0 * np.sqrt(2.0) * V6**1.5, V4 / (2.0 * np.sqrt(2.0 * V6))
    raise ValueError("kinetic_convention must be 'unit' or 'half'")


def sextic_qes_check(V4: float, V6: float, kinetic_convention: str = "unit", spacing: float = 0.005) -> SexticCheck:
    if V6 <= 0:
        raise ValueError("V6 must be positive")
    required, energy = sextic_condition(V4, V6, kinetic_convention)
    residual = V4**2 - required
    ok = abs(residual) <= 1e-10 * max(1.0, required)
    kinetic = 1.0 if kinetic_convention == "unit" else 0.5
    numeric = fd_eigensolve_1d(lambda u: V4 * u**4 + V6 * u**6, 1, half_width=4.0, spacing=spacing, kinetic=kinetic)
    return SexticCheck(kinetic_convention, float(energy), bool(ok), float(residual), numeric[0].energy)


# ---------------------------------------------------------------------------
# Rellich model


def smoothstep_cut(z, inner: float = 0.5, outer: float = 0.6):
    """1 for |z| <= inner, 0 for |z| >= outer, quintic smoothstep between."""
    z = np.abs(np.asarray(z, dtype=float))
    t = np.clip((outer - z) / (outer - inner), 0.0, 1.0)
    return t**3 * (10 - 15 * t + 6 * t**2)


@dataclass(frozen=True)
class RellichModel:
    """h(x) = -1/2 Laplacian_y + <g(|x|) R(x) y, y>/(2 a^2) with the Rellich matrix R(x)."""

    a: float = 1.0

    @staticmethod
    def matrix(x):
        x = np.asarray(x, dtype=float)
        x1, x2 = x[..., 0], x[..., 1]
        R = np.empty(x.shape[:-1] + (2, 2))
        R[..., 0, 0] = 1 + x1
        R[..., 0, 1] = x2
        R[..., 1, 0] = x2
        R[..., 1, 1] = 1 - x1
        return 0.25 * R

    @staticmethod
    def omegas(x):
        r = np.linalg.norm(np.asarray(x, dtype=float), axis=-1)
        if np.any(r >= 1):
            raise OutOfRegionError("Rellich frequencies need |x| < 1")
        return 0.5 * np.sqrt(1 + r), 0.5 * np.sqrt(1 - r)

    @staticmethod
    def phi(x):
        """Polar angle on the branch [-pi/2, 3pi/2); the cut is x1 = 0, x2 < 0."""
        x = np.asarray(x, dtype=float)
        p = np.arctan2(x[..., 1], x[..., 0])
        return np.where(p < -0.5 * np.pi, p + 2 * np.pi, p)

    @staticmethod
    def sqrt_matrix(x):
        """R(x)^(1/2) in closed form; smooth through x = 0."""
        x = np.asarray(x, dtype=float)
        r = np.linalg.norm(x, axis=-1)
        wp, wm = RellichModel.omegas(x)
        c0 = 0.5 * (wp + wm)
        # (wp - wm)/(2 r) = 1/(2 (sqrt(1+r) + sqrt(1-r))), regular at r = 0
        c1 = 0.5 / (np.sqrt(1 + r) + np.sqrt(1 - r))
        M = np.empty(x.shape[:-1] + (2, 2))
        M[..., 0, 0] = c0 + c1 * x[..., 0]
        M[..., 0, 1] = c1 * x[..., 1]
        M[..., 1, 0] = c1 * x[..., 1]
        M[..., 1, 1] = c0 - c1 * x[..., 0]
        return M

    def potential(self, x, cut: bool = True):
        """Callable (y1, y2) -> <g R(x) y, y>/(2 a^2) at base point x."""
        R = self.matrix(x)
        g = smoothstep_cut(np.linalg.norm(x)) if cut else 1.0
        a2 = self.a**2

        def V(y1, y2):
            return g * (R[0, 0] * y1**2 + 2 * R[0, 1] * y1 * y2 + R[1, 1] * y2**2) / (2 * a2)

        return V


def _require_region(x):
    if np.any(np.linalg.norm(np.asarray(x, dtype=float), axis=-1) >= 0.5):
        raise OutOfRegionError("Rellich closed forms need |x| < 1/2")


def rellich_spectrum(model: RellichModel, x, n_plus: int, n_minus: int):
    """E_{n+,n-}(x) = (w+ + w-)/(2a) + n+ w+/a + n- w-/a."""
    _require_region(x)
    wp, wm = model.omegas(x)
    return (wp + wm) / (2 * model.a) + (n_plus * wp + n_minus * wm) / model.a


def rellich_ground_state(model: RellichModel, x, y):
    """Phi_00(x, y) = [w+ w-/(a^2 pi^2)]^(1/4) exp(-<R^(1/2) y, y>/(2a))."""
    _require_region(x)
    y = np.asarray(y, dtype=float)
    wp, wm = model.omegas(x)
    S = model.sqrt_matrix(x)
    quad = S[0, 0] * y[..., 0] ** 2 + 2 * S[0, 1] * y[..., 0] * y[..., 1] + S[1, 1] * y[..., 1] ** 2
    norm = (wp * wm / (model.a**2 * np.pi**2)) ** 0.25
    return norm * np.exp(-quad / (2 * model.a))


def rellich_excited_and_smooth_basis(model: RellichModel, x, y) -> dict:
    """Raw first excited pair and the smooth rotated basis (Phi_A, Phi_B).

    The raw pair jumps across the cut; at x = 0 the branch phi = 0 is used.
    """
    _require_region(x)
    y = np.asarray(y, dtype=float)
    x = np.asarray(x, dtype=float)
    phi = model.phi(x) if np.linalg.norm(x) > 0 else 0.0
    s, c = np.sin(phi / 2), np.cos(phi / 2)
    wp, wm = model.omegas(x)
    base = rellich_ground_state(model, x, y) / np.sqrt(model.a)
    y1, y2 = y[..., 0], y[..., 1]
    p01 = base * np.sqrt(2 * wm) * (-s * y1 + c * y2)
    p10 = base * np.sqrt(2 * wp) * (c * y1 + s * y2)
    return {
        "phi_01": p01,
        "phi_10": p10,
        "phi_A": s * p01 - c * p10,
        "phi_B": c * p01 + s * p10,
    }


def crossing_matrix_element(model: RellichModel, x) -> float:
    """<Phi_B, h(x) Phi_A> = a^-1 sin(phi/2) cos(phi/2) (w- - w+)."""
    _require_region(x)
    x = np.asarray(x, dtype=float)
    if np.linalg.norm(x) == 0:
        return 0.0
    phi = model.phi(x)
    wp, wm = model.omegas(x)
    return float(np.sin(phi / 2) * np.cos(phi / 2) * (wm - wp) / model.a)


# ---------------------------------------------------------------------------
# reduced resolvent


def reduced_resolvent_coefficients(c: np.ndarray, n: int, Omega: float, tol: float = 1e-8) -> np.ndarray:
    """Apply r = (h2 - E_n)^-1 on the complement of Phi_n to Hermite coefficients c."""
    c = np.asarray(c)
    if n < len(c) and abs(c[n]) > tol * max(1.0, np.max(np.abs(c))):
        raise OrthogonalityError("right-hand side has a component along Phi")
    j = np.arange(len(c))
    gap = (j - n) * Omega
    out = np.zeros_like(c)
    mask = j != n
    out[mask] = c[mask] / gap[mask]
    return out


def reduced_resolvent_apply(
    Phi: TransverseEigenpair,
    rhs: np.ndarray,
    u: np.ndarray,
    potential: Optional[Callable] = None,
    n_basis: int = 80,
    tol: float = 1e-8,
) -> np.ndarray:
    """Solve [h2 - E] psi = rhs with psi orthogonal to Phi on the uniform grid ``u``.

    For closed-form harmonic eigenpairs the expansion uses Hermite
    functions; otherwise the full finite-difference eigenbasis of
    -1/2 d^2/du^2 + potential(u) on the grid is used.
    """
    u = np.asarray(u, dtype=float)
    rhs = np.asarray(rhs)
    h = u[1] - u[0]
    phi = Phi(u)
    scale = np.sqrt(h * np.sum(np.abs(rhs) ** 2))
    overlap = h * np.sum(phi * rhs)
    if abs(overlap) > tol * max(1.0, scale):
        raise OrthogonalityError(f"rhs overlaps Phi by {abs(overlap):.3e}")
    if Phi.frequency is not None:
        basis = hermite_functions(n_basis, u, Phi.frequency)
        c = h * basis @ rhs
        c[int(Phi.index)] = 0.0
        return reduced_resolvent_coefficients(c, int(Phi.index), Phi.frequency, tol=np.inf) @ basis
    if potential is None:
        raise ValueError("a numeric eigenpair needs the transverse potential")
    n = len(u)
    d = 1.0 / h**2 + potential(u)
    e = np.full(n - 1, -0.5 / h**2)
    w, vec = eigh_tridiagonal(d, e)
    vec = vec / np.sqrt(h)
    k = int(np.argmax(np.abs(vec.T @ phi) * h))
    c = h * vec.T @ rhs
    gaps = w - w[k]
    c[k] = 0.0
    gaps[k] = 1.0
    return vec @ (c / gaps)
