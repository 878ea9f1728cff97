"""Constraint geometry: plane curves in arc length, tubular charts,
embedding quantities and the constraint validators.

Sign conventions: the unit normal of a plane curve is the unit tangent
rotated by +pi/2 (times ``orientation``).  A counterclockwise circle of
radius R therefore has the inward normal and curvature k = +1/R, and the
tubular Jacobian is ``1 - k(s) u``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.interpolate import PchipInterpolator
from scipy.spatial import cKDTree

from .errors import (
    ChartWidthError,
    ConvergenceError,
    DegenerateCurveError,
    DegenerateEmbeddingError,
    DomainError,
    FrameError,
    OutOfTubeError,
)
from .fields import ScalarField

DEGENERATE_TANGENT = 1e-12
PROJECTOR_JUMP = 0.5
_GL_X, _GL_W = np.polynomial.legendre.leggauss(16)


def _fd_deriv(f, t, h):
    """Fourth-order central difference of a vectorized function."""
    return (8.0 * (f(t + h) - f(t - h)) - (f(t + 2 * h) - f(t - 2 * h))) / (12.0 * h)


def _rot90(v):
    return np.stack([-v[..., 1], v[..., 0]], axis=-1)


class PlaneCurve:
    """A regular C^2 plane curve, reparametrized by arc length.

    Build instances with :func:`arc_length_parametrize`.  All evaluation
    methods are vectorized over ``s``.
    """

    def __init__(self, param, d1, d2, t_nodes, s_nodes, orientation=1, name=""):
        self._q = param
        self._dq = d1
        self._ddq = d2
        self.t_nodes = np.asarray(t_nodes, dtype=float)
        self.arc_length_table = np.asarray(s_nodes, dtype=float)
        self.orientation = 1 if orientation >= 0 else -1
        self.name = name
        self.s_min = float(self.arc_length_table[0])
        self.s_max = float(self.arc_length_table[-1])
        self.total_length = self.s_max - self.s_min
        self._t_of_s = PchipInterpolator(self.arc_length_table, self.t_nodes)
        self._kh = 1e-3 * (self.t_nodes[-1] - self.t_nodes[0]) / (2 * np.pi)

    # raw parameter -----------------------------------------------------
    def point_t(self, t):
        return self._q(np.asarray(t, dtype=float))

    def d1_t(self, t):
        return self._dq(np.asarray(t, dtype=float))

    def d2_t(self, t):
        return self._ddq(np.asarray(t, dtype=float))

    def speed_t(self, t):
        return np.linalg.norm(self.d1_t(t), axis=-1)

    def curvature_t(self, t):
        d1 = self.d1_t(t)
        d2 = self.d2_t(t)
        cross = d1[..., 0] * d2[..., 1] - d1[..., 1] * d2[..., 0]
        return self.orientation * cross / np.linalg.norm(d1, axis=-1) ** 3

    def s_of_t(self, t):
        """Arc length at raw parameter ``t`` (Gauss-Legendre on the sub-interval)."""
        t = np.asarray(t, dtype=float)
        idx = np.clip(np.searchsorted(self.t_nodes, t, side="right") - 1, 0, len(self.t_nodes) - 2)
        t0 = self.t_nodes[idx]
        half = 0.5 * (t - t0)
        nodes = t0[..., None] + half[..., None] * (_GL_X + 1.0)
        integral = half * np.sum(_GL_W * self.speed_t(nodes), axis=-1)
        return self.arc_length_table[idx] + integral

    def t_of_s(self, s):
        s = self._check(s)
        t = self._t_of_s(s)
        scale = self.t_nodes[-1] - self.t_nodes[0]
        for _ in range(8):
            step = (self.s_of_t(t) - s) / self.speed_t(t)
            t = t - step
            if np.all(np.abs(step) < 1e-15 * scale):
                break
        return t

    def _check(self, s):
        s = np.asarray(s, dtype=float)
        tol = 1e-12 * max(1.0, self.total_length)
        if np.any(s < self.s_min - tol) or np.any(s > self.s_max + tol):
            raise DomainError(f"arc length outside [{self.s_min}, {self.s_max}]")
        return s

    # arc-length quantities ---------------------------------------------
    def position(self, s):
        return self.point_t(self.t_of_s(s))

    def tangent(self, s):
        d1 = self.d1_t(self.t_of_s(s))
        return d1 / np.linalg.norm(d1, axis=-1)[..., None]

    def normal(self, s):
        return self.orientation * _rot90(self.tangent(s))

    def curvature(self, s):
        return self.curvature_t(self.t_of_s(s))

    def curvature_derivatives(self, s):
        """Return (k, dk/ds, d2k/ds2) at arc length ``s``."""
        t = self.t_of_s(s)
        h = self._kh
        k = self.curvature_t(t)
        kt = _fd_deriv(self.curvature_t, t, h)
        ktt = (
            -self.curvature_t(t + 2 * h)
            + 16 * self.curvature_t(t + h)
            - 30 * k
            + 16 * self.curvature_t(t - h)
            - self.curvature_t(t - 2 * h)
        ) / (12 * h * h)
        d1 = self.d1_t(t)
        d2 = self.d2_t(t)
        sp = np.linalg.norm(d1, axis=-1)
        sp_t = np.sum(d1 * d2, axis=-1) / sp
        k_s = kt / sp
        k_ss = (ktt - k_s * sp_t) / sp**2
        return k, k_s, k_ss


def arc_length_parametrize(
    param: Callable,
    t_interval: Sequence[float],
    n_samples: int = 256,
    d1: Optional[Callable] = None,
    d2: Optional[Callable] = None,
    orientation: int = 1,
    s_start: float = 0.0,
    name: str = "",
) -> PlaneCurve:
    """Reparametrize ``param`` (t -> (..., 2)) by arc length.

    Missing derivatives are replaced by fourth-order central differences.
    ``s_start`` is the arc length assigned to the first parameter value.
    """
    if n_samples < 16:
        raise ValueError("n_samples must be at least 16")
    t0, t1 = float(t_interval[0]), float(t_interval[1])
    if not t1 > t0:
        raise ValueError("empty parameter interval")
    h = 1e-4 * max(1.0, abs(t0), abs(t1))
    if d1 is None:
        d1 = lambda t, f=param: _fd_deriv(f, t, h)  # noqa: E731
    if d2 is None:
        d2 = lambda t, f=d1: _fd_deriv(f, t, h)  # noqa: E731
    t_nodes = np.linspace(t0, t1, n_samples + 1)
    half = 0.5 * (t_nodes[1:] - t_nodes[:-1])
    gl_nodes = t_nodes[:-1, None] + half[:, None] * (_GL_X + 1.0)
    speeds = np.linalg.norm(d1(gl_nodes), axis=-1)
    node_speeds = np.linalg.norm(d1(t_nodes), axis=-1)
    if min(speeds.min(), node_speeds.min()) < DEGENERATE_TANGENT:
        raise DegenerateCurveError("tangent vanishes on the parameter interval")
    pieces = half * np.sum(_GL_W * speeds, axis=-1)
    s_nodes = s_start + np.concatenate([[0.0], np.cumsum(pieces)])
    if np.any(np.diff(s_nodes) <= 0):
        raise DegenerateCurveError("arc length table is not strictly increasing")
    return PlaneCurve(param, d1, d2, t_nodes, s_nodes, orientation, name)


def circle_curve(radius: float, s_interval=(-np.pi, np.pi), n_samples: int = 256) -> PlaneCurve:
    """Counterclockwise circle centred at the origin; s = 0 at (R, 0)."""
    R = float(radius)
    t0, t1 = s_interval[0] / R, s_interval[1] / R

    def q(t):
        return R * np.stack([np.cos(t), np.sin(t)], axis=-1)

    def dq(t):
        return R * np.stack([-np.sin(t), np.cos(t)], axis=-1)

    def ddq(t):
        return -q(t)

    return arc_length_parametrize(q, (t0, t1), n_samples, dq, ddq, s_start=s_interval[0], name="circle")


def line_curve(length: float, s_interval=None, n_samples: int = 64) -> PlaneCurve:
    """The x-axis, parametrized by x; its normal is +y."""
    if s_interval is None:
        s_interval = (-0.5 * length, 0.5 * length)

    def q(t):
        t = np.asarray(t, dtype=float)
        return np.stack([t, np.zeros_like(t)], axis=-1)

    def dq(t):
        t = np.asarray(t, dtype=float)
        return np.stack([np.ones_like(t), np.zeros_like(t)], axis=-1)

    def ddq(t):
        t = np.asarray(t, dtype=float)
        return np.zeros(t.shape + (2,))

    return arc_length_parametrize(q, s_interval, n_samples, dq, ddq, s_start=s_interval[0], name="line")


@dataclass(frozen=True)
class TubularChart:
    """Tubular coordinates q = q_M(s) + u n(s) on I x J."""

    curve: PlaneCurve
    s_interval: tuple
    u_interval: tuple
    half_width: float

    def __post_init__(self):
        s0, s1 = self.s_interval
        if s0 < self.curve.s_min - 1e-12 or s1 > self.curve.s_max + 1e-12 or not s1 > s0:
            raise DomainError("chart interval I must lie inside the curve domain")
        if self.half_width <= 0:
            raise ValueError("half_width must be positive")
        ss = np.linspace(s0, s1, 2001)
        kmax = np.max(np.abs(self.curve.curvature(ss)))
        if kmax * self.half_width >= 1.0:
            raise ChartWidthError("|k| * half_width must stay below 1 on the chart")
        u0, u1 = self.u_interval
        if u0 < -self.half_width or u1 > self.half_width:
            raise ChartWidthError("u interval exceeds the tube half-width")
        object.__setattr__(self, "_tree", None)

    def _in_domain(self, s, u, tol=1e-12):
        s0, s1 = self.s_interval
        u0, u1 = self.u_interval
        return (s >= s0 - tol) & (s <= s1 + tol) & (u >= u0 - tol) & (u <= u1 + tol)

    def tubular_to_cartesian(self, s, u):
        s = np.asarray(s, dtype=float)
        u = np.asarray(u, dtype=float)
        if not np.all(self._in_domain(s, u)):
            raise DomainError("(s, u) outside the chart domain")
        return self.curve.position(s) + u[..., None] * self.curve.normal(s)

    def _kdtree(self):
        if self._tree is None:
            t = np.linspace(self.curve.t_of_s(self.s_interval[0]), self.curve.t_of_s(self.s_interval[1]), 4097)
            object.__setattr__(self, "_tree", (cKDTree(self.curve.point_t(t)), t))
        return self._tree

    def cartesian_to_tubular(self, q, strict: bool = True):
        """Inverse chart by Newton iteration on the raw curve parameter.

        With ``strict`` a point outside the tube raises; otherwise the
        return value is ``(s, u, inside)`` with NaN outside.
        """
        q = np.asarray(q, dtype=float)
        shape = q.shape[:-1]
        qf = q.reshape(-1, 2)
        tree, tgrid = self._kdtree()
        _, idx = tree.query(qf)
        t = tgrid[idx].copy()
        tlo, thi = tgrid[0], tgrid[-1]
        scale = thi - tlo
        converged = np.zeros(len(t), dtype=bool)
        for _ in range(50):
            P = self.curve.point_t(t)
            d1 = self.curve.d1_t(t)
            d2 = self.curve.d2_t(t)
            r = qf - P
            g = np.sum(r * d1, axis=-1)
            gp = -np.sum(d1 * d1, axis=-1) + np.sum(r * d2, axis=-1)
            gp = np.where(np.abs(gp) < 1e-300, -1.0, gp)
            step = g / gp
            t = np.clip(t - step, tlo - 0.05 * scale, thi + 0.05 * scale)
            converged = np.abs(step) < 1e-12 * max(1.0, scale)
            if np.all(converged):
                break
        s = self.curve.s_of_t(t)
        u = np.sum((qf - self.curve.point_t(t)) * self.curve.orientation * _rot90(self.curve.d1_t(t)), axis=-1)
        u = u / self.curve.speed_t(t)
        inside = self._in_domain(s, u) & (np.abs(u) < self.half_width)
        if strict:
            if not np.all(inside):
                raise OutOfTubeError("point outside the tubular neighbourhood")
            if not np.all(converged):
                raise ConvergenceError("inverse tubular map did not converge")
            return s.reshape(shape), u.reshape(shape)
        inside &= converged
        s = np.where(inside, s, np.nan)
        u = np.where(inside, u, np.nan)
        return s.reshape(shape), u.reshape(shape), inside.reshape(shape)

    def metric_jacobian(self, s, u):
        J = 1.0 - self.curve.curvature(s) * np.asarray(u, dtype=float)
        if np.any(J <= 0):
            raise ChartWidthError("metric Jacobian 1 - k u is not positive")
        return J

    def extrapotential(self, s, u):
        return extrapotential_from_curvature(*self.curve.curvature_derivatives(s), u)


def extrapotential_from_curvature(k, kd, kdd, u):
    """Q(s, u) making the divergence and expanded kinetic forms agree.

    Q = k^2/(8J^2) + k'' u/(4J^3) + 5 k'^2 u^2/(8J^4) with J = 1 - k u.
    """
    u = np.asarray(u, dtype=float)
    J = 1.0 - k * u
    return k**2 / (8 * J**2) + kdd * u / (4 * J**3) + 5 * kd**2 * u**2 / (8 * J**4)


# ---------------------------------------------------------------------------
# general embeddings


@dataclass(frozen=True)
class Embedding:
    """An n-dimensional chart zeta of a submanifold of R^(n+m) with a normal frame.

    ``chart_jacobian(x)`` returns the (n+m, n) matrix of tangent vectors,
    ``chart_hessian(x)`` the (n+m, n, n) second derivatives and
    ``normal_frame(x)`` an (n+m, m) matrix of orthonormal normals.
    Missing derivatives fall back to finite differences.
    """

    dim_base: int
    codim: int
    chart: Callable
    normal_frame: Callable
    chart_jacobian: Optional[Callable] = None
    chart_hessian: Optional[Callable] = None
    normal_frame_derivative: Optional[Callable] = None
    fd_step: float = 1e-4

    def _partial(self, f, x, i):
        h = self.fd_step * max(1.0, abs(x[i]))
        e = np.zeros_like(x)
        e[i] = h
        return (8 * (f(x + e) - f(x - e)) - (f(x + 2 * e) - f(x - 2 * e))) / (12 * h)

    def tangents(self, x):
        x = np.asarray(x, dtype=float)
        if self.chart_jacobian is not None:
            return np.asarray(self.chart_jacobian(x), dtype=float)
        return np.stack([self._partial(self.chart, x, i) for i in range(self.dim_base)], axis=-1)

    def second_derivatives(self, x):
        x = np.asarray(x, dtype=float)
        if self.chart_hessian is not None:
            return np.asarray(self.chart_hessian(x), dtype=float)
        cols = [self._partial(self.tangents, x, l) for l in range(self.dim_base)]
        # cols[l][:, j] = d_l t_j
        out = np.stack(cols, axis=1)
        return 0.5 * (out + np.swapaxes(out, 1, 2))

    def normal_derivatives(self, x):
        """Array D[:, h, i] = d_i n_h."""
        x = np.asarray(x, dtype=float)
        if self.normal_frame_derivative is not None:
            return np.asarray(self.normal_frame_derivative(x), dtype=float)
        return np.stack([self._partial(self.normal_frame, x, i) for i in range(self.dim_base)], axis=-1)

    def metric(self, x):
        T = self.tangents(x)
        return T.T @ T


@dataclass(frozen=True)
class EmbeddingQuantities:
    G: np.ndarray
    alpha: np.ndarray  # alpha[k, l, j] = n_k . d_l t_j
    beta: np.ndarray  # beta[k, h, i] = n_k . d_i n_h
    Gamma: np.ndarray  # Gamma[i, j, k]


def embedding_quantities(emb: Embedding, x, frame_tol: float = 1e-8) -> EmbeddingQuantities:
    """Induced metric, fundamental forms and Christoffel symbols at ``x``."""
    x = np.asarray(x, dtype=float)
    T = emb.tangents(x)
    Nf = np.asarray(emb.normal_frame(x), dtype=float)
    m = emb.codim
    if Nf.shape != (emb.dim_base + m, m):
        raise FrameError("normal frame has the wrong shape")
    if np.max(np.abs(Nf.T @ Nf - np.eye(m))) > frame_tol or np.max(np.abs(Nf.T @ T), initial=0.0) > frame_tol * max(
        1.0, np.max(np.abs(T))
    ):
        raise FrameError("normal frame is not orthonormal or not normal to the tangents")
    G = T.T @ T
    w = np.linalg.eigvalsh(G)
    if w[0] <= 1e-12 * max(1.0, w[-1]):
        raise DegenerateEmbeddingError("induced metric is singular")
    D2 = emb.second_derivatives(x)  # (N, l, j)
    alpha = np.einsum("ak,alj->klj", Nf, D2)
    if m == 1:
        beta = np.zeros((1, 1, emb.dim_base))
    else:
        Dn = emb.normal_derivatives(x)  # (N, h, i)
        beta = np.einsum("ak,ahi->khi", Nf, Dn)
        beta = 0.5 * (beta - np.swapaxes(beta, 0, 1))
    # dG[j, l, k] = d_j G_lk
    dG = np.einsum("ajl,ak->jlk", D2, T) + np.einsum("al,ajk->jlk", T, D2)
    Ginv = np.linalg.inv(G)
    lower = 0.5 * (np.einsum("jlk->ljk", dG) + np.einsum("klj->ljk", dG) - dG)
    Gamma = np.einsum("il,ljk->ijk", Ginv, lower)
    return EmbeddingQuantities(G, alpha, beta, Gamma)


def christoffel_from_metric(metric: Callable, x, h: float = 1e-4) -> np.ndarray:
    """Levi-Civita symbols of ``metric`` by central differences (fourth order)."""
    x = np.asarray(x, dtype=float)
    n = len(x)
    dG = np.empty((n, n, n))
    for j in range(n):
        e = np.zeros(n)
        step = h * max(1.0, abs(x[j]))
        e[j] = step
        dG[j] = (8 * (metric(x + e) - metric(x - e)) - (metric(x + 2 * e) - metric(x - 2 * e))) / (12 * step)
    lower = 0.5 * (np.einsum("jlk->ljk", dG) + np.einsum("klj->ljk", dG) - dG)
    return np.einsum("il,ljk->ijk", np.linalg.inv(metric(x)), lower)


def curve_embedding(curve: PlaneCurve) -> Embedding:
    """The arc-length chart of a plane curve as a codimension-one embedding."""

    def chart(x):
        return curve.position(x[0])

    def jac(x):
        return curve.tangent(x[0])[:, None]

    def hess(x):
        k = curve.curvature(x[0])
        return (k * curve.normal(x[0]))[:, None, None]

    def frame(x):
        return curve.normal(x[0])[:, None]

    return Embedding(1, 1, chart, frame, jac, hess)


# ---------------------------------------------------------------------------
# constraint validation


@dataclass
class ConstraintReport:
    zero_set_ok: bool
    gradient_ok: bool
    hessian_min_eigenvalue: np.ndarray
    nondegenerate: bool
    spectrally_smooth: bool
    discontinuity_locations: list = field(default_factory=list)
    max_abs_value: float = 0.0
    max_abs_gradient: float = 0.0

    def __post_init__(self):
        if self.spectrally_smooth and self.discontinuity_locations:
            raise ValueError("a spectrally smooth report cannot list discontinuities")

    @property
    def passed(self) -> bool:
        return self.zero_set_ok and self.gradient_ok and self.nondegenerate and self.spectrally_smooth

    def to_dict(self):
        return {
            "zero_set_ok": bool(self.zero_set_ok),
            "gradient_ok": bool(self.gradient_ok),
            "nondegenerate": bool(self.nondegenerate),
            "spectrally_smooth": bool(self.spectrally_smooth),
            "passed": bool(self.passed),
            "hessian_min_eigenvalue_min": float(np.min(self.hessian_min_eigenvalue)),
            "hessian_min_eigenvalue": [float(v) for v in self.hessian_min_eigenvalue],
            "discontinuity_locations": [[float(c) for c in p] for p in self.discontinuity_locations],
            "max_abs_value": float(self.max_abs_value),
            "max_abs_gradient": float(self.max_abs_gradient),
        }


def _clusters(w, tol):
    groups = [[0]]
    for i in range(1, len(w)):
        if abs(w[i] - w[i - 1]) <= tol * max(1.0, abs(w[i])):
            groups[-1].append(i)
        else:
            groups.append([i])
    return groups


def validate_constraint(
    W: ScalarField,
    points,
    normal_frames,
    closed: Optional[bool] = None,
    value_tol: float = 1e-10,
    nondegeneracy_tol: float = 1e-10,
    cluster_tol: float = 1e-8,
    jump_threshold: float = PROJECTOR_JUMP,
) -> ConstraintReport:
    """Check the nondegenerate-critical and spectral-smoothness conditions.

    ``points`` is an ordered path of ambient points on the constraint set
    and ``normal_frames[i]`` an orthonormal (d, m) frame of the normal space
    at ``points[i]``.  Eigenprojections of the normal Hessian are compared
    between neighbours; on closed paths the sign of transported simple
    eigenvectors is also checked around the loop.
    """
    P = np.atleast_2d(np.asarray(points, dtype=float))
    F = np.asarray(normal_frames, dtype=float)
    if F.ndim == 2:
        F = np.broadcast_to(F, (len(P),) + F.shape)
    vals = np.abs(np.asarray(W(P), dtype=float))
    grads = np.linalg.norm(W.gradient(P), axis=-1)
    H = W.hessian(P)
    Hn = np.einsum("nai,nab,nbj->nij", F, H, F)
    Hn = 0.5 * (Hn + np.swapaxes(Hn, 1, 2))
    w, V = np.linalg.eigh(Hn)
    min_eig = w[:, 0]
    locations = []

    groups = [_clusters(wi, cluster_tol) for wi in w]
    projectors = [[V[i][:, g] @ V[i][:, g].T for g in groups[i]] for i in range(len(P))]

    if closed is None:
        steps = np.linalg.norm(np.diff(P, axis=0), axis=-1)
        closed = len(P) > 2 and np.linalg.norm(P[0] - P[-1]) <= 2.0 * np.max(steps) and np.max(steps) > 0

    pairs = [(i, i + 1) for i in range(len(P) - 1)]
    if closed:
        pairs.append((len(P) - 1, 0))
    for i, j in pairs:
        if [len(g) for g in groups[i]] != [len(g) for g in groups[j]]:
            locations.append(P[j])
            continue
        jump = max(np.linalg.norm(a - b) for a, b in zip(projectors[i], projectors[j]))
        if jump > jump_threshold:
            locations.append(P[j])

    if closed and not locations:
        # sign holonomy of simple eigenvectors transported around the loop
        for c, g in enumerate(groups[0]):
            if len(g) != 1:
                continue
            col = g[0]
            v = V[0][:, col]
            for i in range(1, len(P)):
                vi = V[i][:, col]
                v = vi if vi @ v >= 0 else -vi
            if v @ V[0][:, col] < 0:
                # the sign flip is located on the closing step of the loop
                locations.append(0.5 * (P[-1] + P[0]))
                break

    return ConstraintReport(
        zero_set_ok=bool(np.all(vals <= value_tol)),
        gradient_ok=bool(np.all(grads <= value_tol)),
        hessian_min_eigenvalue=min_eig,
        nondegenerate=bool(np.all(min_eig > nondegeneracy_tol)),
        spectrally_smooth=not locations,
        discontinuity_locations=[np.array(p) for p in locations],
        max_abs_value=float(vals.max()),
        max_abs_gradient=float(grads.max()),
    )
