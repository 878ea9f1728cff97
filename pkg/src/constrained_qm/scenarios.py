"""Built-in problem definitions.

Each scenario binds a confining potential W, a longitudinal potential V,
the constraint geometry and default initial data.  Knobs are plain numbers
that can be overridden by name (``build_scenario("circle", {"radius": 2})``).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import ConfinementError, ConstrainedQMError, ScenarioError
from .fields import ScalarField
from .geometry import (
    ConstraintReport,
    TubularChart,
    arc_length_parametrize,
    circle_curve,
    validate_constraint,
)
from .quantum.approximant import CurveFrame, FixedProfile, FlatFrame, HarmonicProfile, SemiclassicalData
from .transverse import RellichModel, fd_eigensolve_1d

COUPLING = "coupling-constant"
DILATION = "normal-dilation"


@dataclass(frozen=True)
class Knob:
    default: float
    doc: str
    kind: type = float
    lower: Optional[float] = None
    upper: Optional[float] = None
    strict_lower: bool = False

    def coerce(self, name, value):
        try:
            v = self.kind(value)
        except (TypeError, ValueError) as exc:
            raise ScenarioError(f"knob {name!r} expects {self.kind.__name__}, got {value!r}") from exc
        if self.kind is int and float(value) != v:
            raise ScenarioError(f"knob {name!r} expects an integer, got {value!r}")
        if self.lower is not None and (v < self.lower or (self.strict_lower and v == self.lower)):
            raise ScenarioError(f"knob {name!r} = {v} is below its lower bound {self.lower}")
        if self.upper is not None and v > self.upper:
            raise ScenarioError(f"knob {name!r} = {v} exceeds its upper bound {self.upper}")
        return v


def _packet_knobs(a0, eta0, T):
    return {
        "a0": Knob(a0, "initial packet centre (arc length)"),
        "eta0": Knob(eta0, "initial momentum"),
        "A0": Knob(1.0, "initial position-spread parameter (real, positive)", float, 0.0, strict_lower=True),
        "T": Knob(T, "time horizon", float, 0.0, strict_lower=True),
        "n": Knob(0, "transverse mode index", int, 0),
        "a": Knob(1.0, "squeeze parameter a in eps = a hbar^alpha", float, 0.0, strict_lower=True),
    }


@dataclass(frozen=True)
class Scenario:
    """An immutable, fully wired problem definition."""

    id: str
    description: str
    ambient_dims: tuple
    scaling_mode: str
    alpha: float
    a: float
    geometry: str
    knobs: dict
    W: ScalarField
    V: Optional[ScalarField] = None
    profile: object = None
    chart: Optional[TubularChart] = None
    tags: tuple = ()
    T: float = 1.0
    omega_star: float = 0.0
    extra_potential: Optional[Callable] = None
    constraint_points: Optional[np.ndarray] = field(default=None, repr=False)
    constraint_frames: Optional[np.ndarray] = field(default=None, repr=False)
    transverse_potential: Optional[Callable] = None
    model: object = None

    @property
    def runnable(self) -> bool:
        return self.profile is not None

    @property
    def classical_domain(self):
        if self.chart is None:
            return None
        s0, s1 = self.chart.s_interval
        return ([s0], [s1])

    def initial_data(self) -> SemiclassicalData:
        k = self.knobs
        A = complex(k["A0"])
        return SemiclassicalData(0.0, float(k["a0"]), float(k["eta0"]), 0.0, A, 1.0 / A, np.sqrt(A), 0)

    def potential(self, q, hbar: float):
        """Total reference potential at ambient points q (..., 2)."""
        q = np.asarray(q, dtype=float)
        if self.scaling_mode == COUPLING:
            eps = self.a * hbar**self.alpha
            out = self.W(q) / eps**2
        else:
            eps = self.a * hbar
            out = self.W(np.stack([q[..., 0], q[..., 1] / eps], axis=-1))
        if self.V is not None:
            out = out + self.V(q)
        if self.extra_potential is not None:
            out = out + self.extra_potential(q, hbar)
        return out

    def derived_frequency(self, s):
        """sqrt(n^T Hess W n) on the constraint curve (coupling-constant scaling)."""
        frame = self.profile.frame
        q = frame.position(s)
        nrm = frame.normal(s)
        H = self.W.hessian(q)
        return np.sqrt(np.einsum("...i,...ij,...j->...", nrm, H, nrm))

    def validate(self) -> ConstraintReport:
        if self.constraint_points is None:
            raise ScenarioError(f"scenario {self.id!r} declares no constraint samples")
        return validate_constraint(self.W, self.constraint_points, self.constraint_frames)


# ---------------------------------------------------------------------------
# fields


def _sqrt1px2(scale: float = 1.0):
    """omega(x, y) = sqrt(1 + (scale x)^2)."""
    c2 = scale**2

    def value(q):
        return np.sqrt(1 + c2 * q[..., 0] ** 2)

    def grad(q):
        x = q[..., 0]
        return np.stack([c2 * x / np.sqrt(1 + c2 * x**2), np.zeros_like(x)], axis=-1)

    def hess(q):
        x = q[..., 0]
        H = np.zeros(q.shape + (2,))
        H[..., 0, 0] = c2 * (1 + c2 * x**2) ** -1.5
        return H

    return ScalarField(2, value, grad, hess)


def _standard_W():
    def value(q):
        x, y = q[..., 0], q[..., 1]
        return 0.5 * (1 + x**2) * y**2

    def grad(q):
        x, y = q[..., 0], q[..., 1]
        return np.stack([x * y**2, (1 + x**2) * y], axis=-1)

    def hess(q):
        x, y = q[..., 0], q[..., 1]
        H = np.empty(q.shape + (2,))
        H[..., 0, 0] = y**2
        H[..., 0, 1] = H[..., 1, 0] = 2 * x * y
        H[..., 1, 1] = 1 + x**2
        return H

    return ScalarField(2, value, grad, hess)


def _circle_W(R: float, omega: float):
    w2 = omega**2

    def value(q):
        return 0.5 * w2 * (np.linalg.norm(q, axis=-1) - R) ** 2

    def grad(q):
        r = np.linalg.norm(q, axis=-1)
        return (w2 * (r - R) / r)[..., None] * q

    def hess(q):
        r = np.linalg.norm(q, axis=-1)[..., None, None]
        qh = q[..., :, None] / r
        P = qh * np.swapaxes(qh, -1, -2)
        return w2 * (P + (r - R) / r * (np.eye(2) - P))

    return ScalarField(2, value, grad, hess)


def _trap_fields(R0: float, kappa: float):
    """W = A^2/2 with A(r, z) = (r - R0) + kappa z^2, and omega = |grad A|."""

    def A(q):
        return q[..., 0] - R0 + kappa * q[..., 1] ** 2

    def gA(q):
        return np.stack([np.ones_like(q[..., 0]), 2 * kappa * q[..., 1]], axis=-1)

    def hA(q):
        H = np.zeros(q.shape + (2,))
        H[..., 1, 1] = 2 * kappa
        return H

    def value(q):
        return 0.5 * A(q) ** 2

    def grad(q):
        return A(q)[..., None] * gA(q)

    def hess(q):
        g = gA(q)
        return g[..., :, None] * g[..., None, :] + A(q)[..., None, None] * hA(q)

    c = 4 * kappa**2

    def w(q):
        return np.sqrt(1 + c * q[..., 1] ** 2)

    def wg(q):
        z = q[..., 1]
        return np.stack([np.zeros_like(z), c * z / np.sqrt(1 + c * z**2)], axis=-1)

    def wh(q):
        z = q[..., 1]
        H = np.zeros(q.shape + (2,))
        H[..., 1, 1] = c * (1 + c * z**2) ** -1.5
        return H

    return ScalarField(2, value, grad, hess), ScalarField(2, w, wg, wh)


def _harmonic_V(omega_long: float):
    w2 = omega_long**2

    def hess(q):
        H = np.zeros(q.shape + (2,))
        H[..., 0, 0] = w2
        return H

    return ScalarField(
        2,
        lambda q: 0.5 * w2 * q[..., 0] ** 2,
        lambda q: np.stack([w2 * q[..., 0], np.zeros_like(q[..., 0])], axis=-1),
        hess,
    )


def _sextic_W(V4: float, V6: float):
    def hess(q):
        y = q[..., 1]
        H = np.zeros(q.shape + (2,))
        H[..., 1, 1] = 12 * V4 * y**2 + 30 * V6 * y**4
        return H

    return ScalarField(
        2,
        lambda q: V4 * q[..., 1] ** 4 + V6 * q[..., 1] ** 6,
        lambda q: np.stack([np.zeros_like(q[..., 1]), 4 * V4 * q[..., 1] ** 3 + 6 * V6 * q[..., 1] ** 5], axis=-1),
        hess,
    )


def _smoothstep_derivs(z, inner, outer):
    """g, g', g'' of the quintic cut as a function of z >= 0."""
    d = outer - inner
    t = np.clip((outer - z) / d, 0.0, 1.0)
    g = t**3 * (10 - 15 * t + 6 * t**2)
    inside = (t > 0) & (t < 1)
    g1 = np.where(inside, -30 * t**2 * (1 - t) ** 2 / d, 0.0)
    g2 = np.where(inside, 60 * t * (1 - t) * (1 - 2 * t) / d**2, 0.0)
    return g, g1, g2


def rellich_W(a: float = 1.0, inner: float = 0.5, outer: float = 0.6) -> ScalarField:
    """W(x, y) = g(|x|) <R(x) y, y> / (2 a^2) on R^4 = (x1, x2, y1, y2)."""
    c = 1.0 / (2 * a**2)

    def parts(q):
        x = q[..., :2]
        y1, y2 = q[..., 2], q[..., 3]
        r = np.linalg.norm(x, axis=-1)
        g, g1, g2 = _smoothstep_derivs(r, inner, outer)
        R = RellichModel.matrix(x)
        P = R[..., 0, 0] * y1**2 + 2 * R[..., 0, 1] * y1 * y2 + R[..., 1, 1] * y2**2
        return x, y1, y2, r, g, g1, g2, R, P

    def value(q):
        *_, g, _g1, _g2, _R, P = parts(q)
        return c * g * P

    def _gx(x, r, g1):
        safe = np.where(r > 0, r, 1.0)
        return (g1 / safe)[..., None] * x

    def grad(q):
        x, y1, y2, r, g, g1, _g2, R, P = parts(q)
        Px = 0.25 * np.stack([y1**2 - y2**2, 2 * y1 * y2], axis=-1)
        y = np.stack([y1, y2], axis=-1)
        Py = 2 * np.einsum("...ij,...j->...i", R, y)
        gx = _gx(x, r, g1)
        return c * np.concatenate([gx * P[..., None] + g[..., None] * Px, g[..., None] * Py], axis=-1)

    def hess(q):
        x, y1, y2, r, g, g1, g2, R, P = parts(q)
        safe = np.where(r > 0, r, 1.0)
        xh = x / safe[..., None]
        I2 = np.eye(2)
        outer_x = xh[..., :, None] * xh[..., None, :]
        gxx = g2[..., None, None] * outer_x + (g1 / safe)[..., None, None] * (I2 - outer_x)
        gx = _gx(x, r, g1)
        Px = 0.25 * np.stack([y1**2 - y2**2, 2 * y1 * y2], axis=-1)
        y = np.stack([y1, y2], axis=-1)
        Py = 2 * np.einsum("...ij,...j->...i", R, y)
        Pxy = 0.5 * np.stack([np.stack([y1, -y2], -1), np.stack([y2, y1], -1)], axis=-2)
        H = np.empty(q.shape + (4,))
        H[..., :2, :2] = gxx * P[..., None, None] + gx[..., :, None] * Px[..., None, :] + Px[..., :, None] * gx[..., None, :]
        xy = gx[..., :, None] * Py[..., None, :] + g[..., None, None] * Pxy
        H[..., :2, 2:] = xy
        H[..., 2:, :2] = np.swapaxes(xy, -1, -2)
        H[..., 2:, 2:] = 2 * g[..., None, None] * R
        return c * H

    return ScalarField(4, value, grad, hess)


# ---------------------------------------------------------------------------
# builders


def _flat_samples(x_lo, x_hi, count=200):
    x = np.linspace(x_lo, x_hi, count)
    pts = np.stack([x, np.zeros_like(x)], axis=-1)
    return pts, np.array([[0.0], [1.0]])


def _curve_samples(frame, s_lo, s_hi, count=200, closed=False):
    s = np.linspace(s_lo, s_hi, count, endpoint=not closed)
    return frame.position(s), frame.normal(s)[..., :, None]


def _check_omega(profile, s, omega_star):
    w = profile.omega(s)[0]
    if np.min(w) <= omega_star:
        raise ConfinementError(f"transverse frequency drops to {np.min(w):.3g} <= omega_* = {omega_star}")


def _build_standard(k, alpha=1.0, sid="standard", desc=""):
    frame = FlatFrame()
    W = _standard_W()
    prof = HarmonicProfile(frame, _sqrt1px2(), k["a"], k["n"], None, W, alpha)
    _check_omega(prof, np.linspace(-10, 10, 201), 0.5)
    pts, fr = _flat_samples(-3, 3)
    return Scenario(
        sid,
        desc,
        (1, 1),
        COUPLING,
        alpha,
        k["a"],
        "flat",
        k,
        W,
        None,
        prof,
        None,
        (),
        k["T"],
        0.5,
        constraint_points=pts,
        constraint_frames=fr,
    )


def build_standard(k):
    return _build_standard(k, 1.0, "standard", "flat constraint y = 0 with omega(x) = sqrt(1 + x^2)")


def build_alpha_sweep(k):
    sc = _build_standard(k, k["alpha"], "alpha-sweep", "standard example with eps = a hbar^alpha")
    return sc


def build_circle(k):
    R = k["radius"]
    curve = circle_curve(R, (-np.pi * R, np.pi * R))
    hw = 0.9 * R
    chart = TubularChart(curve, (-np.pi * R, np.pi * R), (-hw, hw), hw)
    frame = CurveFrame(chart)
    W = _circle_W(R, k["omega"])
    w = k["omega"]
    omega_field = ScalarField(
        2,
        lambda q: np.full(q.shape[:-1], w),
        lambda q: np.zeros(q.shape),
        lambda q: np.zeros(q.shape + (2,)),
    )
    prof = HarmonicProfile(frame, omega_field, k["a"], k["n"], None, W, 1.0)
    pts, fr = _curve_samples(frame, -np.pi * R, np.pi * R, 240, closed=True)
    return Scenario(
        "circle",
        "circle of radius R confined by omega^2 dist^2/2",
        (1, 1),
        COUPLING,
        1.0,
        k["a"],
        "curve",
        k,
        W,
        None,
        prof,
        chart,
        (),
        k["T"],
        0.5 * w,
        constraint_points=pts,
        constraint_frames=fr,
    )


def trap_curve(R0: float, kappa: float, z_max: float):
    """Zero curve r = R0 - kappa z^2 of the trap, arc length 0 at z = 0."""

    def q(t):
        t = np.asarray(t, dtype=float)
        return np.stack([R0 - kappa * t**2, t], axis=-1)

    def dq(t):
        t = np.asarray(t, dtype=float)
        return np.stack([-2 * kappa * t, np.ones_like(t)], axis=-1)

    def ddq(t):
        t = np.asarray(t, dtype=float)
        return np.stack([np.full_like(t, -2 * kappa), np.zeros_like(t)], axis=-1)

    probe = arc_length_parametrize(q, (-z_max, z_max), 256, dq, ddq)
    s0 = -float(probe.s_of_t(0.0))
    return arc_length_parametrize(q, (-z_max, z_max), 256, dq, ddq, s_start=s0, name="trap")


def build_magnetic_trap(k):
    R0, kappa, zmax = k["R0"], k["kappa"], k["z_max"]
    if R0 - kappa * zmax**2 <= 0:
        raise ScenarioError("trap curve reaches the symmetry axis r = 0")
    curve = trap_curve(R0, kappa, zmax)
    kmax = 2 * kappa
    hw = min(0.5, 0.8 / kmax, 0.8 * (R0 - kappa * zmax**2))
    sI = (curve.s_min, curve.s_max)
    chart = TubularChart(curve, sI, (-hw, hw), hw)
    frame = CurveFrame(chart)
    W, omega_field = _trap_fields(R0, kappa)
    prof = HarmonicProfile(frame, omega_field, k["a"], k["n"], None, W, 1.0)
    _check_omega(prof, np.linspace(*sI, 101), 0.5)
    pts, fr = _curve_samples(frame, *sI)
    a0 = float(curve.s_of_t(k["z0"]))
    k = dict(k, a0=a0)

    def centrifugal(q, hbar):
        r = np.maximum(q[..., 0], 1e-3)
        return -(hbar**2) / (8 * r**2)

    return Scenario(
        "magnetic-trap",
        "axially symmetric trap A(r, z) = (r - R0) + kappa z^2 in the (r, z) half plane",
        (1, 1),
        COUPLING,
        1.0,
        k["a"],
        "curve",
        k,
        W,
        None,
        prof,
        chart,
        ("strongly-axially-symmetric",),
        k["T"],
        0.5,
        extra_potential=centrifugal,
        constraint_points=pts,
        constraint_frames=fr,
    )


def build_sextic(k):
    V4, V6, a = k["V4"], k["V6"], k["a"]
    W = _sextic_W(V4, V6)
    trans = lambda u: V4 * (u / a) ** 4 + V6 * (u / a) ** 6  # noqa: E731
    pair = fd_eigensolve_1d(trans, k["n"] + 1, half_width=4.0 * a, spacing=0.005 * a)[k["n"]]
    du = pair.u[1] - pair.u[0]
    width = float(np.sqrt(2 * np.sum(pair.u**2 * pair.values**2) * du))
    frame = FlatFrame()
    V = _harmonic_V(k["omega_long"])
    prof = FixedProfile(frame, pair, pair.energy, width, 1.0, V, n=0)
    pts, fr = _flat_samples(-3, 3)
    return Scenario(
        "sextic",
        "normal-dilation sextic oscillator W(x, y/eps) = V4 (y/eps)^4 + V6 (y/eps)^6",
        (1, 1),
        DILATION,
        1.0,
        a,
        "flat",
        k,
        W,
        V,
        prof,
        None,
        ("degenerate-minimum",),
        k["T"],
        0.0,
        constraint_points=pts,
        constraint_frames=fr,
        transverse_potential=trans,
    )


def build_rellich(k):
    a = k["a"]
    W = rellich_W(a)
    # start just past the cut x1 = 0, x2 < 0 so the loop closes across it
    phi = -0.5 * np.pi + 2 * np.pi * (np.arange(240) + 0.5) / 240
    r = k["loop_radius"]
    pts = np.zeros((len(phi), 4))
    pts[:, 0] = r * np.cos(phi)
    pts[:, 1] = r * np.sin(phi)
    frame = np.zeros((4, 2))
    frame[2, 0] = frame[3, 1] = 1.0
    return Scenario(
        "rellich",
        "Rellich matrix confinement <g(|x|) R(x) y, y>/(2 a^2) over a 2D base",
        (2, 2),
        COUPLING,
        1.0,
        a,
        "flat",
        k,
        W,
        None,
        None,
        None,
        ("non-spectrally-smooth",),
        1.0,
        0.0,
        constraint_points=pts,
        constraint_frames=frame,
        model=RellichModel(a),
    )


_CATALOGUE = {
    "standard": (
        "flat constraint y = 0, omega(x) = sqrt(1 + x^2), coupling-constant scaling",
        build_standard,
        _packet_knobs(1.0, 0.0, 1.0),
    ),
    "alpha-sweep": (
        "standard example with eps = a hbar^alpha; alpha = 1 reproduces 'standard'",
        build_alpha_sweep,
        dict(_packet_knobs(1.0, 0.0, 1.0), alpha=Knob(0.5, "hbar exponent of eps, in (0, 1]", float, 0.0, 1.0, True)),
    ),
    "circle": (
        "circle of radius R with constant transverse frequency",
        build_circle,
        dict(
            _packet_knobs(0.0, 0.5, 1.0),
            radius=Knob(1.0, "circle radius R", float, 0.0, strict_lower=True),
            omega=Knob(1.0, "transverse frequency", float, 0.0, strict_lower=True),
        ),
    ),
    "magnetic-trap": (
        "zero curve of A(r, z) = (r - R0) + kappa z^2; reference keeps the -hbar^2/(8 r^2) term",
        build_magnetic_trap,
        dict(
            {key: v for key, v in _packet_knobs(0.0, 0.0, 1.0).items() if key != "a0"},
            R0=Knob(3.0, "ring radius at z = 0", float, 0.0, strict_lower=True),
            kappa=Knob(0.25, "curvature coefficient of A", float, 0.0, strict_lower=True),
            z_max=Knob(2.6, "half extent of the curve in z", float, 0.0, strict_lower=True),
            z0=Knob(0.5, "initial height z of the packet centre"),
        ),
    ),
    "sextic": (
        "normal-dilation sextic transverse oscillator, harmonic longitudinal potential",
        build_sextic,
        dict(
            _packet_knobs(1.0, 0.0, 1.0),
            V4=Knob(float(np.sqrt(6 * np.sqrt(2))), "quartic coefficient", float, 0.0),
            V6=Knob(1.0, "sextic coefficient", float, 0.0, strict_lower=True),
            omega_long=Knob(1.0, "longitudinal harmonic frequency", float, 0.0),
        ),
    ),
    "rellich": (
        "Rellich matrix confinement over a 2D base; tagged non-spectrally-smooth",
        build_rellich,
        {
            "a": Knob(1.0, "squeeze parameter", float, 0.0, strict_lower=True),
            "loop_radius": Knob(0.3, "radius of the validation loop around x = 0", float, 0.0, 0.49, True),
        },
    ),
}

SCENARIO_IDS = tuple(_CATALOGUE)


def list_scenarios() -> list:
    """Catalogue entries: id, description and knob schema."""
    out = []
    for sid, (desc, _b, knobs) in _CATALOGUE.items():
        out.append(
            {
                "id": sid,
                "description": desc,
                "knobs": {
                    name: {"default": kn.default, "type": kn.kind.__name__, "doc": kn.doc} for name, kn in knobs.items()
                },
            }
        )
    return out


def build_scenario(sid: str, overrides: Optional[dict] = None) -> Scenario:
    """Build a catalogue scenario with knob overrides applied and validated."""
    if sid not in _CATALOGUE:
        raise ScenarioError(f"unknown scenario {sid!r}; choose one of {', '.join(SCENARIO_IDS)}")
    _desc, builder, schema = _CATALOGUE[sid]
    values = {name: kn.default for name, kn in schema.items()}
    for name, value in (overrides or {}).items():
        if name not in schema:
            raise ScenarioError(f"scenario {sid!r} has no knob {name!r}")
        values[name] = schema[name].coerce(name, value)
    try:
        return builder(values)
    except ScenarioError:
        raise
    except ConstrainedQMError as exc:
        raise ScenarioError(f"scenario {sid!r} rejected: {exc}") from exc


def with_knobs(scenario: Scenario, **overrides) -> Scenario:
    schema = _CATALOGUE[scenario.id][2]
    base = {key: v for key, v in scenario.knobs.items() if key in schema}
    return build_scenario(scenario.id, dict(base, **overrides))


__all__ = [
    "Knob",
    "Scenario",
    "SCENARIO_IDS",
    "build_scenario",
    "list_scenarios",
    "rellich_W",
    "trap_curve",
    "with_knobs",
]
