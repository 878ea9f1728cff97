"""Uniform periodic grids, grid states, moments and error norms."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from ..errors import GridMismatchError


@dataclass(frozen=True)
class Grid2D:
    """Periodic grid with points x0 + i*dx, i < nx (the right end is excluded)."""

    x_range: tuple
    y_range: tuple
    nx: int
    ny: int

    def __post_init__(self):
        if self.nx < 2 or self.ny < 2:
            raise ValueError("grid needs at least two points per axis")
        if not (self.x_range[1] > self.x_range[0] and self.y_range[1] > self.y_range[0]):
            raise ValueError("grid ranges must be increasing")

    @property
    def dx(self) -> float:
        return (self.x_range[1] - self.x_range[0]) / self.nx

    @property
    def dy(self) -> float:
        return (self.y_range[1] - self.y_range[0]) / self.ny

    @property
    def cell(self) -> float:
        return self.dx * self.dy

    @property
    def x(self) -> np.ndarray:
        return self.x_range[0] + self.dx * np.arange(self.nx)

    @property
    def y(self) -> np.ndarray:
        return self.y_range[0] + self.dy * np.arange(self.ny)

    def mesh(self):
        return np.meshgrid(self.x, self.y, indexing="ij")

    def wavenumbers(self):
        kx = 2 * np.pi * np.fft.fftfreq(self.nx, d=self.dx)
        ky = 2 * np.pi * np.fft.fftfreq(self.ny, d=self.dy)
        return kx, ky

    def refined(self, factor: int = 2) -> "Grid2D":
        return replace(self, nx=self.nx * factor, ny=self.ny * factor)


@dataclass(frozen=True)
class GridState:
    grid: Grid2D
    values: np.ndarray
    hbar: float
    time: float = 0.0

    def __post_init__(self):
        if self.values.shape != (self.grid.nx, self.grid.ny):
            raise GridMismatchError("values do not match the grid shape")

    def norm(self) -> float:
        return float(np.sqrt(np.sum(np.abs(self.values) ** 2) * self.grid.cell))

    def inner(self, other: "GridState") -> complex:
        _check_compatible(self, other)
        return complex(np.vdot(self.values, other.values) * self.grid.cell)

    def with_values(self, values, time=None) -> "GridState":
        return GridState(self.grid, values, self.hbar, self.time if time is None else time)


def _check_compatible(s1: GridState, s2: GridState):
    if s1.grid != s2.grid:
        raise GridMismatchError("states live on different grids")
    if not np.isclose(s1.hbar, s2.hbar, rtol=1e-14, atol=0):
        raise GridMismatchError("states have different hbar")


@dataclass(frozen=True)
class L2Error:
    raw: float
    phase_optimized: float
    optimal_phase: float


def l2_error(s1: GridState, s2: GridState) -> L2Error:
    """L2 distance, raw and minimized over a constant global phase."""
    _check_compatible(s1, s2)
    diff = s1.values - s2.values
    raw = np.sqrt(np.sum(np.abs(diff) ** 2) * s1.grid.cell)
    ov = s1.inner(s2)
    # rotate s2 by the optimal phase; forming |s1|^2 + |s2|^2 - 2|ov| would cancel to ~1e-8
    rot = np.exp(-1j * np.angle(ov))
    opt = np.sqrt(np.sum(np.abs(s1.values - rot * s2.values) ** 2) * s1.grid.cell)
    return L2Error(float(raw), float(opt), float(-np.angle(ov)))


def observables(state: GridState, chart=None) -> dict:
    """Norm, means, variances and (with a chart) distance-to-curve moments."""
    X, Y = state.grid.mesh()
    rho = np.abs(state.values) ** 2 * state.grid.cell
    norm = rho.sum()
    p = rho / norm
    mx = np.sum(p * X)
    my = np.sum(p * Y)
    out = {
        "norm": float(np.sqrt(norm)),
        "mean_x": float(mx),
        "mean_y": float(my),
        "var_x": float(np.sum(p * (X - mx) ** 2)),
        "var_y": float(np.sum(p * (Y - my) ** 2)),
    }
    if chart is None:
        out["mean_u"] = out["mean_y"]
        out["transverse_spread"] = float(np.sqrt(out["var_y"]))
        return out
    mask = p > 1e-16 * p.max()
    pts = np.stack([X[mask], Y[mask]], axis=-1)
    _, u, inside = chart.cartesian_to_tubular(pts, strict=False)
    w = p[mask][inside]
    u = u[inside]
    w = w / w.sum()
    mu = np.sum(w * u)
    out["mean_u"] = float(mu)
    out["transverse_spread"] = float(np.sqrt(np.sum(w * (u - mu) ** 2)))
    return out


def x_marginal(state: GridState) -> np.ndarray:
    return np.sum(np.abs(state.values) ** 2, axis=1) * state.grid.dy
