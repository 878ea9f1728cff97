"""Strang-split Fourier propagation of i hbar psi_t = [-hbar^2/2 Laplacian + V] psi."""

from __future__ import annotations

import numpy as np
import scipy.fft as sfft

from ..errors import BoundaryBreachError
from .grid import GridState

BOUNDARY_LIMIT = 1e-12


def boundary_fraction(values: np.ndarray, band: float = 0.04) -> float:
    """Share of the norm carried by the outer ``band`` fraction of each axis."""
    nx, ny = values.shape
    bx = max(2, int(band * nx))
    by = max(2, int(band * ny))
    rho = np.abs(values) ** 2
    total = rho.sum()
    inner = rho[bx:-bx, by:-by].sum()
    return float((total - inner) / total) if total > 0 else 0.0


def split_step_propagate(
    state: GridState,
    potential: np.ndarray,
    dt: float,
    steps: int,
    check_every: int = 200,
    boundary_limit: float = BOUNDARY_LIMIT,
    workers: int = 1,
) -> GridState:
    """Advance ``state`` by ``steps`` Strang steps of size ``dt``.

    Half potential steps between kinetic steps are fused.  The run is
    rejected with :class:`BoundaryBreachError` as soon as the density in the
    outer band of the periodic box exceeds ``boundary_limit``.
    """
    if potential.shape != state.values.shape:
        raise ValueError("potential must be sampled on the state grid")
    if steps < 0:
        raise ValueError("steps must be nonnegative")
    h = state.hbar
    grid = state.grid
    frac = boundary_fraction(state.values)
    if frac > boundary_limit:
        raise BoundaryBreachError(f"initial boundary density {frac:.3e} exceeds {boundary_limit:.0e}")
    if steps == 0:
        return state
    kx, ky = grid.wavenumbers()
    kin = np.exp(-0.5j * h * dt * (kx[:, None] ** 2 + ky[None, :] ** 2))
    half = np.exp(-0.5j * dt * potential / h)
    full = half * half
    psi = state.values * half
    for i in range(1, steps + 1):
        psi = sfft.ifft2(kin * sfft.fft2(psi, workers=workers), workers=workers)
        if i < steps:
            psi *= full
        else:
            psi *= half
        if i % check_every == 0 or i == steps:
            frac = boundary_fraction(psi)
            if frac > boundary_limit:
                raise BoundaryBreachError(f"boundary density {frac:.3e} at t = {state.time + i * dt:.4g}")
    return GridState(grid, psi, h, state.time + steps * dt)
