"""Scalar fields with optional analytic derivatives.

Potentials are passed around as :class:`ScalarField` objects.  When a
closed-form gradient or Hessian is missing, fourth-order central
differences with a relative step of ``1e-4`` are used instead.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

FD_REL_STEP = 1e-4


def _steps(x, rel):
    return rel * np.maximum(1.0, np.abs(x))


def fd_gradient(f, x, rel=FD_REL_STEP):
    """Fourth-order central-difference gradient of ``f`` at points ``x`` (..., d)."""
    x = np.asarray(x, dtype=float)
    d = x.shape[-1]
    h = _steps(x, rel)
    out = np.empty(x.shape, dtype=float)
    for i in range(d):
        e = np.zeros(d)
        e[i] = 1.0
        hi = h[..., i : i + 1]
        f1 = f(x + hi * e)
        f_1 = f(x - hi * e)
        f2 = f(x + 2 * hi * e)
        f_2 = f(x - 2 * hi * e)
        out[..., i] = (8.0 * (f1 - f_1) - (f2 - f_2)) / (12.0 * h[..., i])
    return out


def fd_hessian(grad, x, rel=FD_REL_STEP):
    """Hessian by differentiating a gradient callable; symmetrized."""
    x = np.asarray(x, dtype=float)
    d = x.shape[-1]
    h = _steps(x, rel)
    out = np.empty(x.shape + (d,), dtype=float)
    for j in range(d):
        e = np.zeros(d)
        e[j] = 1.0
        hj = h[..., j : j + 1]
        g1 = grad(x + hj * e)
        g_1 = grad(x - hj * e)
        g2 = grad(x + 2 * hj * e)
        g_2 = grad(x - 2 * hj * e)
        out[..., :, j] = (8.0 * (g1 - g_1) - (g2 - g_2)) / (12.0 * hj)
    return 0.5 * (out + np.swapaxes(out, -1, -2))


@dataclass(frozen=True)
class ScalarField:
    """A real function on R^dim, vectorized over leading axes."""

    dim: int
    value: Callable[[np.ndarray], np.ndarray]
    gradient_fn: Optional[Callable[[np.ndarray], np.ndarray]] = None
    hessian_fn: Optional[Callable[[np.ndarray], np.ndarray]] = None

    def __call__(self, x):
        return self.value(np.asarray(x, dtype=float))

    def gradient(self, x):
        x = np.asarray(x, dtype=float)
        if self.gradient_fn is not None:
            return self.gradient_fn(x)
        return fd_gradient(self.value, x)

    def hessian(self, x):
        x = np.asarray(x, dtype=float)
        if self.hessian_fn is not None:
            return self.hessian_fn(x)
        return fd_hessian(self.gradient, x)

    @property
    def analytic(self) -> bool:
        return self.gradient_fn is not None and self.hessian_fn is not None


def constant_field(dim: int, c: float = 0.0) -> ScalarField:
    return ScalarField(
        dim,
        lambda x: np.full(np.shape(x)[:-1], float(c)),
        lambda x: np.zeros(np.shape(x)),
        lambda x: np.zeros(np.shape(x) + (dim,)),
    )
