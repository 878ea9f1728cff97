"""Hagedorn squeezed-state wave packets phi_k(A, B, hbar, a, eta, x).

Convention: phi_0 = (pi hbar)^(-n/4) det(A)^(-1/2)
exp(-<x-a, B A^-1 (x-a)>/(2 hbar) + i <eta, x-a>/hbar), and higher k by
the raising recurrence

    phi_{k+e_j} = [sqrt(2/hbar) (A^-1 (x-a))_j phi_k
                   - sum_l sqrt(k_l) (A^-1 conj(A))_{jl} phi_{k-e_l}] / sqrt(k_j + 1).
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import InvalidPacketError, SingularDispersionError

CONDITION_TOL = 1e-10


@dataclass(frozen=True)
class ParamsReport:
    symplectic_residual: float  # max |A^T B - B^T A|
    normalization_residual: float  # max |A^* B + B^* A - 2 I|
    min_eigenvalue: float  # of Re(B A^-1)

    def ok(self, tol: float = CONDITION_TOL) -> bool:
        return self.symplectic_residual < tol and self.normalization_residual < tol and self.min_eigenvalue > 0


def validate_params(A, B) -> ParamsReport:
    A = np.atleast_2d(np.asarray(A, dtype=complex))
    B = np.atleast_2d(np.asarray(B, dtype=complex))
    if A.shape != B.shape or A.shape[0] != A.shape[1]:
        raise ValueError("A and B must be square matrices of equal size")
    n = A.shape[0]
    r1 = np.max(np.abs(A.T @ B - B.T @ A))
    r2 = np.max(np.abs(A.conj().T @ B + B.conj().T @ A - 2 * np.eye(n)))
    try:
        M = B @ np.linalg.inv(A)
    except np.linalg.LinAlgError:
        return ParamsReport(float(r1), float(r2), -np.inf)
    Mr = 0.5 * (M.real + M.real.T)
    return ParamsReport(float(r1), float(r2), float(np.linalg.eigvalsh(Mr)[0]))


def multi_indices(dim: int, max_order: int):
    """All multi-indices with |k| <= max_order in graded lexicographic order."""
    out = []
    for order in range(max_order + 1):
        layer = [k for k in itertools.product(range(order + 1), repeat=dim) if sum(k) == order]
        out.extend(sorted(layer, reverse=True))
    return out


@dataclass(frozen=True)
class PacketParams:
    A: np.ndarray
    B: np.ndarray
    hbar: float
    a: np.ndarray
    eta: np.ndarray
    k: tuple = ()
    sqrt_det: Optional[complex] = None  # branch of det(A)^(1/2); principal if None

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A, dtype=complex))
        B = np.atleast_2d(np.asarray(self.B, dtype=complex))
        n = A.shape[0]
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "a", np.atleast_1d(np.asarray(self.a, dtype=float)))
        object.__setattr__(self, "eta", np.atleast_1d(np.asarray(self.eta, dtype=float)))
        k = tuple(int(v) for v in np.atleast_1d(self.k)) if len(np.atleast_1d(self.k)) else (0,) * n
        object.__setattr__(self, "k", k)
        if len(self.a) != n or len(self.eta) != n or len(k) != n:
            raise ValueError("dimension mismatch between A, a, eta and k")
        if self.hbar <= 0:
            raise ValueError("hbar must be positive")

    @property
    def dim(self) -> int:
        return self.A.shape[0]

    def root_det(self) -> complex:
        if self.sqrt_det is not None:
            return complex(self.sqrt_det)
        return complex(np.sqrt(complex(np.linalg.det(self.A))))

    def with_(self, **changes) -> "PacketParams":
        d = dict(A=self.A, B=self.B, hbar=self.hbar, a=self.a, eta=self.eta, k=self.k, sqrt_det=self.sqrt_det)
        d.update(changes)
        return PacketParams(**d)


def _prepare(params: PacketParams, check: bool):
    if abs(np.linalg.det(params.A)) < 1e-14:
        raise SingularDispersionError("dispersion matrix A is singular")
    if check:
        rep = validate_params(params.A, params.B)
        if not rep.ok(1e-8):
            raise InvalidPacketError(f"packet conditions violated: {rep}")
    return np.linalg.inv(params.A)


def evaluate_packet_family(params: PacketParams, points, max_order: int, check: bool = True) -> dict:
    """All phi_m with |m| <= max_order at ``points`` (shape (N, n) or (N,) in 1D)."""
    Ainv = _prepare(params, check)
    n = params.dim
    x = np.asarray(points, dtype=float)
    if n == 1 and (x.ndim == 1 or x.shape[-1] != 1):
        x = x[..., None]
    d = x - params.a
    M = params.B @ Ainv
    quad = np.einsum("...i,ij,...j->...", d, M, d)
    phase = d @ params.eta
    h = params.hbar
    phi0 = (np.pi * h) ** (-n / 4) / params.root_det() * np.exp(-quad / (2 * h) + 1j * phase / h)
    z = np.sqrt(2.0 / h) * np.einsum("ij,...j->...i", Ainv, d)
    C = Ainv @ params.A.conj()
    fam = {(0,) * n: phi0}
    for m in multi_indices(n, max_order)[1:]:
        j = next(i for i in range(n) if m[i] > 0)
        prev = list(m)
        prev[j] -= 1
        prev = tuple(prev)
        val = z[..., j] * fam[prev]
        for l in range(n):
            if prev[l] > 0:
                low = list(prev)
                low[l] -= 1
                val = val - np.sqrt(prev[l]) * C[j, l] * fam[tuple(low)]
        fam[m] = val / np.sqrt(prev[j] + 1)
    return fam


def evaluate_packet(params: PacketParams, points, check: bool = True) -> np.ndarray:
    """phi_k(A, B, hbar, a, eta, x) at the given points."""
    fam = evaluate_packet_family(params, points, sum(params.k), check)
    return fam[params.k]


@dataclass(frozen=True)
class PacketMoments:
    position_mean: np.ndarray
    momentum_mean: np.ndarray
    position_covariance: np.ndarray
    momentum_covariance: np.ndarray = field(default=None)


def packet_moments(params: PacketParams) -> PacketMoments:
    """Closed-form first and second moments of |phi_k|^2 and its Fourier transform."""
    w = 2 * np.asarray(params.k, dtype=float) + 1
    h = params.hbar
    cov = 0.5 * h * np.real(np.einsum("il,l,jl->ij", params.A, w, params.A.conj()))
    pcov = 0.5 * h * np.real(np.einsum("il,l,jl->ij", params.B, w, params.B.conj()))
    return PacketMoments(params.a.copy(), params.eta.copy(), cov, pcov)


def continuous_sqrt_det(A_series) -> np.ndarray:
    """det(A(t))^(1/2) along a path, continued from the principal branch at t = 0."""
    dets = np.array([np.linalg.det(np.atleast_2d(A)) for A in A_series], dtype=complex)
    roots = np.sqrt(dets)
    for i in range(1, len(roots)):
        if abs(roots[i] - roots[i - 1]) > abs(-roots[i] - roots[i - 1]):
            roots[i] = -roots[i]
    return roots
