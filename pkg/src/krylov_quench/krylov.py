"""Lanczos construction of the Krylov chain and structural analysis of its
coefficients."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.linalg import eigh_tridiagonal

from .spin_model import BandedOperator, ModelParams, StateVector

EXHAUSTED = "exhausted"
BREAKDOWN = "breakdown"
COLLAPSE = "collapse"
TRUNCATED = "truncated"


@dataclass(frozen=True)
class TridiagonalHamiltonian:
    """Lanczos coefficients. ``b[k-1]`` holds b_k for k = 1..d-1."""

    a: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.a, dtype=float)
        b = np.asarray(self.b, dtype=float)
        if a.ndim != 1 or len(a) < 1 or b.shape != (len(a) - 1,):
            raise ValueError("need len(a) = d >= 1 and len(b) = d - 1")
        a.setflags(write=False)
        b.setflags(write=False)
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)

    @property
    def d(self) -> int:
        return len(self.a)

    def b_padded(self) -> np.ndarray:
        """b_0..b_d with the convention b_0 = b_d = 0."""
        return np.concatenate(([0.0], self.b, [0.0]))

    def to_dense(self) -> np.ndarray:
        return np.diag(self.a) + np.diag(self.b, 1) + np.diag(self.b, -1)

    def matvec(self, v: np.ndarray) -> np.ndarray:
        out = self.a * v
        out[:-1] += self.b * v[1:]
        out[1:] += self.b * v[:-1]
        return out

    def truncated(self, d: int) -> "TridiagonalHamiltonian":
        return TridiagonalHamiltonian(self.a[:d], self.b[:d - 1])


@dataclass(frozen=True)
class Termination:
    """Why the recurrence stopped.

    ``kind`` is one of ``exhausted`` (d = N+1), ``breakdown`` (b_k fell below
    the relative threshold), ``collapse`` (b_k dropped and the sequence then
    turned into rounding noise; the noise tail is discarded) or ``truncated``
    (``max_dim`` reached). ``k`` and ``b_value`` locate the terminating b_k.
    """

    kind: str
    k: Optional[int] = None
    b_value: Optional[float] = None


@dataclass(frozen=True)
class KrylovDecomposition:
    tridiag: TridiagonalHamiltonian
    basis: Optional[np.ndarray]
    termination: Termination
    construction_basis: str

    @property
    def d(self) -> int:
        return self.tridiag.d


def _ritz_residual(a: np.ndarray, b: np.ndarray, coupling: float) -> float:
    """Largest start-vector-weighted Ritz residual of the chain (a, b)."""
    _, s = eigh_tridiagonal(a, b, lapack_driver="stev")
    return float(coupling * np.max(np.abs(s[0] * s[-1])))


def lanczos(operator: BandedOperator, start: StateVector, max_dim: Optional[int] = None,
            breakdown_threshold: float = 1e-10, detect_collapse: bool = True,
            collapse_jump: float = 2.0, collapse_drop: float = 0.35, collapse_run: int = 8,
            collapse_tol: float = 1e-7, store_basis: bool = True) -> KrylovDecomposition:
    """Lanczos tridiagonalization with two-pass full reorthogonalization.

    Parameters
    ----------
    operator, start
        Real symmetric banded operator and a normalized start vector in the
        same basis.
    max_dim
        Upper bound on the Krylov dimension (default: operator dimension).
    breakdown_threshold
        Relative cutoff: stop when ``b_{k+1} < breakdown_threshold * scale``,
        ``scale`` being the largest |a_k|, |b_k| seen so far.
    detect_collapse
        Also stop when a smooth descent of b_k breaks into rounding noise, the
        signature of a Krylov space exhausted at working precision without an
        exact zero: b_k below ``collapse_drop`` times the running maximum,
        ``collapse_run`` strictly decreasing steps ending at b_k or b_{k-1},
        and b_{k+1} > ``collapse_jump`` * b_k. The candidate is accepted only
        if K_0..K_{k-1} is invariant to ``collapse_tol``: every Ritz pair of
        the truncated chain has residual b_k |s_{k-1,j}|, weighted by its
        overlap |s_{0,j}| with the start vector, below ``collapse_tol * scale``.
        The chain then keeps K_0..K_{k-1}.
    store_basis
        Keep the d x (N+1) matrix of Krylov vectors.
    """
    n = operator.dim
    if start.basis != operator.basis:
        raise ValueError("start vector and operator are in different bases")
    if len(start.amplitudes) != n:
        raise ValueError("start vector dimension does not match operator")
    if abs(start.norm() - 1.0) > 1e-8:
        raise ValueError("start vector must be normalized")
    max_dim = n if max_dim is None else int(max_dim)
    if max_dim < 1:
        raise ValueError("max_dim must be >= 1")
    max_dim = min(max_dim, n)

    v0 = start.amplitudes
    dtype = float if not np.any(v0.imag) else complex
    V = np.zeros((max_dim + 1, n), dtype=dtype)
    V[0] = v0.real if dtype is float else v0
    V[0] /= np.linalg.norm(V[0])
    a = np.zeros(max_dim)
    b = np.zeros(max_dim)  # b[k] = b_{k+1}
    scale = 0.0
    b_max = 0.0
    termination = None
    d = max_dim

    for k in range(max_dim):
        w = operator.matvec(V[k])
        a[k] = np.real(np.vdot(V[k], w))
        w = w - a[k] * V[k]
        if k > 0:
            w = w - b[k - 1] * V[k - 1]
        basis = V[:k + 1]
        for _ in range(2):
            w = w - basis.T @ (basis.conj() @ w)
        beta = float(np.linalg.norm(w))
        scale = max(scale, abs(a[k]), beta)

        if detect_collapse and k > collapse_run + 2:
            prev = b[k - 1]
            if prev < collapse_drop * b_max and beta > collapse_jump * prev:
                descent = np.diff(b[k - 2 - collapse_run:k]) < 0
                if ((np.all(descent[1:]) or np.all(descent[:-1]))
                        and _ritz_residual(a[:k], b[:k - 1], prev) < collapse_tol * scale):
                    termination = Termination(COLLAPSE, k, float(prev))
                    d = k
                    break
        if k == n - 1:
            termination = Termination(EXHAUSTED)
            d = n
            break
        if beta < breakdown_threshold * scale:
            termination = Termination(BREAKDOWN, k + 1, beta)
            d = k + 1
            break
        if k == max_dim - 1:
            termination = Termination(TRUNCATED, k + 1, beta)
            d = max_dim
            break
        b[k] = beta
        b_max = max(b_max, beta)
        V[k + 1] = w / beta

    tridiag = TridiagonalHamiltonian(a[:d].copy(), b[:d - 1].copy())
    stored = V[:d].copy() if store_basis else None
    return KrylovDecomposition(tridiag, stored, termination, operator.basis.value)


@dataclass(frozen=True)
class AppendixValues:
    a0: float
    b1: float
    a1: Optional[float]


def appendix_check(params: ModelParams) -> AppendixValues:
    """Closed forms for a_0, b_1 and a_1 of the x-basis chain.

    a_1 is ``None`` when b_1 = 0.
    """
    N, J, h, g = params.N, params.J, params.h, params.g
    a0 = -(N * g + 0.5) * J
    b1_sq = N * h * h + (N - 1) / (2.0 * N)
    b1 = math.sqrt(b1_sq) * J
    if b1_sq == 0.0:
        return AppendixValues(a0, b1, None)
    a1_b1sq = (N * h * h * (-N * g + 2 * g - 1.5 + 1.0 / N)
               - 2.0 * (N - 1) * h * h
               + (N - 1) / (2.0 * N) * (-N * g + 4 * g - 2.5 + 4.0 / N))
    return AppendixValues(a0, b1, a1_b1sq / b1_sq * J)


@dataclass(frozen=True)
class SlopeCheck:
    measured: float
    predicted: float
    residual: float


def slope_check(tridiag: TridiagonalHamiltonian, params: ModelParams) -> SlopeCheck:
    """Compare a_1 - a_0 with its large-N value 2J(g - 3/2)."""
    if tridiag.d < 2:
        raise ValueError("slope_check needs d >= 2")
    measured = float(tridiag.a[1] - tridiag.a[0])
    predicted = 2.0 * params.J * (params.g - 1.5)
    return SlopeCheck(measured, predicted, measured - predicted)


@dataclass(frozen=True)
class DomainStructure:
    """Two-block split of the coefficient sequences (heuristic).

    ``boundary_k`` separates the blocks, ``k_S`` is the position of the
    largest b_k inside the first block and ``turning_point`` is the first
    k > 0 where the local potential a_k - 2 b_k climbs back to a_0.
    """

    boundary_k: Optional[int]
    k_S: int
    turning_point: Optional[int]
    heuristic: bool = True


def local_potential(tridiag: TridiagonalHamiltonian) -> np.ndarray:
    """a_k - 2 b_k with b_0 = 0."""
    return tridiag.a - 2.0 * tridiag.b_padded()[:-1]


def _moving_average(x: np.ndarray, window: int) -> np.ndarray:
    if window <= 1:
        return x.copy()
    kernel = np.ones(window) / window
    padded = np.pad(x, (window // 2, window - 1 - window // 2), mode="edge")
    return np.convolve(padded, kernel, mode="valid")


def smoothing_window(d: int) -> int:
    return max(3, d // 25)


def domain_structure(tridiag: TridiagonalHamiltonian, drop: float = 0.85,
                     rise: float = 0.05) -> DomainStructure:
    """Locate the two-block structure of the Lanczos sequences.

    b_k is smoothed with a moving average. The first block ends at the first
    local minimum after the first local maximum P that lies below ``drop * P``
    and is followed by a recovery of at least ``rise * P``.
    """
    d = tridiag.d
    if d < 3:
        raise ValueError("domain_structure needs d >= 3")
    bk = tridiag.b_padded()[:-1]  # b_0..b_{d-1}
    smooth = _moving_average(bk, smoothing_window(d))

    boundary = None
    interior = np.arange(2, d - 1)
    is_max = (smooth[interior] >= smooth[interior - 1]) & (smooth[interior] > smooth[interior + 1])
    maxima = interior[is_max]
    if len(maxima):
        peak = smooth[maxima[0]]
        for k in range(maxima[0] + 1, d - 1):
            if (smooth[k] <= smooth[k - 1] and smooth[k] < smooth[k + 1]
                    and smooth[k] <= drop * peak and smooth[k:].max() >= smooth[k] + rise * peak):
                boundary = k
                break

    hi = boundary if boundary is not None else d - 1
    k_S = int(1 + np.argmax(bk[1:hi + 1]))

    v = local_potential(tridiag)
    above = np.flatnonzero(v[1:] >= v[0])
    turning = int(above[0] + 1) if len(above) else None
    return DomainStructure(boundary, k_S, turning)


@dataclass(frozen=True)
class SpectrumBounds:
    lo: float
    hi: float
    exact_min: float
    exact_max: float


def spectrum_bounds(tridiag: TridiagonalHamiltonian) -> SpectrumBounds:
    """Continuum estimate [min(a - 2b), max(a + 2b)] next to the exact extremes."""
    if tridiag.d < 2:
        raise ValueError("spectrum_bounds needs d >= 2")
    bk = tridiag.b_padded()[:-1]
    lo = float(np.min(tridiag.a - 2.0 * bk))
    hi = float(np.max(tridiag.a + 2.0 * bk))
    ev = eigh_tridiagonal(tridiag.a, tridiag.b, eigvals_only=True)
    return SpectrumBounds(lo, hi, float(ev[0]), float(ev[-1]))


def dos_estimate(tridiag: TridiagonalHamiltonian, energies, n_sub: int = 10_000) -> np.ndarray:
    """Continuum density of states from smoothly interpolated coefficients.

    Each x-slice contributes an arcsine law centred at a(x) with half-width
    2b(x). The slice contributions are averaged exactly over the energy cell
    around each grid point (through the arcsine CDF), which removes the
    inverse-square-root endpoint singularities; the x-integral is a midpoint
    rule on ``n_sub`` subintervals.
    """
    energies = np.asarray(energies, dtype=float)
    d = tridiag.d
    xk = np.linspace(0.0, 1.0, d)
    bk = tridiag.b_padded()[:-1].copy()
    if d > 1:
        bk[0] = bk[1]
    xm = (np.arange(n_sub) + 0.5) / n_sub
    ax = np.interp(xm, xk, tridiag.a)
    bx = np.interp(xm, xk, bk)

    if len(energies) > 1:
        mids = 0.5 * (energies[1:] + energies[:-1])
        edges = np.concatenate(([energies[0] - (mids[0] - energies[0])], mids,
                                [energies[-1] + (energies[-1] - mids[-1])]))
    else:
        edges = np.array([energies[0] - 1e-6, energies[0] + 1e-6])
    widths = np.diff(edges)

    def cdf(E):
        z = (E[:, None] - ax[None, :]) / (2.0 * np.where(bx > 0, bx, np.inf)[None, :])
        z = np.clip(z, -1.0, 1.0)
        step = np.where(E[:, None] >= ax[None, :], 1.0, 0.0)
        return np.where(bx[None, :] > 0, 0.5 + np.arcsin(z) / np.pi, step)

    out = np.empty(len(energies))
    chunk = max(1, 2_000_000 // n_sub)
    for s in range(0, len(energies), chunk):
        F = cdf(edges[s:min(s + chunk, len(energies)) + 1])
        mass = F[1:] - F[:-1]
        out[s:s + chunk] = mass.mean(axis=1) / widths[s:s + chunk]
    return out
