"""Time evolution in Krylov space and in the z basis, and the observables
built on it."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.integrate import trapezoid
from scipy.linalg import eigh_tridiagonal

from . import highprec
from .krylov import KrylovDecomposition, TridiagonalHamiltonian, lanczos
from .spin_model import (Basis, ModelParams, StateVector, build_hamiltonian_x,
                         build_hamiltonian_z, initial_state, spin_expectations_batch)

log = logging.getLogger(__name__)

AMPLITUDE_FLOOR = 1e-300

FLAG_FLOORED = 1
FLAG_PRECISION = 2


@dataclass(frozen=True)
class Eigensystem:
    values: np.ndarray
    vectors: np.ndarray  # columns are eigenvectors


def eigendecompose(tridiag: TridiagonalHamiltonian) -> Eigensystem:
    """Full spectral decomposition of a real symmetric tridiagonal matrix."""
    if tridiag.d == 1:
        return Eigensystem(tridiag.a.copy(), np.ones((1, 1)))
    w, v = eigh_tridiagonal(tridiag.a, tridiag.b, lapack_driver="stev")
    return Eigensystem(w, v)


@dataclass(frozen=True)
class KrylovWave:
    t: float
    phi: np.ndarray

    def norm(self) -> float:
        return float(np.linalg.norm(self.phi))


def krylov_waves(eig: Eigensystem, times: np.ndarray) -> np.ndarray:
    """phi(t) for every time, as a (len(times), d) array."""
    V = eig.vectors
    c0 = V[0]
    out = np.empty((len(times), V.shape[0]), dtype=complex)
    chunk = max(1, 4_000_000 // max(1, V.shape[0]))
    for s in range(0, len(times), chunk):
        ph = np.exp(-1j * np.outer(times[s:s + chunk], eig.values)) * c0
        out[s:s + chunk] = ph @ V.T
    out[times == 0] = np.eye(1, V.shape[0])
    return out


def evolve_krylov(decomp: KrylovDecomposition | TridiagonalHamiltonian, t: float,
                  eig: Optional[Eigensystem] = None) -> KrylovWave:
    """phi(t) = V exp(-i Lambda t) V^T e_0 on the Krylov chain."""
    tridiag = decomp.tridiag if isinstance(decomp, KrylovDecomposition) else decomp
    eig = eigendecompose(tridiag) if eig is None else eig
    return KrylovWave(float(t), krylov_waves(eig, np.array([float(t)]))[0])


def _direct_eigensystem(params: ModelParams) -> tuple[Eigensystem, np.ndarray]:
    H = build_hamiltonian_z(params)
    psi0 = initial_state(params, Basis.Z).amplitudes.real
    if params.g == 0.0:
        eig = Eigensystem(H.diag.copy(), np.eye(H.dim))
    else:
        w, v = eigh_tridiagonal(H.diag, H.off1, lapack_driver="stev")
        eig = Eigensystem(w, v)
    return eig, eig.vectors.T @ psi0


def _direct_states(eig: Eigensystem, coeffs: np.ndarray, times: np.ndarray) -> np.ndarray:
    V = eig.vectors
    out = np.empty((len(times), V.shape[0]), dtype=complex)
    chunk = max(1, 4_000_000 // max(1, V.shape[0]))
    for s in range(0, len(times), chunk):
        ph = np.exp(-1j * np.outer(times[s:s + chunk], eig.values)) * coeffs
        out[s:s + chunk] = ph @ V.T
    return out


def evolve_direct(params: ModelParams, t: float) -> StateVector:
    """exp(-iHt)|psi_0> in the z basis, without any Krylov construction."""
    eig, coeffs = _direct_eigensystem(params)
    return StateVector(Basis.Z, _direct_states(eig, coeffs, np.array([float(t)]))[0])


def rate_function(amplitude: complex, N: int) -> tuple[float, bool]:
    """f = -ln|amplitude| / N.

    Returns ``(f, floored)``. Magnitudes below 1e-300 are floored there and
    flagged; an exact zero gives ``(inf, True)``.
    """
    mag = abs(amplitude)
    if mag > 1.0 + 1e-9:
        raise ValueError(f"|amplitude| = {mag} exceeds 1")
    if mag == 0.0:
        return float("inf"), True
    if mag < AMPLITUDE_FLOOR:
        return -np.log(AMPLITUDE_FLOOR) / N, True
    return max(0.0, -np.log(min(mag, 1.0)) / N), False


def krylov_probabilities(phi: np.ndarray) -> np.ndarray:
    return np.abs(phi) ** 2


def complexity(wave: KrylovWave | np.ndarray) -> float | np.ndarray:
    """K = sum_k k |phi_k|^2 (vectorized over leading axes)."""
    phi = wave.phi if isinstance(wave, KrylovWave) else np.asarray(wave)
    p = np.abs(phi) ** 2
    return p @ np.arange(p.shape[-1])


def entropy(wave: KrylovWave | np.ndarray) -> float | np.ndarray:
    """S = -sum_k |phi_k|^2 ln |phi_k|^2 with 0 ln 0 = 0."""
    phi = wave.phi if isinstance(wave, KrylovWave) else np.asarray(wave)
    p = np.abs(phi) ** 2
    logp = np.log(np.where(p > 0, p, 1.0))
    return 0.0 - np.sum(p * logp, axis=-1)


@dataclass(frozen=True)
class ObservableSeries:
    times: np.ndarray
    f: np.ndarray
    K: np.ndarray
    S: np.ndarray
    sz: np.ndarray
    sx: np.ndarray
    phi0_abs: np.ndarray
    flags: np.ndarray
    params: ModelParams
    d: int
    phi0_krylov: np.ndarray = field(repr=False)
    phi0_direct: np.ndarray = field(repr=False)
    waves: Optional[np.ndarray] = field(default=None, repr=False)

    def __len__(self):
        return len(self.times)


@dataclass(frozen=True)
class Simulation:
    """Everything one quench run produces."""

    params: ModelParams
    decomposition: KrylovDecomposition
    series: ObservableSeries


def simulate(params: ModelParams, time_grid, *, precision: Optional[int] = None,
             keep_waves: bool = False, decomposition: Optional[KrylovDecomposition] = None,
             **lanczos_options) -> Simulation:
    """Run one quench.

    The Krylov chain is built once in the x basis and propagated spectrally
    for K(t) and S(t). Spin expectations come from the independent z-basis
    evolution. The rate function comes from the survival amplitude evaluated
    in ``precision``-bit arithmetic (default ``96 + N``); ``precision=0``
    falls back to the double-precision Krylov amplitude phi_0(t), which is
    only meaningful while f stays below roughly 30/N.
    """
    times = np.asarray(time_grid, dtype=float)
    if times.ndim != 1 or len(times) < 1:
        raise ValueError("time grid must be a nonempty 1-d sequence")
    if len(times) > 1 and np.any(np.diff(times) <= 0):
        raise ValueError("time grid must be strictly increasing")

    if decomposition is None:
        lanczos_options.setdefault("store_basis", False)
        decomposition = lanczos(build_hamiltonian_x(params), initial_state(params, Basis.X),
                                **lanczos_options)
    eig = eigendecompose(decomposition.tridiag)
    waves = krylov_waves(eig, times)
    K = complexity(waves)
    S = entropy(waves)
    phi0_krylov = waves[:, 0].copy()

    deig, dcoef = _direct_eigensystem(params)
    states = _direct_states(deig, dcoef, times)
    sz, sx = spin_expectations_batch(states)
    psi0 = initial_state(params, Basis.Z).amplitudes
    phi0_direct = states @ psi0.conj()

    N = params.N
    flags = np.zeros(len(times), dtype=int)
    if precision == 0:
        mags = np.abs(phi0_krylov)
        f = np.empty(len(times))
        for i, m in enumerate(mags):
            f[i], floored = rate_function(min(m, 1.0), N)
            flags[i] |= FLAG_FLOORED if floored else 0
        phi0_abs = mags
    else:
        measure = highprec.spectral_measure(params, precision)
        amp = highprec.survival_amplitude(measure, times)
        f = np.maximum(-amp.log_abs / N, 0.0)
        phi0_abs = np.exp(amp.log_abs)
        under = phi0_abs < AMPLITUDE_FLOOR
        phi0_abs[under] = AMPLITUDE_FLOOR
        flags[under] |= FLAG_FLOORED
        flags[amp.floor] |= FLAG_PRECISION
        if np.any(amp.floor):
            log.warning("survival amplitude reached the %d-bit noise floor at %d times",
                        measure.precision, int(amp.floor.sum()))

    series = ObservableSeries(times=times, f=f, K=K, S=S, sz=sz, sx=sx, phi0_abs=phi0_abs,
                              flags=flags, params=params, d=decomposition.d,
                              phi0_krylov=phi0_krylov, phi0_direct=phi0_direct,
                              waves=waves if keep_waves else None)
    return Simulation(params, decomposition, series)


def time_average(series: ObservableSeries, T: float) -> tuple[float, float]:
    """Trapezoidal averages of <S^z> and <S^x> over [0, T]."""
    if T <= 0:
        raise ValueError("averaging window T must be positive")
    t = series.times
    if t[0] > 0 or T > t[-1] * (1 + 1e-12):
        raise ValueError("averaging window must lie inside the series")
    m = t <= T * (1 + 1e-12)
    tt = t[m]
    if len(tt) < 2:
        return float(series.sz[0]), float(series.sx[0])
    span = tt[-1] - tt[0]
    return (float(trapezoid(series.sz[m], tt) / span),
            float(trapezoid(series.sx[m], tt) / span))
