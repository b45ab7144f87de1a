"""Multiprecision survival amplitude.

At N of a few hundred the survival amplitude drops to 1e-30 and below, far
under the double-precision noise floor of any spectral sum or time stepper
(the floor sits near 1e-16, i.e. f ~ 0.09 at N = 400). The amplitude is
therefore evaluated from the spectral measure of (H, psi_0) computed in MPFR
arithmetic: implicit-shift QL on the z-basis tridiagonal Hamiltonian, carrying
only the row psi_0^T Z of the eigenvector matrix.
"""
from __future__ import annotations

from dataclasses import dataclass

import gmpy2
import numpy as np
from gmpy2 import mpfr

from .spin_model import ModelParams


def default_precision(N: int) -> int:
    # ln|phi_0| >= -N ln 2 covers every rate function below ln 2
    return 96 + N


@dataclass(frozen=True)
class SpectralMeasure:
    """Eigenvalues and weights |<E_j|psi_0>|^2, as MPFR numbers."""

    energies: list
    weights: list
    precision: int

    def float_energies(self) -> np.ndarray:
        return np.array([float(e) for e in self.energies])

    def float_weights(self) -> np.ndarray:
        return np.array([float(w) for w in self.weights])


def _tql_row(d: list, e: list, row: list, eps) -> tuple[list, list]:
    """Implicit QL on a symmetric tridiagonal matrix.

    ``d`` is the diagonal, ``e[i]`` couples i and i+1. ``row`` is transformed
    by the same plane rotations as the columns of the eigenvector matrix, so on
    return ``row[j] = <row|v_j>``.
    """
    n = len(d)
    d = list(d)
    e = list(e) + [mpfr(0)]
    z = list(row)
    zero = mpfr(0)
    for l in range(n):
        it = 0
        while True:
            m = l
            while m < n - 1:
                if abs(e[m]) <= eps * (abs(d[m]) + abs(d[m + 1])):
                    break
                m += 1
            if m == l:
                break
            it += 1
            if it > 200:
                raise RuntimeError("QL iteration did not converge")
            g = (d[l + 1] - d[l]) / (2 * e[l])
            r = gmpy2.hypot(g, 1)
            g = d[m] - d[l] + e[l] / (g + (r if g >= 0 else -r))
            s = c = mpfr(1)
            p = zero
            i = m - 1
            underflow = False
            while i >= l:
                f = s * e[i]
                b = c * e[i]
                r = gmpy2.hypot(f, g)
                e[i + 1] = r
                if r == 0:
                    d[i + 1] -= p
                    e[m] = zero
                    underflow = True
                    break
                s = f / r
                c = g / r
                g = d[i + 1] - p
                r = (d[i] - g) * s + 2 * c * b
                p = s * r
                d[i + 1] = g + p
                g = c * r - b
                f = z[i + 1]
                z[i + 1] = s * z[i] + c * f
                z[i] = c * z[i] - s * f
                i -= 1
            if underflow:
                continue
            d[l] -= p
            e[l] = g
            e[m] = zero
    return d, z


def spectral_measure(params: ModelParams, precision: int | None = None) -> SpectralMeasure:
    """Spectral measure of the quench, exact to ``precision`` bits."""
    N = params.N
    precision = default_precision(N) if precision is None else int(precision)
    with gmpy2.context(gmpy2.get_context(), precision=precision):
        h = mpfr(params.h)
        g = mpfr(params.g)
        J = mpfr(params.J)
        diag = [-N * J * (2 * (mpfr(k) / N - (1 + h) / 2) ** 2 - h * h / 2) for k in range(N + 1)]
        off = [-g * J * gmpy2.sqrt(mpfr(k * (N + 1 - k))) for k in range(1, N + 1)]
        norm = gmpy2.sqrt(mpfr(2) ** N)
        psi = [gmpy2.sqrt(mpfr(gmpy2.comb(N, k))) / norm for k in range(N + 1)]
        eps = mpfr(2) ** (8 - precision)
        energies, proj = _tql_row(diag, off, psi, eps)
        weights = [x * x for x in proj]
    return SpectralMeasure(energies, weights, precision)


@dataclass(frozen=True)
class SurvivalAmplitude:
    """<psi_0|psi(t)> on a time grid.

    ``log_abs`` is ln|amplitude| (finite even when |amplitude| underflows a
    double); ``phase`` is its argument; ``floor`` marks points whose
    magnitude is within a factor 2^16 of the working-precision noise level.
    """

    times: np.ndarray
    log_abs: np.ndarray
    phase: np.ndarray
    floor: np.ndarray

    def as_complex(self) -> np.ndarray:
        return np.exp(self.log_abs) * np.exp(1j * self.phase)


def _uniform_step(times: np.ndarray):
    if len(times) < 3:
        return None
    step = (times[-1] - times[0]) / (len(times) - 1)
    if step <= 0:
        return None
    ideal = times[0] + step * np.arange(len(times))
    if np.max(np.abs(ideal - times)) > 1e-12 * max(1.0, abs(times[-1])):
        return None
    return step


def survival_amplitude(measure: SpectralMeasure, times) -> SurvivalAmplitude:
    """Evaluate sum_j w_j exp(-i E_j t) at each time, in MPFR.

    Uniform grids are advanced by repeated multiplication with the one-step
    phases exp(-i E_j dt); other grids evaluate every phase directly.
    """
    times = np.asarray(times, dtype=float)
    prec = measure.precision
    n_t = len(times)
    log_abs = np.empty(n_t)
    phase = np.empty(n_t)
    floor = np.zeros(n_t, dtype=bool)
    with gmpy2.context(gmpy2.get_context(), precision=prec):
        E = measure.energies
        W = np.array(measure.weights, dtype=object)
        total = sum(measure.weights)
        noise = mpfr(2) ** (16 - prec)

        def phases(t):
            t = mpfr(t)
            return np.array([gmpy2.mpc(c, -s) for s, c in (gmpy2.sin_cos(Ej * t) for Ej in E)],
                            dtype=object)

        step = _uniform_step(times)
        if step is not None:
            # t_n = t_0 + n * step evaluated exactly in MPFR
            dt = (mpfr(float(times[-1])) - mpfr(float(times[0]))) / (n_t - 1)
            Z = phases(float(times[0]))
            U = np.array([gmpy2.mpc(c, -s) for s, c in (gmpy2.sin_cos(Ej * dt) for Ej in E)],
                         dtype=object)
        for n in range(n_t):
            if step is None:
                Z = phases(float(times[n]))
            elif n > 0:
                Z = Z * U
            # dividing by the total weight makes the t = 0 value exactly 1
            amp = (W * Z).sum() / total
            mag = abs(amp)
            if mag == 0:
                log_abs[n] = -np.inf
                phase[n] = 0.0
                floor[n] = True
                continue
            log_abs[n] = float(gmpy2.log(mag))
            phase[n] = float(gmpy2.phase(amp))
            floor[n] = mag < noise
    return SurvivalAmplitude(times, log_abs, phase, floor)
