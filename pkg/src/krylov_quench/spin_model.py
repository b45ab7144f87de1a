"""LMG Hamiltonian in the S^x and S^z eigenbases, quench state, and
semiclassical landscape.

All operator entries are stored in units of J (the arrays represent H/J).
Index ``k = 0..N`` labels ``|S - k>`` in the chosen basis.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.linalg import eigh_tridiagonal
from scipy.special import gammaln


class Basis(str, enum.Enum):
    X = "x"
    Z = "z"


@dataclass(frozen=True)
class ModelParams:
    """Quench problem: N spins, coupling J, bias h, transverse field g."""

    N: int
    J: float = 1.0
    h: float = 0.0
    g: float = 0.0

    def __post_init__(self):
        if int(self.N) != self.N or self.N < 2 or self.N % 2:
            raise ValueError(f"N must be an even integer >= 2, got {self.N!r}")
        if not self.J > 0:
            raise ValueError(f"J must be positive, got {self.J!r}")
        if not self.h >= 0:
            raise ValueError(f"h must be nonnegative, got {self.h!r}")
        if not self.g >= 0:
            raise ValueError(f"g must be nonnegative, got {self.g!r}")
        object.__setattr__(self, "N", int(self.N))

    @property
    def S(self) -> int:
        return self.N // 2

    @property
    def dim(self) -> int:
        return self.N + 1


@dataclass(frozen=True)
class StateVector:
    basis: Basis
    amplitudes: np.ndarray

    def __post_init__(self):
        amps = np.asarray(self.amplitudes, dtype=complex)
        amps.setflags(write=False)
        object.__setattr__(self, "amplitudes", amps)
        object.__setattr__(self, "basis", Basis(self.basis))

    @property
    def N(self) -> int:
        return len(self.amplitudes) - 1

    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def overlap(self, other: "StateVector") -> complex:
        if other.basis != self.basis:
            raise ValueError("overlap requires states in the same basis")
        return complex(np.vdot(self.amplitudes, other.amplitudes))


@dataclass(frozen=True)
class BandedOperator:
    """Real symmetric operator with bandwidth <= 2.

    ``off1[k-1]`` couples ``k-1`` and ``k``; ``off2[k-2]`` couples ``k-2``
    and ``k``.
    """

    basis: Basis
    diag: np.ndarray
    off1: np.ndarray
    off2: np.ndarray

    def __post_init__(self):
        n = len(self.diag)
        for name, arr, size in (("diag", self.diag, n), ("off1", self.off1, n - 1),
                                ("off2", self.off2, max(n - 2, 0))):
            arr = np.asarray(arr, dtype=float)
            if arr.shape != (size,):
                raise ValueError(f"{name} has shape {arr.shape}, expected ({size},)")
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def dim(self) -> int:
        return len(self.diag)

    @property
    def is_tridiagonal(self) -> bool:
        return not np.any(self.off2)

    def matvec(self, v: np.ndarray) -> np.ndarray:
        v = np.asarray(v)
        out = self.diag * v
        out[:-1] += self.off1 * v[1:]
        out[1:] += self.off1 * v[:-1]
        if len(self.off2):
            out[:-2] += self.off2 * v[2:]
            out[2:] += self.off2 * v[:-2]
        return out

    __matmul__ = matvec

    def to_dense(self) -> np.ndarray:
        m = np.diag(self.diag)
        m += np.diag(self.off1, 1) + np.diag(self.off1, -1)
        if len(self.off2):
            m += np.diag(self.off2, 2) + np.diag(self.off2, -2)
        return m

    def eigvalsh(self) -> np.ndarray:
        if self.is_tridiagonal:
            return eigh_tridiagonal(self.diag, self.off1, eigvals_only=True)
        return np.linalg.eigvalsh(self.to_dense())


def ladder_factors(N: int) -> np.ndarray:
    """C_k = sqrt(k (N + 1 - k)) for k = 0..N+1 (C_0 = C_{N+1} = 0)."""
    k = np.arange(N + 2, dtype=float)
    return np.sqrt(k * (N + 1 - k))


def build_hamiltonian_x(params: ModelParams) -> BandedOperator:
    """Pentadiagonal H/J in the S^x eigenbasis."""
    N, h, g = params.N, params.h, params.g
    C = ladder_factors(N)
    k = np.arange(N + 1)
    diag = -N * ((C[k] ** 2 + C[k + 1] ** 2) / (2.0 * N * N) + (1.0 - 2.0 * k / N) * g)
    off1 = -h * C[1:N + 1]
    off2 = -C[1:N] * C[2:N + 1] / (2.0 * N)
    return BandedOperator(Basis.X, diag * params.J, off1 * params.J, off2 * params.J)


def build_hamiltonian_z(params: ModelParams) -> BandedOperator:
    """Tridiagonal H/J in the S^z eigenbasis.

    The hopping uses the exact S^x matrix element C_k/2, so that the operator
    is unitarily equivalent to :func:`build_hamiltonian_x` at every N.
    """
    N, h, g = params.N, params.h, params.g
    k = np.arange(N + 1)
    diag = -N * (2.0 * (k / N - (1.0 + h) / 2.0) ** 2 - h * h / 2.0)
    off1 = -g * ladder_factors(N)[1:N + 1]
    return BandedOperator(Basis.Z, diag * params.J, off1 * params.J, np.zeros(max(N - 1, 0)))


def binomial_amplitudes(N: int) -> np.ndarray:
    k = np.arange(N + 1)
    log_c = 0.5 * (gammaln(N + 1) - gammaln(k + 1) - gammaln(N - k + 1)) - 0.5 * N * np.log(2.0)
    return np.exp(log_c)


def initial_state(params: ModelParams, basis: Basis = Basis.X) -> StateVector:
    """The maximal S^x eigenstate |S>_x in the requested basis."""
    basis = Basis(basis)
    if basis is Basis.X:
        amps = np.zeros(params.dim)
        amps[0] = 1.0
    else:
        amps = binomial_amplitudes(params.N)
    return StateVector(basis, amps)


def gaussian_approx_z(params: ModelParams) -> StateVector:
    """Large-N Gaussian form of the z-basis initial state, renormalized."""
    N = params.N
    k = np.arange(N + 1)
    amps = (2.0 / (np.pi * N)) ** 0.25 * np.exp(-N * (k / N - 0.5) ** 2)
    return StateVector(Basis.Z, amps / np.linalg.norm(amps))


def semiclassical_energy(theta, params: ModelParams):
    """E(theta) for the spin-coherent state at polar angle theta, in units of J."""
    theta = np.asarray(theta, dtype=float)
    e = -params.N * params.J * (0.5 * np.cos(theta) ** 2 + params.h * np.cos(theta)
                                + params.g * np.sin(theta))
    return float(e) if e.ndim == 0 else e


def _energy_derivative(theta, h, g):
    # dE/dtheta in units of NJ
    return np.sin(theta) * np.cos(theta) + h * np.sin(theta) - g * np.cos(theta)


def spinodal_g(h: float) -> float:
    if 0.0 < h < 1.0:
        return float((1.0 - h ** (2.0 / 3.0)) ** 1.5)
    return 0.0


@dataclass(frozen=True)
class PhaseClassification:
    h: float
    g: float
    theta_star: float
    has_metastable: bool
    theta_meta: Optional[float]
    spinodal_g: float


def _bisect_root(f, lo, hi, tol=1e-12):
    flo = f(lo)
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        fm = f(mid)
        if (fm > 0) == (flo > 0):
            lo, flo = mid, fm
        else:
            hi = mid
    return 0.5 * (lo + hi)


def classify_phase(h: float, g: float, n_grid: int = 10001) -> PhaseClassification:
    """Locate the global and (if any) metastable minima of E(theta) on [0, pi]."""
    if h < 0 or g < 0:
        raise ValueError("h and g must be nonnegative")
    theta = np.linspace(0.0, np.pi, n_grid)
    dE = _energy_derivative(theta, h, g)
    energy = -(0.5 * np.cos(theta) ** 2 + h * np.cos(theta) + g * np.sin(theta))

    minima = []
    # interior minima: dE/dtheta changes sign from - to +
    for i in np.flatnonzero((dE[:-1] < 0) & (dE[1:] >= 0)):
        root = _bisect_root(lambda t: _energy_derivative(t, h, g), theta[i], theta[i + 1])
        minima.append(root)
    # boundary minima
    if dE[0] > 0 or (dE[0] == 0 and dE[1] > 0):
        minima.append(0.0)
    if dE[-1] < 0:
        minima.append(np.pi)
    if not minima:
        minima.append(float(theta[np.argmin(energy)]))

    def e_of(t):
        return -(0.5 * np.cos(t) ** 2 + h * np.cos(t) + g * np.sin(t))

    minima.sort(key=e_of)
    theta_star = float(minima[0])
    # degenerate symmetric minima (h = 0) are not metastable
    others = [t for t in minima[1:] if e_of(t) - e_of(theta_star) > 1e-12]

    sg = spinodal_g(h)
    has_meta = 0.0 < h < 1.0 and g < sg
    theta_meta = float(others[0]) if (has_meta and others) else None
    return PhaseClassification(h=float(h), g=float(g), theta_star=theta_star,
                               has_metastable=has_meta, theta_meta=theta_meta,
                               spinodal_g=sg)


@dataclass(frozen=True)
class GroundState:
    energy: float
    state: StateVector
    gap: float
    near_degenerate: bool = field(default=False)


def ground_state(params: ModelParams) -> GroundState:
    """Lowest eigenpair of the z-basis Hamiltonian.

    The phase is fixed so that the largest-magnitude amplitude is real and
    positive. ``near_degenerate`` is set when the gap to the next level is
    below 1e-8 NJ.
    """
    H = build_hamiltonian_z(params)
    w, v = eigh_tridiagonal(H.diag, H.off1, select="i", select_range=(0, min(1, H.dim - 1)))
    vec = v[:, 0]
    i = np.argmax(np.abs(vec))
    vec = vec * np.sign(vec[i])
    gap = float(w[1] - w[0]) if len(w) > 1 else np.inf
    return GroundState(float(w[0]), StateVector(Basis.Z, vec), gap,
                       gap < 1e-8 * params.N * params.J)


def spin_expectations(state: StateVector, tol: float = 1e-8) -> tuple[float, float]:
    """Return (<S^z>, <S^x>) for a normalized state in either basis."""
    c = state.amplitudes
    if abs(np.linalg.norm(c) - 1.0) > tol:
        raise ValueError("spin_expectations requires a normalized state")
    N = len(c) - 1
    k = np.arange(N + 1)
    diagonal = float(np.sum((N / 2.0 - k) * np.abs(c) ** 2))
    C = ladder_factors(N)[1:N + 1]
    hopping = float(np.sum(np.real(np.conj(c[:-1]) * c[1:]) * C))
    if state.basis is Basis.Z:
        return diagonal, hopping
    return hopping, diagonal


def spin_expectations_batch(amplitudes: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized z-basis (<S^z>, <S^x>) for rows of ``amplitudes``."""
    c = np.atleast_2d(amplitudes)
    N = c.shape[1] - 1
    k = np.arange(N + 1)
    sz = (np.abs(c) ** 2) @ (N / 2.0 - k)
    sx = np.real(np.conj(c[:, :-1]) * c[:, 1:]) @ ladder_factors(N)[1:N + 1]
    return sz, sx
