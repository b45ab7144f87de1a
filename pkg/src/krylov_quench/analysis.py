"""Singularity detection, the exact g = 0 rate function, Krylov-space
metastability diagnostics and parameter sweeps."""
from __future__ import annotations

import logging
import os
import traceback
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np

from .krylov import domain_structure, lanczos, local_potential, smoothing_window, _moving_average
from .propagator import (ObservableSeries, complexity, eigendecompose, krylov_waves, simulate,
                         time_average)
from .spin_model import (Basis, ModelParams, build_hamiltonian_x, classify_phase, ground_state,
                         initial_state, spin_expectations)

log = logging.getLogger(__name__)

THREADS_ENV = "KRYLOV_QUENCH_THREADS"


def exact_rate_g0(h: float, Jt):
    """Thermodynamic-limit rate function of the g = 0 quench."""
    if not h > 0:
        raise ValueError("exact_rate_g0 needs h > 0")
    Jt = np.asarray(Jt, dtype=float)
    if np.any(Jt < 0):
        raise ValueError("Jt must be nonnegative")
    x = h * Jt
    n0 = np.floor(x / np.pi)
    n = n0[..., None] + np.arange(-2, 3)
    f = np.min((x[..., None] - np.pi * n) ** 2, axis=-1) / (2.0 * (1.0 + Jt ** 2))
    return float(f) if f.ndim == 0 else f


def g0_kink_times(h: float, t_max: float) -> np.ndarray:
    """Jt where two branches of :func:`exact_rate_g0` cross: hJt = pi (n + 1/2)."""
    n = np.arange(0, int(np.floor(h * t_max / np.pi - 0.5)) + 1)
    return np.pi * (n + 0.5) / h


@dataclass(frozen=True)
class DqptReport:
    """Local maxima of f(t) with their normalized sharpness.

    ``strong`` marks candidates whose sharpness reaches the threshold; the
    offset arrays give the distance (in grid steps) to the nearest K maximum
    and S minimum, or -1 when none exists.
    """

    times: np.ndarray
    sharpness: np.ndarray
    strong: np.ndarray
    entropy_dip_aligned: np.ndarray
    k_peak_aligned: np.ndarray
    k_peak_offset: np.ndarray
    entropy_dip_offset: np.ndarray
    threshold: float
    align_steps: int

    @property
    def strong_times(self) -> np.ndarray:
        return self.times[self.strong]

    def to_dict(self, time_scale: float = 1.0) -> dict:
        """JSON-ready form; times are multiplied by ``time_scale`` (pass J for Jt)."""
        return {
            "threshold": self.threshold,
            "align_steps": self.align_steps,
            "candidates": [
                {"Jt": float(time_scale * t), "sharpness": float(s), "strong": bool(st),
                 "k_peak_aligned": bool(ka), "entropy_dip_aligned": bool(ea),
                 "k_peak_offset_steps": int(ko), "entropy_dip_offset_steps": int(eo)}
                for t, s, st, ka, ea, ko, eo in zip(
                    self.times, self.sharpness, self.strong, self.k_peak_aligned,
                    self.entropy_dip_aligned, self.k_peak_offset, self.entropy_dip_offset)
            ],
        }


def _local_maxima(x: np.ndarray) -> np.ndarray:
    return np.flatnonzero((x[1:-1] > x[:-2]) & (x[1:-1] >= x[2:])) + 1


def _nearest_offset(i: int, targets: np.ndarray) -> int:
    if len(targets) == 0:
        return -1
    return int(np.min(np.abs(targets - i)))


def detect_dqpt(series: ObservableSeries, threshold: float = 5.0, align_steps: int = 2) -> DqptReport:
    """Find singular-looking maxima of the rate function.

    Sharpness is |f[i+1] - 2 f[i] + f[i-1]| / dt^2 at each local maximum,
    divided by the median of the same quantity over the whole series.
    """
    t = np.asarray(series.times)
    f = np.asarray(series.f)
    if len(t) < 5:
        raise ValueError("detect_dqpt needs at least 5 points")
    dt = np.diff(t)
    d2 = np.abs(f[2:] - 2.0 * f[1:-1] + f[:-2]) / (dt[1:] * dt[:-1])
    finite = d2[np.isfinite(d2)]
    scale = float(np.median(finite)) if len(finite) else 0.0
    if scale <= 0.0:
        positive = finite[finite > 0]
        scale = float(np.min(positive)) if len(positive) else 1.0

    idx = _local_maxima(f)
    sharp = d2[idx - 1] / scale
    keep = sharp > 0
    idx, sharp = idx[keep], sharp[keep]
    k_max = _local_maxima(np.asarray(series.K))
    s_min = _local_maxima(-np.asarray(series.S))
    k_off = np.array([_nearest_offset(i, k_max) for i in idx], dtype=int)
    s_off = np.array([_nearest_offset(i, s_min) for i in idx], dtype=int)
    return DqptReport(
        times=t[idx], sharpness=sharp, strong=sharp >= threshold,
        entropy_dip_aligned=(s_off >= 0) & (s_off <= align_steps),
        k_peak_aligned=(k_off >= 0) & (k_off <= align_steps),
        k_peak_offset=k_off, entropy_dip_offset=s_off,
        threshold=float(threshold), align_steps=int(align_steps))


@dataclass(frozen=True)
class KrylovDimension:
    d_measured: int
    d_predicted_g0: float
    termination: str


def krylov_dimension(params: ModelParams, threshold: float = 1e-10) -> KrylovDimension:
    dec = lanczos(build_hamiltonian_x(params), initial_state(params, Basis.X),
                  breakdown_threshold=threshold, store_basis=False)
    predicted = min((1.0 + params.h) * params.N / 2.0, float(params.N))
    return KrylovDimension(dec.d, predicted, dec.termination.kind)


@dataclass(frozen=True)
class MetastabilityReport:
    boundary_k: Optional[int]
    local_potential_minima: list
    times: np.ndarray
    tail_probability: np.ndarray
    complexity: np.ndarray
    cv_ratio: Optional[float]
    longtime_flag: bool

    @property
    def empty(self) -> bool:
        return self.boundary_k is None

    def to_dict(self) -> dict:
        return {"boundary_k": self.boundary_k,
                "local_potential_minima": list(self.local_potential_minima),
                "max_tail_probability": (float(self.tail_probability.max())
                                         if len(self.tail_probability) else None),
                "cv_ratio": self.cv_ratio, "longtime_flag": self.longtime_flag}


def _cv(x: np.ndarray) -> float:
    m = float(np.mean(x))
    return float(np.std(x) / m) if m != 0 else float("inf")


def metastability_report(params: ModelParams, time_grid, cv_ratio_threshold: float = 2.0
                         ) -> MetastabilityReport:
    """Second-block diagnostics of the Krylov chain.

    Local-potential minima are taken from a_k - 2 b_k smoothed with the same
    window used for the block split. ``longtime_flag`` compares the
    coefficient of variation of K(t) on the second half of the grid with the
    first half.
    """
    times = np.asarray(time_grid, dtype=float)
    dec = lanczos(build_hamiltonian_x(params), initial_state(params, Basis.X), store_basis=False)
    tridiag = dec.tridiag
    structure = domain_structure(tridiag) if tridiag.d >= 3 else None
    if structure is None or structure.boundary_k is None:
        return MetastabilityReport(None, [], times, np.zeros(0), np.zeros(0), None, False)

    boundary = structure.boundary_k
    v = _moving_average(local_potential(tridiag), smoothing_window(tridiag.d))
    ks = np.arange(boundary + 1, tridiag.d - 1)
    minima = [int(k) for k in ks if v[k] < v[k - 1] and v[k] <= v[k + 1]]

    eig = eigendecompose(tridiag)
    tail = np.empty(len(times))
    K = np.empty(len(times))
    chunk = 512
    for s in range(0, len(times), chunk):
        w = krylov_waves(eig, times[s:s + chunk])
        p = np.abs(w) ** 2
        tail[s:s + chunk] = p[:, boundary + 1:].sum(axis=1)
        K[s:s + chunk] = complexity(w)
    half = len(times) // 2
    ratio = None
    flag = False
    if half >= 2:
        ratio = _cv(K[half:]) / _cv(K[:half])
        flag = bool(ratio >= cv_ratio_threshold)
    return MetastabilityReport(boundary, minima, times, tail, K, ratio, flag)


@dataclass(frozen=True)
class SweepRecord:
    h: float
    g: float
    N: int
    max_K: float = float("nan")
    argmax_b: int = -1
    krylov_dim: int = -1
    sz_bar: float = float("nan")
    sx_bar: float = float("nan")
    ground_sz: float = float("nan")
    ground_sx: float = float("nan")
    dqpt_times: tuple = ()
    has_metastable: bool = False
    error: Optional[str] = None

    @property
    def n_dqpt(self) -> int:
        return len(self.dqpt_times)

    @property
    def first_dqpt_Jt(self) -> float:
        return self.dqpt_times[0] if self.dqpt_times else float("nan")

    def to_dict(self) -> dict:
        out = asdict(self)
        out["dqpt_times"] = list(self.dqpt_times)
        out["n_dqpt"] = self.n_dqpt
        return out


def _argmax_b_first_block(b_padded: np.ndarray, max_K: float) -> int:
    """argmax of b_k over 0 < k <= max_t K(t)."""
    hi = max(1, min(int(np.floor(max_K)), len(b_padded) - 2))
    return int(1 + np.argmax(b_padded[1:hi + 1]))


def sweep_point(params: ModelParams, time_grid, T_avg: float, precision: Optional[int] = None,
                dqpt_threshold: float = 5.0) -> SweepRecord:
    """One (h, g) point of a sweep; failures are returned inside the record."""
    try:
        sim = simulate(params, time_grid, precision=precision)
        series = sim.series
        report = detect_dqpt(series, threshold=dqpt_threshold)
        max_K = float(np.max(series.K))
        gs = ground_state(params)
        gz, gx = spin_expectations(gs.state)
        sz_bar, sx_bar = time_average(series, T_avg)
        return SweepRecord(
            h=params.h, g=params.g, N=params.N, max_K=max_K,
            argmax_b=_argmax_b_first_block(sim.decomposition.tridiag.b_padded(), max_K),
            krylov_dim=sim.decomposition.d, sz_bar=sz_bar, sx_bar=sx_bar,
            ground_sz=gz, ground_sx=gx,
            dqpt_times=tuple(float(params.J * t) for t in report.strong_times),
            has_metastable=classify_phase(params.h, params.g).has_metastable)
    except Exception as exc:  # noqa: BLE001 - recorded per point
        log.debug("sweep point failed: %s", traceback.format_exc())
        return SweepRecord(h=params.h, g=params.g, N=params.N,
                           error=f"{type(exc).__name__}: {exc}")


def _sweep_task(args):
    return sweep_point(*args)


def resolve_workers(requested: Optional[int] = None) -> int:
    """Worker count: the request (default: CPU count), capped by KRYLOV_QUENCH_THREADS."""
    n = requested if requested else (os.cpu_count() or 1)
    cap = os.environ.get(THREADS_ENV)
    if cap:
        try:
            n = min(n, max(1, int(cap)))
        except ValueError:
            log.warning("ignoring non-integer %s=%r", THREADS_ENV, cap)
    return max(1, int(n))


def sweep(h_values: Sequence[float], g_values: Sequence[float], N: int, time_grid,
          T_avg: float, *, J: float = 1.0, workers: Optional[int] = None,
          precision: Optional[int] = None) -> list[SweepRecord]:
    """Independent runs over the (h, g) grid, ordered h-major."""
    if len(h_values) == 0 or len(g_values) == 0:
        raise ValueError("sweep grids must be nonempty")
    time_grid = np.asarray(time_grid, dtype=float)
    tasks = []
    for h in h_values:
        for g in g_values:
            tasks.append((ModelParams(N, J=J, h=float(h), g=float(g)), time_grid, T_avg, precision))
    n = min(resolve_workers(workers), len(tasks))
    if n == 1:
        return [_sweep_task(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=n) as pool:
        return list(pool.map(_sweep_task, tasks))


@dataclass(frozen=True)
class G0Deviation:
    N: int
    off_kink: float
    near_kink: float


def g0_convergence(h: float, N_list: Sequence[int], time_grid, window: float = 0.2,
                   precision: Optional[int] = None) -> list[G0Deviation]:
    """Max |f_N - f_exact| at g = 0, outside and inside the kink windows."""
    if not h > 0:
        raise ValueError("g0_convergence needs h > 0")
    times = np.asarray(time_grid, dtype=float)
    exact = exact_rate_g0(h, times)
    kinks = g0_kink_times(h, times[-1] + window)
    near = np.zeros(len(times), dtype=bool)
    for tk in kinks:
        near |= np.abs(times - tk) <= window
    out = []
    for N in N_list:
        f = simulate(ModelParams(int(N), h=h, g=0.0), times, precision=precision).series.f
        dev = np.abs(f - exact)
        out.append(G0Deviation(int(N), float(dev[~near].max()) if np.any(~near) else 0.0,
                               float(dev[near].max()) if np.any(near) else 0.0))
    return out
