"""Run configuration and CSV/JSON export."""
from __future__ import annotations

import csv
import json
import math
import os
from dataclasses import dataclass, fields, replace
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

SERIES_HEADER = ["Jt", "f", "K", "S", "Sz", "Sx", "abs_phi0", "flags"]
LANCZOS_HEADER = ["k", "a_k", "b_k"]
SWEEP_HEADER = ["h", "g", "N", "max_K", "argmax_b", "krylov_dim", "sz_bar", "sx_bar",
                "ground_sz", "ground_sx", "n_dqpt", "first_dqpt_Jt", "has_metastable"]


class ConfigError(ValueError):
    """Invalid run configuration; ``field`` names the offending entry."""

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field


def fmt(x) -> str:
    """Round-trip exact text for a number."""
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    x = float(x)
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return format(x, ".17g")


def parse_grid(text: str) -> list[float]:
    """``"0.1,0.2"`` or ``"start:stop:step"`` (stop inclusive)."""
    text = text.strip()
    if ":" in text:
        parts = text.split(":")
        if len(parts) != 3:
            raise ValueError(f"range must be start:stop:step, got {text!r}")
        start, stop, step = (float(p) for p in parts)
        if step <= 0 or stop < start:
            raise ValueError(f"bad range {text!r}")
        n = int(math.floor((stop - start) / step + 1e-9)) + 1
        return [round(start + i * step, 12) for i in range(n)]
    return [float(p) for p in text.split(",") if p.strip()]


@dataclass(frozen=True)
class RunConfig:
    N: int = 400
    J: float = 1.0
    h: float = 0.5
    g: float = 0.5
    t_max: float = 10.0
    n_points: int = 2001
    breakdown_threshold: float = 1e-10
    precision: Optional[int] = None
    T_avg: Optional[float] = None
    h_values: tuple = (0.5,)
    g_values: tuple = (0.5,)
    workers: Optional[int] = None
    out_dir: str = "."
    write_wave: bool = False
    wave_stride: int = 1
    oracle_tol: float = 1e-8

    def time_grid(self) -> np.ndarray:
        return np.linspace(0.0, self.t_max, self.n_points)

    def validate(self, command: str = "simulate") -> "RunConfig":
        if self.N < 2 or self.N % 2:
            raise ConfigError("n", f"must be an even integer >= 2, got {self.N}")
        if not self.J > 0:
            raise ConfigError("j", f"must be positive, got {self.J}")
        if not self.t_max > 0:
            raise ConfigError("tmax", f"must be positive, got {self.t_max}")
        if self.n_points < 5:
            raise ConfigError("points", f"must be at least 5, got {self.n_points}")
        if not 0 < self.breakdown_threshold < 1:
            raise ConfigError("threshold", f"must lie in (0, 1), got {self.breakdown_threshold}")
        if self.precision is not None and self.precision != 0 and self.precision < 53:
            raise ConfigError("precision", "must be 0 (double) or at least 53 bits")
        if self.wave_stride < 1:
            raise ConfigError("wave_stride", "must be >= 1")
        if not self.oracle_tol > 0:
            raise ConfigError("oracle_tol", "must be positive")
        if self.workers is not None and self.workers < 1:
            raise ConfigError("workers", "must be >= 1")
        if command == "sweep":
            if not self.h_values:
                raise ConfigError("h_values", "must be nonempty")
            if not self.g_values:
                raise ConfigError("g_values", "must be nonempty")
            for name, vals in (("h_values", self.h_values), ("g_values", self.g_values)):
                if any(not v >= 0 for v in vals):
                    raise ConfigError(name, "entries must be nonnegative")
            T = self.t_max if self.T_avg is None else self.T_avg
            if not 0 < T <= self.t_max:
                raise ConfigError("tavg", f"must lie in (0, tmax], got {T}")
        else:
            if not self.h >= 0:
                raise ConfigError("h", f"must be nonnegative, got {self.h}")
            if not self.g >= 0:
                raise ConfigError("g", f"must be nonnegative, got {self.g}")
        return self


# config-file / flag name -> (RunConfig field, parser)
def _bool(text: str) -> bool:
    low = str(text).strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _int(text) -> int:
    v = float(text)
    if v != int(v):
        raise ValueError(f"not an integer: {text!r}")
    return int(v)


def _opt_int(text):
    return None if str(text).strip().lower() in ("", "none") else _int(text)


def _opt_float(text):
    return None if str(text).strip().lower() in ("", "none") else float(text)


KEYS = {
    "n": ("N", _int),
    "j": ("J", float),
    "h": ("h", float),
    "g": ("g", float),
    "tmax": ("t_max", float),
    "points": ("n_points", _int),
    "threshold": ("breakdown_threshold", float),
    "precision": ("precision", _opt_int),
    "tavg": ("T_avg", _opt_float),
    "h_values": ("h_values", lambda s: tuple(parse_grid(s))),
    "g_values": ("g_values", lambda s: tuple(parse_grid(s))),
    "workers": ("workers", _opt_int),
    "out": ("out_dir", str),
    "wave": ("write_wave", _bool),
    "wave_stride": ("wave_stride", _int),
    "oracle_tol": ("oracle_tol", float),
}


def read_config_file(path: str | os.PathLike) -> dict:
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    values = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"line {lineno}", f"expected key = value, got {raw.strip()!r}")
            key, value = (s.strip() for s in line.split("=", 1))
            values[key.lower().replace("-", "_")] = value
    return values


def build_config(file_values: dict, flag_values: dict) -> RunConfig:
    """Merge file entries and flags (flags win) into a RunConfig."""
    merged = dict(file_values)
    merged.update({k: v for k, v in flag_values.items() if v is not None})
    kwargs = {}
    for key, raw in merged.items():
        if key not in KEYS:
            raise ConfigError(key, "unknown configuration key")
        name, parse = KEYS[key]
        try:
            kwargs[name] = raw if not isinstance(raw, str) else parse(raw)
        except (TypeError, ValueError) as exc:
            raise ConfigError(key, str(exc)) from None
    known = {f.name for f in fields(RunConfig)}
    assert set(kwargs) <= known
    return replace(RunConfig(), **kwargs)


def ensure_dir(path: str | os.PathLike) -> Path:
    p = Path(path)
    p.mkdir(parents=True, exist_ok=True)
    if not os.access(p, os.W_OK):
        raise PermissionError(f"directory not writable: {p}")
    return p


def write_csv(path: str | os.PathLike, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([v if isinstance(v, str) else fmt(v) for v in row])


def write_series_csv(path, series) -> None:
    rows = zip(series.params.J * series.times, series.f, series.K, series.S, series.sz, series.sx,
               series.phi0_abs, series.flags)
    write_csv(path, SERIES_HEADER, rows)


def write_lanczos_csv(path, tridiag) -> None:
    b = tridiag.b_padded()[:-1]
    write_csv(path, LANCZOS_HEADER, ((k, tridiag.a[k], b[k]) for k in range(tridiag.d)))


def write_wave_csv(path, times: np.ndarray, waves: np.ndarray, stride: int = 1) -> None:
    """Rows k, one column of |phi_k| per (strided) grid time."""
    sel = np.arange(0, len(times), stride)
    mags = np.abs(waves[sel]).T
    header = ["k"] + [fmt(t) for t in times[sel]]
    write_csv(path, header, ([k, *mags[k]] for k in range(mags.shape[0])))


def write_sweep_csv(path, records) -> None:
    rows = ((r.h, r.g, r.N, r.max_K, r.argmax_b, r.krylov_dim, r.sz_bar, r.sx_bar,
             r.ground_sz, r.ground_sx, r.n_dqpt, r.first_dqpt_Jt, r.has_metastable)
            for r in records)
    write_csv(path, SWEEP_HEADER, rows)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        return x if math.isfinite(x) else None
    return obj


def write_json(path, data: dict) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(_jsonable(data), fh, indent=2, sort_keys=True)
        fh.write("\n")
