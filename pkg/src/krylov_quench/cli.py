"""Command-line interface: ``krylov-quench {simulate,oracle-compare,sweep}``."""
from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import asdict
from typing import Optional, Sequence

import numpy as np

from . import __version__
from .analysis import detect_dqpt, exact_rate_g0, g0_kink_times, sweep
from .io import (ConfigError, RunConfig, build_config, ensure_dir, read_config_file,
                 write_json, write_lanczos_csv, write_series_csv, write_sweep_csv, write_wave_csv)
from .krylov import appendix_check, domain_structure, slope_check
from .propagator import simulate
from .spin_model import ModelParams

log = logging.getLogger("krylov_quench")

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_IO = 2
EXIT_ORACLE = 3


def _add_common(p: argparse.ArgumentParser, sweep_mode: bool = False) -> None:
    p.add_argument("--config", help="key = value file; flags override its entries")
    p.add_argument("--n", dest="n", help="number of spins (even)")
    p.add_argument("--j", dest="j", help="coupling J (default 1)")
    if sweep_mode:
        p.add_argument("--h-values", dest="h_values", help="list a,b,c or range start:stop:step")
        p.add_argument("--g-values", dest="g_values", help="list a,b,c or range start:stop:step")
        p.add_argument("--tavg", help="averaging window T (default tmax)")
        p.add_argument("--workers", help="worker processes (capped by KRYLOV_QUENCH_THREADS)")
    else:
        p.add_argument("--h", dest="h", help="bias field h")
        p.add_argument("--g", dest="g", help="transverse field g")
    p.add_argument("--tmax", help="final Jt (default 10)")
    p.add_argument("--points", help="grid points including Jt = 0 (default 2001)")
    p.add_argument("--threshold", help="relative Lanczos breakdown threshold (default 1e-10)")
    p.add_argument("--precision", help="bits for the survival amplitude; 0 = double only")
    p.add_argument("--out", help="output directory (default .)")


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="krylov-quench",
                                     description="Krylov analysis of LMG quench dynamics.")
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="run one quench and export series, coefficients, summary")
    _add_common(p)
    p.add_argument("--wave", action="store_const", const="true",
                   help="also write wave.csv (|phi_k| heatmap)")
    p.add_argument("--wave-stride", dest="wave_stride", help="keep every n-th time in wave.csv")

    p = sub.add_parser("oracle-compare", help="Krylov vs direct amplitude and g = 0 exact check")
    _add_common(p)
    p.add_argument("--tol", dest="oracle_tol", help="pass threshold (default 1e-8)")

    p = sub.add_parser("sweep", help="scan an (h, g) grid")
    _add_common(p, sweep_mode=True)
    return parser


_NON_CONFIG = {"command", "config", "verbose"}


def load_config(args: argparse.Namespace) -> RunConfig:
    file_values = read_config_file(args.config) if args.config else {}
    flags = {k: v for k, v in vars(args).items() if k not in _NON_CONFIG}
    return build_config(file_values, flags).validate(args.command)


def _params(cfg: RunConfig) -> ModelParams:
    return ModelParams(cfg.N, J=cfg.J, h=cfg.h, g=cfg.g)


def cmd_simulate(cfg: RunConfig) -> int:
    out = ensure_dir(cfg.out_dir)
    params = _params(cfg)
    sim = simulate(params, cfg.time_grid() / cfg.J, precision=cfg.precision, keep_waves=cfg.write_wave,
                   breakdown_threshold=cfg.breakdown_threshold)
    series, dec = sim.series, sim.decomposition
    report = detect_dqpt(series)
    tri = dec.tridiag
    app = appendix_check(params)
    residuals = {"a0": float(tri.a[0] - app.a0)}
    if tri.d >= 2:
        residuals["b1"] = float(tri.b[0] - app.b1)
        if app.a1 is not None:
            residuals["a1"] = float(tri.a[1] - app.a1)
    summary = {
        "params": asdict(params),
        "grid": {"t_max": cfg.t_max, "n_points": cfg.n_points},
        "krylov_dim": dec.d,
        "termination": asdict(dec.termination),
        "max_K": float(series.K.max()),
        "argmax_K_Jt": float(cfg.J * series.times[int(np.argmax(series.K))]),
        "max_f": float(series.f.max()),
        "dqpt": report.to_dict(time_scale=cfg.J),
        "strong_dqpt_times": cfg.J * report.strong_times,
        "domain_structure": asdict(domain_structure(tri)) if tri.d >= 3 else None,
        "appendix_residuals": residuals,
        "slope": asdict(slope_check(tri, params)) if tri.d >= 2 else None,
        "max_abs_phi0_krylov_minus_direct": float(np.max(np.abs(series.phi0_krylov
                                                                - series.phi0_direct))),
        "flagged_points": int(np.count_nonzero(series.flags)),
    }
    write_series_csv(out / "series.csv", series)
    write_lanczos_csv(out / "lanczos.csv", tri)
    if cfg.write_wave:
        write_wave_csv(out / "wave.csv", cfg.J * series.times, series.waves, cfg.wave_stride)
    write_json(out / "summary.json", summary)
    print(f"d = {dec.d} ({dec.termination.kind}), max K = {summary['max_K']:.6g}, "
          f"strong DQPT at Jt = {', '.join(f'{t:.4g}' for t in cfg.J * report.strong_times) or 'none'}")
    return EXIT_OK


def cmd_oracle_compare(cfg: RunConfig) -> int:
    out = ensure_dir(cfg.out_dir)
    params = _params(cfg)
    series = simulate(params, cfg.time_grid() / cfg.J, precision=cfg.precision,
                      breakdown_threshold=cfg.breakdown_threshold).series
    dev = float(np.max(np.abs(series.phi0_krylov - series.phi0_direct)))
    passed = dev <= cfg.oracle_tol
    result = {"params": asdict(params), "max_abs_phi0_deviation": dev,
              "tolerance": cfg.oracle_tol, "pass": passed}
    print(f"max |phi0_krylov - phi0_direct| = {dev:.3e}  {'PASS' if passed else 'FAIL'} "
          f"(tol {cfg.oracle_tol:g})")
    if params.g == 0.0 and params.h > 0:
        t = series.times
        window = 0.2 / params.J
        near = np.zeros(len(t), dtype=bool)
        for tk in g0_kink_times(params.h, params.J * t[-1] + window):
            near |= np.abs(params.J * t - tk) <= window
        f_exact = exact_rate_g0(params.h, params.J * t)
        d_rate = np.abs(series.f - f_exact)
        result["g0_off_kink_deviation"] = float(d_rate[~near].max()) if np.any(~near) else 0.0
        result["g0_near_kink_deviation"] = float(d_rate[near].max()) if np.any(near) else 0.0
        print(f"g = 0: max |f_N - f_exact| off-kink = {result['g0_off_kink_deviation']:.4g}, "
              f"near kinks = {result['g0_near_kink_deviation']:.4g}")
    write_json(out / "oracle.json", result)
    return EXIT_OK if passed else EXIT_ORACLE


def cmd_sweep(cfg: RunConfig) -> int:
    out = ensure_dir(cfg.out_dir)
    T = cfg.t_max if cfg.T_avg is None else cfg.T_avg
    records = sweep(cfg.h_values, cfg.g_values, cfg.N, cfg.time_grid() / cfg.J, T / cfg.J,
                    J=cfg.J, workers=cfg.workers, precision=cfg.precision)
    write_sweep_csv(out / "sweep.csv", records)
    write_json(out / "sweep.json", {"N": cfg.N, "J": cfg.J, "T_avg": T,
                                    "grid": {"t_max": cfg.t_max, "n_points": cfg.n_points},
                                    "records": [r.to_dict() for r in records]})
    failed = [r for r in records if r.error]
    for r in failed:
        print(f"point h={r.h:g} g={r.g:g} failed: {r.error}", file=sys.stderr)
    print(f"{len(records) - len(failed)}/{len(records)} points written to {out / 'sweep.csv'}")
    return EXIT_CONFIG if failed and len(failed) == len(records) else EXIT_OK


COMMANDS = {"simulate": cmd_simulate, "oracle-compare": cmd_oracle_compare, "sweep": cmd_sweep}


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = make_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"cannot read config: {exc}", file=sys.stderr)
        return EXIT_IO
    try:
        return COMMANDS[args.command](cfg)
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
