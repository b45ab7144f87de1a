from types import SimpleNamespace

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from krylov_quench.analysis import (SweepRecord, detect_dqpt, exact_rate_g0, g0_convergence,
                                    g0_kink_times, krylov_dimension, metastability_report,
                                    resolve_workers, sweep, sweep_point)
from krylov_quench.propagator import simulate, time_average
from krylov_quench.spin_model import ModelParams

GRID = np.linspace(0.0, 10.0, 2001)


def fake_series(t, f, K=None, S=None):
    zeros = np.zeros_like(t)
    return SimpleNamespace(times=t, f=f, K=zeros if K is None else K,
                           S=zeros if S is None else S)


# exact g = 0 rate function

def test_exact_rate_examples():
    assert exact_rate_g0(0.5, 0.0) == 0.0
    assert exact_rate_g0(0.5, np.pi) == pytest.approx((np.pi / 2) ** 2 / (2 * (1 + np.pi ** 2)))
    # direct evaluation of the formula gives 0.1135000
    assert exact_rate_g0(0.5, np.pi) == pytest.approx(0.1135000, abs=5e-8)


def test_exact_rate_kinks_at_odd_multiples_of_pi():
    np.testing.assert_allclose(g0_kink_times(0.5, 20.0), [np.pi, 3 * np.pi, 5 * np.pi])
    eps = 1e-6
    for tk in (np.pi, 3 * np.pi):
        left = (exact_rate_g0(0.5, tk) - exact_rate_g0(0.5, tk - eps)) / eps
        right = (exact_rate_g0(0.5, tk + eps) - exact_rate_g0(0.5, tk)) / eps
        # slope jumps downward by h pi / (1 + Jt^2)
        assert left - right == pytest.approx(0.5 * np.pi / (1 + tk ** 2), rel=1e-3)


def test_exact_rate_rejects_bad_input():
    with pytest.raises(ValueError):
        exact_rate_g0(0.0, 1.0)
    with pytest.raises(ValueError):
        exact_rate_g0(0.5, -1.0)


@settings(max_examples=200, deadline=None)
@given(st.floats(0.05, 3.0), st.floats(0.0, 200.0))
def test_exact_rate_properties(h, Jt):
    f = exact_rate_g0(h, Jt)
    assert f >= 0
    # pi-periodic in h Jt once the denominator is removed
    num = f * 2 * (1 + Jt ** 2)
    shifted = Jt + np.pi / h
    assert num == pytest.approx(exact_rate_g0(h, shifted) * 2 * (1 + shifted ** 2),
                                rel=1e-9, abs=1e-9)
    assert abs(exact_rate_g0(h, Jt + 1e-7) - f) < 1e-5


@settings(max_examples=50, deadline=None)
@given(st.floats(0.05, 3.0), st.integers(0, 30))
def test_exact_rate_zero_on_lattice(h, n):
    assert exact_rate_g0(h, n * np.pi / h) == pytest.approx(0.0, abs=1e-20)


# detector mechanics

def test_detector_on_abs_sine():
    t = np.linspace(0.0, 10.0, 4001)
    rep = detect_dqpt(fake_series(t, np.abs(np.sin(t))))
    np.testing.assert_allclose(rep.times, np.pi / 2 + np.pi * np.arange(3), atol=2e-3)
    assert not rep.strong.any()
    # the kinks become maxima when the signal is flipped
    rep = detect_dqpt(fake_series(t, 1.0 - np.abs(np.sin(t))))
    np.testing.assert_allclose(rep.strong_times, np.pi * np.arange(1, 4), atol=2e-3)
    assert np.all(rep.sharpness[rep.strong] > 100)


def test_detector_alignment_flags():
    t = np.linspace(0.0, 10.0, 4001)
    f = 1.0 - np.abs(np.sin(t))
    K = np.cos(2 * t)              # maxima at n pi, aligned with the kinks
    S = np.cos(2 * (t - 0.05))     # minima shifted by 20 grid steps
    rep = detect_dqpt(fake_series(t, f, K, -S))
    assert rep.k_peak_aligned[rep.strong].all()
    assert not rep.entropy_dip_aligned[rep.strong].any()
    assert np.all(rep.entropy_dip_offset[rep.strong] == 20)


def test_detector_needs_five_points():
    with pytest.raises(ValueError):
        detect_dqpt(fake_series(np.arange(4.0), np.zeros(4)))


def test_report_invariants_and_json(run):
    rep = detect_dqpt(run(400, 0.5, 0.5).series)
    assert np.all(np.diff(rep.times) > 0)
    assert np.all(rep.sharpness > 0)
    d = rep.to_dict(time_scale=2.0)
    assert len(d["candidates"]) == len(rep.times)
    assert d["candidates"][0]["Jt"] == pytest.approx(2 * rep.times[0])


def test_strong_candidates_below_threshold_coupling(run):
    assert len(detect_dqpt(run(400, 0.5, 0.5).series).strong_times) >= 2
    assert not detect_dqpt(run(400, 0.5, 3.0).series).strong.any()


@pytest.mark.parametrize("N", [200, 400])
def test_g0_first_strong_near_pi(run, N):
    rep = detect_dqpt(run(N, 0.5, 0.0).series)
    assert abs(rep.strong_times[0] - np.pi) <= 0.2


# Krylov dimension

def test_krylov_dimension_examples():
    k = krylov_dimension(ModelParams(400, h=0.5, g=0.0))
    assert k.d_predicted_g0 == 300.0
    assert abs(k.d_measured / 400 - 0.75) <= 0.05
    assert k.termination == "collapse"
    full = krylov_dimension(ModelParams(400, h=1.0, g=0.0))
    assert full.d_measured >= 0.98 * 400 and full.d_predicted_g0 == 400.0
    for g in (0.5, 1.0, 2.0):
        assert krylov_dimension(ModelParams(200, h=0.0, g=g)).d_measured == 101


def test_krylov_dimension_monotone_in_h():
    d = [krylov_dimension(ModelParams(400, h=h, g=0.0)).d_measured
         for h in np.round(np.arange(0.1, 1.01, 0.1), 2)]
    assert all(d[i + 1] >= d[i] - 2 for i in range(len(d) - 1)), d


# metastability

def test_metastability_empty_without_boundary():
    rep = metastability_report(ModelParams(400, h=0.5, g=3.0), np.linspace(0.0, 10.0, 101))
    assert rep.empty and not rep.longtime_flag and rep.local_potential_minima == []
    assert rep.to_dict()["max_tail_probability"] is None


def test_metastability_second_block():
    rep = metastability_report(ModelParams(200, h=0.2, g=0.2), np.linspace(0.0, 200.0, 4001))
    assert rep.boundary_k is not None
    assert rep.local_potential_minima and min(rep.local_potential_minima) > rep.boundary_k
    assert rep.tail_probability[0] == 0.0
    late = rep.tail_probability[rep.times > 100]
    assert 1e-6 < late.max() < 1e-1
    assert rep.cv_ratio is not None


# sweeps

def test_resolve_workers_env_cap(monkeypatch):
    monkeypatch.setenv("KRYLOV_QUENCH_THREADS", "2")
    assert resolve_workers(8) == 2
    monkeypatch.setenv("KRYLOV_QUENCH_THREADS", "junk")
    assert resolve_workers(3) == 3
    monkeypatch.delenv("KRYLOV_QUENCH_THREADS")
    assert resolve_workers(1) == 1


def test_sweep_order_and_worker_invariance():
    grid = np.linspace(0.0, 5.0, 201)
    kw = dict(N=40, time_grid=grid, T_avg=5.0)
    one = sweep([0.2, 0.5], [0.3, 1.0, 2.0], workers=1, **kw)
    two = sweep([0.2, 0.5], [0.3, 1.0, 2.0], workers=3, **kw)
    assert [(r.h, r.g) for r in one] == [(0.2, 0.3), (0.2, 1.0), (0.2, 2.0),
                                         (0.5, 0.3), (0.5, 1.0), (0.5, 2.0)]
    assert [r.to_dict() for r in one] == [r.to_dict() for r in two]
    for r in one:
        assert r.error is None
        assert r.krylov_dim <= r.N + 1 and r.max_K <= r.krylov_dim - 1
        assert 0 < r.argmax_b <= max(1, r.max_K)


def test_sweep_point_matches_simulate():
    p = ModelParams(60, h=0.5, g=0.7)
    rec = sweep(0.5 * np.ones(1), [0.7], 60, GRID, 8.0)[0]
    sim = simulate(p, GRID)
    assert rec.max_K == sim.series.K.max()
    assert rec.krylov_dim == sim.decomposition.d
    assert (rec.sz_bar, rec.sx_bar) == time_average(sim.series, 8.0)
    assert rec.dqpt_times == tuple(detect_dqpt(sim.series).strong_times)


def test_sweep_point_records_failure():
    rec = sweep_point(ModelParams(10, h=0.5, g=0.5), GRID, T_avg=-1.0)
    assert isinstance(rec, SweepRecord) and rec.error.startswith("ValueError")
    assert np.isnan(rec.max_K) and rec.n_dqpt == 0 and np.isnan(rec.first_dqpt_Jt)


def test_sweep_rejects_empty_grid():
    with pytest.raises(ValueError):
        sweep([], [0.5], 10, GRID, 1.0)


def test_average_spin_peak_and_first_block():
    g = np.round(np.arange(0.1, 3.01, 0.1), 2)
    recs = sweep([0.5], g, 400, np.linspace(0.0, 100.0, 2001), 100.0, precision=0)
    sz = np.array([r.sz_bar for r in recs])
    ground = np.array([r.ground_sz for r in recs])
    i = int(np.argmax(sz))
    # interior peak of the time average, absent from the monotone ground-state curve
    assert 0 < i < len(g) - 1 and g[i] < 2.0
    assert np.all(np.diff(ground) < 0)
    assert np.all(np.abs(sz - ground)[g < 2.0] > 0.1 * ground[g < 2.0])
    # argmax_b is nonmonotonic in g up to the peak and decreases beyond it
    b = np.array([r.argmax_b for r in recs])
    rises = g[1:][np.diff(b) > 0]
    assert len(rises) and abs(rises.max() - g[i]) <= 0.3
    assert np.all(np.diff(b[g >= g[i]]) <= 0)
    flags = {r.g: r.has_metastable for r in recs}
    assert flags[0.2] and not flags[0.3]


# g = 0 convergence

def test_g0_convergence_monotone():
    devs = g0_convergence(0.5, [100, 200, 400], GRID)
    off = [d.off_kink for d in devs]
    assert off[0] > off[1] > off[2]
    assert off[2] <= 0.02
    assert all(d.near_kink >= d.off_kink for d in devs)
    f = simulate(ModelParams(400, h=0.5, g=0.0), np.array([0.0, 1.0])).series.f[1]
    assert abs(f - exact_rate_g0(0.5, 1.0)) <= 0.02


def test_g0_convergence_rejects_h0():
    with pytest.raises(ValueError):
        g0_convergence(0.0, [10], GRID)
