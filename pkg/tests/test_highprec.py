import mpmath
import numpy as np
import pytest

from krylov_quench.highprec import default_precision, spectral_measure, survival_amplitude
from krylov_quench.propagator import evolve_direct
from krylov_quench.spin_model import Basis, ModelParams, build_hamiltonian_z, initial_state


def mp_amplitude(p, times, digits=60):
    """<psi_0|exp(-iHt)|psi_0> from a dense mpmath eigensolve of the z-basis matrix."""
    with mpmath.workdps(digits):
        N = p.N
        H = mpmath.matrix(N + 1, N + 1)
        for k in range(N + 1):
            H[k, k] = -N * p.J * (2 * (mpmath.mpf(k) / N - (1 + mpmath.mpf(p.h)) / 2) ** 2
                                  - mpmath.mpf(p.h) ** 2 / 2)
        for k in range(1, N + 1):
            H[k - 1, k] = H[k, k - 1] = -mpmath.mpf(p.g) * p.J * mpmath.sqrt(k * (N + 1 - k))
        psi = [mpmath.sqrt(mpmath.binomial(N, k) / mpmath.mpf(2) ** N) for k in range(N + 1)]
        E, Q = mpmath.eigsy(H)
        w = [sum(Q[i, j] * psi[i] for i in range(N + 1)) ** 2 for j in range(N + 1)]
        out = []
        for t in times:
            amp = sum(w[j] * mpmath.expj(-E[j] * t) for j in range(N + 1))
            out.append(mpmath.log(abs(amp)))
        return np.array([float(x) for x in out])


def test_default_precision_grows_with_n():
    assert default_precision(400) == 496
    assert default_precision(2) < default_precision(4)


def test_weights_sum_to_one_and_energies_match_double():
    p = ModelParams(40, h=0.5, g=1.0)
    m = spectral_measure(p)
    assert abs(float(sum(m.weights)) - 1.0) < 1e-30
    w_double = np.linalg.eigvalsh(build_hamiltonian_z(p).to_dense())
    np.testing.assert_allclose(np.sort(m.float_energies()), w_double, atol=1e-11 * 40)


@pytest.mark.parametrize("N,h,g", [(10, 0.5, 0.5), (16, 0.2, 2.0), (12, 1.3, 0.1)])
def test_log_amplitude_matches_mpmath(N, h, g):
    p = ModelParams(N, h=h, g=g)
    times = np.linspace(0.0, 6.0, 13)
    amp = survival_amplitude(spectral_measure(p), times)
    np.testing.assert_allclose(amp.log_abs, mp_amplitude(p, times), atol=1e-20)


def test_uniform_and_irregular_grids_agree():
    p = ModelParams(30, h=0.5, g=0.5)
    m = spectral_measure(p)
    uniform = np.linspace(0.0, 5.0, 21)
    a = survival_amplitude(m, uniform)
    assert a.log_abs[0] == 0.0
    c = survival_amplitude(m, np.array([0.0, 0.5, 2.5, 5.0]))
    np.testing.assert_allclose(c.log_abs, a.log_abs[[0, 2, 10, 20]], rtol=0, atol=1e-13)


def test_matches_double_amplitude_where_large():
    p = ModelParams(20, h=0.5, g=1.0)
    times = np.array([0.3, 1.1, 2.0])
    amp = survival_amplitude(spectral_measure(p), times).as_complex()
    psi0 = initial_state(p, Basis.Z).amplitudes
    direct = np.array([np.vdot(psi0, evolve_direct(p, t).amplitudes) for t in times])
    np.testing.assert_allclose(amp, direct, atol=1e-12)


def test_noise_floor_flag():
    # at 60 bits the amplitude of an N = 200 quench sinks below the rounding noise
    p = ModelParams(200, h=0.5, g=0.5)
    times = np.linspace(0.0, 3.0, 7)
    low = survival_amplitude(spectral_measure(p, precision=60), times)
    high = survival_amplitude(spectral_measure(p), times)
    assert not low.floor[0]
    assert low.floor.any()
    assert not high.floor.any()
