import threading

import numpy as np
import pytest

from shrinkcv.errors import GenerationFailureError, InvalidInputError
from shrinkcv.estimators import scm
from shrinkcv.scenarios import (StapScenarioSpec, UlaScenarioSpec, build_stap_scenario,
                                build_ula_scenario, clutter_frequencies, complex_normal,
                                knowledge_target, sample_texture, spacetime_steering, trial_rng,
                                ula_steering)


def _rel_fro(a, b):
    return np.linalg.norm(a - b) / np.linalg.norm(b)


def test_ula_steering_examples():
    np.testing.assert_array_equal(ula_steering(0.0, 5).s, np.ones(5))
    np.testing.assert_allclose(ula_steering(30.0, 2).s, [1, 1j], atol=1e-15)
    for theta in (-71.0, 12.5, 89.0):
        s = ula_steering(theta, 9, 0.37).s
        assert np.vdot(s, s).real == pytest.approx(9, abs=1e-12)


def test_spacetime_steering_examples():
    np.testing.assert_array_equal(spacetime_steering(0, 0, 3, 4).s, np.ones(12))
    ref = np.exp(1j * np.pi * np.array([0, 1, 0.5, 1.5]))
    np.testing.assert_allclose(spacetime_steering(0.25, 0.5, 2, 2).s, ref, atol=1e-15)
    s = spacetime_steering(0.13, -0.31, 4, 3).s
    for p in range(4):
        for q in range(3):
            assert s[p * 3 + q] == pytest.approx(np.exp(2j * np.pi * (p * 0.13 - q * 0.31)))


def test_complex_normal_unit_variance():
    z = complex_normal(np.random.default_rng(0), (200_000,))
    assert np.mean(np.abs(z) ** 2) == pytest.approx(1.0, abs=0.01)
    assert abs(np.mean(z ** 2)) < 0.01  # circular


def test_ula_defaults():
    spec = UlaScenarioSpec()
    assert spec.n_antennas == 20 and len(spec.interferer_doas_deg) == 9
    assert spec.interferer_doas_deg[0] == 30.0 and spec.interferer_doas_deg[-1] == 70.0
    real = build_ula_scenario(spec)
    # each interferer contributes P_i = 10^3 on the diagonal
    assert np.diag(real.r_true.matrix).real == pytest.approx(np.full(20, 9 * 1e3 + 1))


def test_ula_without_interferers_is_white():
    real = build_ula_scenario(UlaScenarioSpec(n_antennas=6, interferer_doas_deg=()))
    np.testing.assert_array_equal(real.r_true.matrix, np.eye(6))
    x = real.snapshots(0, 0, 10_000)
    assert _rel_fro(scm(x).matrix, np.eye(6)) < 0.05


def test_ula_scm_converges_to_truth():
    real = build_ula_scenario()
    assert _rel_fro(scm(real.snapshots(3, 0, 100_000)).matrix, real.r_true.matrix) < 0.02


def test_stap_defaults():
    spec = StapScenarioSpec()
    assert spec.n == 32 and spec.n_clutter_patches == 401
    real = build_stap_scenario(spec)
    tau0 = 1000 / 401
    fd, fs = clutter_frequencies(spec)
    a = np.stack([spacetime_steering(p, q, 8, 4).s for p, q in zip(fd, fs)], axis=1)
    np.testing.assert_allclose(real.r_true.matrix, tau0 * a @ a.conj().T + np.eye(32), rtol=1e-12)
    assert real.model == "compound-gaussian"


def test_stap_clutter_geometry():
    spec = StapScenarioSpec()
    fd, fs = clutter_frequencies(spec)
    # 2 v / (lambda f_r) = 2 * 125 / (0.25 * 2000) = 0.5 (to within c = 299792458 m/s)
    assert fd[0] == pytest.approx(0.5, rel=1e-3) and fs[0] == 0.5
    assert fd.size == 401 and np.all(np.diff(fs) < 0)


def test_stap_scm_converges_to_truth():
    real = build_stap_scenario(StapScenarioSpec(n_pulses=4, n_elements=4))
    est = scm(real.snapshots(4, 0, 100_000)).matrix
    assert _rel_fro(est, real.r_true.matrix) < 0.05


def test_texture_statistics():
    tau = sample_texture(np.random.default_rng(1), 1e6, 10_000)
    assert np.std(tau) < 0.01
    k, nu = 100_000, 4.5
    tau = sample_texture(np.random.default_rng(2), nu, k)
    assert abs(np.mean(tau) - 1) < 3 / np.sqrt(nu * k)


def test_trace_normalization_flag():
    for real in (build_ula_scenario(UlaScenarioSpec(normalize_trace=True)),
                 build_stap_scenario(StapScenarioSpec(n_pulses=2, n_elements=3,
                                                      normalize_trace=True))):
        n = real.n
        assert np.trace(real.r_true.matrix).real == pytest.approx(n, rel=1e-12)


def test_sampler_determinism_and_independence():
    real = build_ula_scenario()
    a = real.snapshots(7, 3, 16).data
    np.testing.assert_array_equal(a, real.snapshots(7, 3, 16).data)
    assert not np.array_equal(a, real.snapshots(7, 4, 16).data)
    assert not np.array_equal(a, real.snapshots(8, 3, 16).data)


def test_sampler_independent_of_call_order_and_thread():
    real = build_stap_scenario(StapScenarioSpec(n_pulses=2, n_elements=2))
    serial = [real.snapshots(5, k, 8).data for k in range(6)]
    got = [None] * 6

    def work(k):
        got[k] = real.snapshots(5, k, 8).data

    threads = [threading.Thread(target=work, args=(k,)) for k in reversed(range(6))]
    for th in threads:
        th.start()
    for th in threads:
        th.join()
    for a, b in zip(serial, got):
        np.testing.assert_array_equal(a, b)


def test_trial_streams_differ():
    a = trial_rng(1, 0, 1).standard_normal(4)
    assert not np.array_equal(a, trial_rng(1, 0, 2).standard_normal(4))
    np.testing.assert_array_equal(a, trial_rng(1, 0, 1).standard_normal(4))


def test_scenario_validation():
    with pytest.raises(InvalidInputError):
        UlaScenarioSpec(n_antennas=1)
    with pytest.raises(InvalidInputError):
        UlaScenarioSpec(interferer_doas_deg=(90.0,))
    with pytest.raises(InvalidInputError):
        StapScenarioSpec(nu=0)
    with pytest.raises(InvalidInputError):
        StapScenarioSpec(n_clutter_patches=0)
    with pytest.raises(InvalidInputError):
        StapScenarioSpec(cnr=-1)


# -- knowledge-based target ------------------------------------------------
def test_knowledge_target_zero_variance_is_truth():
    r = build_ula_scenario(UlaScenarioSpec(n_antennas=8)).r_true.matrix
    np.testing.assert_array_equal(knowledge_target(r, 0.0, 0).matrix, r)


def test_knowledge_target_is_hermitian_hadamard():
    r = build_ula_scenario(UlaScenarioSpec(n_antennas=8)).r_true.matrix
    gen = np.random.default_rng(3)
    t = knowledge_target(r, 0.1, gen).matrix
    np.testing.assert_array_equal(t, t.conj().T)
    ratio = (t / r).real
    np.testing.assert_allclose(ratio, ratio.T, rtol=1e-12)
    assert np.linalg.matrix_rank(ratio, tol=1e-8) == 1


def test_knowledge_target_feasibility():
    r = build_ula_scenario(UlaScenarioSpec(n_antennas=8)).r_true.matrix
    ok = 0
    for seed in range(1000):
        try:
            knowledge_target(r, 0.1, seed)
            ok += 1
        except GenerationFailureError:
            pass
    assert ok >= 990


def test_knowledge_target_gives_up():
    # zero noise floor makes every Hadamard perturbation singular
    r = np.ones((3, 3))
    with pytest.raises(GenerationFailureError):
        knowledge_target(r, 0.1, 0)
    with pytest.raises(InvalidInputError):
        knowledge_target(np.eye(3), -0.1, 0)
