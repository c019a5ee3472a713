import math

import numpy as np
import pytest

from sotcam.constants import HBAR, KB, MU0, Q_E
from sotcam.write import (MagnetParams, PulseSchedule, StepUnstable, WriteElectrical,
                          boltzmann_bin_probs, llg_step, run_sot_phase, stt_spin_current,
                          wer_curve, wer_estimate, wilson_interval, write_attempt, write_energy)

COLD = MagnetParams(temperature=0.0)


def test_pole_is_fixed_point_at_zero_temperature():
    m = np.array([0.0, 0.0, 1.0])
    for _ in range(100):
        m = llg_step(m, COLD)
    np.testing.assert_allclose(m, [0, 0, 1], atol=1e-12)


def test_damped_relaxation_toward_nearest_pole():
    m = np.array([0.6, 0.0, 0.8])
    z = [m[2]]
    for _ in range(20000):
        m = llg_step(m, COLD, dt=1e-12)
        z.append(m[2])
    assert np.all(np.diff(z) >= -1e-12)
    assert z[-1] > 0.99


def test_norm_preserved_with_noise():
    rng = np.random.default_rng(0)
    m = np.tile([0.0, 0.0, 1.0], (50, 1))
    for _ in range(200):
        m = llg_step(m, MagnetParams(), torques=(700e-6, 0.0), rng=rng)
    np.testing.assert_allclose(np.linalg.norm(m, axis=1), 1.0, atol=1e-12)


def test_rejects_non_unit_vector():
    with pytest.raises(ValueError):
        llg_step([0.0, 0.0, 2.0], COLD)


def test_large_step_raises():
    with pytest.raises(StepUnstable):
        llg_step(np.array([0.6, 0.0, 0.8]), MagnetParams(), dt=1e-9)


def test_critical_current_closed_form():
    # mu0 Ms V Hk = 2 delta kT, so Ic = 4 e alpha delta kT / hbar
    p = MagnetParams()
    expected = 4 * Q_E * p.alpha * p.delta * KB * 300.0 / HBAR
    assert p.critical_spin_current() == pytest.approx(expected, rel=1e-12)
    assert p.critical_spin_current() == pytest.approx(21.3e-6, rel=0.01)


def test_stt_spin_current_directions():
    assert stt_spin_current(10e-6, "AP", "P") == pytest.approx(6e-6)
    assert stt_spin_current(20e-6, "P", "AP") == pytest.approx(6e-6)
    with pytest.raises(ValueError):
        stt_spin_current(10e-6, "P", "P")


def test_schedule_validation():
    with pytest.raises(ValueError):
        PulseSchedule(dt=1e-10)
    with pytest.raises(ValueError):
        PulseSchedule(t_sot_pulse=0.0)


def test_zero_temperature_is_deterministic():
    a = write_attempt("P", "AP", COLD, seed=1)
    b = write_attempt("P", "AP", COLD, seed=2)
    assert a.final_mz == b.final_mz


def test_seeded_trials_reproducible():
    a = write_attempt("P", "AP", seed=5, schedule=PulseSchedule(t_stt_max=2e-9))
    b = write_attempt("P", "AP", seed=5, schedule=PulseSchedule(t_stt_max=2e-9))
    assert a.final_mz == b.final_mz


def test_sot_pulse_pulls_in_plane():
    m = run_sot_phase(COLD, PulseSchedule())
    assert abs(m[0, 2]) < 1e-3
    assert m[0, 1] > 0.99


def test_trajectory_recorded():
    out = write_attempt("AP", "P", seed=0, trajectory=True,
                        schedule=PulseSchedule(t_stt_max=4e-9))
    assert out.trajectory.shape[1] == 2
    assert out.trajectory[-1, 0] == pytest.approx(5e-9)
    assert out.trajectory[-1, 1] == out.final_mz


def test_bad_state_name():
    with pytest.raises(ValueError):
        write_attempt("P", "Q")


def test_overdriven_cold_write_never_fails():
    r = wer_curve(COLD, PulseSchedule(i_stt_spin=60e-6), [5e-9, 30e-9], n_trials=100)
    assert [x.failures for x in r] == [0, 0]


def test_no_stt_gives_coin_flip():
    sched = PulseSchedule(i_stt_spin=0.0, t_stt_max=30e-9)
    (r,) = wer_curve(MagnetParams(), sched, [30e-9], n_trials=400, seed=1)
    assert 0.3 < r.wer < 0.7


def test_wer_estimate_needs_trials():
    with pytest.raises(ValueError):
        wer_estimate(n_trials=10)


def test_wilson_interval():
    lo, hi = wilson_interval(0, 100)
    assert lo == pytest.approx(0.0, abs=1e-12) and hi == pytest.approx(0.037, abs=1e-3)
    lo, hi = wilson_interval(50, 100)
    assert lo < 0.5 < hi
    w = [np.diff(wilson_interval(n // 10, n))[0] for n in (100, 1000, 10000)]
    assert w[0] > w[1] > w[2]


def test_boltzmann_probs_limits():
    edges = np.linspace(-1, 1, 11)
    np.testing.assert_allclose(boltzmann_bin_probs(1e-9, edges), 0.1, atol=1e-8)
    p = boltzmann_bin_probs(3.0, edges)
    assert p.sum() == pytest.approx(1.0)
    np.testing.assert_allclose(p, p[::-1])
    assert p[0] > p[5]


def test_write_energy_hand_values():
    e = WriteElectrical()
    sot = 1.56 * 231e-6 * 1e-9
    binary = sot + 1.56 * 22e-6 * 30e-9 + 0.42 * 11e-6 * 30e-9
    x = sot + 2 * 1.56 * 22e-6 * 30e-9 + 0.42 * 44e-6 * 30e-9
    assert write_energy("0", e) == pytest.approx(binary)
    assert write_energy(1, e) == pytest.approx(binary)
    assert write_energy("X", e) == pytest.approx(x)
    assert binary == pytest.approx(1.5286e-12, rel=1e-4)


def test_write_energy_zero_durations():
    e = WriteElectrical(t_sot=0.0, t_stt=0.0)
    assert write_energy("X", e) == 0.0
    assert write_energy("1", e) == 0.0


def test_magnet_validation():
    with pytest.raises(ValueError):
        MagnetParams(alpha=0.0)
    with pytest.raises(ValueError):
        MagnetParams(eta_ap2p=1.5)


def test_hk_matches_delta():
    p = MagnetParams()
    assert 0.5 * MU0 * p.ms * p.hk * p.volume / (KB * 300) == pytest.approx(65.0)
    assert math.isfinite(p.thermal_sigma(1e-12))


def test_early_stop_only_shortens_successful_writes():
    sched = PulseSchedule(t_stt_max=10e-9)
    full = write_attempt("P", "AP", seed=4, schedule=sched, early_stop=None)
    short = write_attempt("P", "AP", seed=4, schedule=sched)
    assert full.success == short.success
    if short.success:
        assert short.final_mz < -0.95
