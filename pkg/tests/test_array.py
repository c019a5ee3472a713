from dataclasses import replace

import numpy as np
import pytest

from sotcam.array import (ArrayConfig, SearchScenario, SingularNetwork, TABLE_TARGETS,
                          _line_voltages, calibrate, exact_search_delay, exact_search_energy,
                          gate_voltages, ladder_node_voltages, ml_discharge_delay,
                          nominal_delay_table, scenario_batch, scenario_delays, search_array,
                          search_energy)
from sotcam.device import X
from sotcam.variation import MddSweep, delay_distribution


def dense_two_line(v_s, loads, r_driver, r_seg):
    """Nodal analysis of both search lines with explicit cell resistors.

    Unknowns: SBL nodes 0..n-1 then SBLB nodes 0..n-1. SBL is driven from
    v_s, SBLB from ground, both through r_driver at row 0.
    """
    n = len(loads)
    G = np.zeros((2 * n, 2 * n))
    b = np.zeros(2 * n)

    def link(i, j, g):
        G[i, i] += g
        G[j, j] += g
        G[i, j] -= g
        G[j, i] -= g

    for line in (0, 1):
        off = line * n
        for k in range(n - 1):
            link(off + k, off + k + 1, 1 / r_seg)
        G[off, off] += 1 / r_driver
        b[off] += (v_s if line == 0 else 0.0) / r_driver
    for k, r in enumerate(loads):
        link(k, n + k, 1 / r)
    x = np.linalg.solve(G, b)
    return x[:n], x[n:]


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_ladder_matches_dense_network(seed):
    rng = np.random.default_rng(seed)
    loads = rng.uniform(40e3, 200e3, 64)
    u = ladder_node_voltages(0.8, loads, 100.0, 1.7)
    hi, lo = dense_two_line(0.8, loads, 100.0, 1.7)
    np.testing.assert_allclose(u, hi, atol=1e-12)
    np.testing.assert_allclose(0.8 - u, lo, atol=1e-12)


def test_ideal_wires_give_full_swing():
    u = ladder_node_voltages(0.8, np.full(64, 95e3), 0.0, 0.0)
    np.testing.assert_allclose(u, 0.8, atol=1e-12)


def test_ir_drop_grows_away_from_driver():
    u = ladder_node_voltages(1.0, np.full(64, 95e3), 100.0, 1.0)
    assert np.all(np.diff(u) < 0)


def test_singular_network():
    with pytest.raises(SingularNetwork):
        ladder_node_voltages(0.8, np.array([1e3, 0.0]), 100.0, 1.0)


def test_batched_ladder():
    loads = np.random.default_rng(4).uniform(50e3, 1e5, (3, 5, 64))
    u = ladder_node_voltages(0.8, loads, 100.0, 1.0)
    assert u.shape == loads.shape
    np.testing.assert_allclose(u[2, 3], ladder_node_voltages(0.8, loads[2, 3], 100.0, 1.0))


def test_no_rolloff_gate_voltages_exact():
    cfg = ArrayConfig(r_driver=0.0, r_seg_sbl=0.0)
    cfg = cfg.with_preset_params("SOT5T", v_half=np.inf)
    stored = np.array([[1, 0, X, 1]], dtype=np.int8)
    query = np.array([1, 1, 1, X], dtype=np.int8)
    v = gate_voltages(replace(cfg, rows=1, cols=4), stored, query)[0]
    np.testing.assert_allclose(v, [0.8 * 25 / 95, 0.8 * 70 / 95, 0.4, 0.0], atol=1e-9)


def test_direct_gate_modes():
    cfg = replace(ArrayConfig(), rows=1, cols=3)
    stored = np.array([[1, 0, X]], dtype=np.int8)
    q = np.array([1, 1, 1], dtype=np.int8)
    sram = gate_voltages(cfg.with_preset("SRAM"), stored, q)[0]
    np.testing.assert_allclose(sram, [0.0, 0.8, 0.0])
    fe = gate_voltages(cfg.with_preset("FEFET"), stored, q)[0]
    np.testing.assert_allclose(fe, [0.37, 0.83, 0.37])


def test_match_never_discharges():
    cfg = ArrayConfig()
    stored, q = scenario_batch(cfg, [10], 0)
    d = ml_discharge_delay(SearchScenario(stored[0], q), cfg)
    assert np.all(np.isinf(d))


def test_x_bits_leak_but_slower_than_mismatch():
    # stored X cells sit at Vs/2: a full match with many X bits drains slowly
    cfg = replace(ArrayConfig(), t_window=2e-6)
    x_match = scenario_delays(cfg, [63], 0, 32)[0]
    assert np.isfinite(x_match)
    assert x_match > exact_search_delay(cfg)


def test_query_x_masks_mismatch():
    cfg = ArrayConfig()
    stored, q = scenario_batch(cfg, [5], 3)
    q = q.copy()
    q[:3] = X
    assert np.all(np.isinf(ml_discharge_delay(SearchScenario(stored[0], q), cfg)))


def test_delay_decreases_with_hdist():
    cfg = ArrayConfig()
    tab = nominal_delay_table(cfg, [1, 2, 5, 10, 20, 40], positions=[0, 63])
    assert np.all(np.diff(tab, axis=0) < 0)


def test_far_row_slower_and_wider_wires_help():
    cfg = ArrayConfig(r_seg_sbl=1.4)
    wide = replace(cfg, r_seg_sbl=0.7)
    gap = lambda c: np.ptp(scenario_delays(c, [0, 63], 20))  # noqa: E731
    d = scenario_delays(cfg, [0, 63], 20)
    assert d[1] > d[0]
    assert gap(wide) < gap(cfg)


def test_higher_vs_is_faster():
    assert exact_search_delay(ArrayConfig(), 1.0) < exact_search_delay(ArrayConfig(), 0.8)


def test_search_array_latches():
    cfg = ArrayConfig()
    stored = np.ones((64, 128), dtype=np.int8)
    stored[3, :4] = 0
    q = np.ones(128, dtype=np.int8)
    out = search_array(stored, q, cfg, 20e-9)
    assert out.sum() == 63 and not out[3]
    assert search_array(stored, q, cfg, 0.0).all()


def test_backends_agree_on_delays():
    cfg = ArrayConfig()
    a = scenario_delays(cfg, [0, 31, 63], 7, backend="python")
    b = scenario_delays(cfg, [0, 31, 63], 7, backend="cython")
    np.testing.assert_allclose(a, b, rtol=1e-9)


def test_energy_positive_and_zero_duration():
    cfg = ArrayConfig()
    stored, q = scenario_batch(cfg, [63], 1)
    s = SearchScenario(stored[0], q)
    assert search_energy(s, cfg, 0.0) == pytest.approx(64 * 0.5 * 20e-15 * 0.7 ** 2)
    assert exact_search_energy(cfg) > search_energy(s, cfg, 0.0)


def test_calibration_reproduces_targets():
    res = calibrate(ArrayConfig(), presets=["SRAM", "SOT3T"])
    for name in ("SRAM", "SOT3T"):
        for vs, (delay, _) in TABLE_TARGETS[name].items():
            c = res.config.with_preset(name) if vs is None else \
                res.config.with_preset(name, v_s=vs)
            assert exact_search_delay(c) == pytest.approx(delay, rel=1e-3)


def test_fast_path_matches_full_ladder():
    cfg = ArrayConfig()
    sw = MddSweep(cfg, n_mc=40, seed=9)
    for h in (3, 20):
        fast = sw.distribution(h).samples
        full = delay_distribution(cfg, h, 0, n_mc=40, seed=9).samples
        # match and mismatch loads differ only through device variation
        np.testing.assert_allclose(fast, full, rtol=2e-3)


def test_line_voltages_converge_to_tolerance():
    cfg = ArrayConfig()
    stored, q = scenario_batch(cfg, [0], 10)
    v, d, loads = _line_voltages(cfg, stored, q)
    again = ladder_node_voltages(cfg.v_s, np.swapaxes(loads, -1, -2), cfg.r_driver,
                                 cfg.r_seg_sbl)
    np.testing.assert_allclose(cfg.v_s - np.swapaxes(again, -1, -2), d, atol=1e-6)
