"""Time the compiled kernels against the numpy fallback.

    python3 benchmarks/bench_kernels.py [--repeat 3]
"""
import argparse
import time

import numpy as np

from sotcam import _fallback, kernels
from sotcam.array import ArrayConfig, gate_voltages, scenario_batch
from sotcam.constants import GAMMA, MU0
from sotcam.write import MagnetParams


def ml_case(rows=64):
    cfg = ArrayConfig()
    stored, q = scenario_batch(cfg, np.arange(64), 20)
    vsot = gate_voltages(cfg, stored, q).reshape(-1, cfg.cols)[:rows]
    vt = np.full(vsot.shape, cfg.transistor.vt)
    tau = np.full(vsot.shape[0], cfg.tau_cell)
    args = (cfg.c_ml, cfg.v_dd, cfg.v_trip, cfg.t_window - cfg.preset.t_sense,
            *cfg.cell_transistor.kernel_args(), cfg.atol, cfg.dt0, cfg.dt_max)
    return lambda k: k.ml_discharge(vsot, vt, tau, *args)


def llg_case(n=64, steps=5000):
    p = MagnetParams()
    rng = np.random.default_rng(0)
    m0 = np.tile([0.0, 0.0, 1.0], (n, 1))
    noise = p.thermal_sigma(1e-12) * rng.standard_normal((n, steps, 3))
    checks = np.array([steps], dtype=np.int64)
    args = (1000, p.hk, p.torque_field(700e-6, p.sot_efficiency), np.array([0.0, 1.0, 0.0]),
            p.torque_field(6e-6), np.array([0.0, 0.0, -1.0]), p.alpha, GAMMA * MU0, 1e-12,
            checks, 0.0)
    return lambda k: k.llg_run(m0.copy(), noise, *args)


def best_of(fn, k, repeat):
    t = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn(k)
        t.append(time.perf_counter() - t0)
    return min(t)


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--repeat", type=int, default=3)
    a = ap.parse_args()
    try:
        compiled = kernels.get("cython")
    except ImportError:
        print("compiled extension not built; only the fallback is available")
        compiled = None
    print(f"{'kernel':<28}{'python s':>10}{'cython s':>10}{'speedup':>9}")
    for name, fn in (("ml_discharge 1 row", ml_case(1)),
                     ("ml_discharge 64 rows", ml_case()),
                     ("llg_run 64 x 5000 steps", llg_case())):
        tp = best_of(fn, _fallback, a.repeat)
        if compiled is None:
            print(f"{name:<28}{tp:>10.3f}{'-':>10}{'-':>9}")
            continue
        tc = best_of(fn, compiled, a.repeat)
        print(f"{name:<28}{tp:>10.3f}{tc:>10.4f}{tp / tc:>8.1f}x")


if __name__ == "__main__":
    main()
