"""Stochastic macrospin model of the two-phase write: an SOT pulse pulls the
free layer in-plane, then a small STT current picks the final pole."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.stats import norm

from . import kernels
from .constants import GAMMA, HBAR, KB, MU0, Q_E
from .device import TernaryBit


class StepUnstable(RuntimeError):
    """One integration step moved m by more than 0.5; dt is too large."""


@dataclass(frozen=True)
class MagnetParams:
    ms: float = 1.2e6
    ki: float = 1.15e-3
    t_fl: float = 1.3e-9
    diameter: float = 60e-9
    alpha: float = 0.013
    temperature: float = 300.0
    delta: float = 65.0
    eta_ap2p: float = 0.6
    eta_p2ap: float = 0.3
    theta_sh: float = 0.3
    rho_sot: float = 2.0e-6
    t_sot: float = 3e-9
    # damping-like SOT torque per unit spin current relative to the ideal
    # hbar*Is/(2e) transfer; fitted so 700 uA holds mz near zero
    sot_efficiency: float = 1.36

    def __post_init__(self):
        for k in ("ms", "ki", "t_fl", "diameter", "alpha", "delta"):
            if getattr(self, k) <= 0:
                raise ValueError(f"{k} must be > 0")
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")
        for k in ("eta_ap2p", "eta_p2ap"):
            if not 0 < getattr(self, k) <= 1:
                raise ValueError(f"{k} must be in (0, 1]")

    @property
    def volume(self) -> float:
        return math.pi / 4 * self.diameter ** 2 * self.t_fl

    @property
    def hk(self) -> float:
        """Effective anisotropy field (A/m) implied by the thermal stability."""
        return 2 * self.delta * KB * self.temperature_ref / (MU0 * self.ms * self.volume)

    @property
    def temperature_ref(self) -> float:
        # delta is quoted at room temperature; keep Hk fixed when T is varied
        return 300.0

    def torque_field(self, i_spin: float, efficiency: float = 1.0) -> float:
        """Spin-torque amplitude in A/m for a spin current in amps."""
        return efficiency * HBAR * i_spin / (2 * Q_E * MU0 * self.ms * self.volume)

    def thermal_sigma(self, dt: float) -> float:
        """Std of each thermal-field component (A/m) for step ``dt``."""
        if self.temperature == 0:
            return 0.0
        return math.sqrt(2 * self.alpha * KB * self.temperature
                         / (GAMMA * MU0 ** 2 * self.ms * self.volume * dt))

    def critical_spin_current(self) -> float:
        return 2 * Q_E * MU0 * self.ms * self.volume * self.alpha * self.hk / HBAR


@dataclass(frozen=True)
class PulseSchedule:
    i_sot_spin: float = 700e-6
    t_sot_pulse: float = 1e-9
    i_stt_spin: float = 6e-6
    t_stt_max: float = 30e-9
    dt: float = 1e-12

    def __post_init__(self):
        if self.t_sot_pulse <= 0 or self.t_stt_max < 0 or self.dt <= 0:
            raise ValueError("durations must be positive")
        if self.dt > self.t_sot_pulse / 100:
            raise ValueError("dt must be <= t_sot_pulse / 100")

    @property
    def n_sot(self) -> int:
        return int(round(self.t_sot_pulse / self.dt))

    @property
    def n_stt(self) -> int:
        return int(round(self.t_stt_max / self.dt))


@dataclass
class WriteOutcome:
    success: bool
    final_mz: float
    trajectory: Optional[np.ndarray] = field(default=None, repr=False)


def stt_spin_current(i_electric: float, initial: str, target: str,
                     params: MagnetParams = MagnetParams()) -> float:
    """Spin current of an electric STT current for the given switching direction."""
    if initial == target:
        raise ValueError("no switching needed")
    eta = params.eta_ap2p if target == "P" else params.eta_p2ap
    return i_electric * eta


def _unit(v) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    return v / np.linalg.norm(v, axis=-1, keepdims=True)


def llg_step(m, params: MagnetParams, torques=(0.0, 0.0), rng=None, dt: float = 1e-12,
             p_sot=(0.0, 1.0, 0.0), p_stt=(0.0, 0.0, 1.0)) -> np.ndarray:
    """Advance one or many magnetizations by one stochastic Heun step.

    ``torques`` are spin currents in amps for the SOT and STT terms.
    """
    m = np.atleast_2d(np.asarray(m, dtype=float))
    if np.any(np.abs(np.linalg.norm(m, axis=1) - 1) > 1e-6):
        raise ValueError("m must be a unit vector")
    sig = params.thermal_sigma(dt)
    if sig > 0:
        rng = np.random.default_rng(rng) if not isinstance(rng, np.random.Generator) else rng
        h = sig * rng.standard_normal(m.shape)
    else:
        h = np.zeros_like(m)
    a_sot = params.torque_field(torques[0], params.sot_efficiency)
    a_stt = params.torque_field(torques[1])
    # both torques share one polarisation slot in the kernel; combine them
    a_vec = a_sot * np.asarray(p_sot, float) + a_stt * np.asarray(p_stt, float)
    a = float(np.linalg.norm(a_vec))
    p = a_vec / a if a > 0 else np.array([0.0, 0.0, 1.0])
    c = GAMMA * MU0 / (1 + params.alpha ** 2)
    from ._fallback import heun_step
    nm = heun_step(m, h, params.hk, a, p[None, :], params.alpha, c, dt)
    if np.any(np.linalg.norm(nm - m, axis=1) > 0.5):
        raise StepUnstable(f"step of {dt:g} s moved m by more than 0.5")
    return nm[0] if nm.shape[0] == 1 else nm


def _seeds(seed, n: int):
    return np.random.SeedSequence(seed).spawn(n)


def _simulate(params: MagnetParams, schedule: PulseSchedule, seeds, m0, target: float,
              i_stt_spin: float, checks: Sequence[int], stop_mz: float = 0.0,
              chunk: int = 64, backend: Optional[str] = None):
    """Run trials with per-trial seeds; returns (final m, mz at checks, status)."""
    k = kernels if backend is None else kernels.get(backend)
    n = len(seeds)
    n_sot, n_total = schedule.n_sot, schedule.n_sot + schedule.n_stt
    checks = np.asarray(sorted(checks), dtype=np.int64)
    if checks.size == 0 or checks[-1] != n_total:
        checks = np.append(checks, n_total)
    sig = params.thermal_sigma(schedule.dt)
    a_sot = params.torque_field(schedule.i_sot_spin, params.sot_efficiency)
    a_stt = params.torque_field(i_stt_spin)
    p_sot = np.array([0.0, 1.0, 0.0])
    p_stt = np.array([0.0, 0.0, 1.0 if target >= 0 else -1.0])
    gp = GAMMA * MU0
    m_out = np.empty((n, 3))
    mz_out = np.empty((n, checks.size))
    st_out = np.empty(n, dtype=np.int64)
    for lo in range(0, n, chunk):
        hi = min(n, lo + chunk)
        noise = np.empty((hi - lo, n_total, 3))
        for j, s in enumerate(seeds[lo:hi]):
            if sig > 0:
                noise[j] = sig * np.random.default_rng(s).standard_normal((n_total, 3))
            else:
                noise[j] = 0.0
        m0c = np.ascontiguousarray(np.broadcast_to(m0, (hi - lo, 3)), dtype=float)
        m, mz, st = k.llg_run(m0c, noise, n_sot, params.hk, a_sot, p_sot, a_stt, p_stt,
                              params.alpha, gp, schedule.dt, checks, stop_mz)
        m_out[lo:hi], mz_out[lo:hi], st_out[lo:hi] = m, mz, st
    return m_out, mz_out, st_out, checks


def _initial_m(state: str) -> np.ndarray:
    # reference layer points along +z: P is +z, AP is -z
    return np.array([0.0, 0.0, 1.0 if state == "P" else -1.0])


def run_sot_phase(params: MagnetParams, schedule: PulseSchedule, seed=0, n_trials: int = 1,
                  initial: str = "P", backend: Optional[str] = None) -> np.ndarray:
    """Magnetization at the end of the SOT pulse for ``n_trials`` seeded trials."""
    if schedule.i_sot_spin < 0:
        raise ValueError("i_sot_spin must be >= 0")
    sched = PulseSchedule(schedule.i_sot_spin, schedule.t_sot_pulse, 0.0, 0.0, schedule.dt)
    m, _, st, _ = _simulate(params, sched, _seeds(seed, n_trials), _initial_m(initial), 1.0,
                            0.0, [], backend=backend)
    if np.any(st):
        raise StepUnstable("SOT phase step exceeded 0.5")
    return m


def write_attempt(initial: str, target: str, params: MagnetParams = MagnetParams(),
                  schedule: PulseSchedule = PulseSchedule(), seed=0,
                  i_stt_electric: Optional[float] = None, trajectory: bool = False,
                  backend: Optional[str] = None,
                  early_stop: Optional[float] = 0.95) -> WriteOutcome:
    """One seeded write. ``i_stt_electric`` overrides ``schedule.i_stt_spin``
    through the direction-dependent STT efficiency.

    The STT phase ends once mz passes ``early_stop`` toward the target
    (``None`` runs the full pulse; trajectories always run it).
    """
    for s in (initial, target):
        if s not in ("P", "AP"):
            raise ValueError(f"state must be 'P' or 'AP', got {s!r}")
    i_spin = schedule.i_stt_spin if i_stt_electric is None else \
        stt_spin_current(i_stt_electric, initial, target, params)
    tgt = 1.0 if target == "P" else -1.0
    seeds = _seeds(seed, 1)
    if trajectory:
        n_total = schedule.n_sot + schedule.n_stt
        every = max(1, n_total // 200)
        chk = list(range(every, n_total + 1, every))
        m, mz, st, chk = _simulate(params, schedule, seeds, _initial_m(initial), tgt,
                                   i_spin, chk, backend=backend)
        traj = np.column_stack([np.asarray(chk) * schedule.dt, mz[0]])
    else:
        m, mz, st, _ = _simulate(params, schedule, seeds, _initial_m(initial), tgt, i_spin, [],
                                 stop_mz=early_stop or 0.0, backend=backend)
        traj = None
    if st[0]:
        raise StepUnstable("write step exceeded 0.5")
    return WriteOutcome(bool(np.sign(m[0, 2]) == tgt), float(m[0, 2]), traj)


def wilson_interval(k: int, n: int, conf: float = 0.95):
    z = norm.ppf(0.5 + conf / 2)
    p = k / n
    den = 1 + z * z / n
    mid = (p + z * z / (2 * n)) / den
    half = z * math.sqrt(p * (1 - p) / n + z * z / (4 * n * n)) / den
    return max(0.0, mid - half), min(1.0, mid + half)


@dataclass(frozen=True)
class WerResult:
    t_write: float
    wer: float
    ci_low: float
    ci_high: float
    failures: int
    n_trials: int


def wer_curve(params: MagnetParams, schedule: PulseSchedule, t_writes: Sequence[float],
              n_trials: int = 1000, seed=0, initial: str = "P", target: str = "AP",
              backend: Optional[str] = None, chunk: int = 64, per_trial: bool = False):
    """WER at several STT durations from one set of trajectories.

    A trial written for ``t`` fails when sign(mz) at ``t`` misses the target;
    each duration is a checkpoint of the same seeded trial.
    """
    if n_trials < 1:
        raise ValueError("n_trials must be >= 1")
    t_writes = sorted(t_writes)
    sched = PulseSchedule(schedule.i_sot_spin, schedule.t_sot_pulse, schedule.i_stt_spin,
                          max(t_writes), schedule.dt)
    chk = [sched.n_sot + int(round(t / sched.dt)) for t in t_writes]
    tgt = 1.0 if target == "P" else -1.0
    m, mz, st, chk_all = _simulate(params, sched, _seeds(seed, n_trials),
                                   _initial_m(initial), tgt, sched.i_stt_spin, chk,
                                   backend=backend, chunk=chunk)
    if np.any(st):
        raise StepUnstable("write step exceeded 0.5")
    out = []
    for t in t_writes:
        col = list(chk_all).index(sched.n_sot + int(round(t / sched.dt)))
        fails = int(np.sum(np.sign(mz[:, col]) != tgt))
        lo, hi = wilson_interval(fails, n_trials)
        out.append(WerResult(t, fails / n_trials, lo, hi, fails, n_trials))
    if per_trial:
        return out, mz[:, :len(t_writes)]
    return out


def wer_estimate(params: MagnetParams = MagnetParams(), schedule: PulseSchedule = PulseSchedule(),
                 n_trials: int = 1000, seed=0, initial: str = "P", target: str = "AP",
                 backend: Optional[str] = None):
    """(wer, (ci_low, ci_high)) for writes of ``schedule.t_stt_max``."""
    if n_trials < 100:
        raise ValueError("n_trials must be >= 100")
    r = wer_curve(params, schedule, [schedule.t_stt_max], n_trials, seed, initial, target,
                  backend)[0]
    return r.wer, (r.ci_low, r.ci_high)


def equilibrium_mz(params: MagnetParams, n_samples: int, dt: float = 20e-12, seed=0,
                   n_chains: int = 16, burn: int = 5000, thin: int = 5000,
                   backend: Optional[str] = None, seg_steps: int = 500_000) -> np.ndarray:
    """``n_samples`` mz values of torque-free thermal motion, pooled over
    ``n_chains`` chains, one sample every ``thin`` steps after ``burn``."""
    k = kernels if backend is None else kernels.get(backend)
    sig = params.thermal_sigma(dt)
    rng = np.random.default_rng(seed)
    m0 = _unit(rng.standard_normal((n_chains, 3)))
    per = -(-n_samples // n_chains)
    per_seg = max(1, seg_steps // thin)
    p_sot, p_stt = np.array([0.0, 1.0, 0.0]), np.array([0.0, 0.0, 1.0])
    gp = GAMMA * MU0

    def advance(m, gen, steps, checks):
        noise = sig * gen.standard_normal((1, steps, 3))
        m, mz, st = k.llg_run(m, noise, 0, params.hk, 0.0, p_sot, 0.0, p_stt,
                              params.alpha, gp, dt, checks, 0.0)
        if st[0]:
            raise StepUnstable("equilibrium run unstable")
        return np.ascontiguousarray(m), mz[0]

    out = []
    for j, s in enumerate(_seeds(seed, n_chains)):
        gen = np.random.default_rng(s)
        m = m0[j:j + 1].copy()
        if burn:
            m, _ = advance(m, gen, burn, np.array([burn], dtype=np.int64))
        left = per
        while left > 0:
            n = min(per_seg, left)
            chk = np.arange(thin, n * thin + 1, thin, dtype=np.int64)
            m, mz = advance(m, gen, n * thin, chk)
            out.append(mz)
            left -= n
    return np.concatenate(out)[:n_samples]


def boltzmann_bin_probs(delta: float, edges) -> np.ndarray:
    """Bin masses of the equilibrium density ``exp(delta*mz**2)`` on [-1, 1]."""
    from scipy.integrate import quad
    w = np.array([quad(lambda x: math.exp(delta * x * x), a, b)[0]
                  for a, b in zip(edges[:-1], edges[1:])])
    return w / w.sum()


# ---------------------------------------------------------------- energy

@dataclass(frozen=True)
class WriteElectrical:
    v_sot: float = 1.56
    i_sot: float = 231e-6
    v_stt: float = 1.56
    i_stt_p2ap: float = 20e-6
    i_stt_ap2p: float = 10e-6
    v_wbl_stt: float = 0.42
    stt_overhead: float = 1.1  # access-path share of STT current
    t_sot: float = 1e-9
    t_stt: float = 30e-9


def write_energy(pattern, elec: WriteElectrical = WriteElectrical()) -> float:
    """Energy (J) to write one ternary cell.

    SOT pulse through the shared heavy-metal line, then STT: every MTJ
    written to AP draws its current from the high supply, and the WBL
    sinks/sources the STT currents at its own bias. A binary write moves one
    MTJ to AP and the other to P; X moves both to AP.
    """
    b = TernaryBit.parse(pattern)
    e_sot = elec.v_sot * elec.i_sot * elec.t_sot
    k, t = elec.stt_overhead, elec.t_stt
    i_ap = elec.i_stt_p2ap * k
    i_p = elec.i_stt_ap2p * k
    if b == TernaryBit.X:
        e_stt = 2 * elec.v_stt * i_ap * t + elec.v_wbl_stt * 2 * i_ap * t
    else:
        e_stt = elec.v_stt * i_ap * t + elec.v_wbl_stt * i_p * t
    return e_sot + e_stt
