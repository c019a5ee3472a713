"""Monte Carlo over device variation: delay distributions, SER and MDD.

Sample ``j`` of a run is one independent array realization (every MTJ and
every discharge transistor perturbed) with the scenario word placed at row
``j mod rows``, so row positions are pooled uniformly.  Each sample draws from
its own child of ``SeedSequence(seed)``, which makes results independent of
chunking and of the number of worker processes.
"""
from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Dict, Optional, Sequence

import numpy as np
from scipy.stats import norm

from .array import ArrayConfig, _delays, _line_voltages, scenario_batch, scenario_delays
from .device import solve_divider

SIGMA_R = 0.05     # 3 sigma = 15 %
SIGMA_VT = 0.014   # 3 sigma = 42 mV


class NotResolvable(RuntimeError):
    """No distance up to the cap separates the delay distributions."""


@dataclass
class DelayDistribution:
    samples: np.ndarray
    tag: Dict = field(default_factory=dict)

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=float)
        if self.samples.size == 0:
            raise ValueError("empty delay distribution")

    @property
    def finite(self) -> np.ndarray:
        return self.samples[np.isfinite(self.samples)]

    @property
    def n_censored(self) -> int:
        """Samples that did not trip inside the simulation window."""
        return int(np.sum(~np.isfinite(self.samples)))

    @property
    def mu(self) -> float:
        f = self.finite
        return float(f.mean()) if f.size else math.inf

    @property
    def sigma(self) -> float:
        f = self.finite
        return float(f.std()) if f.size else 0.0

    def interval(self, k: float = 3.0):
        return self.mu - k * self.sigma, self.mu + k * self.sigma


@dataclass
class SerReport:
    ser: float
    v_s: float
    match_dist: DelayDistribution
    mismatch_dist: DelayDistribution
    extrapolated: bool
    ordered: bool

    def summary(self) -> Dict:
        return {
            "ser": self.ser, "v_s": self.v_s, "extrapolated": self.extrapolated,
            "ordered": self.ordered,
            "match_mu": self.match_dist.mu, "match_sigma": self.match_dist.sigma,
            "mismatch_mu": self.mismatch_dist.mu, "mismatch_sigma": self.mismatch_dist.sigma,
            "n_censored": self.match_dist.n_censored + self.mismatch_dist.n_censored,
        }


# ---------------------------------------------------------------- sampling

def sample_seeds(seed, n: int):
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    return ss.spawn(n)


def draw_variation(seeds, rows: int, cols: int, sigma_r: float = SIGMA_R,
                   sigma_vt: float = SIGMA_VT):
    """Stack per-sample draws: ``r_factor (n, 2, rows, cols)``, ``vt_delta (n, rows, cols)``."""
    n = len(seeds)
    rf = np.empty((n, 2, rows, cols))
    dvt = np.empty((n, rows, cols))
    for i, s in enumerate(seeds):
        g = np.random.default_rng(s)
        rf[i] = 1.0 + sigma_r * g.standard_normal((2, rows, cols))
        dvt[i] = sigma_vt * g.standard_normal((rows, cols))
    return rf, dvt


def _positions(rows: int, n: int, positions) -> np.ndarray:
    if positions is None or positions == "pooled":
        return np.arange(n) % rows
    if positions == "far":
        return np.full(n, rows - 1)
    if positions == "near":
        return np.zeros(n, dtype=int)
    return np.full(n, int(positions))


def _chunk_delays(args):
    config, seeds, pos, hdist, x_count, sigma_r, sigma_vt = args
    rf, dvt = draw_variation(seeds, config.rows, config.cols, sigma_r, sigma_vt)
    return scenario_delays(config, pos, hdist, x_count, rf, dvt)


def _run_chunks(fn, jobs, workers: int):
    if workers and workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            return list(ex.map(fn, jobs))
    return [fn(j) for j in jobs]


def delay_distribution(config: ArrayConfig, hdist: int, x_count: int = 0, n_mc: int = 1000,
                       seed=0, positions="pooled", sigma_r: float = SIGMA_R,
                       sigma_vt: float = SIGMA_VT, chunk: int = 50,
                       workers: int = 1) -> DelayDistribution:
    """Delays of a row with ``hdist`` mismatches and ``x_count`` stored X bits."""
    if n_mc < 1:
        raise ValueError("n_mc must be positive")
    seeds = sample_seeds(seed, n_mc)
    pos = _positions(config.rows, n_mc, positions)
    jobs = [(config, seeds[a:a + chunk], pos[a:a + chunk], hdist, x_count, sigma_r, sigma_vt)
            for a in range(0, n_mc, chunk)]
    samples = np.concatenate(_run_chunks(_chunk_delays, jobs, workers))
    tag = {"hdist": hdist, "x_count": x_count, "positions": str(positions),
           "v_s": config.v_s, "preset": config.cell_preset, "n_mc": n_mc}
    return DelayDistribution(samples, tag)


# ---------------------------------------------------------------- overlap

def _mass(m: float, s: float, a: float, b: float) -> float:
    """Probability of N(m, s) on [a, b], accurate in both tails."""
    if b <= a:
        return 0.0
    if a >= m:
        return float(norm.sf(a, m, s) - norm.sf(b, m, s))
    if b <= m:
        return float(norm.cdf(b, m, s) - norm.cdf(a, m, s))
    return float(1.0 - norm.cdf(a, m, s) - norm.sf(b, m, s))


def normal_overlap(m1: float, s1: float, m2: float, s2: float) -> float:
    """Overlap coefficient of two normal densities (integral of their minimum)."""
    if s1 < 0 or s2 < 0:
        raise ValueError("sigmas must be >= 0")
    if s1 == 0 or s2 == 0:
        return 1.0 if (s1 == s2 and m1 == m2) else 0.0
    if s1 == s2:
        if m1 == m2:
            return 1.0
        return float(2.0 * norm.cdf(-abs(m1 - m2) / (2.0 * s1)))
    # log pdf1 = log pdf2  ->  a x^2 + b x + c = 0
    a = 1.0 / (2 * s2 * s2) - 1.0 / (2 * s1 * s1)
    b = m1 / (s1 * s1) - m2 / (s2 * s2)
    c = (m2 * m2) / (2 * s2 * s2) - (m1 * m1) / (2 * s1 * s1) + math.log(s2 / s1)
    disc = b * b - 4 * a * c
    # unequal sigmas always intersect twice (disc > 0 analytically)
    r = math.sqrt(max(disc, 0.0))
    x1, x2 = sorted(((-b - r) / (2 * a), (-b + r) / (2 * a)))
    # narrow density is the minimum outside [x1, x2], wide one inside
    (mn, sn), (mw, sw) = ((m1, s1), (m2, s2)) if s1 < s2 else ((m2, s2), (m1, s1))
    out = _mass(mn, sn, -math.inf, x1) + _mass(mn, sn, x2, math.inf)
    return float(min(1.0, out + _mass(mw, sw, x1, x2)))


def gaussian_overlap(a: DelayDistribution, b: DelayDistribution) -> float:
    return normal_overlap(a.mu, a.sigma, b.mu, b.sigma)


# ---------------------------------------------------------------- SER

def ser(config: ArrayConfig, vs: float, x_count: int = 32, word_len: Optional[int] = None,
        n_mc: int = 1000, seed=0, window: float = 2e-6, workers: int = 1) -> SerReport:
    """Exact-match search error rate from the Gaussian overlap of the
    X-bit full-match and worst-case single-mismatch delay distributions.

    The simulation window is widened to ``window`` so slow match rows still
    trip and can be fitted.
    """
    cols = config.cols if word_len is None else word_len
    if x_count > cols:
        raise ValueError("x_count exceeds word length")
    cfg = replace(config, v_s=vs, cols=cols, t_window=max(config.t_window, window))
    s_match, s_mm = np.random.SeedSequence(seed).spawn(2)
    match = delay_distribution(cfg, 0, x_count, n_mc, s_match, workers=workers)
    mism = delay_distribution(cfg, 1, 0, n_mc, s_mm, workers=workers)
    value = gaussian_overlap(match, mism)
    return SerReport(value, vs, match, mism, extrapolated=value < 1.0 / n_mc,
                     ordered=match.mu > mism.mu)


# ---------------------------------------------------------------- MDD

def binary_row_bank(config: ArrayConfig, n_mc: int, seed=0, positions="pooled",
                    sigma_r: float = SIGMA_R, sigma_vt: float = SIGMA_VT, chunk: int = 50):
    """Per-sample gate voltages of the scenario row for every cell in both
    the match and the mismatch state, plus its vt offsets.

    Binary cells load the search lines identically whether they match or not
    (the AP device sees the same bias in both cases), so the ladder is solved
    once per sample with the scenario row matching and reused for every
    Hamming distance.  Returns ``(v_match, v_mismatch, vt)`` each ``(n, cols)``.
    """
    seeds = sample_seeds(seed, n_mc)
    pos = _positions(config.rows, n_mc, positions)
    p = config.preset
    vm = np.empty((n_mc, config.cols))
    vx = np.empty((n_mc, config.cols))
    vt = np.empty((n_mc, config.cols))
    for a in range(0, n_mc, chunk):
        sl = slice(a, min(n_mc, a + chunk))
        rf, dvt = draw_variation(seeds[sl], config.rows, config.cols, sigma_r, sigma_vt)
        k = np.arange(rf.shape[0])
        r = pos[sl]
        vt[sl] = config.transistor.vt + dvt[k, r]
        if p.gate_mode == "direct":
            v_g = config.v_s if p.v_gate is None else p.v_gate
            vm[sl] = v_g - 0.5 * p.vt_window if p.vt_window > 0 else 0.0
            vx[sl] = v_g + 0.5 * p.vt_window
            continue
        stored, q = scenario_batch(config, r, 0)
        _, d, _ = _line_voltages(config, stored, q, rf)
        hi = config.v_s - d[k, r]
        lo = d[k, r]
        f1, f2 = rf[k, 0, r], rf[k, 1, r]
        # query is all '1': SBL = hi, SBLB = lo; stored '1' matches, '0' mismatches
        vm[sl] = solve_divider(hi, lo, False, True, f1, f2, p.lrs, p.tmr0, p.v_half)[0]
        vx[sl] = solve_divider(hi, lo, True, False, f1, f2, p.lrs, p.tmr0, p.v_half)[0]
    return vm, vx, vt


class MddSweep:
    """Pooled delay distributions per Hamming distance, computed lazily on a
    fixed bank of variation samples, and the MDD derived from them."""

    def __init__(self, config: ArrayConfig, n_mc: int = 200, seed=0, cap: int = 40,
                 sigma_r: float = SIGMA_R, sigma_vt: float = SIGMA_VT, k_sigma: float = 3.0):
        self.config = config
        self.cap = cap
        self.k_sigma = k_sigma
        self.n_mc = n_mc
        self.vm, self.vx, self.vt = binary_row_bank(config, n_mc, seed, "pooled",
                                                    sigma_r, sigma_vt)
        self._cache: Dict[int, DelayDistribution] = {}

    def distribution(self, hdist: int) -> DelayDistribution:
        if hdist not in self._cache:
            if hdist <= 0:
                samples = np.full(self.n_mc, math.inf)
            else:
                v = self.vm.copy()
                v[:, :hdist] = self.vx[:, :hdist]
                samples = _delays(self.config, v, self.vt)
            self._cache[hdist] = DelayDistribution(samples, {"hdist": hdist,
                                                             "v_s": self.config.v_s,
                                                             "preset": self.config.cell_preset})
        return self._cache[hdist]

    def _interval(self, h: int):
        if h <= 0:
            return math.inf, math.inf
        d = self.distribution(h)
        if d.n_censored:
            return math.inf, math.inf
        return d.interval(self.k_sigma)

    def _disjoint(self, a: int, b: int) -> bool:
        lo_a, hi_a = self._interval(a)
        lo_b, hi_b = self._interval(b)
        if math.isinf(lo_a) and math.isinf(lo_b):
            return False
        return hi_a < lo_b or hi_b < lo_a

    def mdd(self, hdist: int) -> int:
        if hdist < 1:
            raise ValueError("hdist must be >= 1")
        for delta in range(1, self.cap + 1):
            up = hdist + delta
            if up > self.config.cols:
                break
            if self._disjoint(hdist, up) and self._disjoint(hdist, hdist - delta):
                return delta
        raise NotResolvable(f"hdist={hdist}: no delta <= {self.cap} separates the distributions")

    def sweep(self, hdists: Sequence[int]):
        out = []
        for h in hdists:
            try:
                out.append(self.mdd(h))
            except NotResolvable:
                out.append(None)
        return out


def mdd(config: ArrayConfig, vs: float, hdist: int, n_mc: int = 200, seed=0,
        cap: int = 40) -> int:
    """Minimum detectable distance at ``hdist`` (disjoint mean +/- 3 sigma intervals)."""
    return MddSweep(replace(config, v_s=vs), n_mc, seed, cap).mdd(hdist)
