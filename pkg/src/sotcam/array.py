"""Array-level search timing and energy.

Each column carries an SBL/SBLB pair fed from one end by drivers of
resistance ``r_driver`` with ``r_seg_sbl`` of wire per row.  Every binary or
X cell loads the pair with the series resistance of its two MTJs.  Because
the two lines are mirror images (one driven to ``v_s``, the other to 0), the
network is antisymmetric about ``v_s/2`` and reduces exactly to a single
ladder whose row shunts are ``R_cell/2`` to ``v_s/2``; that ladder is solved
by tridiagonal elimination.  Row 0 is nearest to the drivers.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Dict, Optional, Sequence

import numpy as np
from scipy.optimize import least_squares

from . import kernels
from .device import X, TransistorModel, mtj_states, solve_divider


class SingularNetwork(ValueError):
    """A ladder shunt resistance is not positive."""


class FitDiverged(RuntimeError):
    """Calibration left a residual above the allowed bound."""


@dataclass(frozen=True)
class CellPreset:
    """Per-design cell parameters.

    ``divider`` presets derive the gate voltage from the MTJ pair; ``direct``
    presets drive the gate with ``v_gate +/- vt_window/2`` (mismatch / other)
    and 0 for a masked query bit.  ``v_gate = None`` means the search voltage.
    ``t_sense`` is a fixed launch/sensing latency added to every finite trip
    time; ``fit`` names the parameters :func:`calibrate` adjusts.
    """
    name: str
    gate_mode: str = "divider"
    lrs: float = 25e3
    tmr0: float = 1.8
    v_half: float = 1.25
    tau_cell: float = 1e-9
    i_on_per_fin: float = 20e-6
    v_gate: Optional[float] = None
    vt_window: float = 0.0
    c_gate: float = 0.0
    area_um2: float = 0.0
    t_sense: float = 0.0
    fit: tuple = ("i_on_per_fin",)

    def __post_init__(self):
        if self.gate_mode not in ("divider", "direct"):
            raise ValueError(f"gate_mode must be divider or direct, got {self.gate_mode!r}")
        if self.lrs <= 0 or self.tau_cell < 0 or self.i_on_per_fin <= 0:
            raise ValueError(f"invalid preset {self.name}")


# 5 nm ferroelectric, relative permittivity 35, over the 0.044 um^2 cell
_FE_C_GATE = 8.8541878128e-12 * 35 * 0.044e-12 / 5e-9

# i_on_per_fin, t_sense and tau_cell values are the output of ``calibrate``
# against TABLE_TARGETS with the default ArrayConfig
PRESETS: Dict[str, CellPreset] = {
    "SOT5T": CellPreset("SOT5T", "divider", lrs=25e3, tau_cell=0.2e-12, i_on_per_fin=592.4e-6,
                        c_gate=0.1e-15, area_um2=0.076, t_sense=5.664e-9,
                        fit=("i_on_per_fin", "t_sense")),
    "SOT3T": CellPreset("SOT3T", "divider", lrs=1e6, tau_cell=1.784e-9, i_on_per_fin=8.718e-3,
                        c_gate=0.1e-15, area_um2=0.058, fit=("i_on_per_fin", "tau_cell")),
    "SRAM": CellPreset("SRAM", "direct", tau_cell=20e-12, i_on_per_fin=4.172e-6,
                       c_gate=0.1e-15, area_um2=0.109),
    "FEFET": CellPreset("FEFET", "direct", v_gate=0.6, vt_window=0.46, tau_cell=1.5e-9,
                        i_on_per_fin=4.172e-6, c_gate=_FE_C_GATE, area_um2=0.044),
}


@dataclass(frozen=True)
class ArrayConfig:
    rows: int = 64
    cols: int = 128
    r_driver: float = 100.0
    r_seg_sbl: float = 0.7
    c_ml: float = 20e-15
    v_dd: float = 0.7
    v_s: float = 0.8
    v_trip: float = 0.35
    cell_preset: str = "SOT5T"
    transistor: TransistorModel = field(default_factory=TransistorModel)
    presets: Dict[str, CellPreset] = field(default_factory=lambda: dict(PRESETS))
    t_window: float = 50e-9
    atol: float = 1e-4
    dt0: float = 1e-14
    dt_max: float = 0.5e-9
    couple_tol: float = 1e-7
    allow_large: bool = False

    def __post_init__(self):
        if self.rows > 64 and not self.allow_large:
            raise ValueError("rows > 64 requires allow_large=True")
        if self.rows < 1 or self.cols < 1:
            raise ValueError("rows and cols must be positive")
        if min(self.r_driver, self.r_seg_sbl) < 0 or self.c_ml <= 0:
            raise ValueError("resistances must be >= 0 and c_ml > 0")
        if not 0 < self.v_trip < self.v_dd:
            raise ValueError("need 0 < v_trip < v_dd")
        if self.cell_preset not in self.presets:
            raise KeyError(f"unknown preset {self.cell_preset!r}")

    @property
    def preset(self) -> CellPreset:
        return self.presets[self.cell_preset]

    @property
    def tau_cell(self) -> float:
        return self.preset.tau_cell

    @property
    def cell_transistor(self) -> TransistorModel:
        return replace(self.transistor, i_on_per_fin=self.preset.i_on_per_fin)

    def with_preset(self, name: str, **kw) -> "ArrayConfig":
        return replace(self, cell_preset=name, **kw)

    def with_preset_params(self, name: str, **kw) -> "ArrayConfig":
        presets = dict(self.presets)
        presets[name] = replace(presets[name], **kw)
        return replace(self, presets=presets)


@dataclass
class SearchScenario:
    """Stored matrix, query and (optional) per-cell variation for one array.

    ``r_factor`` has shape ``(2, rows, cols)`` (MTJ1, MTJ2) and ``vt_delta``
    ``(rows, cols)``.
    """
    stored: np.ndarray
    query: np.ndarray
    row_position: Optional[int] = None
    r_factor: Optional[np.ndarray] = None
    vt_delta: Optional[np.ndarray] = None

    def __post_init__(self):
        self.stored = np.asarray(self.stored, dtype=np.int8)
        self.query = np.asarray(self.query, dtype=np.int8)
        if self.stored.ndim != 2 or self.query.shape != (self.stored.shape[1],):
            raise ValueError("query length must equal the number of columns")


# ---------------------------------------------------------------- ladder

def _thomas(lower, diag, upper, rhs):
    """Tridiagonal solve along the last axis (batched)."""
    n = diag.shape[-1]
    cp = np.empty_like(diag)
    dp = np.empty_like(diag)
    cp[..., 0] = upper[..., 0] / diag[..., 0]
    dp[..., 0] = rhs[..., 0] / diag[..., 0]
    for i in range(1, n):
        m = diag[..., i] - lower[..., i] * cp[..., i - 1]
        cp[..., i] = upper[..., i] / m
        dp[..., i] = (rhs[..., i] - lower[..., i] * dp[..., i - 1]) / m
    x = np.empty_like(diag)
    x[..., -1] = dp[..., -1]
    for i in range(n - 2, -1, -1):
        x[..., i] = dp[..., i] - cp[..., i] * x[..., i + 1]
    return x


_R_MIN = 1e-9


def ladder_node_voltages(v_s: float, loads, r_driver: float, r_seg: float):
    """Voltages of the high line for per-row cell loads (last axis = rows)."""
    loads = np.asarray(loads, dtype=float)
    if np.any(loads <= 0) or np.any(~np.isfinite(loads)):
        raise SingularNetwork("cell load resistances must be finite and > 0")
    gd = 1.0 / max(r_driver, _R_MIN)
    gs = 1.0 / max(r_seg, _R_MIN)
    gsh = 2.0 / loads
    n = loads.shape[-1]
    left = np.full(n, gs)
    left[0] = gd
    right = np.full(n, gs)
    right[-1] = 0.0
    diag = left + right + gsh
    lower = np.broadcast_to(-np.where(np.arange(n) > 0, left, 0.0), diag.shape)
    upper = np.broadcast_to(-right, diag.shape)
    rhs = gsh * (0.5 * v_s)
    rhs[..., 0] += gd * v_s
    return _thomas(lower, diag, upper, rhs)


def solve_sbl_ladder(config: ArrayConfig, loads, v_s: Optional[float] = None):
    """Per-row ``(v_sbl, v_sblb)`` seen by a column searching '1'.

    ``loads`` are the per-row series MTJ resistances of the column.  For a
    column searching '0' swap the roles of the two lines.
    """
    v_s = config.v_s if v_s is None else v_s
    u = ladder_node_voltages(v_s, loads, config.r_driver, config.r_seg_sbl)
    return u, v_s - u


def driver_current(config: ArrayConfig, u0, v_s: Optional[float] = None):
    v_s = config.v_s if v_s is None else v_s
    if config.r_driver <= _R_MIN:
        raise ValueError("driver current needs r_driver > 0")
    return (v_s - u0) / config.r_driver


# ---------------------------------------------------------------- gate voltages

def _line_voltages(config: ArrayConfig, stored, query, r_factor=None, max_couple=20):
    """Solve the coupled ladder / divider problem for a batch of arrays.

    ``stored`` is ``(..., rows, cols)``; returns ``(v_node, drop, loads)`` each
    of that shape, where ``drop`` is the IR drop on the high line.
    """
    p = config.preset
    v_s = config.v_s
    q = np.asarray(query)
    s1 = q == 1
    s0 = q == 0
    active = s1 | s0
    ap1, ap2 = mtj_states(stored)
    if r_factor is None:
        f1 = f2 = 1.0
    else:
        f1, f2 = r_factor[..., 0, :, :], r_factor[..., 1, :, :]
    d = np.zeros(np.shape(stored), dtype=float)
    for _ in range(max_couple):
        hi = np.where(active, v_s - d, 0.0)
        lo = np.where(active, d, 0.0)
        v_sbl = np.where(s1, hi, lo)
        v_sblb = np.where(s1, lo, hi)
        v, r1, r2 = solve_divider(v_sbl, v_sblb, ap1, ap2, f1, f2, p.lrs, p.tmr0, p.v_half)
        loads = r1 + r2
        u = ladder_node_voltages(v_s, np.swapaxes(loads, -1, -2), config.r_driver,
                                 config.r_seg_sbl)
        nd = np.where(active, v_s - np.swapaxes(u, -1, -2), 0.0)
        step = np.max(np.abs(nd - d))
        d = nd
        if step < config.couple_tol:
            break
    hi = np.where(active, v_s - d, 0.0)
    lo = np.where(active, d, 0.0)
    v, r1, r2 = solve_divider(np.where(s1, hi, lo), np.where(s1, lo, hi), ap1, ap2, f1, f2,
                              p.lrs, p.tmr0, p.v_half)
    return v, d, r1 + r2


def gate_voltages(config: ArrayConfig, stored, query, r_factor=None):
    """Discharge-transistor gate voltage for every cell, ``(..., rows, cols)``."""
    p = config.preset
    stored = np.asarray(stored)
    q = np.asarray(query)
    if p.gate_mode == "divider":
        return _line_voltages(config, stored, q, r_factor)[0]
    v_g = config.v_s if p.v_gate is None else p.v_gate
    mism = (stored != X) & (q != X) & (stored != q)
    on = v_g + 0.5 * p.vt_window
    off = v_g - 0.5 * p.vt_window if p.vt_window > 0 else 0.0
    out = np.where(mism, on, off)
    return np.where(q == X, 0.0, out) * np.ones(stored.shape)


def _delays(config: ArrayConfig, vsot, vt, backend=None):
    """Discharge delay for each row of ``vsot`` ``(n, cols)``."""
    k = kernels if backend is None else kernels.get(backend)
    tr = config.cell_transistor
    vsot = np.ascontiguousarray(vsot, dtype=float).reshape(-1, vsot.shape[-1])
    vt = np.ascontiguousarray(np.broadcast_to(vt, vsot.shape), dtype=float)
    tau = np.full(vsot.shape[0], float(config.tau_cell))
    t0 = config.preset.t_sense
    d = k.ml_discharge(vsot, vt, tau, config.c_ml, config.v_dd, config.v_trip,
                       config.t_window - t0, *tr.kernel_args(), config.atol,
                       config.dt0, config.dt_max)
    return d + t0


def ml_discharge_delay(scenario: SearchScenario, config: ArrayConfig, backend=None):
    """Trip time of every row (or of ``scenario.row_position`` if given).

    Rows that do not trip inside ``config.t_window`` return ``inf``.
    """
    vsot = gate_voltages(config, scenario.stored, scenario.query, scenario.r_factor)
    vt = config.transistor.vt
    if scenario.vt_delta is not None:
        vt = vt + scenario.vt_delta
    vt = np.broadcast_to(vt, vsot.shape)
    if scenario.row_position is not None:
        r = scenario.row_position
        return float(_delays(config, vsot[r:r + 1], vt[r:r + 1], backend)[0])
    return _delays(config, vsot, vt, backend)


def search_array(stored, query, config: ArrayConfig, threshold_time: float,
                 r_factor=None, vt_delta=None) -> np.ndarray:
    """Latched outputs: True where the row has not tripped by ``threshold_time``."""
    if threshold_time <= 0:
        return np.ones(np.shape(stored)[0], dtype=bool)
    d = ml_discharge_delay(SearchScenario(stored, query, None, r_factor, vt_delta), config)
    return d > threshold_time


# ---------------------------------------------------------------- scenarios

def scenario_row(cols: int, hdist: int, x_count: int = 0, query=None) -> np.ndarray:
    """Stored word with ``hdist`` mismatching bits then ``x_count`` X bits."""
    if hdist + x_count > cols:
        raise ValueError("hdist + x_count exceeds the word length")
    q = np.ones(cols, dtype=np.int8) if query is None else np.asarray(query, dtype=np.int8)
    row = q.copy()
    row[:hdist] = 1 - q[:hdist]
    row[hdist:hdist + x_count] = X
    return row


def scenario_batch(config: ArrayConfig, rows_at: Sequence[int], hdist: int, x_count: int = 0):
    """Stored arrays ``(n, rows, cols)``: background matches the all-'1' query,
    array ``i`` carries the scenario word at row ``rows_at[i]``."""
    q = np.ones(config.cols, dtype=np.int8)
    rows_at = np.asarray(rows_at, dtype=int)
    stored = np.broadcast_to(q, (rows_at.size, config.rows, config.cols)).copy()
    stored[np.arange(rows_at.size), rows_at] = scenario_row(config.cols, hdist, x_count, q)
    return stored, q


def scenario_delays(config: ArrayConfig, rows_at, hdist: int, x_count: int = 0,
                    r_factor=None, vt_delta=None, chunk: int = 64, backend=None):
    """Delay of the scenario row for a batch of arrays (one row each).

    ``r_factor`` ``(n, 2, rows, cols)`` and ``vt_delta`` ``(n, rows, cols)`` are
    per-array variation samples; ``None`` means nominal.
    """
    rows_at = np.asarray(rows_at, dtype=int)
    n = rows_at.size
    out = np.empty(n)
    vt0 = config.transistor.vt
    for a in range(0, n, chunk):
        sl = slice(a, min(n, a + chunk))
        stored, q = scenario_batch(config, rows_at[sl], hdist, x_count)
        rf = None if r_factor is None else r_factor[sl]
        vsot = gate_voltages(config, stored, q, rf)
        idx = np.arange(stored.shape[0])
        vrow = vsot[idx, rows_at[sl]]
        vt = vt0 if vt_delta is None else vt0 + vt_delta[sl][idx, rows_at[sl]]
        out[sl] = _delays(config, vrow, np.broadcast_to(vt, vrow.shape), backend)
    return out


def exact_search_delay(config: ArrayConfig, v_s: Optional[float] = None) -> float:
    """Nominal worst-case single-bit-mismatch delay (row farthest from the driver)."""
    cfg = config if v_s is None else replace(config, v_s=v_s)
    return float(scenario_delays(cfg, [cfg.rows - 1], 1)[0])


def nominal_delay_table(config: ArrayConfig, hdists: Sequence[int], positions=None):
    """Nominal delays ``(len(hdists), len(positions))``."""
    positions = np.arange(config.rows) if positions is None else np.asarray(positions)
    return np.array([scenario_delays(config, positions, h) for h in hdists])


# ---------------------------------------------------------------- energy

def precharge_energy(config: ArrayConfig) -> float:
    return config.rows * 0.5 * config.c_ml * config.v_dd ** 2


def search_energy(scenario: SearchScenario, config: ArrayConfig, duration: float) -> float:
    """Energy of one search lasting ``duration`` seconds.

    Divider presets draw ``v_s * I_driver`` per active column for the whole
    duration (covers cell, wire and driver losses); direct presets pay
    ``C_gate * V^2`` per driven gate.  Both add the matchline precharge.
    """
    p = config.preset
    e = precharge_energy(config)
    if duration <= 0:
        return e
    q = np.asarray(scenario.query)
    active = q != X
    if p.gate_mode == "divider":
        _, d, loads = _line_voltages(config, scenario.stored, q, scenario.r_factor)
        u = ladder_node_voltages(config.v_s, loads.T, config.r_driver, config.r_seg_sbl)
        i_col = driver_current(config, u[:, 0])
        e += float(np.sum(np.where(active, config.v_s * i_col, 0.0))) * duration
    else:
        v_g = config.v_s if p.v_gate is None else p.v_gate
        n_gates = int(active.sum()) * config.rows
        e += n_gates * p.c_gate * v_g ** 2
    return e


def exact_search_energy(config: ArrayConfig, duration: Optional[float] = None) -> float:
    duration = exact_search_delay(config) if duration is None else duration
    stored, q = scenario_batch(config, [config.rows - 1], 1)
    return search_energy(SearchScenario(stored[0], q), config, duration)


# ---------------------------------------------------------------- calibration

TABLE_TARGETS = {
    # preset: {v_s: (exact-search delay s, energy J)}
    "SOT5T": {0.8: (12e-9, 433e-12), 1.0: (5.78e-9, 366e-12)},
    "SOT3T": {0.8: (4.7e-9, 9.17e-12), 1.0: (2.83e-9, 13.1e-12)},
    "SRAM": {None: (4.8e-9, 1.15e-12)},
    "FEFET": {None: (7.6e-9, 1.89e-12)},
}


@dataclass
class CalibrationResult:
    config: ArrayConfig
    params: Dict[str, Dict[str, float]]
    residuals: Dict[str, Dict[str, float]]
    energies: Dict[str, Dict[str, float]]


_LOG_PARAMS = ("i_on_per_fin", "tau_cell", "t_sense")


def _fit_preset(config: ArrayConfig, name: str, targets, max_residual: float):
    base = config.presets[name]
    pts = [(vs, t[0]) for vs, t in targets.items()]
    # never fit more parameters than there are targets
    names = [n for n in base.fit if n in _LOG_PARAMS][:len(pts)]
    floor = {"i_on_per_fin": 1e-12, "tau_cell": 1e-13, "t_sense": 1e-13}

    def make(x):
        kw = {n: math.exp(v) for n, v in zip(names, x)}
        return config.with_preset_params(name, **kw).with_preset(name)

    def resid(x):
        cfg = make(x)
        out = []
        for vs, target in pts:
            d = exact_search_delay(cfg, v_s=vs if vs is not None else cfg.v_s)
            out.append(math.log(d / target) if math.isfinite(d) else 5.0)
        return out

    x0 = [math.log(max(getattr(base, n), floor[n])) for n in names]
    sol = least_squares(resid, x0, diff_step=1e-4, xtol=1e-12, ftol=1e-12, gtol=1e-12)
    cfg = make(sol.x)
    res = {str(vs): math.expm1(r) for (vs, _), r in zip(pts, sol.fun)}
    worst = max(abs(v) for v in res.values())
    if not worst <= max_residual:
        raise FitDiverged(f"{name}: delay residual {worst:.1%} exceeds {max_residual:.0%}")
    return cfg.presets[name], res


def calibrate(config: ArrayConfig, targets=None, presets: Optional[Sequence[str]] = None,
              max_residual: float = 0.5) -> CalibrationResult:
    """Fit each preset's ``fit`` parameters to its exact-search delay targets.

    ``targets`` maps preset -> {v_s or None: (delay, energy)}.
    """
    targets = TABLE_TARGETS if targets is None else targets
    names = list(targets) if presets is None else list(presets)
    cfg = config
    params, resid, energies = {}, {}, {}
    for name in names:
        fitted, r = _fit_preset(cfg, name, targets[name], max_residual)
        cfg = replace(cfg, presets={**cfg.presets, name: fitted})
        params[name] = {n: getattr(fitted, n) for n in _LOG_PARAMS}
        resid[name] = r
        energies[name] = {}
        for vs in targets[name]:
            c = cfg.with_preset(name) if vs is None else cfg.with_preset(name, v_s=vs)
            energies[name][str(vs)] = exact_search_energy(c)
    return CalibrationResult(cfg, params, resid, energies)
