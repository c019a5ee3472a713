"""Electrical models of the 5T-2MTJ cell.

Cell topology used throughout: MTJ2 sits between SBL and the divider node,
MTJ1 between the node and SBLB, and the node drives the gate of the
matchline discharge transistor.  Searching '1' drives SBL high and SBLB low,
searching '0' does the opposite, searching 'X' grounds both lines.

Ternary values are stored as small integers (0, 1, 2 = X) so whole arrays can
be handled with numpy.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from enum import IntEnum

import numpy as np


class NonConvergence(RuntimeError):
    """Divider fixed-point iteration missed its tolerance."""


class TernaryBit(IntEnum):
    ZERO = 0
    ONE = 1
    X = 2

    @classmethod
    def parse(cls, ch) -> "TernaryBit":
        if isinstance(ch, (int, np.integer)):
            return cls(int(ch))
        s = str(ch).strip().upper()
        if s in ("X", "*", "2"):
            return cls.X
        return cls(int(s))


X = int(TernaryBit.X)


def parse_word(text: str) -> np.ndarray:
    """``"01X1"`` -> int8 array ``[0, 1, 2, 1]``."""
    return np.array([TernaryBit.parse(c) for c in text], dtype=np.int8)


def format_word(word) -> str:
    return "".join("X" if int(b) == X else str(int(b)) for b in word)


def mtj_states(stored):
    """AP flags ``(mtj1_ap, mtj2_ap)`` for stored ternary values.

    '1' -> MTJ1 P, MTJ2 AP; '0' -> MTJ1 AP, MTJ2 P; 'X' -> both AP.
    """
    s = np.asarray(stored)
    return s != 1, s != 0


@dataclass(frozen=True)
class MtjDevice:
    r_lrs: float = 25e3
    tmr0: float = 1.8
    v_half: float = 1.25
    variation_factor: float = 1.0

    def __post_init__(self):
        if self.r_lrs <= 0 or self.tmr0 <= 0 or self.v_half <= 0:
            raise ValueError("r_lrs, tmr0 and v_half must be positive")

    @property
    def r_hrs0(self) -> float:
        return self.r_lrs * (1.0 + self.tmr0) * self.variation_factor

    def with_variation(self, factor: float) -> "MtjDevice":
        return replace(self, variation_factor=factor)


def r_ap(r_lrs, tmr0, v_half, bias):
    """AP resistance with quadratic half-bias TMR roll-off.

    ``v_half = inf`` disables the roll-off.
    """
    b = np.abs(bias) / v_half
    return r_lrs * (1.0 + tmr0 / (1.0 + b * b))


def mtj_resistance(device: MtjDevice, state: str, bias: float) -> float:
    """Resistance of ``device`` in ``state`` ('P' or 'AP') at ``bias`` volts."""
    if bias < 0:
        raise ValueError("bias is a magnitude and must be >= 0")
    r = device.r_lrs * device.variation_factor
    if str(state).upper() == "P":
        return r
    if str(state).upper() != "AP":
        raise ValueError(f"unknown MTJ state {state!r}")
    return float(r_ap(r, device.tmr0, device.v_half, bias))


def solve_divider(v_sbl, v_sblb, ap1, ap2, f1, f2, r_lrs, tmr0, v_half,
                  tol=1e-9, max_iter=100, damping=0.7):
    """Vectorized divider fixed point.

    Returns ``(v_node, r1, r2)`` with resistances evaluated at the returned
    node voltage.  All inputs broadcast.
    """
    v_sbl = np.asarray(v_sbl, dtype=float)
    v_sblb = np.asarray(v_sblb, dtype=float)
    base1 = r_lrs * np.asarray(f1, dtype=float)
    base2 = r_lrs * np.asarray(f2, dtype=float)

    def resist(v):
        r1 = np.where(ap1, r_ap(base1, tmr0, v_half, v - v_sblb), base1)
        r2 = np.where(ap2, r_ap(base2, tmr0, v_half, v_sbl - v), base2)
        return r1, r2

    def g(v):
        r1, r2 = resist(v)
        return v_sblb + (v_sbl - v_sblb) * r1 / (r1 + r2)

    v = 0.5 * (v_sbl + v_sblb)
    v = np.broadcast_to(v, np.broadcast_shapes(v.shape, np.shape(ap1), np.shape(ap2),
                                               np.shape(base1), np.shape(base2))).copy()
    for _ in range(max_iter):
        nv = (1.0 - damping) * v + damping * g(v)
        step = np.max(np.abs(nv - v)) if nv.size else 0.0
        v = nv
        if step < tol * 0.1:
            break
    res = np.max(np.abs(g(v) - v)) if v.size else 0.0
    if not res < tol:
        raise NonConvergence(f"divider residual {res:.3e} V after {max_iter} iterations")
    r1, r2 = resist(v)
    return v, r1, r2


@dataclass(frozen=True)
class SearchBias:
    v_s: float
    v_sbl: float
    v_sblb: float

    def __post_init__(self):
        for v in (self.v_sbl, self.v_sblb):
            if v < -1e-12 or v > self.v_s + 1e-12:
                raise ValueError("line voltages must lie in [0, v_s]")

    @classmethod
    def ideal(cls, v_s: float, search) -> "SearchBias":
        s = TernaryBit.parse(search)
        if s == TernaryBit.ONE:
            return cls(v_s, v_s, 0.0)
        if s == TernaryBit.ZERO:
            return cls(v_s, 0.0, v_s)
        return cls(v_s, 0.0, 0.0)


def divider_vsot(stored, search, bias: SearchBias, mtj1: MtjDevice,
                 mtj2: MtjDevice, tol: float = 1e-9, max_iter: int = 100) -> float:
    """Gate voltage of the discharge transistor for one cell."""
    if TernaryBit.parse(search) == TernaryBit.X:
        return 0.0
    ap1, ap2 = mtj_states(int(TernaryBit.parse(stored)))
    if mtj1.tmr0 != mtj2.tmr0 or mtj1.v_half != mtj2.v_half:
        # per-device TMR parameters: fold into a generic scalar iteration
        return _divider_generic(ap1, ap2, bias, mtj1, mtj2, tol, max_iter)
    f2 = mtj2.variation_factor * mtj2.r_lrs / mtj1.r_lrs
    v, _, _ = solve_divider(bias.v_sbl, bias.v_sblb, ap1, ap2, mtj1.variation_factor, f2,
                            mtj1.r_lrs, mtj1.tmr0, mtj1.v_half, tol, max_iter)
    return float(v)


def _divider_generic(ap1, ap2, bias, mtj1, mtj2, tol, max_iter):
    v = 0.5 * (bias.v_sbl + bias.v_sblb)
    for _ in range(max_iter):
        r1 = mtj_resistance(mtj1, "AP" if ap1 else "P", abs(v - bias.v_sblb))
        r2 = mtj_resistance(mtj2, "AP" if ap2 else "P", abs(bias.v_sbl - v))
        nv = bias.v_sblb + (bias.v_sbl - bias.v_sblb) * r1 / (r1 + r2)
        if abs(nv - v) < 0.1 * tol:
            return nv
        v = 0.3 * v + 0.7 * nv
    raise NonConvergence("divider did not converge")


@dataclass(frozen=True)
class TransistorModel:
    """Two-branch discharge transistor.

    Above threshold ``I = I_vt * (1 + c*(Vgs - vt))**alpha`` with ``c`` chosen so
    value and slope join the subthreshold branch ``I_vt * 10**((Vgs - vt)/ss)``
    at ``Vgs = vt``.  ``i_on_per_fin`` is the current at overdrive ``v_ref``.
    Drain dependence is ``1 - exp(-Vds/v_dsat)``.
    """
    vt: float = 0.64
    i_on_per_fin: float = 20e-6
    n_fins: int = 1
    ss: float = 0.0675
    alpha: float = 1.3
    v_ref: float = 0.4
    v_dsat: float = 0.1

    @property
    def c_sat(self) -> float:
        return math.log(10.0) / (self.alpha * self.ss)

    @property
    def i_vt(self) -> float:
        """Drain current at ``Vgs = vt`` (saturated Vds), all fins."""
        return self.n_fins * self.i_on_per_fin / (1.0 + self.c_sat * self.v_ref) ** self.alpha

    def kernel_args(self):
        """Positional tail ``(i_vt, c_sat, alpha_p, ss, v_dsat)`` of the kernels."""
        return self.i_vt, self.c_sat, self.alpha, self.ss, self.v_dsat


def transistor_current(model: TransistorModel, vgs, vds, vt=None):
    """Drain current; ``vt`` overrides ``model.vt`` (e.g. with a variation offset)."""
    vt = model.vt if vt is None else vt
    ov = np.asarray(vgs, dtype=float) - vt
    iv = model.i_vt
    sub = iv * np.power(10.0, np.minimum(ov, 0.0) / model.ss)
    sup = iv * np.power(1.0 + model.c_sat * np.maximum(ov, 0.0), model.alpha)
    vds = np.asarray(vds, dtype=float)
    out = np.where(ov < 0.0, sub, sup) * np.where(vds > 0, 1.0 - np.exp(-np.maximum(vds, 0) / model.v_dsat), 0.0)
    return out if out.ndim else float(out)


def sample_cell_variation(seed, sigma_r: float, sigma_vt: float, size=None):
    """Draw ``(variation_factor, vt_delta)``; pass sigma, not 3 sigma.

    ``seed`` may be an int, a SeedSequence or a Generator.
    """
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    f = 1.0 + sigma_r * rng.standard_normal(size)
    dvt = sigma_vt * rng.standard_normal(size)
    if size is None:
        return float(f), float(dvt)
    return f, dvt


def sample_array_variation(rng: np.random.Generator, shape, sigma_r: float, sigma_vt: float):
    """Per-cell factors for both MTJs ``(2, *shape)`` and vt offsets ``shape``."""
    f = 1.0 + sigma_r * rng.standard_normal((2, *shape))
    dvt = sigma_vt * rng.standard_normal(shape)
    return f, dvt
