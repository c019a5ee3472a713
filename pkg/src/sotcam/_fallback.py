"""Pure numpy versions of the compiled kernels.

Rows (matchline) and trials (LLG) are vectorized; each row keeps its own
adaptive step so results match the compiled loop to rounding.
"""
import numpy as np


def fet_current(vgs, vt, vds, i_vt, c_sat, alpha_p, ss, v_dsat):
    ov = np.asarray(vgs, dtype=float) - vt
    sub = i_vt * np.power(10.0, np.minimum(ov, 0.0) / ss)
    sup = i_vt * np.power(1.0 + c_sat * np.maximum(ov, 0.0), alpha_p)
    h = np.where(ov < 0.0, sub, sup)
    vds = np.asarray(vds, dtype=float)
    return np.where(vds <= 0.0, 0.0, h * (1.0 - np.exp(-vds / v_dsat)))


def _ml_rhs(t, v, vsot, vt, tau, c_ml, i_vt, c_sat, alpha_p, ss, v_dsat):
    g = np.where(tau > 0.0, 1.0 - np.exp(-t / np.where(tau > 0.0, tau, 1.0)), 1.0)
    cur = fet_current(vsot * g[:, None], vt, v[:, None], i_vt, c_sat, alpha_p, ss, v_dsat)
    return -cur.sum(axis=1) / c_ml


def _hermite(s, h, y0, f0, y1, f1):
    s2 = s * s
    s3 = s2 * s
    return ((2*s3 - 3*s2 + 1) * y0 + (s3 - 2*s2 + s) * h * f0
            + (-2*s3 + 3*s2) * y1 + (s3 - s2) * h * f1)


def ml_discharge(vsot, vt, tau, c_ml, v_dd, v_trip, t_max, i_vt, c_sat,
                 alpha_p, ss, v_dsat, atol, dt0, dt_max):
    vsot = np.ascontiguousarray(vsot, dtype=float)
    vt = np.ascontiguousarray(vt, dtype=float)
    tau = np.ascontiguousarray(tau, dtype=float)
    n = vsot.shape[0]
    out = np.full(n, np.inf)
    t = np.zeros(n)
    v = np.full(n, float(v_dd))
    dt = np.full(n, float(dt0))
    args = (c_ml, i_vt, c_sat, alpha_p, ss, v_dsat)
    f0 = _ml_rhs(t, v, vsot, vt, tau, *args)
    live = np.arange(n)
    while live.size:
        tl, vl, dl, f0l = t[live], v[live], dt[live], f0[live]
        dl = np.minimum(dl, t_max - tl)
        vs_l, vt_l, tau_l = vsot[live], vt[live], tau[live]
        vp = vl + dl * f0l
        f1 = _ml_rhs(tl + dl, vp, vs_l, vt_l, tau_l, *args)
        vn = vl + 0.5 * dl * (f0l + f1)
        err = 0.5 * dl * np.abs(f1 - f0l)
        reject = (err > atol) & (dl > 1e-16)
        # rejected rows shrink their step and retry
        shrink = dl * np.maximum(0.2, 0.9 * np.sqrt(atol / np.where(reject, err, 1.0)))
        acc = ~reject
        fn = np.zeros_like(vn)
        if acc.any():
            fn[acc] = _ml_rhs(tl[acc] + dl[acc], vn[acc], vs_l[acc], vt_l[acc], tau_l[acc], *args)
        tripped = acc & (vn <= v_trip)
        if tripped.any():
            lo = np.zeros(tripped.sum())
            hi = np.ones_like(lo)
            y0, yf0, y1, yf1, h = vl[tripped], f0l[tripped], vn[tripped], fn[tripped], dl[tripped]
            for _ in range(60):
                mid = 0.5 * (lo + hi)
                ym = _hermite(mid, h, y0, yf0, y1, yf1)
                above = ym > v_trip
                lo = np.where(above, mid, lo)
                hi = np.where(above, hi, mid)
            out[live[tripped]] = tl[tripped] + 0.5 * (lo + hi) * h
        cont = acc & ~tripped
        grow = np.where(err > 0.0, np.minimum(2.0, 0.9 * np.sqrt(atol / np.where(err > 0.0, err, 1.0))), 2.0)
        new_t = tl + dl
        new_dt = np.minimum(dl * grow, dt_max)
        idx_c = live[cont]
        t[idx_c] = new_t[cont]
        v[idx_c] = vn[cont]
        f0[idx_c] = fn[cont]
        dt[idx_c] = new_dt[cont]
        dt[live[reject]] = shrink[reject]
        finished = tripped | (cont & (new_t >= t_max))
        live = live[~finished]
    return out


def llg_rhs(m, h, hk, a, p, alpha, c):
    """Right-hand side of the LLG-Slonczewski equation for a batch ``m`` (n, 3)."""
    heff = h.copy()
    heff[:, 2] += hk * m[:, 2]
    mxh = np.cross(m, heff)
    mxmxh = np.cross(m, mxh)
    mxp = np.cross(m, p)
    mxmxp = np.cross(m, mxp)
    return -c * (mxh + alpha * mxmxh + a * mxmxp - alpha * a * mxp)


def heun_step(m, h, hk, a, p, alpha, c, dt):
    k1 = llg_rhs(m, h, hk, a, p, alpha, c)
    q = m + dt * k1
    q /= np.sqrt((q * q).sum(axis=1))[:, None]
    k2 = llg_rhs(q, h, hk, a, p, alpha, c)
    nm = m + 0.5 * dt * (k1 + k2)
    nm /= np.sqrt((nm * nm).sum(axis=1))[:, None]
    return nm


def llg_run(m0, noise, n_sot, hk, a_sot, p_sot, a_stt, p_stt, alpha, gp, dt,
            checks, stop_mz):
    m = np.array(m0, dtype=float)
    n, nsteps = noise.shape[0], noise.shape[1]
    checks = np.asarray(checks, dtype=np.int64)
    c = gp / (1.0 + alpha * alpha)
    target = 1.0 if p_stt[2] >= 0.0 else -1.0
    p_sot = np.asarray(p_sot, dtype=float)
    p_stt = np.asarray(p_stt, dtype=float)
    mz_chk = np.full((n, checks.size), np.nan)
    status = np.zeros(n, dtype=np.int64)
    active = np.ones(n, dtype=bool)
    ci = 0
    for k in range(nsteps):
        idx = np.flatnonzero(active)
        if idx.size == 0:
            break
        a, p = (a_sot, p_sot) if k < n_sot else (a_stt, p_stt)
        cur = m[idx]
        nm = heun_step(cur, noise[idx, k], hk, a, p, alpha, c, dt)
        bad = ((nm - cur) ** 2).sum(axis=1) > 0.25
        status[idx[bad]] = 1
        active[idx[bad]] = False
        good = idx[~bad]
        m[good] = nm[~bad]
        while ci < checks.size and checks[ci] == k + 1:
            mz_chk[active, ci] = m[active, 2]
            ci += 1
        if stop_mz > 0.0 and k >= n_sot:
            active[good[m[good, 2] * target > stop_mz]] = False
    # stopped or unstable trials carry their last state into later checkpoints
    mz_chk = np.where(np.isnan(mz_chk), m[:, 2:3], mz_chk)
    return m, mz_chk, status
