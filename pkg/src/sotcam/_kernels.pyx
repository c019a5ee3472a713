# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled inner loops: matchline discharge integration and stochastic LLG.

Both functions mirror :mod:`sotcam._fallback` operation for operation so the
two backends agree to rounding.
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport exp, pow, sqrt, fabs, INFINITY

cnp.import_array()


cdef inline double _fet(double vgs, double vt, double vds, double i_vt,
                        double c_sat, double alpha_p, double ss,
                        double v_dsat) noexcept nogil:
    cdef double ov = vgs - vt
    cdef double h
    if vds <= 0.0:
        return 0.0
    if ov < 0.0:
        h = i_vt * pow(10.0, ov / ss)
    else:
        h = i_vt * pow(1.0 + c_sat * ov, alpha_p)
    return h * (1.0 - exp(-vds / v_dsat))


cdef inline double _ml_rhs(double t, double v, const double[::1] vsot,
                           const double[::1] vt, double tau, double c_ml,
                           double i_vt, double c_sat, double alpha_p,
                           double ss, double v_dsat) noexcept nogil:
    cdef double g = 1.0
    cdef double total = 0.0
    cdef Py_ssize_t j
    if tau > 0.0:
        g = 1.0 - exp(-t / tau)
    for j in range(vsot.shape[0]):
        total += _fet(vsot[j] * g, vt[j], v, i_vt, c_sat, alpha_p, ss, v_dsat)
    return -total / c_ml


cdef double _hermite(double s, double h, double y0, double f0, double y1,
                     double f1) noexcept nogil:
    cdef double s2 = s * s
    cdef double s3 = s2 * s
    return ((2*s3 - 3*s2 + 1) * y0 + (s3 - 2*s2 + s) * h * f0
            + (-2*s3 + 3*s2) * y1 + (s3 - s2) * h * f1)


cdef double _row_delay(const double[::1] vsot, const double[::1] vt,
                       double tau, double c_ml, double v_dd, double v_trip,
                       double t_max, double i_vt, double c_sat,
                       double alpha_p, double ss, double v_dsat, double atol,
                       double dt0, double dt_max) noexcept nogil:
    cdef double t = 0.0, v = v_dd, dt = dt0
    cdef double f0, f1, fn, vp, vn, err, lo, hi, mid, ym
    cdef int k
    f0 = _ml_rhs(t, v, vsot, vt, tau, c_ml, i_vt, c_sat, alpha_p, ss, v_dsat)
    while t < t_max:
        if dt > t_max - t:
            dt = t_max - t
        vp = v + dt * f0
        f1 = _ml_rhs(t + dt, vp, vsot, vt, tau, c_ml, i_vt, c_sat, alpha_p, ss, v_dsat)
        vn = v + 0.5 * dt * (f0 + f1)
        err = 0.5 * dt * fabs(f1 - f0)
        if err > atol and dt > 1e-16:
            dt = dt * max(0.2, 0.9 * sqrt(atol / err))
            continue
        fn = _ml_rhs(t + dt, vn, vsot, vt, tau, c_ml, i_vt, c_sat, alpha_p, ss, v_dsat)
        if vn <= v_trip:
            lo = 0.0
            hi = 1.0
            for k in range(60):
                mid = 0.5 * (lo + hi)
                ym = _hermite(mid, dt, v, f0, vn, fn)
                if ym > v_trip:
                    lo = mid
                else:
                    hi = mid
            return t + 0.5 * (lo + hi) * dt
        t = t + dt
        v = vn
        f0 = fn
        if err > 0.0:
            dt = dt * min(2.0, 0.9 * sqrt(atol / err))
        else:
            dt = dt * 2.0
        if dt > dt_max:
            dt = dt_max
    return INFINITY


def ml_discharge(const double[:, ::1] vsot, const double[:, ::1] vt,
                 const double[::1] tau, double c_ml, double v_dd,
                 double v_trip, double t_max, double i_vt, double c_sat,
                 double alpha_p, double ss, double v_dsat, double atol,
                 double dt0, double dt_max):
    cdef Py_ssize_t n = vsot.shape[0], r
    out = np.empty(n, dtype=np.float64)
    cdef double[::1] o = out
    with nogil:
        for r in range(n):
            o[r] = _row_delay(vsot[r], vt[r], tau[r], c_ml, v_dd, v_trip,
                              t_max, i_vt, c_sat, alpha_p, ss, v_dsat, atol,
                              dt0, dt_max)
    return out


cdef inline void _llg_rhs(double mx, double my, double mz, double hx,
                          double hy, double hz, double hk, double a,
                          double px, double py, double pz, double alpha,
                          double c, double* out) noexcept nogil:
    cdef double Hx = hx, Hy = hy, Hz = hz + hk * mz
    cdef double ax = my*Hz - mz*Hy, ay = mz*Hx - mx*Hz, az = mx*Hy - my*Hx
    cdef double bx = my*az - mz*ay, by = mz*ax - mx*az, bz = mx*ay - my*ax
    cdef double qx = my*pz - mz*py, qy = mz*px - mx*pz, qz = mx*py - my*px
    cdef double rx = my*qz - mz*qy, ry = mz*qx - mx*qz, rz = mx*qy - my*qx
    out[0] = -c * (ax + alpha*bx + a*rx - alpha*a*qx)
    out[1] = -c * (ay + alpha*by + a*ry - alpha*a*qy)
    out[2] = -c * (az + alpha*bz + a*rz - alpha*a*qz)


def llg_run(const double[:, ::1] m0, const double[:, :, ::1] noise,
            Py_ssize_t n_sot, double hk, double a_sot, const double[::1] p_sot,
            double a_stt, const double[::1] p_stt, double alpha, double gp,
            double dt, const long[::1] checks, double stop_mz):
    """Integrate ``n`` independent macrospins; see ``_fallback.llg_run``."""
    cdef Py_ssize_t n = m0.shape[0], nsteps = noise.shape[1]
    cdef Py_ssize_t nc = checks.shape[0]
    m_out = np.empty((n, 3), dtype=np.float64)
    mz_chk = np.empty((n, nc), dtype=np.float64)
    status = np.zeros(n, dtype=np.int64)
    cdef double[:, ::1] mo = m_out
    cdef double[:, ::1] mc = mz_chk
    cdef long[::1] st = status
    cdef double c = gp / (1.0 + alpha * alpha)
    cdef double k1[3]
    cdef double k2[3]
    cdef double mx, my, mz, qx, qy, qz, nx, ny, nz, nrm, a, px, py, pz
    cdef double hx, hy, hz, target
    cdef Py_ssize_t i, k, ci, j
    target = 1.0 if p_stt[2] >= 0.0 else -1.0
    with nogil:
        for i in range(n):
            mx = m0[i, 0]; my = m0[i, 1]; mz = m0[i, 2]
            ci = 0
            for k in range(nsteps):
                hx = noise[i, k, 0]; hy = noise[i, k, 1]; hz = noise[i, k, 2]
                if k < n_sot:
                    a = a_sot; px = p_sot[0]; py = p_sot[1]; pz = p_sot[2]
                else:
                    a = a_stt; px = p_stt[0]; py = p_stt[1]; pz = p_stt[2]
                _llg_rhs(mx, my, mz, hx, hy, hz, hk, a, px, py, pz, alpha, c, k1)
                qx = mx + dt*k1[0]; qy = my + dt*k1[1]; qz = mz + dt*k1[2]
                nrm = sqrt(qx*qx + qy*qy + qz*qz)
                qx = qx / nrm; qy = qy / nrm; qz = qz / nrm
                _llg_rhs(qx, qy, qz, hx, hy, hz, hk, a, px, py, pz, alpha, c, k2)
                nx = mx + 0.5*dt*(k1[0] + k2[0])
                ny = my + 0.5*dt*(k1[1] + k2[1])
                nz = mz + 0.5*dt*(k1[2] + k2[2])
                nrm = sqrt(nx*nx + ny*ny + nz*nz)
                nx = nx / nrm; ny = ny / nrm; nz = nz / nrm
                if (nx-mx)*(nx-mx) + (ny-my)*(ny-my) + (nz-mz)*(nz-mz) > 0.25:
                    st[i] = 1
                    break
                mx = nx; my = ny; mz = nz
                while ci < nc and checks[ci] == k + 1:
                    mc[i, ci] = mz
                    ci += 1
                if stop_mz > 0.0 and k >= n_sot and mz * target > stop_mz:
                    break
            while ci < nc:
                mc[i, ci] = mz
                ci += 1
            mo[i, 0] = mx; mo[i, 1] = my; mo[i, 2] = mz
    return m_out, mz_chk, status
