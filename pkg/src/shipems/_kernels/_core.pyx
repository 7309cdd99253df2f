# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled kernels; same arithmetic as ``_pycore``."""

from libc.math cimport log, sqrt, fabs

import numpy as np
cimport numpy as cnp

cnp.import_array()

cdef double M_H2 = 2.016e-3
cdef double FARADAY = 96485.0


cdef inline double _fc_current(double p_net, double E_oc, double A, double i0,
                               double R, double alpha, double i_top) nogil:
    cdef double scale, lo, hi, x, v, f, df, xn
    cdef int it
    if p_net <= 0.0:
        return 0.0
    scale = (1.0 - alpha) / 1000.0
    lo = 0.0
    hi = i_top
    x = 1000.0 * p_net / ((1.0 - alpha) * (E_oc - A * log(i_top / i0) - R * i_top))
    if x > hi:
        x = hi
    for it in range(100):
        v = E_oc - A * log(x / i0) - R * x
        f = scale * x * v - p_net
        if f > 0.0:
            hi = x
        else:
            lo = x
        if fabs(f) <= 1e-13 * p_net or hi - lo <= 1e-13 * hi:
            return x
        df = scale * (v - A - R * x)
        if df > 0.0:
            xn = x - f / df
        else:
            xn = -1.0
        if xn <= lo or xn >= hi:
            xn = 0.5 * (lo + hi)
        x = xn
    return x


cdef inline double _static_rate(double p, double P_max, double p_lo, double p_hi, double w,
                                double dv_lo, double dv_base, double dv_hi) nogil:
    cdef double x = p / P_max
    if x <= p_lo - w:
        return dv_lo
    if x < p_lo + w:
        return dv_lo + (dv_base - dv_lo) * (x - (p_lo - w)) / (2.0 * w)
    if x <= p_hi - w:
        return dv_base
    if x < p_hi + w:
        return dv_base + (dv_hi - dv_base) * (x - (p_hi - w)) / (2.0 * w)
    return dv_hi


def fc_current_scalar(double p_net, double E_oc, double A, double i0, double R,
                      double alpha, double i_top):
    return _fc_current(p_net, E_oc, A, i0, R, alpha, i_top)


def h2_rate_from_current(double i_fc, double N_s, double beta):
    return 3600.0 * N_s * i_fc * M_H2 / (2.0 * FARADAY) * (1.0 + beta)


def static_rate(double p, double P_max, double p_lo, double p_hi, double w,
                double dv_lo, double dv_base, double dv_hi):
    return _static_rate(p, P_max, p_lo, p_hi, w, dv_lo, dv_base, dv_hi)


def fc_current_array(p, double E_oc, double A, double i0, double R, double alpha, double i_top):
    cdef cnp.ndarray[cnp.float64_t, ndim=1] flat_in = np.ascontiguousarray(p, dtype=np.float64).ravel()
    cdef cnp.ndarray[cnp.float64_t, ndim=1] flat_out = np.empty_like(flat_in)
    cdef Py_ssize_t k, m = flat_in.shape[0]
    for k in range(m):
        flat_out[k] = _fc_current(flat_in[k], E_oc, A, i0, R, alpha, i_top)
    return flat_out.reshape(np.shape(p))


def integrate_hold(double p_fc0, double xi0, double u, Py_ssize_t k0, Py_ssize_t n, double dt,
                   double[::1] p_load, double[::1] out_p_fc, double[::1] out_p_bat,
                   double[::1] out_xi, double[::1] out_u, double[::1] out_h2,
                   double[::1] out_deg, tuple fc, tuple bat, tuple deg, bint exact_battery):
    cdef double E_fc = fc[0], A = fc[1], i0 = fc[2], R_fc = fc[3], alpha = fc[4]
    cdef double i_top = fc[5], N_s = fc[6], beta = fc[7], P_max = fc[8]
    cdef double E_b = bat[0], R_b = bat[1], C_b = bat[2], I_max = bat[3]
    cdef double soc_min = bat[4], soc_max = bat[5]
    cdef double p_lo = deg[0], p_hi = deg[1], w = deg[2], dv_lo = deg[3]
    cdef double dv_base = deg[4], dv_hi = deg[5], dv2 = deg[6]
    cdef double half = E_b / (2.0 * R_b)
    cdef double p = p_fc0, xi = xi0, h2 = 0.0, dst = 0.0, ddy = 0.0, gap = 0.0, soc_viol = 0.0
    cdef double p_end, p_mid, p_bat, disc, i_bat, p_eff, i_fc, ug, dh, ds, dd
    cdef long n_viol = 0
    cdef Py_ssize_t j, t
    if k0 < 0 or k0 + n > p_load.shape[0] or k0 + n > out_p_fc.shape[0] or k0 + n > out_deg.shape[0]:
        raise IndexError("hold interval exceeds the trajectory arrays")
    with nogil:
        for j in range(n):
            t = k0 + j
            p_end = p + u * dt
            if p_end < 0.0:
                p_end = 0.0
            elif p_end > P_max:
                p_end = P_max
            p_mid = 0.5 * (p + p_end)
            p_bat = p_load[t] - p_mid
            if exact_battery:
                disc = half * half - 1000.0 * p_bat / R_b
                if disc < 0.0:
                    i_bat = I_max + 1.0
                else:
                    i_bat = half - sqrt(disc)
            else:
                i_bat = 1000.0 * p_bat / E_b
            if i_bat > I_max or i_bat < -I_max:
                n_viol += 1
                if i_bat > 0.0:
                    i_bat = I_max
                else:
                    i_bat = -I_max
                if exact_battery:
                    p_eff = (E_b * i_bat - R_b * i_bat * i_bat) / 1000.0
                else:
                    p_eff = E_b * i_bat / 1000.0
                gap += (p_bat - p_eff) * dt / 3600.0
            ug = (p_end - p) / dt
            out_p_fc[t] = p_mid
            out_p_bat[t] = p_bat
            out_xi[t] = xi
            out_u[t] = ug
            i_fc = _fc_current(p_mid, E_fc, A, i0, R_fc, alpha, i_top)
            dh = 3600.0 * N_s * i_fc * M_H2 / (2.0 * FARADAY) * (1.0 + beta) * dt / 3600.0
            ds = _static_rate(p_mid, P_max, p_lo, p_hi, w, dv_lo, dv_base, dv_hi) * dt / 3600.0
            dd = dv2 * ug * ug * dt
            out_h2[t] = dh
            out_deg[t] = ds + dd
            h2 += dh
            dst += ds
            ddy += dd
            xi = xi - i_bat * dt / (C_b * 3600.0)
            if xi < soc_min or xi > soc_max:
                soc_viol += dt
            p = p_end
    return p, xi, h2, dst, ddy, n_viol, gap, soc_viol
