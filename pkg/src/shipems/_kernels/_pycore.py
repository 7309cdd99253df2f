"""Pure-Python kernels. Reference semantics for the compiled ``_core`` module.

Both modules must stay operation-for-operation identical so that results are
bit-compatible regardless of which one is loaded.
"""

import math

import numpy as np

M_H2 = 2.016e-3  # kg/mol
FARADAY = 96485.0  # C/mol


def fc_current_scalar(p_net, E_oc, A, i0, R, alpha, i_top):
    """Current (A) delivering ``p_net`` kW on the ascending branch (0, i_top].

    Safeguarded Newton on the concave net-power curve, bracket kept by sign.
    """
    if p_net <= 0.0:
        return 0.0
    scale = (1.0 - alpha) / 1000.0
    lo = 0.0
    hi = i_top
    # upper-side start: voltage is minimal at i_top on this branch
    x = 1000.0 * p_net / ((1.0 - alpha) * (E_oc - A * math.log(i_top / i0) - R * i_top))
    if x > hi:
        x = hi
    for _ in range(100):
        v = E_oc - A * math.log(x / i0) - R * x
        f = scale * x * v - p_net
        if f > 0.0:
            hi = x
        else:
            lo = x
        if abs(f) <= 1e-13 * p_net or hi - lo <= 1e-13 * hi:
            return x
        df = scale * (v - A - R * x)
        xn = x - f / df if df > 0.0 else -1.0
        if xn <= lo or xn >= hi:
            xn = 0.5 * (lo + hi)
        x = xn
    return x


def h2_rate_from_current(i_fc, N_s, beta):
    """Hydrogen mass flow in kg/h for stack current ``i_fc``."""
    return 3600.0 * N_s * i_fc * M_H2 / (2.0 * FARADAY) * (1.0 + beta)


def static_rate(p, P_max, p_lo, p_hi, w, dv_lo, dv_base, dv_hi):
    """Piecewise static degradation (uV/h) with linear blends of half-width w."""
    x = p / P_max
    if x <= p_lo - w:
        return dv_lo
    if x < p_lo + w:
        return dv_lo + (dv_base - dv_lo) * (x - (p_lo - w)) / (2.0 * w)
    if x <= p_hi - w:
        return dv_base
    if x < p_hi + w:
        return dv_base + (dv_hi - dv_base) * (x - (p_hi - w)) / (2.0 * w)
    return dv_hi


def fc_current_array(p, E_oc, A, i0, R, alpha, i_top):
    p = np.asarray(p, dtype=float)
    out = np.empty_like(p)
    flat_in = p.ravel()
    flat_out = out.ravel()
    for k in range(flat_in.shape[0]):
        flat_out[k] = fc_current_scalar(flat_in[k], E_oc, A, i0, R, alpha, i_top)
    return out


def integrate_hold(
    p_fc0, xi0, u, k0, n, dt,
    p_load, out_p_fc, out_p_bat, out_xi, out_u, out_h2, out_deg,
    fc, bat, deg, exact_battery,
):
    """Advance the plant ``n`` simulation steps under a constant FC gradient.

    ``fc`` = (E_oc, A, i0, R, alpha, i_top, N_s, beta, P_max),
    ``bat`` = (E_oc, R_i, C_bat_Ah, I_max, SoC_min, SoC_max),
    ``deg`` = (p_lo, p_hi, w, dv_lo, dv_base, dv_hi, dv2).

    Writes one row per step into the ``out_*`` arrays: interval-mean FC and
    battery power, SoC at the start of the step, applied gradient, and the
    hydrogen (kg) and degradation (uV) accrued over the step. Returns
    ``(p_fc, xi, h2_kg, deg_static_uV, deg_dyn_uV, n_current_violations,
    gap_kwh, soc_violation_s)``.
    """
    E_fc, A, i0, R_fc, alpha, i_top, N_s, beta, P_max = fc
    E_b, R_b, C_b, I_max, soc_min, soc_max = bat
    p_lo, p_hi, w, dv_lo, dv_base, dv_hi, dv2 = deg
    half = E_b / (2.0 * R_b)
    p = p_fc0
    xi = xi0
    h2 = 0.0
    dst = 0.0
    ddy = 0.0
    n_viol = 0
    gap = 0.0
    soc_viol = 0.0
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
                i_bat = half - math.sqrt(disc)
        else:
            i_bat = 1000.0 * p_bat / E_b
        if i_bat > I_max or i_bat < -I_max:
            n_viol += 1
            i_bat = I_max if i_bat > 0.0 else -I_max
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
        i_fc = fc_current_scalar(p_mid, E_fc, A, i0, R_fc, alpha, i_top)
        dh = h2_rate_from_current(i_fc, N_s, beta) * dt / 3600.0
        ds = static_rate(p_mid, P_max, p_lo, p_hi, w, dv_lo, dv_base, dv_hi) * dt / 3600.0
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
