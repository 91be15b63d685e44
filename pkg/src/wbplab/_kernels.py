"""Compiled inner loops for the unrolled decoder and its adjoint.

Arrays follow the conventions of :mod:`wbplab.wbp`: edges are numbered
row-major over H so check ``c`` owns edges ``check_ptr[c]:check_ptr[c+1]``;
``var_edges[var_ptr[v]:var_ptr[v+1]]`` lists the edges of variable ``v``.
Weight arrays are compact: any axis of length 1 is broadcast.
"""

import math

import numpy as np
from numba import njit


@njit(cache=True)
def _clip1(x, lo, hi):
    mag = abs(x)
    inside = mag >= lo and mag <= hi
    if mag < lo:
        mag = lo
    elif mag > hi:
        mag = hi
    return (-mag if x < 0 else mag), inside


@njit(cache=True, nogil=True)
def forward_kernel(llr, wm, wc, gamma, iters, do_clip, clip_lo, clip_hi,
                   edge_var, var_ptr, var_edges, check_ptr,
                   marg, record, tape, t_v2c, t_c2v, t_pre, t_hat, t_mask, t_prod, t_pmask):
    """Returns 0 on success, otherwise the 1-based iteration of the first non-finite marginal."""
    nb, n = llr.shape
    ne = edge_var.shape[0]
    nc = check_ptr.shape[0] - 1
    cap = math.tanh(clip_hi / 2.0)
    v2c = np.zeros(ne)
    c2v = np.zeros(ne)
    u = np.zeros(ne)
    th = np.zeros(ne)
    pre_buf = np.zeros(ne)
    suf = np.zeros(ne)
    for b in range(nb):
        bw = b if wm.shape[0] > 1 else 0
        bc = b if wc.shape[0] > 1 else 0
        g = gamma[b] if gamma.shape[0] > 1 else gamma[0]
        for e in range(ne):
            v2c[e] = 0.0
            c2v[e] = 0.0
        for t in range(iters):
            tm = t if wm.shape[1] > 1 else 0
            tc = t if wc.shape[1] > 1 else 0
            # variable nodes
            for v in range(n):
                tot = wc[bc, tc, v if wc.shape[2] > 1 else 0] * llr[b, v]
                for k in range(var_ptr[v], var_ptr[v + 1]):
                    e = var_edges[k]
                    ue = wm[bw, tm, e if wm.shape[2] > 1 else 0] * c2v[e]
                    u[e] = ue
                    tot += ue
                for k in range(var_ptr[v], var_ptr[v + 1]):
                    e = var_edges[k]
                    p = tot - u[e]
                    pre_buf[e] = p
                    mixed = g * v2c[e] + (1.0 - g) * p
                    if do_clip:
                        val, inside = _clip1(mixed, clip_lo, clip_hi)
                    else:
                        val, inside = mixed, True
                    v2c[e] = val
                    if tape:
                        t_pre[t, b, e] = p
                        t_mask[t, b, e] = inside
            # check nodes: exclusive products by prefix/suffix
            for c in range(nc):
                s, f = check_ptr[c], check_ptr[c + 1]
                for e in range(s, f):
                    th[e] = math.tanh(v2c[e] / 2.0)
                acc = 1.0
                for e in range(f - 1, s - 1, -1):
                    suf[e] = acc
                    acc *= th[e]
                acc = 1.0
                for e in range(s, f):
                    p = acc * suf[e]
                    acc *= th[e]
                    pm = True
                    if do_clip:
                        if p > cap:
                            p = cap
                            pm = False
                        elif p < -cap:
                            p = -cap
                            pm = False
                    hat = 2.0 * math.atanh(p) if abs(p) < 1.0 else math.copysign(math.inf, p)
                    if tape:
                        t_prod[t, b, e] = p
                        t_pmask[t, b, e] = pm
                        t_hat[t, b, e] = hat
                    c2v[e] = g * c2v[e] + (1.0 - g) * hat
            # marginals
            slot = t if record else 0
            ok = True
            for v in range(n):
                tot = wc[bc, tc, v if wc.shape[2] > 1 else 0] * llr[b, v]
                for k in range(var_ptr[v], var_ptr[v + 1]):
                    e = var_edges[k]
                    tot += wm[bw, tm, e if wm.shape[2] > 1 else 0] * c2v[e]
                if not math.isfinite(tot):
                    ok = False
                if record or t == iters - 1:
                    marg[slot, b, v] = tot
            if tape:
                for e in range(ne):
                    t_v2c[t + 1, b, e] = v2c[e]
                    t_c2v[t + 1, b, e] = c2v[e]
            if not ok:
                return t + 1
    return 0


@njit(cache=True, nogil=True)
def backward_kernel(llr, wm, wc, gamma, iters, g_marg,
                    edge_var, var_ptr, var_edges, check_ptr,
                    t_v2c, t_c2v, t_pre, t_hat, t_mask, t_prod, t_pmask,
                    gwm, gwc, g_gamma, g_llr):
    nb, n = llr.shape
    ne = edge_var.shape[0]
    nc = check_ptr.shape[0] - 1
    a_v2c = np.zeros(ne)
    a_c2v = np.zeros(ne)
    a_v2c_prev = np.zeros(ne)
    a_c2v_prev = np.zeros(ne)
    a_pre = np.zeros(ne)
    a_prod = np.zeros(ne)
    th = np.zeros(ne)
    a_cw = np.zeros(n)
    a_tot = np.zeros(n)
    xs = np.zeros(ne)
    suf = np.zeros(ne)
    for b in range(nb):
        bw = b if wm.shape[0] > 1 else 0
        bc = b if wc.shape[0] > 1 else 0
        bg = b if gamma.shape[0] > 1 else 0
        g = gamma[bg]
        for e in range(ne):
            a_v2c[e] = 0.0
            a_c2v[e] = 0.0
        for t in range(iters - 1, -1, -1):
            tm = t if wm.shape[1] > 1 else 0
            tc = t if wc.shape[1] > 1 else 0
            # marginal: m_v = wc*llr + sum wm*c2v
            for v in range(n):
                gm = g_marg[t, b, v]
                a_cw[v] = gm
                for k in range(var_ptr[v], var_ptr[v + 1]):
                    e = var_edges[k]
                    ew = e if wm.shape[2] > 1 else 0
                    gwm[bw, tm, ew] += gm * t_c2v[t + 1, b, e]
                    a_c2v[e] += gm * wm[bw, tm, ew]
            # c2v damping and check update
            gg = 0.0
            for e in range(ne):
                hat = t_hat[t, b, e]
                gg += a_c2v[e] * (t_c2v[t, b, e] - hat)
                a_c2v_prev[e] = g * a_c2v[e]
                p = t_prod[t, b, e]
                ap = (1.0 - g) * a_c2v[e] * 2.0 / (1.0 - p * p)
                a_prod[e] = ap if t_pmask[t, b, e] else 0.0
                th[e] = math.tanh(t_v2c[t + 1, b, e] / 2.0)
            for c in range(nc):
                s, f = check_ptr[c], check_ptr[c + 1]
                for j in range(s, f):
                    # sum_{e != j} a_prod[e] * prod_{k not in {e, j}} th[k]
                    for e in range(s, f):
                        xs[e] = 1.0 if e == j else th[e]
                    acc = 1.0
                    for e in range(f - 1, s - 1, -1):
                        suf[e] = acc
                        acc *= xs[e]
                    acc = 1.0
                    tot = 0.0
                    for e in range(s, f):
                        if e != j:
                            tot += a_prod[e] * acc * suf[e]
                        acc *= xs[e]
                    a_v2c[j] += tot * 0.5 * (1.0 - th[j] * th[j])
            # v2c = clip(g*v2c_prev + (1-g)*pre)
            for e in range(ne):
                a = a_v2c[e] if t_mask[t, b, e] else 0.0
                gg += a * (t_v2c[t, b, e] - t_pre[t, b, e])
                a_v2c_prev[e] = g * a
                a_pre[e] = (1.0 - g) * a
            # pre = (wc*llr + sum_v u) - u,  u = wm*c2v_prev
            for v in range(n):
                tot = 0.0
                for k in range(var_ptr[v], var_ptr[v + 1]):
                    tot += a_pre[var_edges[k]]
                a_tot[v] = tot
                a_cw[v] += tot
                for k in range(var_ptr[v], var_ptr[v + 1]):
                    e = var_edges[k]
                    ew = e if wm.shape[2] > 1 else 0
                    au = tot - a_pre[e]
                    gwm[bw, tm, ew] += au * t_c2v[t, b, e]
                    a_c2v_prev[e] += au * wm[bw, tm, ew]
                w = wc[bc, tc, v if wc.shape[2] > 1 else 0]
                gwc[bc, tc, v if wc.shape[2] > 1 else 0] += a_cw[v] * llr[b, v]
                g_llr[b, v] += a_cw[v] * w
            g_gamma[bg] += gg
            for e in range(ne):
                a_v2c[e] = a_v2c_prev[e]
                a_c2v[e] = a_c2v_prev[e]
    return 0
