# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled kernel backend.

Same functions and semantics as ``duracd._kernels._py``; scalar loops
replace the vectorized numpy code. The duration-recursion summation
order matches the fallback's scalar loops exactly.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport exp, log, tanh, INFINITY

cnp.import_array()

NAME = "cython"


cdef inline double _sig(double x) noexcept nogil:
    return 1.0 / (1.0 + exp(-x))


def acd_recursion(double omega, double[::1] alphas, double[::1] betas,
                  double[::1] dt, double presample):
    cdef Py_ssize_t n = dt.shape[0]
    cdef Py_ssize_t p = alphas.shape[0]
    cdef Py_ssize_t q = betas.shape[0]
    cdef cnp.ndarray[double, ndim=1] mu_arr = np.empty(n)
    cdef double[::1] mu = mu_arr
    cdef Py_ssize_t i, j, k
    cdef double m
    for i in range(n):
        m = omega
        for j in range(p):
            k = i - 1 - j
            m += alphas[j] * (dt[k] if k >= 0 else presample)
        for j in range(q):
            k = i - 1 - j
            m += betas[j] * (mu[k] if k >= 0 else presample)
        mu[i] = m
    return mu_arr


def acd_nll(double omega, double[::1] alphas, double[::1] betas,
            double[::1] dt, double presample):
    cdef Py_ssize_t n = dt.shape[0]
    cdef Py_ssize_t p = alphas.shape[0]
    cdef Py_ssize_t q = betas.shape[0]
    cdef cnp.ndarray[double, ndim=1] mu_arr = np.empty(n)
    cdef double[::1] mu = mu_arr
    cdef Py_ssize_t i, j, k
    cdef double m, nll = 0.0
    for i in range(n):
        m = omega
        for j in range(p):
            k = i - 1 - j
            m += alphas[j] * (dt[k] if k >= 0 else presample)
        for j in range(q):
            k = i - 1 - j
            m += betas[j] * (mu[k] if k >= 0 else presample)
        if m <= 0.0:
            return INFINITY
        mu[i] = m
        nll += log(m) + dt[i] / m
    return nll


def acd_nll_grad(double omega, double[::1] alphas, double[::1] betas,
                 double[::1] dt, double presample):
    cdef Py_ssize_t n = dt.shape[0]
    cdef Py_ssize_t p = alphas.shape[0]
    cdef Py_ssize_t q = betas.shape[0]
    cdef cnp.ndarray[double, ndim=1] mu_arr = np.empty(n)
    cdef double[::1] mu = mu_arr
    cdef double[::1] s_om = np.zeros(n)
    cdef double[:, ::1] s_al = np.zeros((max(p, 1), n))
    cdef double[:, ::1] s_be = np.zeros((max(q, 1), n))
    cdef cnp.ndarray[double, ndim=1] dalphas = np.zeros(p)
    cdef cnp.ndarray[double, ndim=1] dbetas = np.zeros(q)
    cdef Py_ssize_t i, j, k, lag
    cdef double m, s, w, nll = 0.0, domega = 0.0
    cdef bint bad = 0
    for i in range(n):
        m = omega
        for j in range(p):
            k = i - 1 - j
            m += alphas[j] * (dt[k] if k >= 0 else presample)
        for j in range(q):
            k = i - 1 - j
            m += betas[j] * (mu[k] if k >= 0 else presample)
        if m <= 0.0 or m != m:
            bad = 1
            break
        mu[i] = m
        s = 1.0
        for j in range(q):
            k = i - 1 - j
            if k >= 0:
                s += betas[j] * s_om[k]
        s_om[i] = s
        for lag in range(p):
            k = i - 1 - lag
            s = dt[k] if k >= 0 else presample
            for j in range(q):
                k = i - 1 - j
                if k >= 0:
                    s += betas[j] * s_al[lag, k]
            s_al[lag, i] = s
        for lag in range(q):
            k = i - 1 - lag
            s = mu[k] if k >= 0 else presample
            for j in range(q):
                k = i - 1 - j
                if k >= 0:
                    s += betas[j] * s_be[lag, k]
            s_be[lag, i] = s
    if bad:
        return np.inf, np.nan, np.full(p, np.nan), np.full(q, np.nan)
    for i in range(n):
        m = mu[i]
        nll += log(m) + dt[i] / m
        w = (m - dt[i]) / (m * m)
        domega += w * s_om[i]
        for j in range(p):
            dalphas[j] += w * s_al[j, i]
        for j in range(q):
            dbetas[j] += w * s_be[j, i]
    return nll, domega, dalphas, dbetas


def acd_simulate(double omega, double[::1] alphas, double[::1] betas,
                 double[::1] eps, double presample):
    cdef Py_ssize_t n = eps.shape[0]
    cdef Py_ssize_t p = alphas.shape[0]
    cdef Py_ssize_t q = betas.shape[0]
    cdef cnp.ndarray[double, ndim=1] mu_arr = np.empty(n)
    cdef cnp.ndarray[double, ndim=1] dt_arr = np.empty(n)
    cdef double[::1] mu = mu_arr
    cdef double[::1] dt = dt_arr
    cdef Py_ssize_t i, j, k
    cdef double m
    for i in range(n):
        m = omega
        for j in range(p):
            k = i - 1 - j
            m += alphas[j] * (dt[k] if k >= 0 else presample)
        for j in range(q):
            k = i - 1 - j
            m += betas[j] * (mu[k] if k >= 0 else presample)
        mu[i] = m
        dt[i] = m * eps[i]
    return dt_arr, mu_arr


def hybrid_forward(double[:, :, ::1] feats, double[::1] seed,
                   double[:, ::1] Wf, double[:, ::1] Wi,
                   double[:, ::1] Wo, double[:, ::1] Wc,
                   double[::1] bf, double[::1] bi,
                   double[::1] bo, double[::1] bc,
                   double[:, ::1] W1, double[::1] b1,
                   double[::1] w2, double b2):
    cdef Py_ssize_t B = feats.shape[0]
    cdef Py_ssize_t T = feats.shape[1]
    cdef Py_ssize_t nf = feats.shape[2]
    cdef Py_ssize_t H = bf.shape[0]
    cdef Py_ssize_t D = nf + 1
    cdef Py_ssize_t dh = b1.shape[0]

    cache = {
        "h": np.empty((B, T, H)), "c": np.empty((B, T, H)),
        "f": np.empty((B, T, H)), "i": np.empty((B, T, H)),
        "o": np.empty((B, T, H)), "g": np.empty((B, T, H)),
        "tanh_c": np.empty((B, T, H)),
        "a": np.empty((B, T, dh)), "y": np.empty((B, T)),
    }
    cdef double[:, :, ::1] h = cache["h"]
    cdef double[:, :, ::1] c = cache["c"]
    cdef double[:, :, ::1] f = cache["f"]
    cdef double[:, :, ::1] ivar = cache["i"]
    cdef double[:, :, ::1] o = cache["o"]
    cdef double[:, :, ::1] g = cache["g"]
    cdef double[:, :, ::1] tanh_c = cache["tanh_c"]
    cdef double[:, :, ::1] a = cache["a"]
    cdef double[:, ::1] y = cache["y"]

    cdef double[::1] z = np.empty(H + D)
    cdef Py_ssize_t b, t, r, k
    cdef double accf, acci, acco, accg, ft, it, ot, gt, ct, tc, ht, av, yv

    with nogil:
        for b in range(B):
            for t in range(T):
                for k in range(H):
                    z[k] = h[b, t - 1, k] if t > 0 else 0.0
                for k in range(nf):
                    z[H + k] = feats[b, t, k]
                z[H + nf] = y[b, t - 1] if t > 0 else seed[b]
                for r in range(H):
                    accf = bf[r]
                    acci = bi[r]
                    acco = bo[r]
                    accg = bc[r]
                    for k in range(H + D):
                        accf += Wf[r, k] * z[k]
                        acci += Wi[r, k] * z[k]
                        acco += Wo[r, k] * z[k]
                        accg += Wc[r, k] * z[k]
                    ft = _sig(accf)
                    it = _sig(acci)
                    ot = _sig(acco)
                    gt = tanh(accg)
                    ct = it * gt
                    if t > 0:
                        ct += ft * c[b, t - 1, r]
                    tc = tanh(ct)
                    ht = ot * tc
                    f[b, t, r] = ft
                    ivar[b, t, r] = it
                    o[b, t, r] = ot
                    g[b, t, r] = gt
                    c[b, t, r] = ct
                    tanh_c[b, t, r] = tc
                    h[b, t, r] = ht
                yv = b2
                for r in range(dh):
                    av = b1[r]
                    for k in range(H):
                        av += W1[r, k] * h[b, t, k]
                    av = tanh(av)
                    a[b, t, r] = av
                    yv += w2[r] * av
                y[b, t] = yv
    return cache


def hybrid_backward(double[:, :, ::1] feats, double[::1] seed,
                    double[:, ::1] Wf, double[:, ::1] Wi,
                    double[:, ::1] Wo, double[:, ::1] Wc,
                    double[::1] bf, double[::1] bi,
                    double[::1] bo, double[::1] bc,
                    double[:, ::1] W1, double[::1] b1,
                    double[::1] w2, double b2,
                    dict cache,
                    double[:, :, ::1] dh_ext, double[:, ::1] dy_ext):
    cdef Py_ssize_t B = feats.shape[0]
    cdef Py_ssize_t T = feats.shape[1]
    cdef Py_ssize_t nf = feats.shape[2]
    cdef Py_ssize_t H = bf.shape[0]
    cdef Py_ssize_t D = nf + 1
    cdef Py_ssize_t dh = b1.shape[0]

    cdef double[:, :, ::1] h = cache["h"]
    cdef double[:, :, ::1] c = cache["c"]
    cdef double[:, :, ::1] f = cache["f"]
    cdef double[:, :, ::1] ivar = cache["i"]
    cdef double[:, :, ::1] o = cache["o"]
    cdef double[:, :, ::1] g = cache["g"]
    cdef double[:, :, ::1] tanh_c = cache["tanh_c"]
    cdef double[:, :, ::1] a = cache["a"]
    cdef double[:, ::1] y = cache["y"]

    grads = {
        "Wf": np.zeros((H, H + D)), "Wi": np.zeros((H, H + D)),
        "Wo": np.zeros((H, H + D)), "Wc": np.zeros((H, H + D)),
        "bf": np.zeros(H), "bi": np.zeros(H),
        "bo": np.zeros(H), "bc": np.zeros(H),
        "W1": np.zeros((dh, H)), "b1": np.zeros(dh),
        "w2": np.zeros(dh), "b2": 0.0,
        "feats": np.empty((B, T, nf)), "seed": np.empty(B),
    }
    cdef double[:, ::1] dWf = grads["Wf"]
    cdef double[:, ::1] dWi = grads["Wi"]
    cdef double[:, ::1] dWo = grads["Wo"]
    cdef double[:, ::1] dWc = grads["Wc"]
    cdef double[::1] dbf = grads["bf"]
    cdef double[::1] dbi = grads["bi"]
    cdef double[::1] dbo = grads["bo"]
    cdef double[::1] dbc = grads["bc"]
    cdef double[:, ::1] dW1 = grads["W1"]
    cdef double[::1] db1 = grads["b1"]
    cdef double[::1] dw2 = grads["w2"]
    cdef double db2 = 0.0
    cdef double[:, :, ::1] dfeats = grads["feats"]
    cdef double[::1] dseed = grads["seed"]

    cdef double[::1] dh_vec = np.empty(H)
    cdef double[::1] dc_next = np.empty(H)
    cdef double[::1] dh_next = np.empty(H)
    cdef double[::1] dz1 = np.empty(dh)
    cdef double[::1] dpre_f = np.empty(H)
    cdef double[::1] dpre_i = np.empty(H)
    cdef double[::1] dpre_o = np.empty(H)
    cdef double[::1] dpre_g = np.empty(H)
    cdef double[::1] z = np.empty(H + D)
    cdef Py_ssize_t b, t, r, k
    cdef double dy, dfb, av, dav, dchan, dc, dho, tc, fv, iv, ov, gv, dzk, cprev

    with nogil:
        for b in range(B):
            for k in range(H):
                dh_next[k] = 0.0
                dc_next[k] = 0.0
            dfb = 0.0
            for t in range(T - 1, -1, -1):
                dy = dy_ext[b, t] + dfb
                # scalar head: y = w2 . tanh(W1 h + b1) + b2
                db2 += dy
                for r in range(dh):
                    av = a[b, t, r]
                    dw2[r] += av * dy
                    dav = dy * w2[r] * (1.0 - av * av)
                    dz1[r] = dav
                    db1[r] += dav
                for k in range(H):
                    dho = dh_ext[b, t, k] + dh_next[k]
                    for r in range(dh):
                        dho += dz1[r] * W1[r, k]
                    dh_vec[k] = dho
                for r in range(dh):
                    for k in range(H):
                        dW1[r, k] += dz1[r] * h[b, t, k]
                # LSTM cell
                for k in range(H):
                    z[k] = h[b, t - 1, k] if t > 0 else 0.0
                for k in range(nf):
                    z[H + k] = feats[b, t, k]
                z[H + nf] = y[b, t - 1] if t > 0 else seed[b]
                for r in range(H):
                    tc = tanh_c[b, t, r]
                    fv = f[b, t, r]
                    iv = ivar[b, t, r]
                    ov = o[b, t, r]
                    gv = g[b, t, r]
                    dc = dc_next[r] + dh_vec[r] * ov * (1.0 - tc * tc)
                    cprev = c[b, t - 1, r] if t > 0 else 0.0
                    dpre_f[r] = dc * cprev * fv * (1.0 - fv)
                    dpre_i[r] = dc * gv * iv * (1.0 - iv)
                    dpre_o[r] = dh_vec[r] * tc * ov * (1.0 - ov)
                    dpre_g[r] = dc * iv * (1.0 - gv * gv)
                    dc_next[r] = dc * fv
                    dbf[r] += dpre_f[r]
                    dbi[r] += dpre_i[r]
                    dbo[r] += dpre_o[r]
                    dbc[r] += dpre_g[r]
                for r in range(H):
                    for k in range(H + D):
                        dWf[r, k] += dpre_f[r] * z[k]
                        dWi[r, k] += dpre_i[r] * z[k]
                        dWo[r, k] += dpre_o[r] * z[k]
                        dWc[r, k] += dpre_g[r] * z[k]
                for k in range(H + D):
                    dzk = 0.0
                    for r in range(H):
                        dzk += dpre_f[r] * Wf[r, k]
                        dzk += dpre_i[r] * Wi[r, k]
                        dzk += dpre_o[r] * Wo[r, k]
                        dzk += dpre_g[r] * Wc[r, k]
                    if k < H:
                        dh_next[k] = dzk
                    elif k < H + nf:
                        dfeats[b, t, k - H] = dzk
                    else:
                        dfb = dzk
            dseed[b] = dfb
    grads["b2"] = db2
    return grads
