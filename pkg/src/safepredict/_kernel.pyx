# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled stepping kernel. Must stay operation-identical to _kernel_py."""

import numpy as np
cimport numpy as cnp
from libc.math cimport exp, log, sqrt, ldexp, INFINITY

cnp.import_array()


cdef inline void _sigmoid_pair(double z, double* sp, double* sd) noexcept nogil:
    cdef double e
    if z >= 0.0:
        e = exp(-z)
        sp[0] = 1.0 / (1.0 + e)
        sd[0] = e / (1.0 + e)
    else:
        e = exp(z)
        sp[0] = e / (1.0 + e)
        sd[0] = 1.0 / (1.0 + e)


cdef inline double _safe_log(double x) noexcept nogil:
    if x <= 0.0:
        return -INFINITY
    return log(x)


cdef inline double _epoch_rate(double log_inv_wd, double eps, long k) noexcept nogil:
    return sqrt(log_inv_wd / ((1.0 - eps) * (1.0 - eps)) / ldexp(1.0, <int>k))


def sigmoid_pair(double z):
    cdef double sp, sd
    _sigmoid_pair(z, &sp, &sd)
    return sp, sd


def simulate(const double[::1] losses, const double[::1] uniforms,
             const double[::1] alphas, const double[::1] betas,
             double eps, double w_init, double log_inv_wd, bint doubling, state):
    cdef Py_ssize_t n = losses.shape[0]
    cdef Py_ssize_t t
    w_out_a = np.empty(n)
    eta_out_a = np.empty(n)
    epoch_out_a = np.empty(n, dtype=np.int64)
    dec_out_a = np.empty(n, dtype=np.int8)
    reset_out_a = np.zeros(n, dtype=np.int8)
    cdef double[::1] w_out = w_out_a
    cdef double[::1] eta_out = eta_out_a
    cdef long long[::1] epoch_out = epoch_out_a
    cdef signed char[::1] dec_out = dec_out_a
    cdef signed char[::1] reset_out = reset_out_a

    cdef double z = state[0]
    cdef double wp = state[1]
    cdef double wd = state[2]
    cdef double eta = state[3]
    cdef long k = <long>state[4]
    cdef double v_sum = state[5]
    cdef double cum_l = state[6]
    cdef double cum_t = state[7]
    cdef double cum_v = state[8]
    cdef double cum_lb = state[9]
    cdef double z_init = log(w_init) - log(1.0 - w_init)
    cdef double loss, a, b, zi, sp, sd

    with nogil:
        for t in range(n):
            loss = losses[t]
            w_out[t] = wp
            eta_out[t] = eta
            epoch_out[t] = k
            dec_out[t] = 1 if uniforms[t] < wp else 0

            cum_l += wp * loss
            cum_t += wp
            cum_v += wp * wd
            cum_lb += loss

            a = alphas[t]
            b = betas[t]
            zi = z + eta * (eps - loss)
            _sigmoid_pair(zi, &sp, &sd)
            if a == 0.0 and b == 1.0:
                z = zi
                wp = sp
                wd = sd
            else:
                wp = a + (b - a) * sp
                wd = (1.0 - b) + (b - a) * sd
                if wp < a:
                    wp = a
                elif wp > b:
                    wp = b
                if wd < 1.0 - b:
                    wd = 1.0 - b
                elif wd > 1.0 - a:
                    wd = 1.0 - a
                z = _safe_log(wp) - _safe_log(wd)

            if doubling:
                v_sum += wp * wd
                if v_sum > ldexp(1.0, <int>k):
                    k += 1
                    eta = _epoch_rate(log_inv_wd, eps, k)
                    z = z_init
                    wp = w_init
                    wd = 1.0 - w_init
                    v_sum = 0.0
                    reset_out[t] = 1

    new_state = (z, wp, wd, eta, k, v_sum, cum_l, cum_t, cum_v, cum_lb)
    return new_state, w_out_a, eta_out_a, epoch_out_a, dec_out_a, reset_out_a
