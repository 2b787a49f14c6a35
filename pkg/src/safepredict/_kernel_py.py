"""Pure-Python stepping kernel.

Mirrors ``_kernel.pyx`` operation for operation so both backends produce
bit-identical traces. Keep the two files in sync.
"""

from math import exp, ldexp, log, sqrt

import numpy as np

# state layout shared with the compiled kernel
Z, W_P, W_D, ETA, EPOCH, V_SUM, CUM_L, CUM_T, CUM_V, CUM_LBASE = range(10)


def sigmoid_pair(z):
    """Return ``(sigmoid(z), sigmoid(-z))`` without overflow."""
    if z >= 0.0:
        e = exp(-z)
        return 1.0 / (1.0 + e), e / (1.0 + e)
    e = exp(z)
    return e / (1.0 + e), 1.0 / (1.0 + e)


def safe_log(x):
    if x <= 0.0:
        return -float("inf")
    return log(x)


def epoch_rate(log_inv_wd, eps, k):
    return sqrt(log_inv_wd / ((1.0 - eps) * (1.0 - eps)) / ldexp(1.0, k))


def advance(z, eta, eps, loss, a, b):
    """One weight update in log-odds form.

    Returns the new log-odds and the (prediction, refusal) weight pair.
    """
    zi = z + eta * (eps - loss)
    sp, sd = sigmoid_pair(zi)
    if a == 0.0 and b == 1.0:
        return zi, sp, sd
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
    return safe_log(wp) - safe_log(wd), wp, wd


def step(state, loss, u, a, b, eps, w_init, log_inv_wd, doubling):
    """Advance one step. Returns the new state, the decision bit and a reset flag."""
    z, wp, wd, eta, k, v_sum, cum_l, cum_t, cum_v, cum_lb = state
    dec = 1 if u < wp else 0

    cum_l += wp * loss
    cum_t += wp
    cum_v += wp * wd
    cum_lb += loss

    z, wp, wd = advance(z, eta, eps, loss, a, b)

    reset = 0
    if doubling:
        v_sum += wp * wd
        if v_sum > ldexp(1.0, k):
            k += 1
            eta = epoch_rate(log_inv_wd, eps, k)
            z = log(w_init) - log(1.0 - w_init)
            wp = w_init
            wd = 1.0 - w_init
            v_sum = 0.0
            reset = 1
    return (z, wp, wd, eta, k, v_sum, cum_l, cum_t, cum_v, cum_lb), dec, reset


def simulate(losses, uniforms, alphas, betas, eps, w_init, log_inv_wd, doubling, state):
    n = losses.shape[0]
    w_out = np.empty(n)
    eta_out = np.empty(n)
    epoch_out = np.empty(n, dtype=np.int64)
    dec_out = np.empty(n, dtype=np.int8)
    reset_out = np.zeros(n, dtype=np.int8)

    state = tuple(state[:4]) + (int(state[4]),) + tuple(state[5:])
    loss_l, u_l, a_l, b_l = losses.tolist(), uniforms.tolist(), alphas.tolist(), betas.tolist()
    for t in range(n):
        w_out[t] = state[W_P]
        eta_out[t] = state[ETA]
        epoch_out[t] = state[EPOCH]
        state, dec_out[t], reset_out[t] = step(
            state, loss_l[t], u_l[t], a_l[t], b_l[t], eps, w_init, log_inv_wd, doubling)
    return state, w_out, eta_out, epoch_out, dec_out, reset_out
