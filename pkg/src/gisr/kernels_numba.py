"""Numba-compiled convolution kernels.

Default backend. Direct loops, row-vectorized so the innermost loop runs
over contiguous output columns. Parallelism is over independent output
slices only; every output element is reduced by a single thread in a
fixed loop order, so results are bit-reproducible regardless of thread
count. fastmath stays off for the same reason.
"""

import numpy as np
from numba import njit, prange


@njit(cache=True, parallel=True)
def conv2d_forward(x, w, stride, pad):
    b, c, h, wd = x.shape
    o, _, kh, kw = w.shape
    ho = (h + 2 * pad - kh) // stride + 1
    wo = (wd + 2 * pad - kw) // stride + 1
    xp = np.zeros((b, c, h + 2 * pad, wd + 2 * pad), dtype=x.dtype)
    xp[:, :, pad:pad + h, pad:pad + wd] = x
    y = np.zeros((b, o, ho, wo), dtype=x.dtype)
    for bo in prange(b * o):
        bi = bo // o
        oi = bo - bi * o
        for ci in range(c):
            for a in range(kh):
                for d in range(kw):
                    wv = w[oi, ci, a, d]
                    for i in range(ho):
                        xrow = xp[bi, ci, i * stride + a]
                        yrow = y[bi, oi, i]
                        for j in range(wo):
                            yrow[j] += wv * xrow[j * stride + d]
    return y


@njit(cache=True, parallel=True)
def conv2d_input_grad(g, w, stride, pad, h, wd):
    b, o, ho, wo = g.shape
    _, c, kh, kw = w.shape
    gp = np.zeros((b, c, h + 2 * pad, wd + 2 * pad), dtype=g.dtype)
    for bc in prange(b * c):
        bi = bc // c
        ci = bc - bi * c
        for oi in range(o):
            for a in range(kh):
                for d in range(kw):
                    wv = w[oi, ci, a, d]
                    for i in range(ho):
                        grow = g[bi, oi, i]
                        xrow = gp[bi, ci, i * stride + a]
                        for j in range(wo):
                            xrow[j * stride + d] += wv * grow[j]
    if pad == 0:
        return gp
    return gp[:, :, pad:pad + h, pad:pad + wd].copy()


@njit(cache=True, parallel=True)
def conv2d_weight_grad(x, g, stride, pad, kh, kw):
    b, c, h, wd = x.shape
    _, o, ho, wo = g.shape
    xp = np.zeros((b, c, h + 2 * pad, wd + 2 * pad), dtype=x.dtype)
    xp[:, :, pad:pad + h, pad:pad + wd] = x
    gw = np.zeros((o, c, kh, kw), dtype=x.dtype)
    for oc in prange(o * c):
        oi = oc // c
        ci = oc - oi * c
        for a in range(kh):
            for d in range(kw):
                acc = gw[oi, ci, a, d]
                for bi in range(b):
                    for i in range(ho):
                        grow = g[bi, oi, i]
                        xrow = xp[bi, ci, i * stride + a]
                        for j in range(wo):
                            acc += grow[j] * xrow[j * stride + d]
                gw[oi, ci, a, d] = acc
    return gw
