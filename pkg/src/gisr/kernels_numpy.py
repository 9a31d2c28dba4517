"""Numpy convolution kernels (BLAS matmul based).

Default backend: for the small-channel 3x3 convolutions that dominate
this model, single-threaded BLAS GEMMs beat the numba loops by a wide
margin (see benchmarks/bench_backends.py).

Zero padding is never materialized: forward and input-grad run one
stacked-tap GEMM over the raw array followed by kh*kw clipped strided
accumulations, and the weight grad contracts per-tap against clipped
windows. Same signatures as kernels_numba; each backend is individually
deterministic (fixed reduction order), but the two are not bit-identical
to each other.
"""

import numpy as np

from .errors import ShapeError


def _tap_bounds(out_n, in_n, stride, pad, a):
    """Output index range [lo, hi) whose tap-a sample hits the input."""
    lo = max(0, -(-(pad - a) // stride))  # ceil((pad - a) / stride)
    hi = min(out_n, (in_n - 1 + pad - a) // stride + 1)
    return lo, max(hi, lo)


def conv2d_forward(x, w, stride, pad):
    """Cross-correlate x[B,C,H,W] with w[O,C,kh,kw], zero padding."""
    b, c, h, wd = x.shape
    o, ci, kh, kw = w.shape
    if ci != c:
        raise ShapeError(f"channel mismatch: input {c}, weight {ci}")
    ho = (h + 2 * pad - kh) // stride + 1
    wo = (wd + 2 * pad - kw) // stride + 1
    wall = np.ascontiguousarray(w.transpose(2, 3, 0, 1)).reshape(kh * kw * o, c)
    z = np.matmul(wall, x.reshape(b, c, h * wd)).reshape(b, kh * kw, o, h, wd)
    y = np.zeros((b, o, ho, wo), dtype=x.dtype)
    for a in range(kh):
        rlo, rhi = _tap_bounds(ho, h, stride, pad, a)
        if rlo >= rhi:
            continue
        rs = rlo * stride + a - pad
        for d in range(kw):
            clo, chi = _tap_bounds(wo, wd, stride, pad, d)
            if clo >= chi:
                continue
            cs = clo * stride + d - pad
            y[:, :, rlo:rhi, clo:chi] += z[:, a * kw + d][
                :, :,
                rs:rs + (rhi - rlo - 1) * stride + 1:stride,
                cs:cs + (chi - clo - 1) * stride + 1:stride]
    return y


def conv2d_input_grad(g, w, stride, pad, h, wd):
    """Adjoint of conv2d_forward in its first argument.

    g is the output-side array [B,O,Ho,Wo]; returns [B,C,h,wd]. Also the
    workhorse of transposed convolution.
    """
    b, o, ho, wo = g.shape
    _, c, kh, kw = w.shape
    wall = np.ascontiguousarray(w.transpose(2, 3, 1, 0)).reshape(kh * kw * c, o)
    z = np.matmul(wall, g.reshape(b, o, ho * wo)).reshape(b, kh * kw, c, ho, wo)
    gx = np.zeros((b, c, h, wd), dtype=g.dtype)
    for a in range(kh):
        rlo, rhi = _tap_bounds(ho, h, stride, pad, a)
        if rlo >= rhi:
            continue
        rs = rlo * stride + a - pad
        for d in range(kw):
            clo, chi = _tap_bounds(wo, wd, stride, pad, d)
            if clo >= chi:
                continue
            cs = clo * stride + d - pad
            gx[:, :,
               rs:rs + (rhi - rlo - 1) * stride + 1:stride,
               cs:cs + (chi - clo - 1) * stride + 1:stride] += z[:, a * kw + d][
                :, :, rlo:rhi, clo:chi]
    return gx


def conv2d_weight_grad(x, g, stride, pad, kh, kw):
    """Adjoint of conv2d_forward in its weight argument.

    x[B,C,H,W] is the forward input, g[B,O,Ho,Wo] the output-side array;
    returns [O,C,kh,kw].
    """
    b, c, h, wd = x.shape
    _, o, ho, wo = g.shape
    gm = g.reshape(b, o, ho * wo)
    gw = np.zeros((o, c, kh, kw), dtype=x.dtype)
    for a in range(kh):
        rlo, rhi = _tap_bounds(ho, h, stride, pad, a)
        if rlo >= rhi:
            continue
        rs = rlo * stride + a - pad
        for d in range(kw):
            clo, chi = _tap_bounds(wo, wd, stride, pad, d)
            if clo >= chi:
                continue
            cs = clo * stride + d - pad
            xs = x[:, :,
                   rs:rs + (rhi - rlo - 1) * stride + 1:stride,
                   cs:cs + (chi - clo - 1) * stride + 1:stride]
            if rlo == 0 and rhi == ho and clo == 0 and chi == wo:
                gs = gm
            else:
                gs = np.ascontiguousarray(
                    g[:, :, rlo:rhi, clo:chi]).reshape(b, o, -1)
            xcols = np.ascontiguousarray(xs).reshape(b, c, -1)
            gw[:, :, a, d] = np.matmul(gs, xcols.transpose(0, 2, 1)).sum(axis=0)
    return gw
