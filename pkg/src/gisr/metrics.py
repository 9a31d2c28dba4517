"""Reduced-reference image quality metrics.

All functions accept [bands,H,W] or [H,W] numpy arrays (or Tensors) in
[0,1] unless noted. Conventions fixed here, since the usual literature
definitions leave them open: SSIM uses an 11x11 Gaussian window with
sigma 1.5, the Q index an 8x8 sliding box window with unbiased
covariances, SAM is reported in radians, and SCC correlates 3x3
Laplacian high-pass responses over the valid interior.
"""

from dataclasses import dataclass
import math

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import ArgumentError, NumericError, ShapeError
from .tensor import Tensor

PSNR_CAP = 100.0


def _as_bands(x):
    a = x.data if isinstance(x, Tensor) else np.asarray(x)
    a = a.astype(np.float64, copy=False)
    if a.ndim == 2:
        return a[None]
    if a.ndim == 3:
        return a
    raise ShapeError(f"expected [bands,H,W] or [H,W], got shape {a.shape}")


def _pair(pred, gt):
    p, g = _as_bands(pred), _as_bands(gt)
    if p.shape != g.shape:
        raise ShapeError(f"shape mismatch: {p.shape} vs {g.shape}")
    return p, g


@dataclass
class MetricReport:
    psnr: float
    ssim: float
    sam: float
    ergas: float
    scc: float
    q: float
    rmse: float

    FIELDS = ("psnr", "ssim", "sam", "ergas", "scc", "q", "rmse")

    def as_row(self):
        return [getattr(self, f) for f in self.FIELDS]


def psnr(pred, gt, peak=1.0):
    p, g = _pair(pred, gt)
    mse = float(np.mean((p - g) ** 2))
    if mse == 0.0:
        return PSNR_CAP
    return min(PSNR_CAP, 10.0 * math.log10(peak * peak / mse))


def _gaussian_window(size, sigma):
    ax = np.arange(size, dtype=np.float64) - (size - 1) / 2.0
    g = np.exp(-(ax[:, None] ** 2 + ax[None, :] ** 2) / (2 * sigma ** 2))
    return g / g.sum()


def _window_moments(a, window):
    """Weighted window means of a and a*a over all valid positions."""
    win = sliding_window_view(a, window.shape)
    m = np.tensordot(win, window, axes=([2, 3], [0, 1]))
    m2 = np.tensordot(win * win, window, axes=([2, 3], [0, 1]))
    return win, m, m2


def ssim(pred, gt, peak=1.0):
    """Mean SSIM, 11x11 Gaussian window (sigma 1.5), band averaged."""
    p, g = _pair(pred, gt)
    size = 11
    if p.shape[-2] < size or p.shape[-1] < size:
        raise ArgumentError(f"image smaller than the {size}x{size} SSIM window")
    window = _gaussian_window(size, 1.5)
    c1 = (0.01 * peak) ** 2
    c2 = (0.03 * peak) ** 2
    vals = []
    for pb, gb in zip(p, g):
        wp, mp, mp2 = _window_moments(pb, window)
        wg, mg, mg2 = _window_moments(gb, window)
        cov = np.tensordot(wp * wg, window, axes=([2, 3], [0, 1])) - mp * mg
        vp = mp2 - mp * mp
        vg = mg2 - mg * mg
        num = (2 * mp * mg + c1) * (2 * cov + c2)
        den = (mp * mp + mg * mg + c1) * (vp + vg + c2)
        vals.append(np.mean(num / den))
    return float(np.mean(vals))


def sam(pred, gt):
    """Mean spectral angle in radians; zero-spectrum pixels are skipped."""
    p, g = _pair(pred, gt)
    if p.shape[0] < 2:
        raise ArgumentError("SAM needs at least two bands")
    dot = np.sum(p * g, axis=0)
    np_ = np.linalg.norm(p, axis=0)
    ng = np.linalg.norm(g, axis=0)
    valid = (np_ > 0) & (ng > 0)
    if not valid.any():
        return 0.0
    cosang = np.clip(dot[valid] / (np_[valid] * ng[valid]), -1.0, 1.0)
    return float(np.mean(np.arccos(cosang)))


def ergas(pred, gt, r):
    """Relative dimensionless global error: 100/r * sqrt(mean_b (RMSE_b/mu_b)^2)."""
    p, g = _pair(pred, gt)
    terms = []
    for pb, gb in zip(p, g):
        mu = gb.mean()
        if mu == 0:
            raise NumericError("ERGAS undefined: a ground-truth band has zero mean")
        terms.append(np.mean((pb - gb) ** 2) / (mu * mu))
    return float(100.0 / r * math.sqrt(np.mean(terms)))


_LAPLACIAN = np.array([[0.0, 1.0, 0.0], [1.0, -4.0, 1.0], [0.0, 1.0, 0.0]])


def _highpass(a):
    win = sliding_window_view(a, (3, 3))
    return np.tensordot(win, _LAPLACIAN, axes=([2, 3], [0, 1]))


def scc(pred, gt):
    """Pearson correlation of Laplacian high-pass responses, band averaged.

    Degenerate bands (zero variance after filtering) contribute 0.
    """
    p, g = _pair(pred, gt)
    vals = []
    for pb, gb in zip(p, g):
        hp = _highpass(pb).ravel()
        hg = _highpass(gb).ravel()
        hp = hp - hp.mean()
        hg = hg - hg.mean()
        denom = np.linalg.norm(hp) * np.linalg.norm(hg)
        vals.append(float(hp @ hg / denom) if denom > 0 else 0.0)
    return float(np.mean(vals))


def q_index(pred, gt):
    """Universal image quality index, 8x8 sliding box window, band averaged."""
    p, g = _pair(pred, gt)
    size = 8
    if p.shape[-2] < size or p.shape[-1] < size:
        raise ArgumentError(f"image smaller than the {size}x{size} Q window")
    n = size * size
    box = np.full((size, size), 1.0 / n)
    vals = []
    for pb, gb in zip(p, g):
        wp, mp, mp2 = _window_moments(pb, box)
        wg, mg, mg2 = _window_moments(gb, box)
        # unbiased (co)variances
        vp = (mp2 - mp * mp) * n / (n - 1)
        vg = (mg2 - mg * mg) * n / (n - 1)
        cov = (np.tensordot(wp * wg, box, axes=([2, 3], [0, 1])) - mp * mg) * n / (n - 1)
        d1 = vp + vg
        d2 = mp * mp + mg * mg
        q = np.ones_like(d1)
        nz = d1 * d2 > 0
        q[nz] = 4 * cov[nz] * mp[nz] * mg[nz] / (d1[nz] * d2[nz])
        edge = (d1 == 0) & (d2 != 0)
        q[edge] = 2 * mp[edge] * mg[edge] / d2[edge]
        vals.append(np.mean(q))
    return float(np.mean(vals))


def rmse(pred, gt, quantize8=False):
    """Root mean squared error; optionally on the 8-bit (0..255) scale."""
    p, g = _pair(pred, gt)
    if quantize8:
        p = np.round(np.clip(p, 0.0, 1.0) * 255.0)
        g = np.round(np.clip(g, 0.0, 1.0) * 255.0)
    return float(np.sqrt(np.mean((p - g) ** 2)))


def report(pred, gt, r, quantize8=False):
    """All seven metrics for one image pair."""
    p, _ = _pair(pred, gt)
    sam_val = sam(pred, gt) if p.shape[0] >= 2 else float("nan")
    return MetricReport(psnr=psnr(pred, gt), ssim=ssim(pred, gt),
                        sam=sam_val, ergas=ergas(pred, gt, r),
                        scc=scc(pred, gt), q=q_index(pred, gt),
                        rmse=rmse(pred, gt, quantize8))
