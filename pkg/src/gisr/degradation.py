"""Observation model and synthetic guided-scene data.

The low-resolution target is produced by blurring with a normalized
kernel (reflect padding), decimating every r-th pixel at offset 0, and
optionally adding seeded Gaussian noise. The blur/decimate pair and its
exact adjoint are shared with the classical solver so that the forward
operator, the solver gradient, and the dense-matrix test oracle all
describe the same linear map.
"""

from dataclasses import dataclass
import math

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import ArgumentError


def make_gaussian_kernel(size, sigma):
    """Isotropic Gaussian blur kernel, normalized to sum 1."""
    if size % 2 == 0 or size < 1:
        raise ArgumentError(f"kernel size must be odd and positive, got {size}")
    if sigma <= 0:
        raise ArgumentError(f"sigma must be positive, got {sigma}")
    c = size // 2
    ax = np.arange(size, dtype=np.float64) - c
    g = np.exp(-(ax[:, None] ** 2 + ax[None, :] ** 2) / (2.0 * sigma ** 2))
    return g / g.sum()


@dataclass
class DegradationSpec:
    """Blur kernel, decimation ratio, and noise level of the observation."""

    kernel: np.ndarray
    ratio: int
    noise_sigma: float = 0.0

    def __post_init__(self):
        k = np.asarray(self.kernel, dtype=np.float64)
        if k.ndim != 2 or k.shape[0] != k.shape[1] or k.shape[0] % 2 == 0:
            raise ArgumentError(f"kernel must be square with odd size, got {k.shape}")
        if np.any(k < 0) or abs(k.sum() - 1.0) > 1e-9:
            raise ArgumentError("kernel entries must be >= 0 and sum to 1")
        if self.ratio < 1:
            raise ArgumentError(f"ratio must be >= 1, got {self.ratio}")
        if self.noise_sigma < 0:
            raise ArgumentError("noise_sigma must be >= 0")
        self.kernel = k


def default_spec(ratio, noise_sigma=0.0):
    """Gaussian kernel scaled with the ratio: size 2*ceil(1.5*r)+1, sigma r/2."""
    size = 2 * math.ceil(1.5 * ratio) + 1
    return DegradationSpec(make_gaussian_kernel(size, ratio / 2.0), ratio, noise_sigma)


def _reflect_indices(n, pad):
    if pad > n - 1:
        raise ArgumentError(f"blur kernel needs pad {pad} > image extent {n} - 1")
    idx = np.arange(-pad, n + pad)
    idx = np.where(idx < 0, -idx, idx)
    idx = np.where(idx >= n, 2 * n - 2 - idx, idx)
    return idx


def blur_decimate(x, kernel, ratio):
    """Reflect-padded cross-correlation with `kernel`, then take every
    ratio-th pixel starting at offset 0. Linear in x."""
    k = kernel.shape[0]
    pad = k // 2
    h, w = x.shape[-2], x.shape[-1]
    rmap = _reflect_indices(h, pad)
    cmap = _reflect_indices(w, pad)
    xp = x[..., rmap[:, None], cmap[None, :]]
    win = sliding_window_view(xp, (k, k), axis=(-2, -1))
    blurred = np.tensordot(win, kernel.astype(x.dtype), axes=([-2, -1], [0, 1]))
    return np.ascontiguousarray(blurred[..., ::ratio, ::ratio])


def blur_decimate_adjoint(g, kernel, ratio, h, w):
    """Exact adjoint of :func:`blur_decimate` (same matrix, transposed)."""
    k = kernel.shape[0]
    pad = k // 2
    rmap = _reflect_indices(h, pad)
    cmap = _reflect_indices(w, pad)
    ui = np.arange(g.shape[-2]) * ratio
    vj = np.arange(g.shape[-1]) * ratio
    lead = g.shape[:-2]
    out = np.zeros(lead + (h, w), dtype=g.dtype)
    gflat = g.reshape((-1,) + g.shape[-2:])
    oflat = out.reshape((-1, h, w))
    kern = kernel.astype(g.dtype)
    for a in range(k):
        rows = rmap[ui + a][:, None]
        for d in range(k):
            cols = cmap[vj + d][None, :]
            for band in range(oflat.shape[0]):
                np.add.at(oflat[band], (rows, cols), kern[a, d] * gflat[band])
    return out


def degrade(hr, spec, seed=0):
    """Apply the observation model L = decimate(blur(H)) + noise.

    The result is clamped to [0,1] only when noise is actually added, so
    the noise-free operator stays exactly linear.
    """
    hr = np.asarray(hr)
    h, w = hr.shape[-2], hr.shape[-1]
    if h % spec.ratio or w % spec.ratio:
        raise ArgumentError(
            f"spatial dims {h}x{w} not divisible by ratio {spec.ratio}")
    low = blur_decimate(hr, spec.kernel, spec.ratio)
    if spec.noise_sigma > 0:
        rng = np.random.default_rng(seed)
        low = low + rng.normal(0.0, spec.noise_sigma, size=low.shape).astype(low.dtype)
        low = np.clip(low, 0.0, 1.0)
    return low


@dataclass
class GuidedPair:
    """LR target L, HR guidance P, ground truth H_gt, and their ratio."""

    L: np.ndarray
    P: np.ndarray
    H_gt: np.ndarray
    r: int

    def __post_init__(self):
        if self.P.shape[-2:] != self.H_gt.shape[-2:]:
            raise ArgumentError(
                f"guidance {self.P.shape} and ground truth {self.H_gt.shape} "
                "must share spatial dims")
        expect = (self.H_gt.shape[-2] // self.r, self.H_gt.shape[-1] // self.r)
        if self.L.shape[-2:] != expect:
            raise ArgumentError(
                f"L spatial dims {self.L.shape[-2:]} != ground truth / r {expect}")
        for name, a in (("L", self.L), ("P", self.P), ("H_gt", self.H_gt)):
            if a.min() < -1e-6 or a.max() > 1 + 1e-6:
                raise ArgumentError(f"{name} values must lie in [0,1]")


def wald_synthesize(hr, p_full, spec, seed=0):
    """Reduced-resolution protocol: degrade both the target and the
    full-scale guidance by r, keeping the original target as ground truth."""
    hr = np.asarray(hr)
    p_full = np.asarray(p_full)
    r = spec.ratio
    if p_full.shape[-2] != hr.shape[-2] * r or p_full.shape[-1] != hr.shape[-1] * r:
        raise ArgumentError(
            f"guidance {p_full.shape[-2:]} must be ratio x target {hr.shape[-2:]}")
    sub = np.random.default_rng(seed).integers(0, 2 ** 63 - 1, size=2)
    low = degrade(hr, spec, seed=int(sub[0]))
    guide = degrade(p_full, spec, seed=int(sub[1]))
    return GuidedPair(L=low, P=guide, H_gt=hr, r=r)


def _polygon_mask(yy, xx, rng):
    """Star polygon around a random center, even-odd crossing test."""
    nv = int(rng.integers(3, 7))
    cx, cy = rng.uniform(0.2, 0.8, size=2)
    angles = np.sort(rng.uniform(0.0, 2.0 * np.pi, size=nv))
    radii = rng.uniform(0.1, 0.3, size=nv)
    vx = cx + radii * np.cos(angles)
    vy = cy + radii * np.sin(angles)
    inside = np.zeros(yy.shape, dtype=bool)
    for i in range(nv):
        x0, y0 = vx[i], vy[i]
        x1, y1 = vx[(i + 1) % nv], vy[(i + 1) % nv]
        if y0 == y1:
            continue
        crosses = (y0 > yy) != (y1 > yy)
        xing = (x1 - x0) * (yy - y0) / (y1 - y0) + x0
        inside ^= crosses & (xx < xing)
    return inside


def _render_scene(size, bands, guide_bands, rng):
    """One scene function sampled on a size x size grid.

    Smooth Gaussian blobs plus sharp convex-polygon plateaus; blob and
    polygon geometry is shared by every channel while intensities differ,
    so target and guidance carry the same edge structure.
    """
    ax = (np.arange(size) + 0.5) / size
    yy, xx = np.meshgrid(ax, ax, indexing="ij")
    total = bands + guide_bands
    img = np.full((total, size, size), 0.5)
    n_blobs = int(rng.integers(3, 6))
    for _ in range(n_blobs):
        bx, by = rng.uniform(0.0, 1.0, size=2)
        sig = rng.uniform(0.25, 0.4)
        blob = np.exp(-((xx - bx) ** 2 + (yy - by) ** 2) / (2 * sig ** 2))
        amp = rng.uniform(-0.06, 0.06, size=total)
        img += amp[:, None, None] * blob[None]
    n_polys = int(rng.integers(2, 4))
    for _ in range(n_polys):
        mask = _polygon_mask(yy, xx, rng)
        # one sign for all channels so overlapping plateaus cancel the same
        # way everywhere and edge geometry stays shared across modalities
        amp = rng.uniform(0.35, 0.55, size=total) * rng.choice([-1.0, 1.0])
        img += amp[:, None, None] * mask[None]
    # one affine normalization for every channel: band intensities differ
    # but edge contrast keeps a common scale across modalities
    lo, hi = img.min(), img.max()
    img = 0.05 + 0.9 * (img - lo) / max(hi - lo, 1e-9)
    return img[:bands], img[bands:]


def synth_scene_dataset(n, bands, guide_bands, size, r, seed, noise_sigma=0.0):
    """Generate n guided pairs with `size` x `size` ground truth.

    Scenes are rendered at size*r, softened through the same degradation
    pipeline to produce the ground truth, then passed through the Wald
    protocol; guidance and target therefore share edge geometry.
    """
    if size % r:
        raise ArgumentError(f"size {size} not divisible by ratio {r}")
    spec = default_spec(r, noise_sigma)
    gt_spec = default_spec(r, 0.0)  # ground truth is always noise free
    pairs = []
    for i in range(n):
        rng = np.random.default_rng([seed, i])
        target_full, guide_full = _render_scene(size * r, bands, guide_bands, rng)
        hr = degrade(target_full, gt_spec)
        pairs.append(wald_synthesize(hr, guide_full, spec,
                                     seed=int(rng.integers(0, 2 ** 63 - 1))))
    return pairs
