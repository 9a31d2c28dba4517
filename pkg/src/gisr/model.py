"""The memory-augmented unfolding network.

Each of the K stages mirrors one iteration of the alternating solver:
a learned proximal update for U, a cross-modality non-local refinement
N of the current estimate, a learned proximal update for V, and a
residual data-consistency update for H. ConvLSTM cells carry a feature
memory for each branch across stages; guidance enters every branch
through one shared encoder per stage.

Image-space quantities (U, V, H, N: target_bands channels) are lifted
to C feature channels and projected back by 3x3 convs bracketing each
learned block.
"""

from dataclasses import dataclass, field

import numpy as np

from . import tensor as T
from .errors import ArgumentError, ShapeError
from .nn import (CRB, CRBDown, CRBUp, Conv2d, ConvLSTMCell, Module,
                 ModuleList, Parameter)
from .tensor import Tensor


@dataclass
class ModelConfig:
    """Architecture and ablation switches."""

    K: int = 4
    C: int = 32
    r: int = 2
    target_bands: int = 4
    guide_bands: int = 1
    n_resblocks: int = 1
    share_params: bool = True
    use_memory: bool = True
    use_cnl: bool = True
    multi_location_memory: bool = True
    learnable_scalars: bool = True
    delta3_init: float = 0.1
    eta1_init: float = 0.5
    lambda1_init: float = 0.5
    dtype: str = "float32"

    def __post_init__(self):
        if self.K < 1:
            raise ArgumentError(f"stage count K must be >= 1, got {self.K}")
        if self.C % 2:
            raise ArgumentError(f"feature channels C must be even, got {self.C}")
        if self.r not in (2, 4, 8, 16):
            raise ArgumentError(f"ratio must be one of 2, 4, 8, 16, got {self.r}")
        if self.target_bands < 1 or self.guide_bands < 1:
            raise ArgumentError("band counts must be >= 1")
        if self.dtype not in ("float32", "float64"):
            raise ArgumentError(f"dtype must be float32/float64, got {self.dtype}")

    @property
    def np_dtype(self):
        return np.float32 if self.dtype == "float32" else np.float64


@dataclass
class StageState:
    """Per-stage signals and memory, kept for inspection."""

    U: Tensor
    V: Tensor
    H: Tensor
    N: Tensor
    U_m: Tensor
    V_m: Tensor
    H_m: Tensor
    h_U: Tensor
    c_U: Tensor
    h_V: Tensor
    c_V: Tensor
    h_H: Tensor
    c_H: Tensor


class CNL(Module):
    """Cross-modality non-local refinement.

    Works at half resolution: strided convs reduce the target/guidance
    features, a channel-attention map couples target features with
    themselves and a spatial-attention map couples them with the
    guidance, and the fused result is upsampled back bilinearly.
    """

    def __init__(self, ch, n_res, *, rng, dtype):
        super().__init__()
        half = ch // 2
        self.conv_h = Conv2d(ch, ch, 3, stride=2, pad=1, rng=rng, dtype=dtype)
        self.conv_p = Conv2d(ch, ch, 3, stride=2, pad=1, rng=rng, dtype=dtype)
        self.delta = Conv2d(ch, half, 3, rng=rng, dtype=dtype)
        self.theta = Conv2d(ch, half, 3, rng=rng, dtype=dtype)
        self.phi = Conv2d(ch, half, 3, rng=rng, dtype=dtype)
        self.varphi = Conv2d(ch, half, 3, stride=2, pad=1, rng=rng, dtype=dtype)
        self.vartheta = Conv2d(ch, half, 3, stride=2, pad=1, rng=rng, dtype=dtype)
        self.embed_h = Conv2d(half, half, 1, pad=0, rng=rng, dtype=dtype)
        self.embed_p = Conv2d(half, half, 1, pad=0, rng=rng, dtype=dtype)
        self.fuse = CRB(ch, ch, n_res, rng=rng, dtype=dtype)
        # last attention maps, kept as plain arrays for inspection
        self.last_f_hh = None
        self.last_f_hp = None

    def forward(self, h_feat, p_feat):
        b, c, hh, ww = h_feat.shape
        if hh % 2 or ww % 2:
            raise ArgumentError(f"CNL needs even spatial dims, got {hh}x{ww}")
        half = c // 2
        hr = self.conv_h(h_feat)
        pr = self.conv_p(p_feat)
        n = (hh // 2) * (ww // 2)
        h_r1 = self.delta(hr).reshape(b, half, n)
        h_r2 = self.theta(hr).reshape(b, half, n).transpose(0, 2, 1)
        f_hh = T.softmax(T.matmul(h_r1, h_r2), axis=-1)      # [B, C/2, C/2]
        p_r1 = self.phi(pr).reshape(b, half, n)
        f_hp = T.softmax(T.matmul(h_r2, p_r1), axis=-1)      # [B, n, n]
        self.last_f_hh = f_hh.data
        self.last_f_hp = f_hp.data
        h_e = self.varphi(h_feat).reshape(b, half, n).transpose(0, 2, 1)
        p_e = self.vartheta(p_feat).reshape(b, half, n).transpose(0, 2, 1)
        agg_p = T.matmul(f_hp, p_e).transpose(0, 2, 1).reshape(b, half, hh // 2, ww // 2)
        agg_h = T.matmul(h_e, f_hh).transpose(0, 2, 1).reshape(b, half, hh // 2, ww // 2)
        fused = self.fuse(T.concat_channels([self.embed_p(agg_p),
                                             self.embed_h(agg_h)]))
        return T.bilinear_resize(fused, 2)


class PriorNet(Module):
    """Learned proximal update shared by the U and V branches.

    Fuses the previous branch image, the current reference image, the
    encoded guidance, and (optionally) the branch feature memory; emits
    the updated image plus refreshed ConvLSTM memory.
    """

    def __init__(self, cfg, *, rng, dtype):
        super().__init__()
        bands, ch, n_res = cfg.target_bands, cfg.C, cfg.n_resblocks
        self.use_memory = cfg.use_memory
        self.multi_location = cfg.multi_location_memory
        self.crb_guide = CRB(ch, ch, n_res, rng=rng, dtype=dtype)
        self.crb_in = CRB(2 * bands, ch, n_res, rng=rng, dtype=dtype)
        self.crb_fuse = CRB(4 * ch, ch, n_res, rng=rng, dtype=dtype)
        self.crb_out = CRB(ch, ch, n_res, rng=rng, dtype=dtype)
        self.proj = Conv2d(ch, bands, 3, rng=rng, dtype=dtype)
        if cfg.use_memory:
            self.lift = Conv2d(bands, ch, 3, rng=rng, dtype=dtype)
            mem_in = 6 * ch if cfg.multi_location_memory else ch
            self.crb_mem = CRB(mem_in, ch, n_res, rng=rng, dtype=dtype)
            self.lstm = ConvLSTMCell(ch, rng=rng, dtype=dtype)
            self.crb_mem_out = CRB(ch, ch, n_res, rng=rng, dtype=dtype)

    def forward(self, prev_img, ref_img, p_feat, mem, h, c, compute_memory=True):
        p1 = T.concat_channels([self.crb_guide(p_feat), p_feat])
        z = self.crb_in(T.concat_channels([prev_img, ref_img]))
        h1 = T.concat_channels([z, mem])
        hp1 = T.concat_channels([h1, p1])
        hp2 = self.crb_fuse(hp1)
        out = self.proj(self.crb_out(hp2))
        if not (self.use_memory and compute_memory):
            return out, mem, h, c
        if self.multi_location:
            gathered = T.concat_channels([hp1, hp2, self.lift(out)])
        else:
            gathered = self.lift(out)
        h_new, c_new = self.lstm(self.crb_mem(gathered), h, c)
        return out, self.crb_mem_out(h_new), h_new, c_new


class HNet(Module):
    """Residual data-consistency update of the target estimate.

    A strided CRB plays the blur+decimate operator, a transposed-conv
    CRB lifts the LR residual back, and the step combines both coupling
    terms with (optionally learnable) scalars before the memory update.
    """

    def __init__(self, cfg, *, rng, dtype):
        super().__init__()
        bands, ch, n_res, r = cfg.target_bands, cfg.C, cfg.n_resblocks, cfg.r
        self.use_memory = cfg.use_memory
        self.multi_location = cfg.multi_location_memory
        self.crb_kh = CRB(bands + ch, ch, n_res, rng=rng, dtype=dtype)
        self.crb_down = CRBDown(ch, ch, r, n_res, rng=rng, dtype=dtype)
        self.proj_down = Conv2d(ch, bands, 3, rng=rng, dtype=dtype)
        self.crb_up = CRBUp(bands, ch, r, n_res, rng=rng, dtype=dtype)
        self.proj_up = Conv2d(ch, bands, 3, rng=rng, dtype=dtype)
        scalars = {"delta3": cfg.delta3_init, "eta1": cfg.eta1_init,
                   "lambda1": cfg.lambda1_init}
        for name, init in scalars.items():
            value = np.full(1, init, dtype=dtype)
            setattr(self, name, Parameter(value) if cfg.learnable_scalars
                    else Tensor(value))
        if cfg.use_memory:
            self.lift = Conv2d(bands, ch, 3, rng=rng, dtype=dtype)
            mem_in = 3 * ch if cfg.multi_location_memory else ch
            self.crb_mh = CRB(mem_in, ch, n_res, rng=rng, dtype=dtype)
            self.lstm = ConvLSTMCell(ch, rng=rng, dtype=dtype)
            self.crb_mem_out = CRB(ch, ch, n_res, rng=rng, dtype=dtype)

    def forward(self, h_img, low, u_img, v_img, mem, h, c, compute_memory=True):
        if low.shape[-2:] != (h_img.shape[-2] // self.crb_down.head.stride,
                              h_img.shape[-1] // self.crb_down.head.stride):
            raise ShapeError(
                f"L dims {low.shape[-2:]} != H dims {h_img.shape[-2:]} / ratio")
        kh = self.crb_kh(T.concat_channels([h_img, mem]))
        dkh = self.proj_down(self.crb_down(kh))
        uh_feat = self.crb_up(low - dkh)
        uh = self.proj_up(uh_feat)
        resid = uh + self.eta1 * (h_img - u_img) + self.lambda1 * (h_img - v_img)
        h_next = h_img - self.delta3 * resid
        if not (self.use_memory and compute_memory):
            return h_next, mem, h, c
        if self.multi_location:
            gathered = T.concat_channels([kh, uh_feat, self.lift(h_next)])
        else:
            gathered = self.lift(h_next)
        h_new, c_new = self.lstm(self.crb_mh(gathered), h, c)
        return h_next, self.crb_mem_out(h_new), h_new, c_new


class UnfoldStage(Module):
    """One solver iteration: guidance encoder + U, N, V, H updates."""

    def __init__(self, cfg, *, rng, dtype):
        super().__init__()
        self.guide_enc = CRB(cfg.guide_bands, cfg.C, cfg.n_resblocks,
                             rng=rng, dtype=dtype)
        self.unet = PriorNet(cfg, rng=rng, dtype=dtype)
        self.lift_n = Conv2d(cfg.target_bands, cfg.C, 3, rng=rng, dtype=dtype)
        if cfg.use_cnl:
            self.cnl = CNL(cfg.C, cfg.n_resblocks, rng=rng, dtype=dtype)
        self.proj_n = Conv2d(cfg.C, cfg.target_bands, 3, rng=rng, dtype=dtype)
        self.vnet = PriorNet(cfg, rng=rng, dtype=dtype)
        self.hnet = HNet(cfg, rng=rng, dtype=dtype)


class MADUNet(Module):
    """K-stage unfolded solver with persistent cross-stage memory.

    With share_params one stage module is reused for every iteration;
    otherwise each stage owns its weights. Memory tensors and LSTM
    states start at zero and flow stage to stage.
    """

    def __init__(self, cfg, seed=0):
        super().__init__()
        self.cfg = cfg
        rng = np.random.default_rng(seed)
        dtype = cfg.np_dtype
        n_modules = 1 if cfg.share_params else cfg.K
        self.stages = ModuleList(UnfoldStage(cfg, rng=rng, dtype=dtype)
                                 for _ in range(n_modules))
        self.assign_names()

    def stage_module(self, k):
        return self.stages[0 if self.cfg.share_params else k]

    def forward(self, low, guide, hook=None, keep_states=False):
        """Run all K stages; returns (H estimate, list of StageState).

        `hook(name, stage)` is called as each sub-module finishes, in
        execution order ("unet", "cnl", "vnet", "hnet" per stage).
        `keep_states` records every stage's signals for inspection.
        """
        cfg = self.cfg
        low = low if isinstance(low, Tensor) else Tensor(low, dtype=cfg.np_dtype)
        guide = guide if isinstance(guide, Tensor) else Tensor(guide, dtype=cfg.np_dtype)
        h_img = T.bicubic_resize(low, cfg.r)
        u_img = h_img
        v_img = h_img
        b, _, hh, ww = h_img.shape
        zero = T.zeros((b, cfg.C, hh, ww), dtype=cfg.np_dtype)
        u_m = v_m = h_m = zero
        h_u = c_u = h_v = c_v = h_h = c_h = zero
        states = []
        for k in range(cfg.K):
            stage = self.stage_module(k)
            # the last stage's memory update feeds nothing downstream;
            # compute it only when the caller wants the states
            feed = keep_states or k < cfg.K - 1
            p_feat = stage.guide_enc(guide)
            u_img, u_m, h_u, c_u = stage.unet(u_img, h_img, p_feat, u_m, h_u, c_u,
                                              compute_memory=feed)
            if hook:
                hook("unet", k)
            n_feat = stage.lift_n(h_img)
            if cfg.use_cnl:
                n_feat = stage.cnl(n_feat, p_feat)
            n_img = stage.proj_n(n_feat)
            if hook:
                hook("cnl", k)
            v_img, v_m, h_v, c_v = stage.vnet(v_img, n_img, p_feat, v_m, h_v, c_v,
                                              compute_memory=feed)
            if hook:
                hook("vnet", k)
            h_img, h_m, h_h, c_h = stage.hnet(h_img, low, u_img, v_img, h_m, h_h, c_h,
                                              compute_memory=feed)
            if hook:
                hook("hnet", k)
            if keep_states:
                states.append(StageState(U=u_img, V=v_img, H=h_img, N=n_img,
                                         U_m=u_m, V_m=v_m, H_m=h_m,
                                         h_U=h_u, c_U=c_u, h_V=h_v, c_V=c_v,
                                         h_H=h_h, c_H=c_h))
        return h_img, states
