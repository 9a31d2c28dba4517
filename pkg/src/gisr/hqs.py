"""Classical half-quadratic-splitting solver.

Alternates proximal-gradient steps on the two auxiliary images U and V
with a plain gradient step on the target H. The data-term gradient uses
the exact adjoint of the blur+decimate operator, so the whole iteration
matches a dense-matrix Landweber reference to rounding error. With
identity proximal operators this is the linear oracle the unfolded
network's H-update is checked against; with real priors it is a usable
model-based solver in its own right.
"""

from dataclasses import dataclass

import numpy as np

from .degradation import blur_decimate, blur_decimate_adjoint
from .errors import ArgumentError, NumericError, ShapeError
from .tensor import Tensor, bicubic_resize

DIVERGENCE_LIMIT = 1e3


@dataclass
class HqsParams:
    eta1: float = 0.5
    lambda1: float = 0.5
    delta1: float = 0.1
    delta2: float = 0.1
    delta3: float = 0.1
    iters: int = 10

    def __post_init__(self):
        if self.eta1 < 0 or self.lambda1 < 0:
            raise ArgumentError("penalty weights must be >= 0")
        if min(self.delta1, self.delta2, self.delta3) <= 0:
            raise ArgumentError("step sizes must be > 0")
        if self.iters < 1:
            raise ArgumentError(f"iters must be >= 1, got {self.iters}")


def identity_prox(z, guidance):
    return z


def _check_same_shape(a, b, what):
    if a.shape != b.shape:
        raise ShapeError(f"{what}: shapes {a.shape} and {b.shape} differ")


def grad_f1(u_prev, h_k):
    """Gradient of the U coupling term: U - H."""
    _check_same_shape(u_prev, h_k, "grad_f1")
    return u_prev - h_k


def grad_f2(v_prev, n_k):
    """Gradient of the V coupling term: V - N."""
    _check_same_shape(v_prev, n_k, "grad_f2")
    return v_prev - n_k


def grad_f3(h_k, low, u_k, v_k, spec, params):
    """Full gradient of the H sub-problem, via the three-step split:
    predict the LR image, lift the LR residual back with the exact
    adjoint, then add the two coupling terms."""
    _check_same_shape(h_k, u_k, "grad_f3")
    _check_same_shape(h_k, v_k, "grad_f3")
    r = spec.ratio
    if low.shape[-2:] != (h_k.shape[-2] // r, h_k.shape[-1] // r):
        raise ShapeError(
            f"grad_f3: L dims {low.shape[-2:]} != H dims {h_k.shape[-2:]} / {r}")
    low_hat = blur_decimate(h_k, spec.kernel, r)
    lifted = blur_decimate_adjoint(low_hat - low, spec.kernel, r,
                                   h_k.shape[-2], h_k.shape[-1])
    return (lifted + params.eta1 * (h_k - u_k) + params.lambda1 * (h_k - v_k))


def upsample_init(low, ratio):
    """Bicubic initialization of the target estimate."""
    out = bicubic_resize(Tensor(np.asarray(low)[None]), ratio)
    return out.data[0]


def hqs_solve(low, guidance, spec, params, prox1=identity_prox,
              prox2=identity_prox, h0=None):
    """Run `params.iters` alternating updates and return the estimate.

    Per iteration: prox-gradient step on U, N := H (no learned non-local
    refinement in classical mode), prox-gradient step on V, gradient
    step on H. Aborts with NumericError if the iterate diverges.
    """
    low = np.asarray(low, dtype=np.float64)
    h = upsample_init(low, spec.ratio) if h0 is None else np.asarray(h0, dtype=np.float64)
    u = h.copy()
    v = h.copy()
    for _ in range(params.iters):
        u = prox1(u - params.delta1 * grad_f1(u, h), guidance)
        n = h
        v = prox2(v - params.delta2 * grad_f2(v, n), guidance)
        h = h - params.delta3 * grad_f3(h, low, u, v, spec, params)
        if np.max(np.abs(h)) > DIVERGENCE_LIMIT:
            raise NumericError(
                f"H iterate exceeded {DIVERGENCE_LIMIT:g}; reduce step sizes")
    return h
