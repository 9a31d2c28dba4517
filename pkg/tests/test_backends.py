import numpy as np
import pytest

from gisr import backend
from gisr.errors import ArgumentError

pytestmark = pytest.mark.skipif("numba" not in backend.available(),
                                reason="numba backend unavailable")


def _cases(rng):
    for (b, c, o, h, k, s, p) in [(2, 3, 4, 8, 3, 1, 1), (1, 2, 3, 9, 3, 2, 1),
                                  (2, 2, 2, 8, 5, 2, 2), (1, 4, 2, 6, 1, 1, 0),
                                  (2, 3, 4, 8, 4, 2, 1)]:
        ho = (h + 2 * p - k) // s + 1
        x = rng.normal(size=(b, c, h, h))
        w = rng.normal(size=(o, c, k, k))
        g = rng.normal(size=(b, o, ho, ho))
        yield x, w, g, s, p, h, k


def test_backends_agree(rng):
    for x, w, g, s, p, h, k in _cases(rng):
        args = dict()
        prev = backend.use("numpy")
        try:
            f_np = backend.conv2d_forward(x, w, s, p)
            gi_np = backend.conv2d_input_grad(g, w, s, p, h, h)
            gw_np = backend.conv2d_weight_grad(x, g, s, p, k, k)
            backend.use("numba")
            f_nb = backend.conv2d_forward(x, w, s, p)
            gi_nb = backend.conv2d_input_grad(g, w, s, p, h, h)
            gw_nb = backend.conv2d_weight_grad(x, g, s, p, k, k)
        finally:
            backend.use(prev)
        np.testing.assert_allclose(f_np, f_nb, atol=1e-10)
        np.testing.assert_allclose(gi_np, gi_nb, atol=1e-10)
        np.testing.assert_allclose(gw_np, gw_nb, atol=1e-10)


def test_numba_backend_deterministic(rng):
    x = rng.normal(size=(2, 4, 12, 12)).astype(np.float32)
    w = rng.normal(size=(4, 4, 3, 3)).astype(np.float32)
    prev = backend.use("numba")
    try:
        a = backend.conv2d_forward(x, w, 1, 1)
        b = backend.conv2d_forward(x, w, 1, 1)
    finally:
        backend.use(prev)
    np.testing.assert_array_equal(a, b)


def test_unknown_backend_rejected():
    with pytest.raises(ArgumentError):
        backend.use("tensorflow")


def test_use_returns_previous():
    prev = backend.use("numpy")
    assert backend.active_name() == "numpy"
    backend.use(prev)
    assert backend.active_name() == prev


def test_full_model_step_under_numba(rng):
    from gisr.model import MADUNet, ModelConfig
    from gisr.training import mae_loss
    from gisr.tensor import Tensor

    cfg = ModelConfig(K=1, C=8, r=2, target_bands=2, guide_bands=1)
    low = rng.random((1, 2, 8, 8)).astype(np.float32)
    guide = rng.random((1, 1, 16, 16)).astype(np.float32)
    gt = rng.random((1, 2, 16, 16)).astype(np.float32)
    prev = backend.use("numba")
    try:
        model = MADUNet(cfg, seed=0)
        out, _ = model.forward(low, guide)
        loss = mae_loss(out, Tensor(gt))
        model.zero_grad()
        loss.backward()
        grads = [p.grad for _, p in model.named_parameters() if p.grad is not None]
        assert grads and all(np.isfinite(g).all() for g in grads)
    finally:
        backend.use(prev)
