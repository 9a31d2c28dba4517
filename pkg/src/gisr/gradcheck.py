"""Finite-difference verification of every differentiable operation.

Each check builds a scalar-valued function of one or more float64
tensors, backpropagates it, and compares against central differences
(eps 1e-4). Errors are relative with a unit floor:
|a - b| / max(|a|, |b|, 1). The CLI `gradcheck` command and the
acceptance suite both run these.
"""

import numpy as np

from . import tensor as T
from .errors import ArgumentError
from .model import CNL, HNet, MADUNet, ModelConfig, PriorNet
from .nn import CRB, ConvLSTMCell
from .tensor import Tensor

EPS = 1e-4


def rel_error(a, b):
    """Max elementwise relative error with a unit floor."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    denom = np.maximum(1.0, np.maximum(np.abs(a), np.abs(b)))
    return float(np.max(np.abs(a - b) / denom)) if a.size else 0.0


def fd_gradient(fn, arrays, idx, eps=EPS):
    """Central-difference gradient of fn w.r.t. arrays[idx]."""
    base = [a.copy() for a in arrays]
    grad = np.zeros_like(base[idx])
    flat = base[idx].reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        keep = flat[i]
        flat[i] = keep + eps
        hi = fn(*base)
        flat[i] = keep - eps
        lo = fn(*base)
        flat[i] = keep
        gflat[i] = (hi - lo) / (2 * eps)
    return grad


def check_function(fn, arrays, eps=EPS):
    """Compare autodiff grads of fn against finite differences.

    fn maps Tensors to a scalar Tensor; arrays are float64 numpy inputs.
    Returns the worst relative error over all inputs.
    """
    tensors = [Tensor(a.astype(np.float64), requires_grad=True) for a in arrays]
    loss = fn(*tensors)
    loss.backward()

    def value(*arrs):
        with T.no_grad():
            return fn(*[Tensor(a) for a in arrs]).item()

    worst = 0.0
    for i, t in enumerate(tensors):
        fd = fd_gradient(value, arrays, i, eps)
        worst = max(worst, rel_error(t.grad, fd))
    return worst


def check_parameters(module, fn, n_sample, rng, eps=EPS):
    """FD-check a random sample of a module's parameters against autodiff.

    fn() evaluates the scalar loss from the module's current parameters.
    """
    module.zero_grad()
    loss = fn()
    loss.backward()
    flat = []
    for name, p in module.named_parameters():
        for j in range(p.data.size):
            flat.append((name, p, j))
    take = min(n_sample, len(flat))
    picks = rng.choice(len(flat), size=take, replace=False)
    worst = 0.0
    for k in sorted(picks):
        name, p, j = flat[k]
        keep = p.data.reshape(-1)[j]
        with T.no_grad():
            p.data.reshape(-1)[j] = keep + eps
            hi = fn().item()
            p.data.reshape(-1)[j] = keep - eps
            lo = fn().item()
            p.data.reshape(-1)[j] = keep
        fd = (hi - lo) / (2 * eps)
        ad = 0.0 if p.grad is None else p.grad.reshape(-1)[j]
        worst = max(worst, rel_error(ad, fd))
    return worst


def _wsum(x):
    """Fixed projection: scalar that stays sensitive to every element."""
    n = int(np.prod(x.shape))
    w = np.cos(np.arange(1, n + 1, dtype=np.float64)).reshape(x.shape)
    return (x * Tensor(w)).sum()


def _build_checks(seed):
    rng = np.random.default_rng(seed)

    def rnd(*shape):
        return rng.normal(size=shape)

    checks = {}

    def op(name):
        def wrap(fn):
            checks[name] = fn
            return fn
        return wrap

    @op("add")
    def _():
        return check_function(lambda a, b: _wsum(a + b),
                              [rnd(3, 4), rnd(3, 4)])

    @op("sub")
    def _():
        return check_function(lambda a, b: _wsum(a - b),
                              [rnd(3, 4), rnd(3, 4)])

    @op("mul")
    def _():
        return check_function(lambda a, b: _wsum(a * b),
                              [rnd(3, 4), rnd(3, 4)])

    @op("mul_scalar_broadcast")
    def _():
        return check_function(lambda s, x: _wsum(s * x),
                              [rnd(1), rnd(2, 3, 4, 4)])

    @op("matmul")
    def _():
        return check_function(lambda a, b: _wsum(T.matmul(a, b)),
                              [rnd(3, 4), rnd(4, 5)])

    @op("matmul_batched")
    def _():
        return check_function(lambda a, b: _wsum(T.matmul(a, b)),
                              [rnd(2, 3, 4), rnd(2, 4, 5)])

    @op("softmax")
    def _():
        return check_function(lambda x: _wsum(T.softmax(x, -1)),
                              [rnd(3, 6)])

    @op("sigmoid")
    def _():
        return check_function(lambda x: _wsum(T.sigmoid(x)), [rnd(3, 5)])

    @op("tanh")
    def _():
        return check_function(lambda x: _wsum(T.tanh(x)), [rnd(3, 5)])

    @op("relu")
    def _():
        # keep entries away from the kink
        x = rnd(3, 5)
        x[np.abs(x) < 0.1] += 0.2
        return check_function(lambda x: _wsum(T.relu(x)), [x])

    @op("leaky_relu")
    def _():
        x = rnd(3, 5)
        x[np.abs(x) < 0.1] += 0.2
        return check_function(lambda x: _wsum(T.leaky_relu(x)), [x])

    @op("abs")
    def _():
        x = rnd(3, 5)
        x[np.abs(x) < 0.1] += 0.2
        return check_function(lambda x: _wsum(x.abs()), [x])

    @op("mean")
    def _():
        return check_function(lambda x: x.mean(), [rnd(3, 5)])

    @op("sum")
    def _():
        return check_function(lambda x: x.sum(), [rnd(3, 5)])

    @op("reshape_transpose")
    def _():
        return check_function(
            lambda x: _wsum(x.reshape(2, 3, 8).transpose(0, 2, 1)),
            [rnd(2, 3, 2, 4)])

    @op("slice_channels")
    def _():
        return check_function(
            lambda x: _wsum(T.slice_channels(x, 1, 3)),
            [rnd(2, 4, 3, 3)])

    @op("concat_channels")
    def _():
        return check_function(
            lambda a, b: _wsum(T.concat_channels([a, b])),
            [rnd(2, 2, 3, 3), rnd(2, 3, 3, 3)])

    @op("conv2d")
    def _():
        return check_function(
            lambda x, w, b: _wsum(T.conv2d(x, w, b, 1, 1)),
            [rnd(1, 2, 5, 5), rnd(3, 2, 3, 3), rnd(3)])

    @op("conv2d_strided")
    def _():
        return check_function(
            lambda x, w, b: _wsum(T.conv2d(x, w, b, 2, 2)),
            [rnd(2, 2, 6, 6), rnd(3, 2, 5, 5), rnd(3)])

    @op("conv2d_transpose")
    def _():
        return check_function(
            lambda x, w, b: _wsum(T.conv2d_transpose(x, w, b, 2, 1)),
            [rnd(1, 2, 4, 4), rnd(2, 3, 4, 4), rnd(3)])

    @op("bicubic_resize")
    def _():
        return check_function(
            lambda x: _wsum(T.bicubic_resize(x, 2)),
            [rnd(1, 2, 4, 4)])

    @op("bilinear_resize")
    def _():
        return check_function(
            lambda x: _wsum(T.bilinear_resize(x, 2)),
            [rnd(1, 2, 4, 4)])

    def module_loss(module, *inputs):
        out = module(*inputs)
        if not isinstance(out, tuple):
            return _wsum(out)
        # stages return (image, memory, h, c): fold in every output so
        # the memory path is exercised too
        total = None
        for part in out:
            term = _wsum(part)
            total = term if total is None else total + term
        return total

    @op("crb")
    def _():
        crb = CRB(2, 3, 1, rng=rng, dtype=np.float64)
        x = Tensor(rnd(1, 2, 6, 6))
        return check_parameters(crb, lambda: module_loss(crb, x), 24, rng)

    @op("convlstm_step")
    def _():
        cell = ConvLSTMCell(2, rng=rng, dtype=np.float64)
        x = Tensor(rnd(1, 2, 5, 5))
        h0 = Tensor(rnd(1, 2, 5, 5))
        c0 = Tensor(rnd(1, 2, 5, 5))

        def two_steps():
            h1, c1 = cell(x, h0, c0)
            h2, _ = cell(x, h1, c1)
            return _wsum(h2)

        return check_parameters(cell, two_steps, 24, rng)

    def _toy_cfg():
        return ModelConfig(K=2, C=8, r=2, target_bands=2, guide_bands=1,
                           dtype="float64")

    @op("cnl_forward")
    def _():
        cnl = CNL(8, 1, rng=rng, dtype=np.float64)
        hf = Tensor(rnd(1, 8, 8, 8))
        pf = Tensor(rnd(1, 8, 8, 8))
        return check_parameters(cnl, lambda: module_loss(cnl, hf, pf), 24, rng)

    @op("unet_stage")
    def _():
        net = PriorNet(_toy_cfg(), rng=rng, dtype=np.float64)
        args = (Tensor(rnd(1, 2, 8, 8)), Tensor(rnd(1, 2, 8, 8)),
                Tensor(rnd(1, 8, 8, 8)), Tensor(rnd(1, 8, 8, 8)),
                Tensor(rnd(1, 8, 8, 8)), Tensor(rnd(1, 8, 8, 8)))
        return check_parameters(net, lambda: module_loss(net, *args), 24, rng)

    @op("vnet_stage")
    def _():
        net = PriorNet(_toy_cfg(), rng=rng, dtype=np.float64)
        args = (Tensor(rnd(1, 2, 8, 8)), Tensor(rnd(1, 2, 8, 8)),
                Tensor(rnd(1, 8, 8, 8)), Tensor(rnd(1, 8, 8, 8)),
                Tensor(rnd(1, 8, 8, 8)), Tensor(rnd(1, 8, 8, 8)))
        return check_parameters(net, lambda: module_loss(net, *args), 24, rng)

    @op("hnet_stage")
    def _():
        net = HNet(_toy_cfg(), rng=rng, dtype=np.float64)
        args = (Tensor(rnd(1, 2, 8, 8)), Tensor(rnd(1, 2, 4, 4)),
                Tensor(rnd(1, 2, 8, 8)), Tensor(rnd(1, 2, 8, 8)),
                Tensor(rnd(1, 8, 8, 8)), Tensor(rnd(1, 8, 8, 8)),
                Tensor(rnd(1, 8, 8, 8)))
        return check_parameters(net, lambda: module_loss(net, *args), 24, rng)

    @op("madunet_forward")
    def _():
        model = MADUNet(_toy_cfg(), seed=int(rng.integers(1 << 31)))
        low = rng.random((1, 2, 4, 4))
        guide = rng.random((1, 1, 8, 8))
        target = rng.random((1, 2, 8, 8))

        def full_loss():
            pred, _ = model.forward(low, guide)
            return (pred - Tensor(target)).abs().mean()

        return check_parameters(model, full_loss, 20, rng)

    return checks


def run_suite(op=None, seed=0):
    """Run all checks (or one, by name); returns [(name, max_rel_err)]."""
    checks = _build_checks(seed)
    if op is not None:
        if op not in checks:
            raise ArgumentError(
                f"unknown op {op!r}; choose from {', '.join(sorted(checks))}")
        checks = {op: checks[op]}
    return [(name, fn()) for name, fn in checks.items()]
