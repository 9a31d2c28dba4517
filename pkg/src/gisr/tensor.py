"""Dense tensors with reverse-mode automatic differentiation.

Values live in numpy arrays (float32 for training, float64 for oracle
tests); each operation records a vector-Jacobian closure so a scalar
loss can be backpropagated to every leaf created with
``requires_grad=True``. Convolution forward/backward passes dispatch
through :mod:`gisr.backend` to the numba or numpy kernels; everything
else is plain numpy.

Image tensors are laid out [batch, channel, height, width]. conv2d uses
the cross-correlation convention (no kernel flip) with zero padding;
conv2d_transpose is its exact adjoint.
"""

import os

import numpy as np

from . import backend
from .errors import ArgumentError, NumericError, ShapeError

DEBUG_CHECKS = os.environ.get("GISR_DEBUG", "") not in ("", "0")

_grad_enabled = True


class no_grad:
    """Context manager that pauses graph recording (inference mode)."""

    def __enter__(self):
        global _grad_enabled
        self._saved = _grad_enabled
        _grad_enabled = False
        return self

    def __exit__(self, *exc):
        global _grad_enabled
        _grad_enabled = self._saved
        return False


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_vjp", "_prev")

    def __init__(self, data, requires_grad=False, dtype=None):
        arr = np.asarray(data, dtype=dtype)
        if arr.dtype not in (np.float32, np.float64):
            arr = arr.astype(np.float64)
        self.data = arr
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self._vjp = None
        self._prev = ()

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    @property
    def dtype(self):
        return self.data.dtype

    def item(self):
        return float(self.data.reshape(-1)[0])

    def __repr__(self):
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype}{flag})"

    # -- autodiff -----------------------------------------------------

    def backward(self):
        """Backpropagate from a scalar; grads accumulate until zeroed."""
        if self.data.size != 1:
            raise ArgumentError(
                f"backward() expects a scalar loss, got shape {self.data.shape}")
        topo, seen, stack = [], set(), [(self, False)]
        while stack:
            node, done = stack.pop()
            if done:
                topo.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._prev:
                if id(p) not in seen:
                    stack.append((p, False))
        local = {id(self): np.ones_like(self.data)}
        for node in reversed(topo):
            g = local.pop(id(node), None)
            if g is None:
                continue
            if node._vjp is None:
                if node.requires_grad:
                    node.grad = g if node.grad is None else node.grad + g
                continue
            for parent, pg in zip(node._prev, node._vjp(g)):
                if pg is None or not parent.requires_grad:
                    continue
                pid = id(parent)
                local[pid] = pg if pid not in local else local[pid] + pg

    # -- operator sugar ------------------------------------------------

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def sum(self):
        return tsum(self)

    def mean(self):
        return tmean(self)

    def abs(self):
        return tabs(self)

    def reshape(self, *shape):
        return reshape(self, shape if len(shape) != 1 else shape[0])

    def transpose(self, *axes):
        return transpose(self, axes if len(axes) != 1 else axes[0])

    def detach(self):
        return Tensor(self.data)


def zeros(shape, dtype=np.float32):
    return Tensor(np.zeros(shape, dtype=dtype))


def _as_tensor(x, like=None):
    if isinstance(x, Tensor):
        return x
    dtype = like.data.dtype if like is not None else None
    return Tensor(np.asarray(x, dtype=dtype))


def _check_same_dtype(*ts):
    dt = ts[0].data.dtype
    for t in ts[1:]:
        if t.data.dtype != dt:
            raise ArgumentError(
                f"mixed dtypes {dt} and {t.data.dtype}; cast explicitly")


def _result(data, parents, vjp):
    out = Tensor(data)
    if DEBUG_CHECKS and not np.all(np.isfinite(data)):
        raise NumericError("operation produced non-finite values")
    if _grad_enabled and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._prev = tuple(parents)
        out._vjp = vjp
    return out


def _unbroadcast(g, shape):
    """Sum a broadcast gradient back down to `shape`."""
    extra = g.ndim - len(shape)
    if extra:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, (gs, ss) in enumerate(zip(g.shape, shape)) if ss == 1 and gs != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


# -- arithmetic ---------------------------------------------------------


def add(a, b):
    a = _as_tensor(a, b if isinstance(b, Tensor) else None)
    b = _as_tensor(b, a)
    _check_same_dtype(a, b)
    data = a.data + b.data

    def vjp(g):
        return _unbroadcast(g, a.data.shape), _unbroadcast(g, b.data.shape)

    return _result(data, (a, b), vjp)


def sub(a, b):
    a = _as_tensor(a, b if isinstance(b, Tensor) else None)
    b = _as_tensor(b, a)
    _check_same_dtype(a, b)
    data = a.data - b.data

    def vjp(g):
        return _unbroadcast(g, a.data.shape), -_unbroadcast(g, b.data.shape)

    return _result(data, (a, b), vjp)


def mul(a, b):
    a = _as_tensor(a, b if isinstance(b, Tensor) else None)
    b = _as_tensor(b, a)
    _check_same_dtype(a, b)
    data = a.data * b.data

    def vjp(g):
        return (_unbroadcast(g * b.data, a.data.shape),
                _unbroadcast(g * a.data, b.data.shape))

    return _result(data, (a, b), vjp)


def matmul(a, b):
    """Matrix product; 2-D or batched 3-D operands (numpy semantics)."""
    a, b = _as_tensor(a), _as_tensor(b)
    _check_same_dtype(a, b)
    if a.ndim < 2 or b.ndim < 2:
        raise ShapeError("matmul needs >=2-D operands")
    if a.data.shape[-1] != b.data.shape[-2]:
        raise ShapeError(
            f"matmul inner dims differ: {a.data.shape} x {b.data.shape}")
    data = np.matmul(a.data, b.data)

    def vjp(g):
        ga = np.matmul(g, np.swapaxes(b.data, -1, -2))
        gb = np.matmul(np.swapaxes(a.data, -1, -2), g)
        return _unbroadcast(ga, a.data.shape), _unbroadcast(gb, b.data.shape)

    return _result(data, (a, b), vjp)


def tsum(x):
    x = _as_tensor(x)
    data = np.array(x.data.sum(), dtype=x.data.dtype)

    def vjp(g):
        return (np.broadcast_to(g, x.data.shape).astype(x.data.dtype, copy=False),)

    return _result(data, (x,), vjp)


def tmean(x):
    x = _as_tensor(x)
    n = x.data.size
    data = np.array(x.data.mean(), dtype=x.data.dtype)

    def vjp(g):
        return (np.broadcast_to(g / n, x.data.shape).astype(x.data.dtype, copy=False),)

    return _result(data, (x,), vjp)


def tabs(x):
    x = _as_tensor(x)
    data = np.abs(x.data)

    def vjp(g):
        # subgradient 0 at exact ties
        return (g * np.sign(x.data),)

    return _result(data, (x,), vjp)


def reshape(x, shape):
    x = _as_tensor(x)
    data = x.data.reshape(shape)

    def vjp(g):
        return (g.reshape(x.data.shape),)

    return _result(data, (x,), vjp)


def transpose(x, axes):
    x = _as_tensor(x)
    axes = tuple(axes)
    data = x.data.transpose(axes)
    inv = tuple(np.argsort(axes))

    def vjp(g):
        return (g.transpose(inv),)

    return _result(data, (x,), vjp)


# -- activations --------------------------------------------------------


def sigmoid(x):
    x = _as_tensor(x)
    data = 0.5 * (np.tanh(0.5 * x.data) + 1.0)

    def vjp(g):
        return (g * data * (1.0 - data),)

    return _result(data, (x,), vjp)


def tanh(x):
    x = _as_tensor(x)
    data = np.tanh(x.data)

    def vjp(g):
        return (g * (1.0 - data * data),)

    return _result(data, (x,), vjp)


def relu(x):
    x = _as_tensor(x)
    data = np.maximum(x.data, 0)

    def vjp(g):
        return (g * (x.data > 0),)

    return _result(data, (x,), vjp)


LEAKY_SLOPE = 0.2


def leaky_relu(x):
    x = _as_tensor(x)
    data = np.where(x.data > 0, x.data, LEAKY_SLOPE * x.data)

    def vjp(g):
        return (g * np.where(x.data > 0, 1.0, LEAKY_SLOPE).astype(x.data.dtype),)

    return _result(data, (x,), vjp)


_ACTIVATIONS = {"sigmoid": sigmoid, "tanh": tanh, "relu": relu,
                "leaky_relu": leaky_relu}


def activation(x, kind):
    try:
        fn = _ACTIVATIONS[kind]
    except KeyError:
        raise ArgumentError(f"unknown activation {kind!r}") from None
    return fn(x)


def softmax(x, axis):
    x = _as_tensor(x)
    nd = x.ndim
    if not -nd <= axis < nd:
        raise ShapeError(f"softmax axis {axis} out of range for {nd}-D tensor")
    if axis < 0:
        axis += nd
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    data = e / e.sum(axis=axis, keepdims=True)

    def vjp(g):
        dot = (g * data).sum(axis=axis, keepdims=True)
        return (data * (g - dot),)

    return _result(data, (x,), vjp)


# -- structural ---------------------------------------------------------


def slice_channels(x, lo, hi):
    """View of channels [lo, hi) of a [B,C,H,W] tensor."""
    x = _as_tensor(x)
    if x.ndim != 4 or not 0 <= lo < hi <= x.data.shape[1]:
        raise ShapeError(
            f"cannot slice channels [{lo},{hi}) of shape {x.data.shape}")
    data = x.data[:, lo:hi]

    def vjp(g):
        gx = np.zeros_like(x.data)
        gx[:, lo:hi] = g
        return (gx,)

    return _result(data, (x,), vjp)


def concat_channels(xs):
    """Concatenate [B,Ci,H,W] tensors along the channel axis."""
    xs = [_as_tensor(x) for x in xs]
    if not xs:
        raise ArgumentError("concat_channels needs at least one tensor")
    _check_same_dtype(*xs)
    ref = xs[0].data.shape
    for t in xs[1:]:
        s = t.data.shape
        if len(s) != len(ref) or s[0] != ref[0] or s[2:] != ref[2:]:
            raise ShapeError(f"concat_channels mismatch: {ref} vs {s}")
    data = np.concatenate([t.data for t in xs], axis=1)
    offsets = np.cumsum([0] + [t.data.shape[1] for t in xs])

    def vjp(g):
        return tuple(g[:, offsets[i]:offsets[i + 1]] for i in range(len(xs)))

    return _result(data, tuple(xs), vjp)


# -- convolution --------------------------------------------------------


def conv2d(x, w, b=None, stride=1, pad=0):
    """2-D cross-correlation of x[B,Cin,H,W] with w[Cout,Cin,kh,kw]."""
    x, w = _as_tensor(x), _as_tensor(w)
    if x.ndim != 4 or w.ndim != 4:
        raise ShapeError("conv2d expects 4-D input and weight")
    bt, c, h, wd = x.data.shape
    o, ci, kh, kw = w.data.shape
    if ci != c:
        raise ShapeError(f"conv2d channel mismatch: input {c}, weight {ci}")
    if kh % 2 == 0 or kw % 2 == 0:
        raise ArgumentError(f"conv2d kernel dims must be odd, got {kh}x{kw}")
    if stride < 1:
        raise ArgumentError("conv2d stride must be >= 1")
    if h + 2 * pad < kh or wd + 2 * pad < kw:
        raise ArgumentError("conv2d kernel larger than padded input")
    parents = [x, w]
    if b is not None:
        b = _as_tensor(b)
        if b.data.shape != (o,):
            raise ShapeError(f"conv2d bias must be shape ({o},), got {b.data.shape}")
        _check_same_dtype(x, w, b)
        parents.append(b)
    else:
        _check_same_dtype(x, w)
    data = backend.conv2d_forward(x.data, w.data, stride, pad)
    if b is not None:
        data += b.data.reshape(1, -1, 1, 1)

    def vjp(g):
        g = np.ascontiguousarray(g)
        gx = (backend.conv2d_input_grad(g, w.data, stride, pad, h, wd)
              if x.requires_grad else None)
        gw = (backend.conv2d_weight_grad(x.data, g, stride, pad, kh, kw)
              if w.requires_grad else None)
        if b is not None:
            gb = g.sum(axis=(0, 2, 3)) if b.requires_grad else None
            return gx, gw, gb
        return gx, gw

    return _result(data, tuple(parents), vjp)


def conv2d_transpose(x, w, b=None, stride=1, pad=0):
    """Transposed convolution: exact adjoint of conv2d.

    Weight layout is [Cin, Cout, kh, kw]; output spatial size is
    (H-1)*stride - 2*pad + kh. Even kernels are allowed (an exact
    stride-times upsampler with even stride needs kh = stride + 2*pad).
    """
    x, w = _as_tensor(x), _as_tensor(w)
    if x.ndim != 4 or w.ndim != 4:
        raise ShapeError("conv2d_transpose expects 4-D input and weight")
    bt, c, h, wd = x.data.shape
    ci, o, kh, kw = w.data.shape
    if ci != c:
        raise ShapeError(f"conv2d_transpose channel mismatch: input {c}, weight {ci}")
    if stride < 1:
        raise ArgumentError("conv2d_transpose stride must be >= 1")
    ho = (h - 1) * stride - 2 * pad + kh
    wo = (wd - 1) * stride - 2 * pad + kw
    if ho < 1 or wo < 1:
        raise ArgumentError("conv2d_transpose output would be empty")
    parents = [x, w]
    if b is not None:
        b = _as_tensor(b)
        if b.data.shape != (o,):
            raise ShapeError(f"bias must be shape ({o},), got {b.data.shape}")
        _check_same_dtype(x, w, b)
        parents.append(b)
    else:
        _check_same_dtype(x, w)
    # x plays the output-grad role of a conv with weight w[Cin,Cout,...]
    data = backend.conv2d_input_grad(x.data, w.data, stride, pad, ho, wo)
    if b is not None:
        data = data + b.data.reshape(1, -1, 1, 1)

    def vjp(g):
        g = np.ascontiguousarray(g)
        gx = (backend.conv2d_forward(g, w.data, stride, pad)
              if x.requires_grad else None)
        gw = (backend.conv2d_weight_grad(g, x.data, stride, pad, kh, kw)
              if w.requires_grad else None)
        if b is not None:
            gb = g.sum(axis=(0, 2, 3)) if b.requires_grad else None
            return gx, gw, gb
        return gx, gw

    return _result(data, tuple(parents), vjp)


# -- resampling ---------------------------------------------------------


def _cubic_kernel(d):
    # Catmull-Rom (a = -0.5)
    x = abs(d)
    if x <= 1.0:
        return 1.5 * x**3 - 2.5 * x**2 + 1.0
    if x < 2.0:
        return -0.5 * x**3 + 2.5 * x**2 - 4.0 * x + 2.0
    return 0.0


_WEIGHT_CACHE = {}


def _resample_matrix(n_in, n_out, kind, dtype):
    """Row-interpolation matrix [n_out, n_in]; half-pixel centers, edge clamp."""
    key = (n_in, n_out, kind, np.dtype(dtype).str)
    cached = _WEIGHT_CACHE.get(key)
    if cached is not None:
        return cached
    scale = n_out / n_in
    mat = np.zeros((n_out, n_in), dtype=np.float64)
    for i in range(n_out):
        src = (i + 0.5) / scale - 0.5
        base = int(np.floor(src))
        t = src - base
        if kind == "bicubic":
            taps = ((-1, _cubic_kernel(t + 1)), (0, _cubic_kernel(t)),
                    (1, _cubic_kernel(t - 1)), (2, _cubic_kernel(t - 2)))
        else:
            taps = ((0, 1.0 - t), (1, t))
        for off, wt in taps:
            j = min(max(base + off, 0), n_in - 1)
            mat[i, j] += wt
    mat = mat.astype(dtype)
    _WEIGHT_CACHE[key] = mat
    return mat


def _resize2d(x, scale, kind):
    x = _as_tensor(x)
    if x.ndim != 4:
        raise ShapeError("resize expects a 4-D [B,C,H,W] tensor")
    _, _, h, wd = x.data.shape
    ho, wo = h * scale, wd * scale
    if abs(ho - round(ho)) > 1e-9 or abs(wo - round(wo)) > 1e-9:
        raise ArgumentError(
            f"scale {scale} does not give integer output dims for {h}x{wd}")
    ho, wo = int(round(ho)), int(round(wo))
    mr = _resample_matrix(h, ho, kind, x.data.dtype)
    mc = _resample_matrix(wd, wo, kind, x.data.dtype)
    data = np.matmul(mr, np.matmul(x.data, mc.T))

    def vjp(g):
        return (np.matmul(mr.T, np.matmul(g, mc)),)

    return _result(data, (x,), vjp)


def bicubic_resize(x, scale):
    """Catmull-Rom bicubic resize (a=-0.5, edge clamp, half-pixel centers)."""
    return _resize2d(x, scale, "bicubic")


def bilinear_resize(x, scale):
    return _resize2d(x, scale, "bilinear")
