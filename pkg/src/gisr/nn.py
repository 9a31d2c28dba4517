"""Parameters, modules, and convolutional building blocks.

Initialization is uniform in +-sqrt(6/fan_in) from a caller-supplied
generator (biases zero), so a model is fully determined by its config
and seed.
"""

import numpy as np

from . import tensor as T
from .errors import ShapeError
from .tensor import Tensor


class Parameter(Tensor):
    """A trainable tensor with a dotted-path name (the checkpoint key)."""

    __slots__ = ("name",)

    def __init__(self, data, name=""):
        super().__init__(data, requires_grad=True)
        self.name = name


class Module:
    def __init__(self):
        object.__setattr__(self, "_params", {})
        object.__setattr__(self, "_modules", {})

    def __setattr__(self, key, value):
        if isinstance(value, Parameter):
            self._params[key] = value
        elif isinstance(value, Module):
            self._modules[key] = value
        object.__setattr__(self, key, value)

    def named_parameters(self, prefix=""):
        for k, p in self._params.items():
            yield prefix + k, p
        for k, m in self._modules.items():
            yield from m.named_parameters(prefix + k + ".")

    def parameters(self):
        return [p for _, p in self.named_parameters()]

    def zero_grad(self):
        for p in self.parameters():
            p.grad = None

    def param_count(self):
        return sum(p.data.size for p in self.parameters())

    def assign_names(self):
        """Stamp dotted-path names onto every parameter (must be unique)."""
        seen = set()
        for name, p in self.named_parameters():
            if name in seen:
                raise ShapeError(f"duplicate parameter name {name!r}")
            seen.add(name)
            p.name = name

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)


class ModuleList(Module):
    def __init__(self, modules=()):
        super().__init__()
        self._items = []
        for m in modules:
            self.append(m)

    def append(self, module):
        setattr(self, str(len(self._items)), module)
        self._items.append(module)

    def __iter__(self):
        return iter(self._items)

    def __len__(self):
        return len(self._items)

    def __getitem__(self, i):
        return self._items[i]


def _init_weight(shape, fan_in, rng, dtype):
    bound = float(np.sqrt(6.0 / fan_in))
    return rng.uniform(-bound, bound, size=shape).astype(dtype)


class Conv2d(Module):
    def __init__(self, cin, cout, k, stride=1, pad=None, bias=True, *, rng, dtype):
        super().__init__()
        self.stride = stride
        self.pad = k // 2 if pad is None else pad
        self.weight = Parameter(_init_weight((cout, cin, k, k), cin * k * k, rng, dtype))
        self.bias = Parameter(np.zeros(cout, dtype=dtype)) if bias else None

    def forward(self, x):
        return T.conv2d(x, self.weight, self.bias, self.stride, self.pad)


class ConvTranspose2d(Module):
    def __init__(self, cin, cout, k, stride, pad, bias=True, *, rng, dtype):
        super().__init__()
        self.stride = stride
        self.pad = pad
        self.weight = Parameter(_init_weight((cin, cout, k, k), cin * k * k, rng, dtype))
        self.bias = Parameter(np.zeros(cout, dtype=dtype)) if bias else None

    def forward(self, x):
        return T.conv2d_transpose(x, self.weight, self.bias, self.stride, self.pad)


class ResBlock(Module):
    """conv - leaky_relu - conv with identity skip."""

    def __init__(self, ch, *, rng, dtype):
        super().__init__()
        self.conv1 = Conv2d(ch, ch, 3, rng=rng, dtype=dtype)
        self.conv2 = Conv2d(ch, ch, 3, rng=rng, dtype=dtype)

    def forward(self, x):
        return x + self.conv2(T.leaky_relu(self.conv1(x)))


class CRB(Module):
    """Convolution + residual blocks; spatial dims preserved."""

    def __init__(self, cin, cout, n_res=1, *, rng, dtype):
        super().__init__()
        self.head = Conv2d(cin, cout, 3, rng=rng, dtype=dtype)
        self.blocks = ModuleList(ResBlock(cout, rng=rng, dtype=dtype)
                                 for _ in range(n_res))

    def forward(self, x):
        y = self.head(x)
        for blk in self.blocks:
            y = blk(y)
        return y


class CRBDown(Module):
    """CRB variant whose head conv reduces resolution by `ratio`."""

    def __init__(self, cin, cout, ratio, n_res=1, *, rng, dtype):
        super().__init__()
        self.head = Conv2d(cin, cout, 2 * ratio + 1, stride=ratio, pad=ratio,
                           rng=rng, dtype=dtype)
        self.blocks = ModuleList(ResBlock(cout, rng=rng, dtype=dtype)
                                 for _ in range(n_res))

    def forward(self, x):
        y = self.head(x)
        for blk in self.blocks:
            y = blk(y)
        return y


class CRBUp(Module):
    """CRB variant whose transposed-conv head expands resolution by `ratio`.

    Kernel 2*ratio with pad ratio/2 maps h -> h*ratio exactly (requires
    even ratio, which the model config guarantees).
    """

    def __init__(self, cin, cout, ratio, n_res=1, *, rng, dtype):
        super().__init__()
        self.head = ConvTranspose2d(cin, cout, 2 * ratio, stride=ratio,
                                    pad=ratio // 2, rng=rng, dtype=dtype)
        self.blocks = ModuleList(ResBlock(cout, rng=rng, dtype=dtype)
                                 for _ in range(n_res))

    def forward(self, x):
        y = self.head(x)
        for blk in self.blocks:
            y = blk(y)
        return y


class ConvLSTMCell(Module):
    """Convolutional LSTM cell (3x3 convs, pad 1).

    i = sig(Wsi*x + Whi*h + bi)        f = sig(Wsf*x + Whf*h + bf)
    c' = f.c + i.tanh(Wsc*x + Whc*h + bc)
    o = sig(Wso*x + Who*h + bo)        h' = o.tanh(c')

    The eight gate convolutions run as one fused conv over cat(x, h)
    with 4*ch outputs ordered (i, f, c, o); weight slices [:, :ch] are
    the W_s* kernels and [:, ch:] the W_h* kernels.
    """

    def __init__(self, ch, *, rng, dtype):
        super().__init__()
        self.ch = ch
        self.gates = Conv2d(2 * ch, 4 * ch, 3, rng=rng, dtype=dtype)

    def forward(self, x, h_prev, c_prev):
        if x.shape != h_prev.shape or x.shape != c_prev.shape:
            raise ShapeError("ConvLSTM states must match the input shape")
        ch = self.ch
        z = self.gates(T.concat_channels([x, h_prev]))
        i = T.sigmoid(T.slice_channels(z, 0, ch))
        f = T.sigmoid(T.slice_channels(z, ch, 2 * ch))
        c = f * c_prev + i * T.tanh(T.slice_channels(z, 2 * ch, 3 * ch))
        o = T.sigmoid(T.slice_channels(z, 3 * ch, 4 * ch))
        h = o * T.tanh(c)
        return h, c
