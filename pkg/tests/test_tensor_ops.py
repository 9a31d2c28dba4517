import numpy as np
import pytest

import gisr.tensor as T
from gisr import backend
from gisr.errors import ArgumentError, ShapeError
from gisr.tensor import Tensor

from oracles import conv2d_bruteforce


class TestConv2d:
    def test_ones_kernel_hand_values(self):
        x = Tensor(np.ones((1, 1, 5, 5)))
        w = Tensor(np.ones((1, 1, 3, 3)))
        y = T.conv2d(x, w, stride=1, pad=1)
        assert y.data[0, 0, 2, 2] == 9.0
        assert y.data[0, 0, 0, 0] == 4.0
        assert y.data[0, 0, 0, 2] == 6.0

    def test_delta_kernel_is_identity(self, rng):
        x = Tensor(rng.random((2, 3, 6, 6)))
        w = np.zeros((3, 3, 3, 3))
        for c in range(3):
            w[c, c, 1, 1] = 1.0
        y = T.conv2d(x, Tensor(w), stride=1, pad=1)
        np.testing.assert_array_equal(y.data, x.data)

    def test_output_shape_formula(self, rng):
        x = Tensor(rng.random((1, 1, 4, 4)))
        # 2x2 kernels are rejected (odd-size precondition), use 3x3 stride 2
        y = T.conv2d(x, Tensor(rng.random((2, 1, 3, 3))), stride=2, pad=1)
        assert y.shape == (1, 2, 2, 2)

    def test_matches_bruteforce(self, rng):
        for (stride, pad, k) in [(1, 1, 3), (2, 2, 5), (1, 0, 3), (3, 1, 3)]:
            x = rng.normal(size=(2, 3, 9, 9))
            w = rng.normal(size=(4, 3, k, k))
            got = T.conv2d(Tensor(x), Tensor(w), stride=stride, pad=pad)
            want = conv2d_bruteforce(x, w, stride, pad)
            np.testing.assert_allclose(got.data, want, atol=1e-12)

    def test_bias(self, rng):
        x = Tensor(rng.random((1, 2, 4, 4)))
        w = Tensor(np.zeros((3, 2, 3, 3)))
        b = Tensor(np.array([1.0, 2.0, 3.0]))
        y = T.conv2d(x, w, b, stride=1, pad=1)
        for c in range(3):
            np.testing.assert_allclose(y.data[0, c], c + 1.0)

    def test_channel_mismatch_raises(self, rng):
        with pytest.raises(ShapeError):
            T.conv2d(Tensor(rng.random((1, 2, 4, 4))),
                     Tensor(rng.random((1, 3, 3, 3))), stride=1, pad=1)

    def test_even_kernel_rejected(self, rng):
        with pytest.raises(ArgumentError):
            T.conv2d(Tensor(rng.random((1, 1, 4, 4))),
                     Tensor(rng.random((1, 1, 2, 2))), stride=1, pad=0)


class TestConvTranspose:
    def test_adjoint_identity_4x4_grad_side(self, rng):
        # 3x3 kernel, stride 2, 4x4 output side; 7x7 input keeps
        # (h + 2p - k) divisible by the stride so the shapes close
        x = rng.normal(size=(1, 1, 7, 7))
        w = rng.normal(size=(1, 1, 3, 3))
        y = rng.normal(size=(1, 1, 4, 4))
        conv = T.conv2d(Tensor(x), Tensor(w), stride=2, pad=1)
        assert conv.shape == y.shape
        back = T.conv2d_transpose(Tensor(y), Tensor(w), stride=2, pad=1)
        assert back.shape == (1, 1, 7, 7)
        lhs = float((conv.data * y).sum())
        rhs = float((x * back.data).sum())
        assert abs(lhs - rhs) < 1e-10

    def test_adjoint_identity_50_random_combos(self, rng):
        done = 0
        while done < 50:
            h = int(rng.integers(4, 12))
            k = int(rng.integers(1, 5))
            s = int(rng.integers(1, 4))
            p = int(rng.integers(0, 3))
            if h + 2 * p < k or (h + 2 * p - k) % s:
                continue
            cin, cout = int(rng.integers(1, 4)), int(rng.integers(1, 4))
            b = int(rng.integers(1, 3))
            ho = (h + 2 * p - k) // s + 1
            x = rng.normal(size=(b, cin, h, h))
            w = rng.normal(size=(cout, cin, k, k))
            y = rng.normal(size=(b, cout, ho, ho))
            if k % 2 == 1:
                fwd = T.conv2d(Tensor(x), Tensor(w), stride=s, pad=p).data
            else:
                fwd = conv2d_bruteforce(x, w, s, p)
            back = T.conv2d_transpose(Tensor(y), Tensor(w), stride=s, pad=p).data
            assert back.shape == x.shape
            assert abs((fwd * y).sum() - (x * back).sum()) < 1e-10
            done += 1

    def test_shape_formula(self, rng):
        x = Tensor(rng.random((1, 1, 2, 2)))
        w = Tensor(rng.random((1, 1, 2, 2)))
        y = T.conv2d_transpose(x, w, stride=2, pad=0)
        assert y.shape == (1, 1, 4, 4)

    def test_delta_kernel_stride1_identity(self, rng):
        x = Tensor(rng.random((1, 2, 5, 5)))
        w = np.zeros((2, 2, 3, 3))
        for c in range(2):
            w[c, c, 1, 1] = 1.0
        y = T.conv2d_transpose(x, Tensor(w), stride=1, pad=1)
        np.testing.assert_allclose(y.data, x.data, atol=1e-15)

    def test_channel_mismatch(self, rng):
        with pytest.raises(ShapeError):
            T.conv2d_transpose(Tensor(rng.random((1, 2, 4, 4))),
                               Tensor(rng.random((3, 2, 3, 3))), stride=1, pad=1)


class TestMatmul:
    def test_identity(self, rng):
        b = rng.random((3, 4))
        out = T.matmul(Tensor(np.eye(3)), Tensor(b))
        np.testing.assert_allclose(out.data, b)

    def test_hand_value(self):
        a = Tensor(np.array([[1.0, 2.0], [3.0, 4.0]]))
        b = Tensor(np.array([[5.0, 6.0], [7.0, 8.0]]))
        np.testing.assert_array_equal(T.matmul(a, b).data,
                                      [[19.0, 22.0], [43.0, 50.0]])

    def test_inner_dim_mismatch(self, rng):
        with pytest.raises(ShapeError):
            T.matmul(Tensor(rng.random((2, 3))), Tensor(rng.random((2, 3))))

    def test_batched(self, rng):
        a = rng.random((4, 2, 3))
        b = rng.random((4, 3, 5))
        out = T.matmul(Tensor(a), Tensor(b))
        np.testing.assert_allclose(out.data, a @ b)


class TestSoftmax:
    def test_symmetry(self):
        out = T.softmax(Tensor(np.array([0.0, 0.0])), axis=0)
        np.testing.assert_allclose(out.data, [0.5, 0.5])

    def test_hand_value(self):
        out = T.softmax(Tensor(np.array([0.0, np.log(3.0)])), axis=0)
        np.testing.assert_allclose(out.data, [0.25, 0.75], atol=1e-12)

    def test_shift_invariance(self, rng):
        x = rng.normal(size=(3, 5))
        a = T.softmax(Tensor(x), axis=1).data
        b = T.softmax(Tensor(x + 123.456), axis=1).data
        np.testing.assert_allclose(a, b, atol=1e-12)

    def test_rows_sum_to_one_and_positive(self, rng):
        x = rng.normal(size=(4, 7)) * 50
        out = T.softmax(Tensor(x), axis=-1).data
        np.testing.assert_allclose(out.sum(axis=-1), 1.0, atol=1e-6)
        assert (out > 0).all()

    def test_axis_out_of_range(self, rng):
        with pytest.raises(ShapeError):
            T.softmax(Tensor(rng.random((2, 2))), axis=2)


class TestActivations:
    def test_values(self):
        assert T.activation(Tensor(np.array([0.0])), "sigmoid").data[0] == 0.5
        assert T.activation(Tensor(np.array([0.0])), "tanh").data[0] == 0.0
        x = Tensor(np.array([-2.0, 3.0]))
        np.testing.assert_array_equal(T.activation(x, "relu").data, [0.0, 3.0])
        np.testing.assert_allclose(T.activation(x, "leaky_relu").data, [-0.4, 3.0])

    def test_ranges(self, rng):
        x = Tensor(rng.normal(size=100) * 5)
        s = T.sigmoid(x).data
        t = T.tanh(x).data
        assert (s > 0).all() and (s < 1).all()
        assert (t > -1).all() and (t < 1).all()
        # saturated values may round to the closed endpoints but never beyond
        big = T.sigmoid(Tensor(np.array([-1e3, 1e3]))).data
        assert big[0] >= 0.0 and big[1] <= 1.0

    def test_unknown_kind(self):
        with pytest.raises(ArgumentError):
            T.activation(Tensor(np.zeros(2)), "gelu")


class TestConcat:
    def test_single_is_identity(self, rng):
        x = Tensor(rng.random((1, 2, 3, 3)))
        np.testing.assert_array_equal(T.concat_channels([x]).data, x.data)

    def test_order_and_counts(self, rng):
        a = Tensor(rng.random((1, 2, 3, 3)))
        b = Tensor(rng.random((1, 3, 3, 3)))
        out = T.concat_channels([a, b])
        assert out.shape == (1, 5, 3, 3)
        np.testing.assert_array_equal(out.data[:, :2], a.data)
        np.testing.assert_array_equal(out.data[:, 2:], b.data)

    def test_spatial_mismatch(self, rng):
        with pytest.raises(ShapeError):
            T.concat_channels([Tensor(rng.random((1, 1, 3, 3))),
                               Tensor(rng.random((1, 1, 4, 3)))])


class TestResize:
    def test_constant_preserved(self):
        x = Tensor(np.full((1, 2, 4, 4), 0.37))
        for scale in (2, 3, 0.5):
            out = T.bicubic_resize(x, scale)
            np.testing.assert_allclose(out.data, 0.37, atol=1e-6)

    def test_linear_ramp_reproduced(self):
        ramp = np.arange(16, dtype=np.float64)
        x = Tensor(np.broadcast_to(ramp, (1, 1, 16, 16)).copy())
        out = T.bicubic_resize(x, 2).data[0, 0]
        expect = (np.arange(32) + 0.5) / 2 - 0.5
        np.testing.assert_allclose(out[8, 4:-4], expect[4:-4], atol=1e-5)

    def test_shape(self, rng):
        out = T.bicubic_resize(Tensor(rng.random((1, 1, 4, 4))), 2)
        assert out.shape == (1, 1, 8, 8)

    def test_non_integer_dims_rejected(self, rng):
        with pytest.raises(ArgumentError):
            T.bicubic_resize(Tensor(rng.random((1, 1, 5, 5))), 1.5)

    def test_bilinear_constant(self):
        out = T.bilinear_resize(Tensor(np.full((1, 1, 4, 4), 0.2)), 2)
        np.testing.assert_allclose(out.data, 0.2, atol=1e-12)


class TestDeterminism:
    @pytest.mark.parametrize("name", ["numpy", "numba"])
    def test_conv_bit_identical_reruns(self, rng, name):
        if name not in backend.available():
            pytest.skip(f"{name} backend unavailable")
        prev = backend.use(name)
        try:
            x = Tensor(rng.normal(size=(2, 3, 8, 8)).astype(np.float32))
            w = Tensor(rng.normal(size=(4, 3, 3, 3)).astype(np.float32))
            a = T.conv2d(x, w, stride=1, pad=1).data
            b = T.conv2d(x, w, stride=1, pad=1).data
            np.testing.assert_array_equal(a, b)
        finally:
            backend.use(prev)

    def test_mixed_dtype_rejected(self, rng):
        a = Tensor(rng.random((2, 2)).astype(np.float32))
        b = Tensor(rng.random((2, 2)).astype(np.float64))
        with pytest.raises(ArgumentError):
            _ = a + b
