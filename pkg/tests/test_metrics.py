import numpy as np
import pytest

from gisr import metrics as M
from gisr.errors import ArgumentError, NumericError, ShapeError

from oracles import q_index_double_loop, ssim_double_loop


class TestPsnr:
    def test_identical_capped_at_100(self, rng):
        x = rng.random((2, 16, 16))
        assert M.psnr(x, x) == 100.0

    def test_constant_half_error(self):
        a = np.zeros((1, 8, 8))
        b = np.full((1, 8, 8), 0.5)
        assert abs(M.psnr(a, b) - 6.0206) < 1e-3

    def test_doubling_error_costs_exactly(self, rng):
        gt = rng.random((1, 16, 16)) * 0.5 + 0.25
        noise = rng.normal(size=gt.shape) * 0.01
        drop = M.psnr(gt + noise, gt) - M.psnr(gt + 2 * noise, gt)
        assert abs(drop - 20 * np.log10(2)) < 1e-9

    def test_shape_mismatch(self, rng):
        with pytest.raises(ShapeError):
            M.psnr(rng.random((1, 4, 4)), rng.random((1, 5, 5)))


class TestSsim:
    def test_identical_is_one(self, rng):
        x = rng.random((2, 16, 16))
        assert abs(M.ssim(x, x) - 1.0) < 1e-12

    def test_inverted_binary_negative(self, rng):
        gt = (rng.random((1, 16, 16)) > 0.5).astype(np.float64)
        assert M.ssim(1.0 - gt, gt) < 0

    def test_matches_double_loop_oracle(self, rng):
        pred = rng.random((16, 16))
        gt = rng.random((16, 16))
        assert abs(M.ssim(pred, gt) - ssim_double_loop(pred, gt)) < 1e-8

    def test_too_small_rejected(self, rng):
        with pytest.raises(ArgumentError):
            M.ssim(rng.random((1, 8, 8)), rng.random((1, 8, 8)))


class TestSam:
    def test_identical_zero(self, rng):
        x = rng.random((3, 8, 8)) + 0.1
        assert M.sam(x, x) < 1e-7

    def test_scale_invariant(self, rng):
        gt = rng.random((3, 8, 8)) + 0.1
        assert M.sam(2.0 * gt, gt) < 1e-7
        scale = rng.random((8, 8)) + 0.5
        assert M.sam(gt * scale, gt) < 1e-7

    def test_orthogonal_half_pi(self):
        pred = np.zeros((2, 4, 4)); pred[0] = 1.0
        gt = np.zeros((2, 4, 4)); gt[1] = 1.0
        assert abs(M.sam(pred, gt) - np.pi / 2) < 1e-12

    def test_single_band_rejected(self, rng):
        with pytest.raises(ArgumentError):
            M.sam(rng.random((1, 4, 4)), rng.random((1, 4, 4)))


class TestErgas:
    def test_identical_zero(self, rng):
        x = rng.random((3, 8, 8)) + 0.1
        assert M.ergas(x, x, 4) == 0.0

    def test_rmse_equals_mean_r4(self):
        gt = np.full((1, 8, 8), 0.5)
        pred = gt + 0.5  # RMSE = 0.5 = band mean
        assert abs(M.ergas(pred, gt, 4) - 25.0) < 1e-9

    def test_scales_inversely_with_r(self, rng):
        gt = rng.random((2, 8, 8)) + 0.5
        pred = gt + rng.normal(size=gt.shape) * 0.05
        assert abs(M.ergas(pred, gt, 2) - 2 * M.ergas(pred, gt, 4)) < 1e-9

    def test_zero_band_mean_rejected(self, rng):
        with pytest.raises(NumericError):
            M.ergas(rng.random((1, 4, 4)), np.zeros((1, 4, 4)), 2)


class TestScc:
    def test_identical_nonconstant_one(self, rng):
        x = rng.random((2, 12, 12))
        assert abs(M.scc(x, x) - 1.0) < 1e-12

    def test_negated_is_minus_one(self, rng):
        gt = rng.random((1, 12, 12))
        assert abs(M.scc(-gt, gt) + 1.0) < 1e-12

    def test_constant_defined_as_zero(self):
        c = np.full((1, 12, 12), 0.3)
        assert M.scc(c, c + 0.1) == 0.0


class TestQIndex:
    def test_identical_is_one(self, rng):
        x = rng.random((1, 16, 16))
        assert abs(M.q_index(x, x) - 1.0) < 1e-12

    def test_matches_double_loop_oracle(self, rng):
        pred = rng.random((16, 16))
        gt = rng.random((16, 16))
        assert abs(M.q_index(pred, gt) - q_index_double_loop(pred, gt)) < 1e-8

    def test_symmetric_in_arguments(self, rng):
        a, b = rng.random((1, 16, 16)), rng.random((1, 16, 16))
        assert abs(M.q_index(a, b) - M.q_index(b, a)) < 1e-12

    def test_too_small_rejected(self, rng):
        with pytest.raises(ArgumentError):
            M.q_index(rng.random((4, 4)), rng.random((4, 4)))


class TestRmse:
    def test_identical_zero(self, rng):
        x = rng.random((2, 8, 8))
        assert M.rmse(x, x) == 0.0
        assert M.rmse(x, x, quantize8=True) == 0.0

    def test_quantized_full_scale(self):
        assert M.rmse(np.zeros((1, 4, 4)), np.ones((1, 4, 4)), quantize8=True) == 255.0

    def test_unquantized_half(self):
        assert M.rmse(np.zeros((1, 4, 4)), np.full((1, 4, 4), 0.5)) == 0.5


class TestBattery:
    def test_ideal_values_on_identical(self, rng):
        x = rng.random((4, 16, 16)) * 0.8 + 0.1
        rep = M.report(x, x, r=2)
        assert rep.psnr == 100.0
        assert abs(rep.ssim - 1.0) < 1e-12
        assert rep.sam < 1e-7
        assert rep.ergas == 0.0
        assert abs(rep.scc - 1.0) < 1e-12
        assert abs(rep.q - 1.0) < 1e-12
        assert rep.rmse == 0.0

    def test_noise_monotonicity_over_seeds(self):
        gt = np.clip(np.random.default_rng(7).random((1, 16, 16)), 0.05, 0.95)
        stats = {0.02: [], 0.08: []}
        for seed in range(20):
            g = np.random.default_rng(seed)
            noise = g.normal(size=gt.shape)
            for sigma in stats:
                noisy = np.clip(gt + sigma * noise, 0, 1)
                stats[sigma].append((M.psnr(noisy, gt), M.ssim(noisy, gt)))
        psnr_small = np.mean([v[0] for v in stats[0.02]])
        psnr_big = np.mean([v[0] for v in stats[0.08]])
        ssim_small = np.mean([v[1] for v in stats[0.02]])
        ssim_big = np.mean([v[1] for v in stats[0.08]])
        assert psnr_small >= psnr_big
        assert ssim_small >= ssim_big
