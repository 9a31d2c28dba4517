import numpy as np
import pytest

from gisr import degradation as D
from gisr import hqs
from gisr.errors import ArgumentError, NumericError, ShapeError

from oracles import dense_degradation_matrix, power_iteration_norm


@pytest.fixture
def spec():
    return D.default_spec(2)


class TestGradF1F2:
    def test_zero_when_equal(self, rng):
        x = rng.random((1, 4, 4))
        np.testing.assert_array_equal(hqs.grad_f1(x, x), 0.0 * x)
        np.testing.assert_array_equal(hqs.grad_f2(x, x), 0.0 * x)

    def test_constant_difference(self):
        one = np.ones((1, 3, 3))
        np.testing.assert_array_equal(hqs.grad_f1(one, 0 * one), one)
        np.testing.assert_allclose(hqs.grad_f2(0.5 * one, 0.25 * one), 0.25)

    def test_random_matches_subtraction(self, rng):
        a, b = rng.random((2, 5, 5)), rng.random((2, 5, 5))
        np.testing.assert_array_equal(hqs.grad_f1(a, b), a - b)
        np.testing.assert_array_equal(hqs.grad_f2(a, b), a - b)

    def test_shape_mismatch(self, rng):
        with pytest.raises(ShapeError):
            hqs.grad_f1(rng.random((1, 4, 4)), rng.random((1, 5, 5)))


class TestGradF3:
    def test_zero_at_consistency(self, rng, spec):
        h = rng.random((1, 8, 8))
        low = D.degrade(h, spec)
        params = hqs.HqsParams(eta1=0.5, lambda1=0.5, iters=1)
        g = hqs.grad_f3(h, low, h.copy(), h.copy(), spec, params)
        assert np.abs(g).max() < 1e-10

    def test_pure_data_term_matches_dense_oracle(self, rng, spec):
        params = hqs.HqsParams(eta1=0.0, lambda1=0.0, iters=1)
        h = rng.random((1, 8, 8))
        low = rng.random((1, 4, 4))
        mat = dense_degradation_matrix(spec.kernel, 2, 8, 8)
        want = mat.T @ (mat @ h.ravel() - low.ravel())
        got = hqs.grad_f3(h, low, np.zeros_like(h), np.zeros_like(h), spec, params)
        np.testing.assert_allclose(got.ravel(), want, atol=1e-8)

    def test_coupling_term_only(self, rng, spec):
        params = hqs.HqsParams(eta1=1.0, lambda1=0.0, iters=1)
        h = rng.random((1, 8, 8))
        low = D.degrade(h, spec)
        u = rng.random((1, 8, 8))
        g = hqs.grad_f3(h, low, u, h.copy(), spec, params)
        np.testing.assert_allclose(g, h - u, atol=1e-12)

    def test_matches_objective_finite_differences(self, rng, spec):
        params = hqs.HqsParams(eta1=0.7, lambda1=0.3, iters=1)
        h = rng.random((1, 8, 8))
        low = rng.random((1, 4, 4))
        u = rng.random((1, 8, 8))
        v = rng.random((1, 8, 8))

        def objective(hh):
            resid = D.blur_decimate(hh, spec.kernel, 2) - low
            return (0.5 * np.sum(resid ** 2)
                    + 0.5 * params.eta1 * np.sum((u - hh) ** 2)
                    + 0.5 * params.lambda1 * np.sum((v - hh) ** 2))

        grad = hqs.grad_f3(h, low, u, v, spec, params)
        eps = 1e-6
        fd = np.zeros_like(h)
        for idx in np.ndindex(h.shape):
            hp = h.copy(); hp[idx] += eps
            hm = h.copy(); hm[idx] -= eps
            fd[idx] = (objective(hp) - objective(hm)) / (2 * eps)
        rel = np.abs(grad - fd) / np.maximum(np.abs(fd), 1e-3)
        assert rel.max() < 1e-5


class TestSolve:
    def test_matches_dense_landweber(self, rng, spec):
        params = hqs.HqsParams(eta1=0.0, lambda1=0.0, iters=5)
        gt = rng.random((1, 8, 8))
        low = D.degrade(gt, spec)
        mat = dense_degradation_matrix(spec.kernel, 2, 8, 8)
        h = hqs.upsample_init(low, 2).ravel()
        for _ in range(5):
            h = h - params.delta3 * (mat.T @ (mat @ h - low.ravel()))
        out = hqs.hqs_solve(low, None, spec, params)
        np.testing.assert_allclose(out.ravel(), h, atol=1e-8)

    def test_fixed_point_at_ground_truth(self, rng, spec):
        gt = rng.random((1, 8, 8))
        low = D.degrade(gt, spec)
        params = hqs.HqsParams(iters=5)
        out = hqs.hqs_solve(low, None, spec, params, h0=gt)
        np.testing.assert_allclose(out, gt, atol=1e-10)

    def test_zero_iters_rejected(self):
        with pytest.raises(ArgumentError):
            hqs.HqsParams(iters=0)

    def test_divergence_guard(self, rng, spec):
        params = hqs.HqsParams(eta1=0.0, lambda1=0.0, delta3=1e4, iters=50)
        low = D.degrade(rng.random((1, 8, 8)), spec)
        with pytest.raises(NumericError):
            hqs.hqs_solve(low, None, spec, params)

    def test_data_fit_monotone_under_stability_bound(self, rng, spec):
        mat = dense_degradation_matrix(spec.kernel, 2, 8, 8)
        sigma = power_iteration_norm(mat)
        delta3 = 1.8 / sigma ** 2
        gt = rng.random((1, 8, 8))
        low = D.degrade(gt, spec)
        params = hqs.HqsParams(eta1=0.0, lambda1=0.0, delta3=delta3, iters=1)
        h = hqs.upsample_init(low, 2)
        fits = [np.sum((D.blur_decimate(h, spec.kernel, 2) - low) ** 2)]
        for _ in range(12):
            h = hqs.hqs_solve(low, None, spec, params, h0=h)
            fits.append(np.sum((D.blur_decimate(h, spec.kernel, 2) - low) ** 2))
        assert all(b <= a + 1e-12 for a, b in zip(fits, fits[1:]))

    def test_improves_over_bicubic_with_identity_prox(self, rng, spec):
        gt = rng.random((1, 16, 16))
        low = D.degrade(gt, spec)
        params = hqs.HqsParams(eta1=0.0, lambda1=0.0, delta3=0.4, iters=60)
        out = hqs.hqs_solve(low, None, spec, params)
        e_bic = np.mean((hqs.upsample_init(low, 2) - gt) ** 2)
        e_hqs = np.mean((out - gt) ** 2)
        assert e_hqs < e_bic
