import numpy as np
import pytest

from kinemri.metrics import nmse, psnr, ssim2d
from kinemri.operators import apply_mask, forward_operator, ifft2c, reduce_coils
from kinemri.phantom import PhantomConfig, coil_sensitivities, generate, synthesize_kspace
from kinemri.reconstruction import (
    AdmmState,
    ReconConfig,
    admm_init,
    admm_reconstruct,
    data_consistency_gradient,
    data_consistency_step,
    denoise_step,
    multiplier_step,
    tv_denoise,
    zero_filled,
)
from kinemri.sampling import acs_mask, equispaced_mask


def random_complex(rng, shape):
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)


@pytest.fixture
def problem():
    rng = np.random.default_rng(0)
    sens = coil_sensitivities(8, 8, 2, 3)
    image = random_complex(rng, (8, 8, 3))
    full = np.ones((8, 3), dtype=np.uint8)
    kspace = forward_operator(image, sens, full)
    mask = equispaced_mask(8, 2.0, 3, center_fraction=0.25)
    return image, sens, kspace, mask


class TestZeroFilled:
    def test_full_mask_recovers_truth(self, problem):
        image, sens, kspace, _ = problem
        assert np.abs(zero_filled(kspace, sens) - image).max() < 1e-8

    def test_zero_kspace(self, problem):
        _, sens, kspace, _ = problem
        assert np.abs(zero_filled(np.zeros_like(kspace), sens)).max() == 0

    def test_matches_manual_composition(self, problem):
        image, sens, kspace, mask = problem
        masked = apply_mask(kspace, mask)
        expected = reduce_coils(ifft2c(masked), sens)
        assert np.allclose(zero_filled(masked, sens), expected, atol=1e-14)


class TestAdmmInit:
    def test_zero_kspace_gives_zero_state(self, problem):
        _, sens, kspace, _ = problem
        state = admm_init(np.zeros_like(kspace), sens)
        assert np.abs(state.image).max() == 0
        assert np.abs(state.auxiliary).max() == 0
        assert np.abs(state.multiplier).max() == 0

    def test_full_mask_starts_at_truth(self, problem):
        image, sens, kspace, _ = problem
        state = admm_init(kspace, sens)
        assert np.abs(state.image - image).max() < 1e-8

    def test_image_equals_auxiliary(self, problem):
        _, sens, kspace, mask = problem
        state = admm_init(apply_mask(kspace, mask), sens)
        assert np.array_equal(state.image, state.auxiliary)


class TestDenoiseStep:
    def test_identity_returns_argument(self, problem):
        rng = np.random.default_rng(1)
        x = random_complex(rng, (8, 8, 3))
        m = random_complex(rng, (8, 8, 3))
        state = AdmmState(image=x, auxiliary=x.copy(), multiplier=m)
        out = denoise_step(state, 2.5, ReconConfig(denoiser="identity"))
        assert np.allclose(out, x + m / 2.5, atol=1e-14)

    def test_soft_threshold_matches_scalar_prox(self):
        rng = np.random.default_rng(2)
        x = random_complex(rng, (6, 6, 2))
        m = random_complex(rng, (6, 6, 2))
        lam, weight = 1.7, 0.3
        state = AdmmState(image=x, auxiliary=x.copy(), multiplier=m)
        out = denoise_step(state, lam, ReconConfig(denoiser="soft_threshold", denoiser_weight=weight))
        v = x + m / lam
        thresh = weight / lam
        expected_re = np.sign(v.real) * np.maximum(np.abs(v.real) - thresh, 0.0)
        expected_im = np.sign(v.imag) * np.maximum(np.abs(v.imag) - thresh, 0.0)
        assert np.allclose(out, expected_re + 1j * expected_im, atol=1e-14)

    def test_tv_constant_unchanged(self):
        const = np.full((2, 12, 12), -1.3)
        assert np.allclose(tv_denoise(const, 0.7, 50), const, atol=1e-10)


class TestDataConsistencyStep:
    def _objective(self, x, aux, mult, lam, kspace, sens, mask):
        residual = forward_operator(x, sens, mask) - kspace
        penalty = x - aux + mult / lam
        return 0.5 * np.sum(np.abs(residual) ** 2) + lam * np.sum(np.abs(penalty) ** 2)

    def test_gradient_matches_finite_differences(self, problem):
        _, sens, kspace, mask = problem
        rng = np.random.default_rng(3)
        y = apply_mask(kspace, mask)
        x = random_complex(rng, (8, 8, 3))
        aux = random_complex(rng, (8, 8, 3))
        mult = random_complex(rng, (8, 8, 3))
        lam = 1.3
        grad = data_consistency_gradient(x, aux, mult, lam, y, sens, mask)
        eps = 1e-6
        for _ in range(20):
            i, j, t = rng.integers(8), rng.integers(8), rng.integers(3)
            for direction, part in ((1.0, grad.real), (1.0j, grad.imag)):
                delta = np.zeros_like(x)
                delta[i, j, t] = direction * eps
                fd = (
                    self._objective(x + delta, aux, mult, lam, y, sens, mask)
                    - self._objective(x - delta, aux, mult, lam, y, sens, mask)
                ) / (2 * eps)
                assert abs(fd - part[i, j, t]) < 1e-5 * max(abs(fd), 1.0)

    def test_zero_steps_leaves_input(self, problem):
        _, sens, kspace, mask = problem
        rng = np.random.default_rng(4)
        state = AdmmState(
            image=random_complex(rng, (8, 8, 3)),
            auxiliary=random_complex(rng, (8, 8, 3)),
            multiplier=random_complex(rng, (8, 8, 3)),
        )
        out = data_consistency_step(
            state, state.auxiliary, 1.0, kspace, sens, mask, steps=0, step_size=0.4
        )
        assert np.array_equal(out, state.image)

    def test_objective_monotone_within_stability_bound(self, problem):
        _, sens, kspace, mask = problem
        rng = np.random.default_rng(5)
        y = apply_mask(kspace, mask)
        lam = 1.0
        step = 1.0 / (1.0 + 2.0 * lam)
        aux = random_complex(rng, (8, 8, 3))
        mult = random_complex(rng, (8, 8, 3))
        image = random_complex(rng, (8, 8, 3))
        values = [self._objective(image, aux, mult, lam, y, sens, mask)]
        for _ in range(10):
            image = data_consistency_step(
                AdmmState(image, aux, mult), aux, lam, y, sens, mask, 1, step
            )
            values.append(self._objective(image, aux, mult, lam, y, sens, mask))
        assert all(b <= a + 1e-10 for a, b in zip(values, values[1:]))


class TestMultiplierStep:
    def test_no_update_when_consistent(self):
        rng = np.random.default_rng(6)
        x = random_complex(rng, (4, 4, 2))
        m = random_complex(rng, (4, 4, 2))
        state = AdmmState(image=x, auxiliary=x.copy(), multiplier=m)
        assert np.allclose(multiplier_step(state, x, x, 2.0), m, atol=1e-14)

    def test_zero_multiplier_unit_lambda(self):
        rng = np.random.default_rng(7)
        x_new = random_complex(rng, (4, 4, 2))
        z_new = random_complex(rng, (4, 4, 2))
        state = AdmmState(image=x_new, auxiliary=z_new, multiplier=np.zeros_like(x_new))
        assert np.allclose(multiplier_step(state, z_new, x_new, 1.0), x_new - z_new)

    def test_matches_scalar_loop(self):
        rng = np.random.default_rng(8)
        x_new = random_complex(rng, (3, 3, 1))
        z_new = random_complex(rng, (3, 3, 1))
        m = random_complex(rng, (3, 3, 1))
        lam = 0.7
        out = multiplier_step(AdmmState(x_new, z_new, m), z_new, x_new, lam)
        for i in range(3):
            for j in range(3):
                assert out[i, j, 0] == pytest.approx(
                    m[i, j, 0] + lam * (x_new[i, j, 0] - z_new[i, j, 0])
                )


class TestAdmmReconstruct:
    def test_zero_iterations_equals_zero_filled(self, problem):
        _, sens, kspace, mask = problem
        masked = apply_mask(kspace, mask)
        res = admm_reconstruct(masked, sens, mask, ReconConfig(num_iterations=0))
        assert np.allclose(res.complex_image, zero_filled(masked, sens), atol=1e-14)

    def test_full_mask_identity_denoiser_recovers_truth(self, problem):
        image, sens, kspace, _ = problem
        full = np.ones((8, 3), dtype=np.uint8)
        res = admm_reconstruct(kspace, sens, full, ReconConfig(denoiser="identity"))
        assert nmse(np.abs(image), res.magnitude) < 1e-6

    def test_tv_beats_zero_filled_at_r4(self):
        pc = PhantomConfig(n_x=64, n_y=64, n_c=4, n_t=4, motion="contraction", amplitude=0.1)
        data = generate(pc)
        kspace = synthesize_kspace(data.moving, data.sensitivities)
        mask = equispaced_mask(64, 4.0, 4, offset=1, center_fraction=0.04)
        under = apply_mask(kspace, mask)
        zf = np.abs(zero_filled(under, data.sensitivities))
        res = admm_reconstruct(
            under,
            data.sensitivities,
            mask,
            ReconConfig(denoiser="tv_prox", denoiser_weight=0.01),
        )
        for metric in (ssim2d, psnr):
            zf_score = np.mean([metric(data.moving[:, :, t], zf[:, :, t]) for t in range(4)])
            tv_score = np.mean(
                [metric(data.moving[:, :, t], res.magnitude[:, :, t]) for t in range(4)]
            )
            assert tv_score > zf_score

    @pytest.mark.parametrize("denoiser", ["identity", "tv_prox"])
    def test_data_consistency_residual_never_worse_than_start(self, denoiser):
        pc = PhantomConfig(n_x=32, n_y=32, n_c=3, n_t=3, motion="contraction",
                           amplitude=0.1, seed=4)
        data = generate(pc)
        kspace = synthesize_kspace(data.moving, data.sensitivities)
        mask = equispaced_mask(32, 4.0, 3, offset=1, center_fraction=0.04)
        masked = apply_mask(kspace, mask)
        cfg = ReconConfig(denoiser=denoiser, denoiser_weight=0.01)
        res = admm_reconstruct(masked, data.sensitivities, mask, cfg)
        start = zero_filled(masked, data.sensitivities)

        def residual(x):
            return np.linalg.norm(
                forward_operator(x, data.sensitivities, mask) - masked
            )

        assert residual(res.complex_image) <= residual(start) + 1e-10

    def test_deterministic(self, problem):
        _, sens, kspace, mask = problem
        masked = apply_mask(kspace, mask)
        cfg = ReconConfig(denoiser="tv_prox", denoiser_weight=0.02)
        a = admm_reconstruct(masked, sens, mask, cfg)
        b = admm_reconstruct(masked, sens, mask, cfg)
        assert np.array_equal(a.complex_image, b.complex_image)


class TestReconConfig:
    def test_lambda_length_validated(self):
        with pytest.raises(ValueError):
            ReconConfig(num_iterations=3, lambdas=[1.0, 1.0])

    def test_negative_lambda_rejected(self):
        with pytest.raises(ValueError):
            ReconConfig(num_iterations=1, lambdas=[-1.0])

    def test_dc_steps_required_when_iterating(self):
        with pytest.raises(ValueError):
            ReconConfig(num_iterations=1, dc_steps=0)

    def test_defaults_fill_lambdas(self):
        cfg = ReconConfig(num_iterations=4)
        assert cfg.lambdas == [1.0] * 4
