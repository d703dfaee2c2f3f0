import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kinemri.metrics import (
    MetricsReport,
    combined_loss,
    nmse,
    phase_averaged,
    psnr,
    reconstruction_loss,
    registration_loss,
    similarity_loss,
    ssim2d,
    ssim3d,
)
from kinemri.registration import smoothness_loss


def brute_force_ssim(f, d, data_range, window):
    """Per-window SSIM by direct summation (population statistics)."""
    c1 = (0.01 * data_range) ** 2
    c2 = (0.03 * data_range) ** 2
    spans = [f.shape[a] - window[a] + 1 for a in range(f.ndim)]
    values = []
    for idx in np.ndindex(*spans):
        sl = tuple(slice(i, i + w) for i, w in zip(idx, window))
        wf, wd = f[sl], d[sl]
        mu_f, mu_d = wf.mean(), wd.mean()
        var_f = ((wf - mu_f) ** 2).mean()
        var_d = ((wd - mu_d) ** 2).mean()
        cov = ((wf - mu_f) * (wd - mu_d)).mean()
        values.append(
            ((2 * mu_f * mu_d + c1) * (2 * cov + c2))
            / ((mu_f**2 + mu_d**2 + c1) * (var_f + var_d + c2))
        )
    return float(np.mean(values))


class TestSsim2d:
    def test_self_similarity_is_exactly_one(self):
        rng = np.random.default_rng(0)
        x = rng.random((12, 12))
        assert ssim2d(x, x) == 1.0

    def test_constant_vs_shifted_constant_single_window(self):
        f = np.full((7, 7), 0.5)
        d = np.full((7, 7), 0.51)
        c1 = (0.01 * 1.0) ** 2
        expected = (2 * 0.5 * 0.51 + c1) / (0.5**2 + 0.51**2 + c1)
        assert ssim2d(f, d, data_range=1.0) == pytest.approx(expected, abs=1e-12)

    def test_matches_brute_force(self):
        rng = np.random.default_rng(1)
        f, d = rng.random((16, 16)), rng.random((16, 16))
        expected = brute_force_ssim(f, d, float(f.max() - f.min()), (7, 7))
        assert ssim2d(f, d) == pytest.approx(expected, abs=1e-10)

    def test_symmetric_with_shared_range(self):
        rng = np.random.default_rng(2)
        f, d = rng.random((10, 10)), rng.random((10, 10))
        assert ssim2d(f, d, data_range=1.0) == pytest.approx(
            ssim2d(d, f, data_range=1.0), abs=1e-12
        )

    def test_bounded_above_by_one(self):
        rng = np.random.default_rng(3)
        for _ in range(20):
            f, d = rng.random((9, 9)), rng.random((9, 9))
            assert ssim2d(f, d, data_range=1.0) <= 1.0

    def test_small_frame_rejected(self):
        with pytest.raises(ValueError, match="window"):
            ssim2d(np.zeros((5, 5)), np.zeros((5, 5)))


class TestSsim3d:
    def test_self_similarity(self):
        rng = np.random.default_rng(4)
        x = rng.random((10, 10, 4))
        assert ssim3d(x, x) == 1.0

    def test_temporally_constant_equals_2d(self):
        rng = np.random.default_rng(5)
        f2, d2 = rng.random((12, 12)), rng.random((12, 12))
        f3 = np.repeat(f2[:, :, None], 5, axis=2)
        d3 = np.repeat(d2[:, :, None], 5, axis=2)
        rng_val = float(f3.max() - f3.min())
        assert ssim3d(f3, d3) == pytest.approx(
            ssim2d(f2, d2, data_range=rng_val), abs=1e-6
        )

    def test_matches_brute_force(self):
        rng = np.random.default_rng(6)
        f, d = rng.random((10, 10, 4)), rng.random((10, 10, 4))
        expected = brute_force_ssim(f, d, float(f.max() - f.min()), (7, 7, 3))
        assert ssim3d(f, d) == pytest.approx(expected, abs=1e-10)

    def test_too_few_frames_rejected(self):
        with pytest.raises(ValueError, match="frames"):
            ssim3d(np.zeros((10, 10, 2)), np.zeros((10, 10, 2)))


class TestPsnr:
    def test_known_value(self):
        f = np.array([1.0, 0.0])
        d = np.array([0.0, 0.0])
        assert psnr(f, d) == pytest.approx(20 * math.log10(1 / math.sqrt(0.5)), abs=1e-10)

    def test_identical_inputs_infinite(self):
        x = np.random.default_rng(7).random((4, 4))
        assert psnr(x, x) == math.inf

    def test_joint_scaling_invariance(self):
        rng = np.random.default_rng(8)
        f, d = rng.random((6, 6)) + 0.5, rng.random((6, 6))
        assert psnr(3.7 * f, 3.7 * d) == pytest.approx(psnr(f, d), abs=1e-10)


class TestNmse:
    def test_identical_is_zero(self):
        x = np.random.default_rng(9).random((5, 5))
        assert nmse(x, x) == 0.0

    def test_zero_prediction_is_one(self):
        x = np.random.default_rng(10).random((5, 5)) + 0.1
        assert nmse(x, np.zeros_like(x)) == pytest.approx(1.0)

    def test_known_value(self):
        assert nmse(np.array([2.0, 0.0]), np.array([1.0, 0.0])) == pytest.approx(0.25)

    def test_zero_truth_rejected(self):
        with pytest.raises(ValueError, match="zero"):
            nmse(np.zeros(4), np.ones(4))

    @settings(deadline=None, max_examples=30)
    @given(c=st.floats(-2.0, 2.0))
    def test_scaling_identity(self, c):
        f = np.array([1.0, 2.0, -1.5, 0.25])
        assert nmse(f, c * f) == pytest.approx((1 - c) ** 2, abs=1e-12)


class TestPhaseAveraged:
    def test_identical_frames_ssim_one(self):
        rng = np.random.default_rng(11)
        ref = rng.random((10, 10))
        registered = np.repeat(ref[:, :, None], 4, axis=2)
        assert phase_averaged(ssim2d, registered, ref) == 1.0

    def test_single_frame_equals_metric(self):
        rng = np.random.default_rng(12)
        ref, frame = rng.random((8, 8)), rng.random((8, 8))
        assert phase_averaged(nmse, frame[:, :, None], ref) == pytest.approx(
            nmse(ref, frame)
        )

    def test_matches_manual_mean_and_permutation_invariant(self):
        rng = np.random.default_rng(13)
        ref = rng.random((8, 8))
        registered = rng.random((8, 8, 3))
        manual = np.mean([nmse(ref, registered[:, :, t]) for t in range(3)])
        assert phase_averaged(nmse, registered, ref) == pytest.approx(manual, abs=1e-14)
        permuted = registered[:, :, [2, 0, 1]]
        assert phase_averaged(nmse, permuted, ref) == pytest.approx(
            phase_averaged(nmse, registered, ref), abs=1e-14
        )


class TestLosses:
    def test_reconstruction_loss_zero_at_truth(self):
        rng = np.random.default_rng(14)
        x = rng.random((10, 10, 4))
        assert reconstruction_loss(x, x) == pytest.approx(0.0, abs=1e-12)

    def test_reconstruction_loss_is_sum_of_terms(self):
        rng = np.random.default_rng(15)
        truth = rng.random((10, 10, 4))
        pred = truth + 0.05 * rng.standard_normal(truth.shape)
        rng_val = float(truth.max() - truth.min())
        frame_term = 1.0 - np.mean(
            [ssim2d(truth[:, :, t], pred[:, :, t], data_range=rng_val) for t in range(4)]
        )
        seq_term = 1.0 - ssim3d(truth, pred, data_range=rng_val)
        mae = float(np.mean(np.abs(pred - truth)))
        assert reconstruction_loss(pred, truth) == pytest.approx(
            frame_term + seq_term + mae, abs=1e-12
        )

    def test_registration_loss_zero_for_aligned_constant_field(self):
        rng = np.random.default_rng(16)
        ref = rng.random((10, 10))
        registered = np.repeat(ref[:, :, None], 4, axis=2)
        field = np.full((2, 10, 10, 4), 1.3)
        assert registration_loss(registered, ref, field) == pytest.approx(0.0, abs=1e-12)

    def test_registration_loss_composes(self):
        rng = np.random.default_rng(17)
        ref = rng.random((10, 10))
        registered = rng.random((10, 10, 4))
        field = rng.standard_normal((2, 10, 10, 4))
        repeated = np.repeat(ref[:, :, None], 4, axis=2)
        expected = similarity_loss(registered, repeated) + smoothness_loss(field)
        assert registration_loss(registered, ref, field) == pytest.approx(expected, abs=1e-12)

    def test_combined_loss_arithmetic(self):
        assert combined_loss(0.5, 0.25) == pytest.approx(0.75)
        assert combined_loss(0.5, 0.25, alpha=0.0, beta=1.0) == pytest.approx(0.25)
        assert combined_loss(0.5, 0.25, alpha=2.0, beta=0.5) == pytest.approx(1.125)
        with pytest.raises(ValueError):
            combined_loss(1.0, 1.0, alpha=-1.0)


class TestMetricsReport:
    def _report(self):
        frames = [
            {"frame": 0, "ssim": 0.9, "psnr": 30.0, "nmse": 0.01},
            {"frame": 1, "ssim": 0.8, "psnr": 28.0, "nmse": 0.02},
        ]
        return MetricsReport.from_frames(
            frames, losses={"l_rec": 0.1, "l_reg": 0.2, "total": 0.3, "alpha": 1, "beta": 1}
        )

    def test_phase_average_is_mean_of_rows(self):
        report = self._report()
        for key in ("ssim", "psnr", "nmse"):
            mean = np.mean([row[key] for row in report.per_frame])
            assert abs(report.phase_averaged[key] - mean) < 1e-12

    def test_json_round_trip(self):
        import json

        report = self._report()
        payload = json.loads(report.to_json())
        restored = MetricsReport.from_dict(payload)
        assert restored.per_frame == report.per_frame
        assert restored.phase_averaged == report.phase_averaged

    def test_csv_has_frame_rows_and_summary(self):
        lines = self._report().to_csv().strip().splitlines()
        assert len(lines) == 4  # header, two frames, mean row
        assert lines[0].startswith("frame,")
        assert lines[-1].startswith("mean,")
