import numpy as np
import pytest

from flowsynth.consistency import (
    AffineSamplingConfig,
    AffineTransform2D,
    consistency_loss,
    derive_transformed_flow,
    sample_affine,
    warp_image_affine,
)
from flowsynth.errors import EmptyInputError, ValidationError
from flowsynth.geometry import FlowField
from flowsynth.losses import TrimConfig
from flowsynth.renderer import ImageBuffer


def trace_reference_flow(flow, transform):
    """Brute-force oracle: map each augmented pixel through A^-1, follow the
    sampled flow in the original pair, and push the endpoint back through A."""
    h, w = flow.height, flow.width
    inv = transform.inverse()
    out = np.zeros((h, w, 2))
    ok = np.zeros((h, w), dtype=bool)
    for y in range(h):
        for x in range(w):
            src = inv.apply(np.array([x, y], dtype=float))
            x0, y0 = int(np.floor(src[0])), int(np.floor(src[1]))
            if not (0 <= x0 <= w - 2 and 0 <= y0 <= h - 2):
                continue
            neighbors = flow.valid[y0 : y0 + 2, x0 : x0 + 2]
            if not neighbors.all():
                continue
            wx, wy = src[0] - x0, src[1] - y0
            fu = (
                flow.u[y0, x0] * (1 - wx) * (1 - wy)
                + flow.u[y0, x0 + 1] * wx * (1 - wy)
                + flow.u[y0 + 1, x0] * (1 - wx) * wy
                + flow.u[y0 + 1, x0 + 1] * wx * wy
            )
            fv = (
                flow.v[y0, x0] * (1 - wx) * (1 - wy)
                + flow.v[y0, x0 + 1] * wx * (1 - wy)
                + flow.v[y0 + 1, x0] * (1 - wx) * wy
                + flow.v[y0 + 1, x0 + 1] * wx * wy
            )
            endpoint = transform.apply(src + np.array([fu, fv]))
            out[y, x] = endpoint - np.array([x, y], dtype=float)
            ok[y, x] = True
    return out, ok


def smooth_flow(w, h, seed=0, amplitude=2.0, wavelength=None):
    if wavelength is None:
        wavelength = float(w)
    rng = np.random.default_rng(seed)
    us, vs = np.meshgrid(np.arange(w, dtype=float), np.arange(h, dtype=float))
    phase = rng.uniform(0, 2 * np.pi, 4)
    kx = 2 * np.pi / wavelength
    u = amplitude * np.sin(kx * us + phase[0]) * np.cos(kx * vs + phase[1])
    v = amplitude * np.cos(kx * us + phase[2]) * np.sin(kx * vs + phase[3])
    return FlowField(u, v)


def bilin_uv(flow, sx, sy):
    x0, y0 = int(np.floor(sx)), int(np.floor(sy))
    wx, wy = sx - x0, sy - y0
    u = (
        flow.u[y0, x0] * (1 - wx) * (1 - wy)
        + flow.u[y0, x0 + 1] * wx * (1 - wy)
        + flow.u[y0 + 1, x0] * (1 - wx) * wy
        + flow.u[y0 + 1, x0 + 1] * wx * wy
    )
    v = (
        flow.v[y0, x0] * (1 - wx) * (1 - wy)
        + flow.v[y0, x0 + 1] * wx * (1 - wy)
        + flow.v[y0 + 1, x0] * (1 - wx) * wy
        + flow.v[y0 + 1, x0 + 1] * wx * wy
    )
    return u, v


class TestSampleAffine:
    def test_degenerate_ranges_identity(self):
        cfg = AffineSamplingConfig((1.0, 1.0), (0.0, 0.0), (0.0, 0.0))
        a = sample_affine(cfg, np.random.default_rng(0))
        np.testing.assert_allclose(a.m, np.eye(2))
        np.testing.assert_allclose(a.t, np.zeros(2))

    def test_deterministic_given_seed_and_index(self):
        cfg = AffineSamplingConfig(seed=7)
        draws = []
        for _ in range(2):
            rng = np.random.default_rng(cfg.seed)
            draws.append([sample_affine(cfg, rng) for _ in range(4)])
        for a, b in zip(*draws):
            np.testing.assert_array_equal(a.m, b.m)
            np.testing.assert_array_equal(a.t, b.t)

    def test_determinant_statistics(self):
        # det(scale * rotation) = scale^2, so scale in [0.9, 1.1] bounds it
        cfg = AffineSamplingConfig(scale_range=(0.9, 1.1))
        rng = np.random.default_rng(1)
        dets = np.array([np.linalg.det(sample_affine(cfg, rng).m) for _ in range(10_000)])
        assert dets.min() >= 0.81 - 1e-12
        assert dets.max() <= 1.21 + 1e-12

    def test_config_validation(self):
        with pytest.raises(ValidationError):
            AffineSamplingConfig(scale_range=(0.0, 1.0))
        with pytest.raises(ValidationError):
            AffineSamplingConfig(rotation_deg_range=(5.0, -5.0))


class TestAffineTransform:
    def test_singular_rejected(self):
        with pytest.raises(ValidationError):
            AffineTransform2D(np.zeros((2, 2)), np.zeros(2))

    def test_inverse_roundtrip(self):
        rng = np.random.default_rng(2)
        for _ in range(20):
            a = sample_affine(AffineSamplingConfig(), rng)
            pts = rng.uniform(-50, 50, (7, 2))
            np.testing.assert_allclose(a.inverse().apply(a.apply(pts)), pts, atol=1e-9)

    def test_about_fixes_the_center(self):
        a = AffineTransform2D.from_scale_rotation(1.2, 30.0).about((8.0, 5.0))
        np.testing.assert_allclose(a.apply(np.array([8.0, 5.0])), [8.0, 5.0], atol=1e-12)


class TestWarpImageAffine:
    def test_identity(self):
        rng = np.random.default_rng(3)
        img = ImageBuffer(rng.uniform(0, 1, (9, 13)))
        warped, mask = warp_image_affine(img, AffineTransform2D.identity())
        np.testing.assert_array_equal(warped.values, img.values)
        assert mask.all()

    def test_pure_translation_shift(self):
        rng = np.random.default_rng(4)
        img = ImageBuffer(rng.uniform(0, 1, (6, 12)))
        a = AffineTransform2D(np.eye(2), np.array([5.0, 0.0]))
        warped, mask = warp_image_affine(img, a)
        assert not mask[:, :5].any() and mask[:, 5:].all()
        np.testing.assert_array_equal(warped.values[:, 5:], img.values[:, :-5])

    def test_half_turn_about_center_reverses_indices(self):
        rng = np.random.default_rng(5)
        img = ImageBuffer(rng.uniform(0, 1, (9, 14, 3)))
        center = ((14 - 1) / 2.0, (9 - 1) / 2.0)
        a = AffineTransform2D(-np.eye(2), np.zeros(2)).about(center)
        warped, mask = warp_image_affine(img, a)
        assert mask.all()
        np.testing.assert_array_equal(warped.values, img.values[::-1, ::-1])


class TestDeriveTransformedFlow:
    def test_identity_law_interior(self):
        flow = smooth_flow(16, 12, seed=6)
        out = derive_transformed_flow(flow, AffineTransform2D.identity())
        assert out.valid[:-1, :-1].all()  # only exact-border positions erode
        np.testing.assert_array_equal(out.u[:-1, :-1], flow.u[:-1, :-1])
        np.testing.assert_array_equal(out.v[:-1, :-1], flow.v[:-1, :-1])

    def test_pure_translation_moves_values(self):
        flow = smooth_flow(16, 12, seed=7)
        a = AffineTransform2D(np.eye(2), np.array([3.0, 2.0]))
        out = derive_transformed_flow(flow, a)
        assert out.valid[2:-1, 3:-1].all()
        np.testing.assert_array_equal(out.u[2:-1, 3:-1], flow.u[: 12 - 3, : 16 - 4])
        np.testing.assert_array_equal(out.v[2:-1, 3:-1], flow.v[: 12 - 3, : 16 - 4])

    def test_quarter_turn_swaps_components_exactly(self):
        n = 21
        flow = FlowField.constant(n, n, 1.0, 0.0)
        center = ((n - 1) / 2.0, (n - 1) / 2.0)
        quarter = AffineTransform2D(np.array([[0.0, -1.0], [1.0, 0.0]]), np.zeros(2)).about(center)
        out = derive_transformed_flow(flow, quarter)
        assert out.valid.any()
        assert (out.u[out.valid] == 0.0).all()
        assert (out.v[out.valid] == 1.0).all()

    def test_matches_tracing_oracle(self):
        rng = np.random.default_rng(8)
        cfg = AffineSamplingConfig((0.9, 1.1), (-15.0, 15.0), (-3.0, 3.0))
        flow = smooth_flow(18, 14, seed=9)
        for _ in range(10):
            a = sample_affine(cfg, rng).about((8.5, 6.5))
            out = derive_transformed_flow(flow, a)
            traced, ok = trace_reference_flow(flow, a)
            np.testing.assert_array_equal(out.valid, ok)
            if ok.any():
                assert np.max(np.abs(out.u[ok] - traced[ok][:, 0])) < 1e-3
                assert np.max(np.abs(out.v[ok] - traced[ok][:, 1])) < 1e-3

    def test_inverse_composition_recovers_flow(self):
        # double bilinear resampling error scales with flow curvature, so a
        # long-wavelength field keeps it below the 1e-4 px budget
        flow = smooth_flow(24, 20, seed=10, amplitude=1.0, wavelength=512.0)
        a = AffineTransform2D.from_scale_rotation(1.05, 8.0, (1.5, -2.0)).about((11.5, 9.5))
        once = derive_transformed_flow(flow, a)
        back = derive_transformed_flow(once, a.inverse())
        both = back.valid
        assert both.sum() > 50
        assert np.max(np.abs(back.u[both] - flow.u[both])) < 1e-4
        assert np.max(np.abs(back.v[both] - flow.v[both])) < 1e-4

    def test_pure_scale_scales_norms_exactly(self):
        # power-of-two scale keeps float doubling exact, so the sampled flow
        # norm doubles bit for bit
        flow = smooth_flow(16, 16, seed=11)
        a = AffineTransform2D(2.0 * np.eye(2), np.zeros(2))
        out = derive_transformed_flow(flow, a)
        assert out.valid.any()
        ys, xs = np.nonzero(out.valid)
        for x, y in zip(xs, ys):
            su, sv = bilin_uv(flow, x / 2.0, y / 2.0)
            assert out.u[y, x] == 2.0 * su
            assert out.v[y, x] == 2.0 * sv
            assert np.hypot(out.u[y, x], out.v[y, x]) == 2.0 * np.hypot(su, sv)


class TestConsistencyLoss:
    def test_zero_at_equality(self):
        flow = smooth_flow(12, 10, seed=12)
        assert consistency_loss(flow, flow, TrimConfig(0.0)) == 0.0

    def test_constant_residual(self):
        pred = FlowField.constant(8, 6, 2.0, 1.0)
        ref = FlowField.zeros(8, 6)
        assert consistency_loss(pred, ref, TrimConfig(0.0)) == 3.0

    def test_respects_joint_mask_and_trim_oracle(self):
        rng = np.random.default_rng(13)
        pred = FlowField(rng.normal(0, 2, (9, 11)), rng.normal(0, 2, (9, 11)), rng.random((9, 11)) < 0.8)
        ref = FlowField(rng.normal(0, 2, (9, 11)), rng.normal(0, 2, (9, 11)), rng.random((9, 11)) < 0.8)
        from flowsynth.losses import trimmed_flow_loss

        joint = pred.valid & ref.valid
        expected, _ = trimmed_flow_loss(pred, ref, joint, TrimConfig(10.0))
        assert consistency_loss(pred, ref, TrimConfig(10.0)) == expected

    def test_empty_joint_mask_raises(self):
        a = FlowField(np.zeros((4, 4)), np.zeros((4, 4)), np.zeros((4, 4), dtype=bool))
        with pytest.raises(EmptyInputError):
            consistency_loss(a, a, TrimConfig(0.0))
