import numpy as np
import pytest

from flowsynth.errors import ValidationError
from flowsynth.geometry import DepthMap, FlowField
from flowsynth.renderer import ImageBuffer, backward_warp, bilinear_sample, forward_render


def naive_splat(image, flow, depth):
    """Scalar-loop oracle for forward splatting with min-depth z-buffering."""
    h, w = depth.values.shape
    out = np.zeros_like(image.values)
    holes = np.ones((h, w), dtype=bool)
    zbuf = np.full((h, w), np.inf)
    for sy in range(h):
        for sx in range(w):
            if not (flow.valid[sy, sx] and depth.valid[sy, sx]):
                continue
            tx = int(np.floor(sx + flow.u[sy, sx] + 0.5))
            ty = int(np.floor(sy + flow.v[sy, sx] + 0.5))
            if not (0 <= tx < w and 0 <= ty < h):
                continue
            z = depth.values[sy, sx]
            if z < zbuf[ty, tx]:  # strict: earlier row-major source wins ties
                zbuf[ty, tx] = z
                out[ty, tx] = image.values[sy, sx]
                holes[ty, tx] = False
    return out, holes, zbuf


def random_image(rng, w, h, channels=1):
    shape = (h, w) if channels == 1 else (h, w, channels)
    return ImageBuffer(rng.uniform(0, 1, shape))


class TestForwardRender:
    def test_zero_flow_is_identity(self):
        rng = np.random.default_rng(0)
        img = random_image(rng, 16, 12, 3)
        res = forward_render(img, FlowField.zeros(16, 12), DepthMap(np.full((12, 16), 2.0)))
        np.testing.assert_array_equal(res.image.values, img.values)
        assert not res.hole_mask.any()
        np.testing.assert_array_equal(res.zbuffer, 2.0)

    def test_everything_off_image_all_holes(self):
        rng = np.random.default_rng(1)
        img = random_image(rng, 10, 8)
        flow = FlowField.constant(10, 8, 10.0, 0.0)
        res = forward_render(img, flow, DepthMap(np.full((8, 10), 1.0)))
        assert res.hole_mask.all()
        np.testing.assert_array_equal(res.image.values, 0.0)

    def test_zbuffer_keeps_nearest(self):
        img = ImageBuffer(np.array([[0.25, 0.75]]))
        # both pixels land on target (0, 0); depths 5 m then 2 m
        flow = FlowField(np.array([[0.0, -1.0]]), np.zeros((1, 2)))
        depth = DepthMap(np.array([[5.0, 2.0]]))
        res = forward_render(img, flow, depth)
        assert res.image.values[0, 0, 0] == 0.75
        assert res.zbuffer[0, 0] == 2.0
        assert res.hole_mask[0, 1]

    def test_equal_depth_tie_lowest_index_wins(self):
        img = ImageBuffer(np.array([[0.25, 0.75]]))
        flow = FlowField(np.array([[0.0, -1.0]]), np.zeros((1, 2)))
        depth = DepthMap(np.array([[3.0, 3.0]]))
        res = forward_render(img, flow, depth)
        assert res.image.values[0, 0, 0] == 0.25

    def test_dimension_mismatch_raises(self):
        img = ImageBuffer(np.zeros((4, 4)))
        with pytest.raises(ValidationError):
            forward_render(img, FlowField.zeros(5, 4), DepthMap(np.ones((4, 4))))

    def test_matches_naive_splat_oracle(self):
        rng = np.random.default_rng(2)
        for _ in range(10):
            w, h = 14, 11
            img = random_image(rng, w, h)
            flow = FlowField(
                rng.uniform(-4, 4, (h, w)),
                rng.uniform(-4, 4, (h, w)),
                rng.random((h, w)) > 0.2,
            )
            depth = DepthMap(rng.uniform(1, 10, (h, w)))
            res = forward_render(img, flow, depth)
            out, holes, zbuf = naive_splat(img, flow, depth)
            np.testing.assert_array_equal(res.image.values, out)
            np.testing.assert_array_equal(res.hole_mask, holes)
            np.testing.assert_array_equal(res.zbuffer, zbuf)

    def test_constructed_collisions_min_depth_wins(self):
        # every source pixel maps to column 0 of its row
        rng = np.random.default_rng(3)
        w, h = 9, 6
        img = random_image(rng, w, h)
        us, _ = np.meshgrid(np.arange(w, dtype=float), np.arange(h, dtype=float))
        flow = FlowField(-us, np.zeros((h, w)))
        depth = DepthMap(rng.uniform(1, 50, (h, w)))
        res = forward_render(img, flow, depth)
        for row in range(h):
            winner = np.argmin(depth.values[row])
            assert res.image.values[row, 0, 0] == img.values[row, winner, 0]
            assert res.hole_mask[row, 1:].all()


class TestBackwardWarp:
    def test_zero_flow_exact_identity(self):
        rng = np.random.default_rng(4)
        img = random_image(rng, 13, 9, 3)
        warped, mask = backward_warp(img, FlowField.zeros(13, 9))
        np.testing.assert_array_equal(warped.values, img.values)
        assert mask.all()

    def test_half_pixel_shift_on_ramp(self):
        w, h = 12, 5
        ramp = np.tile(np.arange(w, dtype=float) / (w - 1), (h, 1))
        warped, mask = backward_warp(ImageBuffer(ramp), FlowField.constant(w, h, 0.5, 0.0))
        expected = (np.arange(w, dtype=float) + 0.5) / (w - 1)
        assert mask[:, :-1].all() and not mask[:, -1].any()
        np.testing.assert_allclose(warped.values[:, :-1, 0], np.tile(expected[:-1], (h, 1)))

    def test_integer_flow_matches_lookup_oracle(self):
        rng = np.random.default_rng(5)
        for _ in range(10):
            w, h = 15, 10
            img = random_image(rng, w, h)
            fu = rng.integers(-6, 7, (h, w)).astype(float)
            fv = rng.integers(-6, 7, (h, w)).astype(float)
            flow = FlowField(fu, fv)
            warped, mask = backward_warp(img, flow)
            for y in range(h):
                for x in range(w):
                    tx, ty = x + int(fu[y, x]), y + int(fv[y, x])
                    if 0 <= tx < w and 0 <= ty < h:
                        assert mask[y, x]
                        assert warped.values[y, x, 0] == img.values[ty, tx, 0]
                    else:
                        assert not mask[y, x]

    def test_invalid_flow_pixels_masked(self):
        img = ImageBuffer(np.ones((4, 4)) * 0.5)
        valid = np.ones((4, 4), dtype=bool)
        valid[2, 2] = False
        _, mask = backward_warp(img, FlowField(np.zeros((4, 4)), np.zeros((4, 4)), valid))
        assert not mask[2, 2] and mask.sum() == 15

    def test_dimension_mismatch_raises(self):
        with pytest.raises(ValidationError):
            backward_warp(ImageBuffer(np.zeros((4, 4))), FlowField.zeros(3, 4))


def test_bilinear_reproduces_affine_images_exactly():
    rng = np.random.default_rng(6)
    w, h = 20, 16
    us, vs = np.meshgrid(np.arange(w, dtype=float), np.arange(h, dtype=float))
    for _ in range(10):
        a, b, c = rng.uniform(-0.01, 0.01, 2).tolist() + [0.5]
        img = a * us + b * vs + c
        px = rng.uniform(0, w - 1, (h, w))
        py = rng.uniform(0, h - 1, (h, w))
        sampled, inb = bilinear_sample(img, px, py)
        assert inb.all()
        np.testing.assert_allclose(sampled, a * px + b * py + c, atol=1e-12)


def test_image_buffer_validation():
    with pytest.raises(ValidationError):
        ImageBuffer(np.full((3, 3), 1.5))
    with pytest.raises(ValidationError):
        ImageBuffer(np.full((3, 3), np.nan))
    with pytest.raises(ValidationError):
        ImageBuffer(np.zeros((3, 3, 2)))
    img = ImageBuffer(np.zeros((3, 4)))
    assert img.channels == 1 and img.width == 4 and img.height == 3
