"""Novel-view rendering by forward splatting with a z-buffer, and the
backward-warping operator used by the losses.

Splatting is a deterministic sequential reduction: among sources landing on
the same target pixel the smallest depth wins, with ties broken by the lowest
source row-major index, so results are bit-identical regardless of how many
threads call into this module.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .geometry import DepthMap, FlowField, round_half_up


@dataclass
class ImageBuffer:
    """Per-pixel intensities in [0, 1], stored as (H, W, C) with C in {1, 3}.

    2-D input arrays are promoted to a single channel. Values must already be
    normalized; anything outside [0, 1] beyond float round-off is rejected.
    """

    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim == 2:
            v = v[:, :, None]
        if v.ndim != 3 or v.shape[2] not in (1, 3):
            raise ValidationError("image must be (H, W) or (H, W, C) with C in {1, 3}")
        if not np.all(np.isfinite(v)):
            raise ValidationError("image values must be finite")
        if v.min() < -1e-9 or v.max() > 1 + 1e-9:
            raise ValidationError("image values must lie in [0, 1]")
        self.values = np.clip(v, 0.0, 1.0)

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def channels(self) -> int:
        return self.values.shape[2]


@dataclass
class RenderResult:
    """A rendered novel view.

    hole_mask is true where no source pixel splatted; those pixels hold the
    fill value 0 and an infinite zbuffer entry. Holes are deliberately not
    inpainted so downstream masking can exclude them.
    """

    image: ImageBuffer
    hole_mask: np.ndarray
    zbuffer: np.ndarray


def bilinear_sample(values: np.ndarray, px: np.ndarray, py: np.ndarray):
    """Bilinear interpolation of ``values`` at continuous pixel positions.

    ``values`` is (H, W) or (H, W, C); px/py are same-shaped position arrays.
    Returns (samples, in_bounds) where in_bounds marks positions whose
    nonzero-weight footprint lies inside the image (the range [0, W-1] x
    [0, H-1] inclusive). Out-of-bounds samples are computed from clamped
    indices and should be ignored via the mask.
    """
    v = np.asarray(values, dtype=np.float64)
    squeeze = v.ndim == 2
    if squeeze:
        v = v[:, :, None]
    h, w = v.shape[:2]
    px = np.asarray(px, dtype=np.float64)
    py = np.asarray(py, dtype=np.float64)

    inb = (px >= 0) & (px <= w - 1) & (py >= 0) & (py <= h - 1)

    x0f = np.floor(px)
    y0f = np.floor(py)
    wx = px - x0f
    wy = py - y0f
    x0 = np.clip(x0f.astype(np.int64), 0, w - 1)
    y0 = np.clip(y0f.astype(np.int64), 0, h - 1)
    x1 = np.clip(x0 + 1, 0, w - 1)
    y1 = np.clip(y0 + 1, 0, h - 1)

    wx = wx[..., None]
    wy = wy[..., None]
    out = (
        v[y0, x0] * (1 - wx) * (1 - wy)
        + v[y0, x1] * wx * (1 - wy)
        + v[y1, x0] * (1 - wx) * wy
        + v[y1, x1] * wx * wy
    )
    if squeeze:
        out = out[..., 0]
    return out, inb


def forward_render(image: ImageBuffer, flow: FlowField, depth: DepthMap) -> RenderResult:
    """Forward-splat ``image`` along ``flow`` into a novel view.

    Each valid source pixel x pushes its color to round(x + flow(x));
    collisions are resolved by the smallest depth, ties by the lowest source
    row-major index. Target pixels nothing lands on are holes.
    """
    h, w = depth.values.shape
    if image.height != h or image.width != w or flow.height != h or flow.width != w:
        raise ValidationError("forward_render: image, flow and depth dimensions must match")

    src_ok = flow.valid & depth.valid
    out = np.zeros_like(image.values)
    hole_mask = np.ones((h, w), dtype=bool)
    zbuffer = np.full((h, w), np.inf)

    if src_ok.any():
        sy, sx = np.nonzero(src_ok)
        tx = round_half_up(sx + flow.u[sy, sx])
        ty = round_half_up(sy + flow.v[sy, sx])
        on_image = (tx >= 0) & (tx < w) & (ty >= 0) & (ty < h)
        sx, sy, tx, ty = sx[on_image], sy[on_image], tx[on_image], ty[on_image]
        if sx.size:
            z = depth.values[sy, sx]
            src_idx = sy * w + sx
            tgt_idx = ty * w + tx
            # Primary key target, then depth, then source index: the first
            # element of each target group is the deterministic winner.
            order = np.lexsort((src_idx, z, tgt_idx))
            tgt_sorted = tgt_idx[order]
            _, first = np.unique(tgt_sorted, return_index=True)
            win = order[first]
            wy_, wx_ = tgt_idx[win] // w, tgt_idx[win] % w
            out[wy_, wx_] = image.values[sy[win], sx[win]]
            zbuffer[wy_, wx_] = z[win]
            hole_mask[wy_, wx_] = False

    return RenderResult(ImageBuffer(out), hole_mask, zbuffer)


def backward_warp(image: ImageBuffer, flow: FlowField):
    """Sample ``image`` at x + flow(x) with bilinear interpolation.

    Returns (warped ImageBuffer, in-bounds mask). The mask is false where the
    flow is invalid or the sampling footprint leaves the image; those output
    pixels are 0.
    """
    h, w = image.height, image.width
    if flow.height != h or flow.width != w:
        raise ValidationError("backward_warp: flow dimensions must match the image")

    us, vs = np.meshgrid(np.arange(w, dtype=np.float64), np.arange(h, dtype=np.float64))
    sx = us + flow.u
    sy = vs + flow.v
    sampled, inb = bilinear_sample(image.values, sx, sy)
    mask = flow.valid & inb
    sampled[~mask] = 0.0
    return ImageBuffer(sampled), mask
