"""Affine augmentation of image pairs and the analytically derived reference
flow for the consistency check.

The same affine transform must be applied to both images of a pair: if x in
the original target image corresponds to x + F(x) in the source, then under
A(x) = m x + t the augmented pixel A(x) corresponds to A(x + F(x)), so the
augmented displacement is m F(A^-1 x~). That closed form only holds with a
shared A, which is why these helpers take a single transform.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import EmptyInputError, ValidationError
from .geometry import FlowField
from .losses import TrimConfig, trimmed_flow_loss
from .renderer import ImageBuffer, bilinear_sample


@dataclass(frozen=True)
class AffineTransform2D:
    """x -> m @ x + t on pixel coordinates; m must be invertible."""

    m: np.ndarray
    t: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.m, dtype=np.float64)
        t = np.asarray(self.t, dtype=np.float64).reshape(-1)
        if m.shape != (2, 2) or t.shape != (2,):
            raise ValidationError("affine transform needs a 2x2 matrix and a 2-vector")
        if not (np.all(np.isfinite(m)) and np.all(np.isfinite(t))):
            raise ValidationError("affine transform entries must be finite")
        if abs(np.linalg.det(m)) <= 1e-8:
            raise ValidationError("affine transform is singular")
        object.__setattr__(self, "m", m)
        object.__setattr__(self, "t", t)

    @classmethod
    def identity(cls) -> "AffineTransform2D":
        return cls(np.eye(2), np.zeros(2))

    @classmethod
    def from_scale_rotation(
        cls, scale: float, angle_deg: float, translation=(0.0, 0.0)
    ) -> "AffineTransform2D":
        a = np.deg2rad(angle_deg)
        c, s = np.cos(a), np.sin(a)
        return cls(scale * np.array([[c, -s], [s, c]]), np.asarray(translation, dtype=np.float64))

    def apply(self, points: np.ndarray) -> np.ndarray:
        p = np.asarray(points, dtype=np.float64)
        return p @ self.m.T + self.t

    def inverse(self) -> "AffineTransform2D":
        minv = np.linalg.inv(self.m)
        return AffineTransform2D(minv, -minv @ self.t)

    def about(self, center) -> "AffineTransform2D":
        """The same linear part applied about ``center`` instead of the origin."""
        c = np.asarray(center, dtype=np.float64)
        return AffineTransform2D(self.m, self.t + c - self.m @ c)


@dataclass(frozen=True)
class AffineSamplingConfig:
    """Uniform sampling ranges for affine augmentation."""

    scale_range: tuple = (0.9, 1.1)
    rotation_deg_range: tuple = (-10.0, 10.0)
    translation_px_range: tuple = (-20.0, 20.0)
    seed: int = 0

    def __post_init__(self):
        for name in ("scale_range", "rotation_deg_range", "translation_px_range"):
            lo, hi = getattr(self, name)
            if not (np.isfinite(lo) and np.isfinite(hi)) or lo > hi:
                raise ValidationError(f"{name} must be a finite (lo, hi) with lo <= hi")
            object.__setattr__(self, name, (float(lo), float(hi)))
        if self.scale_range[0] <= 0:
            raise ValidationError("scale bounds must be > 0")


def sample_affine(cfg: AffineSamplingConfig, rng: np.random.Generator) -> AffineTransform2D:
    """Draw scale * rotation plus translation, uniform within the config ranges."""
    scale = rng.uniform(*cfg.scale_range)
    angle = rng.uniform(*cfg.rotation_deg_range)
    translation = rng.uniform(cfg.translation_px_range[0], cfg.translation_px_range[1], size=2)
    return AffineTransform2D.from_scale_rotation(scale, angle, translation)


def warp_image_affine(image: ImageBuffer, transform: AffineTransform2D):
    """Resample ``image`` under the affine transform: out(x~) = image(A^-1 x~).

    Returns (warped ImageBuffer, in-bounds mask); the mask is false where the
    sampling footprint leaves the image, and those pixels are 0.
    """
    h, w = image.height, image.width
    us, vs = np.meshgrid(np.arange(w, dtype=np.float64), np.arange(h, dtype=np.float64))
    inv = transform.inverse()
    src = np.stack([us, vs], axis=-1) @ inv.m.T + inv.t
    sampled, inb = bilinear_sample(image.values, src[..., 0], src[..., 1])
    sampled[~inb] = 0.0
    return ImageBuffer(sampled), inb


def derive_transformed_flow(flow: FlowField, transform: AffineTransform2D) -> FlowField:
    """Reference flow for a pair augmented by the same affine transform.

    F*(x~) = m @ F(A^-1 x~), with F sampled bilinearly. A pixel is valid only
    when all four interpolation neighbors of the sample position exist and are
    valid in F, so exact-integer border positions lose validity (their +1
    neighbor would fall outside the field).
    """
    h, w = flow.height, flow.width
    us, vs = np.meshgrid(np.arange(w, dtype=np.float64), np.arange(h, dtype=np.float64))
    inv = transform.inverse()
    px = inv.m[0, 0] * us + inv.m[0, 1] * vs + inv.t[0]
    py = inv.m[1, 0] * us + inv.m[1, 1] * vs + inv.t[1]

    x0 = np.floor(px).astype(np.int64)
    y0 = np.floor(py).astype(np.int64)
    ok = (x0 >= 0) & (x0 + 1 <= w - 1) & (y0 >= 0) & (y0 + 1 <= h - 1)

    x0c = np.clip(x0, 0, w - 2)
    y0c = np.clip(y0, 0, h - 2)
    wx = px - x0c
    wy = py - y0c
    ok &= (
        flow.valid[y0c, x0c]
        & flow.valid[y0c, x0c + 1]
        & flow.valid[y0c + 1, x0c]
        & flow.valid[y0c + 1, x0c + 1]
    )

    def interp(channel):
        return (
            channel[y0c, x0c] * (1 - wx) * (1 - wy)
            + channel[y0c, x0c + 1] * wx * (1 - wy)
            + channel[y0c + 1, x0c] * (1 - wx) * wy
            + channel[y0c + 1, x0c + 1] * wx * wy
        )

    fu = interp(flow.u)
    fv = interp(flow.v)
    m = transform.m
    out_u = np.where(ok, m[0, 0] * fu + m[0, 1] * fv, 0.0)
    out_v = np.where(ok, m[1, 0] * fu + m[1, 1] * fv, 0.0)
    return FlowField(out_u, out_v, ok)


def consistency_loss(
    predicted: FlowField, reference: FlowField, cfg: TrimConfig
) -> float:
    """Trimmed L1 loss between an augmented-pair prediction and the derived
    reference flow, over the intersection of their valid masks."""
    joint = predicted.valid & reference.valid
    if not joint.any():
        raise EmptyInputError("consistency_loss: no jointly valid pixels")
    loss, _ = trimmed_flow_loss(predicted, reference, joint, cfg)
    return loss
