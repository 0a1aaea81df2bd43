"""Validity masking, masked and outlier-trimmed flow losses, photometric and
feature-space image losses, and the combined objective value.

Every loss is a pure set-function over pixels: permuting pixel order leaves
values unchanged, and reductions use numpy's deterministic pairwise summation
so results are bit-stable across thread counts.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.ndimage import correlate1d, gaussian_filter

from . import fileio
from .errors import EmptyInputError, ValidationError
from .geometry import FlowField
from .renderer import ImageBuffer, backward_warp, bilinear_sample

# Per-pixel boolean masks are plain bool arrays shaped like the image/flow.
ValidMask = np.ndarray

PHOTOMETRIC_THRESHOLD_DEFAULT = 0.1

# Classic 5-tap binomial smoothing kernel used by the pyramid extractor.
_PYRAMID_KERNEL = np.array([1.0, 4.0, 6.0, 4.0, 1.0]) / 16.0


@dataclass(frozen=True)
class TrimConfig:
    """Fraction (percent) of the largest residuals to discard, in [0, 100)."""

    tau_percent: float = 10.0

    def __post_init__(self):
        if not (0 <= self.tau_percent < 100) or not np.isfinite(self.tau_percent):
            raise ValidationError("tau_percent must be in [0, 100)")


@dataclass(frozen=True)
class FeatureDistanceConfig:
    """Configuration of the multi-layer feature distance.

    layer_weights holds one non-negative weight per layer. The built-in
    "pyramid-gradient" extractor uses smoothed-pyramid levels concatenated
    with their horizontal/vertical gradients; "external" reads per-layer
    feature tensors from PFM files (one file per layer and image).
    """

    layer_weights: tuple = (1.0,)
    extractor: str = "pyramid-gradient"
    feature_files_a: tuple = ()
    feature_files_b: tuple = ()

    def __post_init__(self):
        w = tuple(float(x) for x in self.layer_weights)
        if len(w) == 0:
            raise ValidationError("feature distance needs at least one layer")
        if any(not np.isfinite(x) or x < 0 for x in w):
            raise ValidationError("layer weights must be finite and >= 0")
        if self.extractor not in ("pyramid-gradient", "external"):
            raise ValidationError(f"unknown extractor {self.extractor!r}")
        if self.extractor == "external":
            if len(self.feature_files_a) != len(w) or len(self.feature_files_b) != len(w):
                raise ValidationError("external extractor needs one feature file per layer and image")
        object.__setattr__(self, "layer_weights", w)
        object.__setattr__(self, "feature_files_a", tuple(self.feature_files_a))
        object.__setattr__(self, "feature_files_b", tuple(self.feature_files_b))


@dataclass(frozen=True)
class CombinedLossWeights:
    """Weights of the transfer and consistency terms in the overall objective."""

    lambda_transfer: float = 2.0
    lambda_consistency: float = 0.05

    def __post_init__(self):
        for name in ("lambda_transfer", "lambda_consistency"):
            v = getattr(self, name)
            if not np.isfinite(v) or v < 0:
                raise ValidationError(f"{name} must be finite and >= 0")


def photometric_mask(
    image: ImageBuffer,
    rendered: ImageBuffer,
    flow: FlowField,
    threshold: float = PHOTOMETRIC_THRESHOLD_DEFAULT,
    hole_mask: np.ndarray | None = None,
) -> ValidMask:
    """Per-pixel validity from a photometric consistency check.

    Warps ``rendered`` back to the source view along ``flow`` and marks a
    pixel valid when the flow is valid there, the warp stays in bounds, the
    sampled footprint touches no render hole, and the mean absolute channel
    error against ``image`` is at most ``threshold``.
    """
    if image.values.shape != rendered.values.shape:
        raise ValidationError("photometric_mask: image dimensions must match")
    if flow.height != image.height or flow.width != image.width:
        raise ValidationError("photometric_mask: flow dimensions must match")
    if not np.isfinite(threshold) or threshold < 0:
        raise ValidationError("photometric_mask: threshold must be >= 0")

    warped, inb = backward_warp(rendered, flow)
    err = np.mean(np.abs(warped.values - image.values), axis=2)
    mask = flow.valid & inb & (err <= threshold)

    if hole_mask is not None:
        hm = np.asarray(hole_mask, dtype=np.float64)
        if hm.shape != (image.height, image.width):
            raise ValidationError("photometric_mask: hole mask dimensions must match")
        us, vs = np.meshgrid(
            np.arange(image.width, dtype=np.float64),
            np.arange(image.height, dtype=np.float64),
        )
        hole_frac, _ = bilinear_sample(hm, us + flow.u, vs + flow.v)
        mask &= hole_frac <= 0
    return mask


def _residuals_l1(flow: FlowField, reference: FlowField, mask: ValidMask):
    if flow.u.shape != reference.u.shape:
        raise ValidationError("flow fields must share dimensions")
    m = np.asarray(mask, dtype=bool)
    if m.shape != flow.u.shape:
        raise ValidationError("mask dimensions must match the flow")
    return np.abs(flow.u - reference.u) + np.abs(flow.v - reference.v), m


def masked_flow_loss(flow: FlowField, reference: FlowField, mask: ValidMask) -> float:
    """Mean per-pixel L1 flow error (|du| + |dv|) over masked pixels.

    Residuals are summed in sorted order, so the value is a pure set function
    of the masked pixels: bit-identical under any pixel permutation.
    """
    res, m = _residuals_l1(flow, reference, mask)
    n = int(m.sum())
    if n == 0:
        raise EmptyInputError("masked_flow_loss: mask has no valid pixels")
    return float(np.sort(res[m]).sum() / n)


def trim_count(tau_percent: float, n_valid: int) -> int:
    """Number of residuals removed: ceil(tau/100 * N), so any tau > 0 trims."""
    return int(math.ceil(tau_percent * n_valid / 100.0))


def trimmed_flow_loss(
    flow: FlowField, reference: FlowField, mask: ValidMask, cfg: TrimConfig
):
    """Outlier-robust flow loss: drop the top-tau% largest L1 residuals.

    Returns (loss, keep_mask) where keep_mask marks the surviving pixel set.
    Residual ties at the trim boundary keep the lower row-major index.
    """
    res, m = _residuals_l1(flow, reference, mask)
    n = int(m.sum())
    if n == 0:
        raise EmptyInputError("trimmed_flow_loss: mask has no valid pixels")
    n_trim = trim_count(cfg.tau_percent, n)
    n_keep = n - n_trim
    if n_keep <= 0:
        raise EmptyInputError(f"trimmed_flow_loss: tau={cfg.tau_percent} removes all {n} pixels")

    flat_idx = np.nonzero(m.ravel())[0]
    r = res.ravel()[flat_idx]
    order = np.lexsort((flat_idx, r))
    kept = flat_idx[order[:n_keep]]

    keep_mask = np.zeros(m.shape, dtype=bool)
    keep_mask.ravel()[kept] = True
    return float(r[order[:n_keep]].sum() / n_keep), keep_mask


def photometric_loss(
    warped: ImageBuffer, target: ImageBuffer, mask: ValidMask, kind: str = "l1"
) -> float:
    """Masked photometric error: mean absolute error, or mean (1 - SSIM) / 2.

    SSIM uses an 11x11 Gaussian window (sigma 1.5) with stability constants
    C1 = 0.01^2 and C2 = 0.03^2 on the [0, 1] intensity range; the window is
    evaluated with reflected borders and the SSIM map is averaged over masked
    pixels (channels averaged first).
    """
    if warped.values.shape != target.values.shape:
        raise ValidationError("photometric_loss: image dimensions must match")
    m = np.asarray(mask, dtype=bool)
    if m.shape != (warped.height, warped.width):
        raise ValidationError("photometric_loss: mask dimensions must match")
    if not m.any():
        raise EmptyInputError("photometric_loss: mask has no valid pixels")

    if kind == "l1":
        err = np.mean(np.abs(warped.values - target.values), axis=2)
        return float(np.sort(err[m]).sum() / m.sum())
    if kind == "ssim":
        smap = np.mean(ssim_map(warped.values, target.values), axis=2)
        return float(((1.0 - smap[m]) / 2.0).mean())
    raise ValidationError(f"photometric_loss: unknown kind {kind!r}")


def _window(x: np.ndarray) -> np.ndarray:
    return gaussian_filter(x, sigma=1.5, radius=5, mode="reflect")


def ssim_map(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Per-pixel, per-channel SSIM between two (H, W, C) arrays in [0, 1]."""
    c1 = 0.01**2
    c2 = 0.03**2
    out = np.empty_like(a)
    for c in range(a.shape[2]):
        x, y = a[:, :, c], b[:, :, c]
        mx, my = _window(x), _window(y)
        vx = _window(x * x) - mx * mx
        vy = _window(y * y) - my * my
        cxy = _window(x * y) - mx * my
        out[:, :, c] = ((2 * mx * my + c1) * (2 * cxy + c2)) / (
            (mx * mx + my * my + c1) * (vx + vy + c2)
        )
    return out


def _smooth_and_decimate(level: np.ndarray) -> np.ndarray:
    s = correlate1d(level, _PYRAMID_KERNEL, axis=0, mode="reflect")
    s = correlate1d(s, _PYRAMID_KERNEL, axis=1, mode="reflect")
    return s[::2, ::2]


def _gradients(level: np.ndarray):
    gy = np.gradient(level, axis=0) if level.shape[0] > 1 else np.zeros_like(level)
    gx = np.gradient(level, axis=1) if level.shape[1] > 1 else np.zeros_like(level)
    return gx, gy


def pyramid_gradient_features(values: np.ndarray, n_layers: int) -> list[np.ndarray]:
    """Built-in feature maps: smoothing-pyramid level l (level 0 is the raw
    image) concatenated with its horizontal and vertical gradients."""
    feats = []
    level = np.asarray(values, dtype=np.float64)
    for l in range(n_layers):
        gx, gy = _gradients(level)
        feats.append(np.concatenate([level, gx, gy], axis=2))
        if l + 1 < n_layers:
            level = _smooth_and_decimate(level)
    return feats


def feature_distance(a: ImageBuffer, b: ImageBuffer, cfg: FeatureDistanceConfig) -> float:
    """Weighted sum over layers of the L2 norm of feature-map differences."""
    if a.values.shape != b.values.shape:
        raise ValidationError("feature_distance: image dimensions must match")
    n_layers = len(cfg.layer_weights)
    if cfg.extractor == "pyramid-gradient":
        fa = pyramid_gradient_features(a.values, n_layers)
        fb = pyramid_gradient_features(b.values, n_layers)
    else:
        fa = [fileio.read_pfm(p) for p in cfg.feature_files_a]
        fb = [fileio.read_pfm(p) for p in cfg.feature_files_b]
        for x, y in zip(fa, fb):
            if x.shape != y.shape:
                raise ValidationError("feature_distance: external layer shapes must match")
    total = 0.0
    for w, x, y in zip(cfg.layer_weights, fa, fb):
        total += w * float(np.linalg.norm((x - y).ravel()))
    return total


def combined_objective(
    flow_loss_a: float,
    flow_loss_b: float,
    transfer_loss: float,
    consistency_loss: float,
    weights: CombinedLossWeights,
) -> float:
    """Overall objective: both branch flow losses plus the weighted transfer
    and consistency terms."""
    terms = (flow_loss_a, flow_loss_b, transfer_loss, consistency_loss)
    for t in terms:
        if not np.isfinite(t) or t < 0:
            raise ValidationError(f"combined_objective: terms must be finite and >= 0, got {t!r}")
    return (
        flow_loss_a
        + flow_loss_b
        + weights.lambda_transfer * transfer_loss
        + weights.lambda_consistency * consistency_loss
    )


def flow_loss_subgradient(
    flow: FlowField, reference: FlowField, keep: ValidMask
) -> np.ndarray:
    """Subgradient of the trimmed loss w.r.t. the flow, with the surviving
    set held fixed: sign(flow - reference) / |keep| per kept pixel, else 0.

    Returned as an (H, W, 2) array of (d/du, d/dv) entries.
    """
    k = np.asarray(keep, dtype=bool)
    if k.shape != flow.u.shape:
        raise ValidationError("flow_loss_subgradient: keep mask dimensions must match")
    n = int(k.sum())
    if n == 0:
        raise EmptyInputError("flow_loss_subgradient: keep mask is empty")
    grad = np.zeros(flow.u.shape + (2,))
    grad[..., 0] = np.where(k, np.sign(flow.u - reference.u) / n, 0.0)
    grad[..., 1] = np.where(k, np.sign(flow.v - reference.v) / n, 0.0)
    return grad
