"""Flow visualization: direction as hue, magnitude as saturation."""

from __future__ import annotations

import numpy as np

from .geometry import FlowField
from .renderer import ImageBuffer


def _hsv_to_rgb(h: np.ndarray, s: np.ndarray, v: np.ndarray) -> np.ndarray:
    i = np.floor(h * 6.0).astype(int) % 6
    f = h * 6.0 - np.floor(h * 6.0)
    p = v * (1 - s)
    q = v * (1 - f * s)
    t = v * (1 - (1 - f) * s)
    rgb = np.zeros(h.shape + (3,))
    for k, channels in enumerate(
        [(v, t, p), (q, v, p), (p, v, t), (p, q, v), (t, p, v), (v, p, q)]
    ):
        m = i == k
        for c in range(3):
            rgb[..., c][m] = channels[c][m]
    return rgb


def flow_to_color(flow: FlowField, max_magnitude: float | None = None) -> ImageBuffer:
    """Angle-hue / magnitude-saturation coloring; invalid pixels are black."""
    mag = np.hypot(flow.u, flow.v)
    if max_magnitude is None:
        valid_mags = mag[flow.valid]
        max_magnitude = float(valid_mags.max()) if valid_mags.size else 0.0
    angle = np.arctan2(flow.v, flow.u)
    hue = (angle / (2 * np.pi)) % 1.0
    sat = np.clip(mag / max_magnitude, 0.0, 1.0) if max_magnitude > 0 else np.zeros_like(mag)
    rgb = _hsv_to_rgb(hue, sat, np.ones_like(hue))
    rgb[~flow.valid] = 0.0
    return ImageBuffer(rgb)
