"""File formats: Middlebury-style .flo flow files, PFM tensors, PNG images
and masks, and raw LiDAR point records.

Flow files: 4-byte float magic 202021.25, little-endian int32 width and
height, then row-major interleaved (u, v) float32 pairs. Invalid pixels are
stored as the sentinel 1e9 in both components.

PFM: "Pf" (1 channel) / "PF" (3 channels) header, negative scale meaning
little-endian, scanlines bottom-to-top.

LiDAR: binary little-endian float32 records (x, y, z, intensity) with file
size divisible by 16, or ASCII "x y z" per line for .txt/.xyz/.asc files.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import FlowFileError, ValidationError
from .geometry import FlowField
from .renderer import ImageBuffer

FLOW_MAGIC = 202021.25
FLOW_INVALID = 1e9


def write_flow(path, flow: FlowField) -> None:
    """Write a flow field; invalid pixels become the 1e9 sentinel."""
    path = Path(path)
    h, w = flow.u.shape
    data = np.empty((h, w, 2), dtype="<f4")
    data[..., 0] = flow.u
    data[..., 1] = flow.v
    data[~flow.valid] = FLOW_INVALID
    with open(path, "wb") as f:
        f.write(struct.pack("<fii", FLOW_MAGIC, w, h))
        f.write(data.tobytes())


def read_flow(path) -> FlowField:
    path = Path(path)
    with open(path, "rb") as f:
        header = f.read(12)
        if len(header) != 12:
            raise FlowFileError(f"{path}: truncated flow header")
        magic, w, h = struct.unpack("<fii", header)
        if magic != np.float32(FLOW_MAGIC):
            raise FlowFileError(f"{path}: bad magic number {magic!r}")
        if w < 1 or h < 1:
            raise FlowFileError(f"{path}: bad dimensions {w}x{h}")
        raw = f.read(8 * w * h)
        if len(raw) != 8 * w * h:
            raise FlowFileError(f"{path}: truncated flow data")
    data = np.frombuffer(raw, dtype="<f4").reshape(h, w, 2)
    sentinel = np.float32(FLOW_INVALID)
    valid = ~((data[..., 0] == sentinel) & (data[..., 1] == sentinel))
    return FlowField(data[..., 0], data[..., 1], valid)


def write_pfm(path, data: np.ndarray, scale: float = -1.0) -> None:
    """Write a (H, W) or (H, W, 3) float array as PFM (little-endian)."""
    a = np.asarray(data, dtype=np.float32)
    if a.ndim == 3 and a.shape[2] == 1:
        a = a[:, :, 0]
    if a.ndim == 2:
        header = b"Pf"
    elif a.ndim == 3 and a.shape[2] == 3:
        header = b"PF"
    else:
        raise ValidationError("PFM supports 1- or 3-channel arrays")
    if scale >= 0:
        raise ValidationError("only little-endian PFM output is supported (scale < 0)")
    h, w = a.shape[:2]
    with open(path, "wb") as f:
        f.write(header + b"\n")
        f.write(f"{w} {h}\n".encode())
        f.write(f"{scale}\n".encode())
        f.write(np.flipud(a).astype("<f4").tobytes())


def read_pfm(path) -> np.ndarray:
    path = Path(path)
    with open(path, "rb") as f:
        kind = f.readline().rstrip()
        if kind == b"PF":
            channels = 3
        elif kind == b"Pf":
            channels = 1
        else:
            raise FlowFileError(f"{path}: not a PFM file (header {kind!r})")
        dims = f.readline().split()
        if len(dims) != 2:
            raise FlowFileError(f"{path}: bad PFM dimension line")
        w, h = int(dims[0]), int(dims[1])
        scale = float(f.readline())
        endian = "<" if scale < 0 else ">"
        count = w * h * channels
        raw = f.read(4 * count)
        if len(raw) != 4 * count:
            raise FlowFileError(f"{path}: truncated PFM data")
    a = np.frombuffer(raw, dtype=endian + "f4")
    a = a.reshape((h, w) if channels == 1 else (h, w, channels))
    return np.flipud(a).astype(np.float64)


def read_image(path) -> ImageBuffer:
    """Load a PNG (or any Pillow-readable image) as intensities in [0, 1]."""
    with Image.open(path) as im:
        if im.mode in ("I", "I;16", "I;16B", "I;16L"):
            arr = np.asarray(im, dtype=np.float64) / 65535.0
        elif im.mode == "L":
            arr = np.asarray(im, dtype=np.float64) / 255.0
        else:
            arr = np.asarray(im.convert("RGB"), dtype=np.float64) / 255.0
    return ImageBuffer(np.clip(arr, 0.0, 1.0))


def write_image(path, image: ImageBuffer, bit_depth: int = 8) -> None:
    v = image.values
    if bit_depth == 8:
        arr = np.clip(np.rint(v * 255.0), 0, 255).astype(np.uint8)
        im = Image.fromarray(arr[:, :, 0], mode="L") if image.channels == 1 else Image.fromarray(arr)
    elif bit_depth == 16:
        if image.channels != 1:
            raise ValidationError("16-bit output is only supported for grayscale")
        arr = np.clip(np.rint(v[:, :, 0] * 65535.0), 0, 65535).astype(np.uint16)
        im = Image.fromarray(arr, mode="I;16")
    else:
        raise ValidationError("bit_depth must be 8 or 16")
    im.save(path, format="PNG")


def write_mask(path, mask: np.ndarray) -> None:
    """Write a boolean mask as an 8-bit PNG, 255 = labeled/valid."""
    arr = np.where(np.asarray(mask, dtype=bool), 255, 0).astype(np.uint8)
    Image.fromarray(arr, mode="L").save(path, format="PNG")


def read_mask(path) -> np.ndarray:
    with Image.open(path) as im:
        arr = np.asarray(im.convert("L"))
    return arr >= 128


def read_lidar(path) -> np.ndarray:
    """Read LiDAR points as an (N, 3) array (intensity, if present, dropped)."""
    path = Path(path)
    if path.suffix.lower() in (".txt", ".xyz", ".asc"):
        pts = np.loadtxt(path, dtype=np.float64, ndmin=2)
        if pts.shape[1] < 3:
            raise FlowFileError(f"{path}: expected at least 3 columns per line")
        return pts[:, :3]
    raw = path.read_bytes()
    if len(raw) == 0 or len(raw) % 16 != 0:
        raise FlowFileError(f"{path}: binary LiDAR size must be a positive multiple of 16")
    return np.frombuffer(raw, dtype="<f4").reshape(-1, 4)[:, :3].astype(np.float64)
