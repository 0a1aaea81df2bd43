"""Pinhole camera geometry: intrinsics, SE(3) poses, pixel lifting,
reprojection into virtual views, and dense synthetic-flow computation.

Pixel convention used throughout the package: pixel centers sit at integer
coordinates, the origin is the top-left pixel, u grows rightward and v grows
downward. All functions here are pure; random sampling takes an explicit
``numpy.random.Generator`` so calls are safe from any number of threads.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import EmptyInputError, ValidationError

# A 3D point in a camera frame: plain float array of shape (3,), (x, y, z) meters.
Point3 = np.ndarray

ROTATION_TOL = 1e-6
Z_MIN_DEFAULT = 1e-3


def round_half_up(x) -> np.ndarray:
    """Nearest-integer rounding with ties going up (no banker's rounding)."""
    return np.floor(np.asarray(x, dtype=np.float64) + 0.5).astype(np.int64)


def rotation_validity_check(rotation: np.ndarray) -> bool:
    """True iff ``rotation`` is orthonormal with determinant 1.

    Checks max|R^T R - I| <= 1e-6 and |det(R) - 1| <= 1e-6.
    """
    r = np.asarray(rotation, dtype=np.float64)
    if r.shape != (3, 3) or not np.all(np.isfinite(r)):
        return False
    if np.max(np.abs(r.T @ r - np.eye(3))) > ROTATION_TOL:
        return False
    return abs(np.linalg.det(r) - 1.0) <= ROTATION_TOL


@dataclass(frozen=True)
class CameraIntrinsics:
    """Pinhole parameters mapping camera rays to pixels.

    fx, fy are focal lengths in pixels, (cx, cy) the principal point,
    width/height the image size. A principal point outside the image only
    warns: crops legitimately move it out of bounds.
    """

    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        for name in ("fx", "fy", "cx", "cy"):
            if not np.isfinite(getattr(self, name)):
                raise ValidationError(f"intrinsics: {name} must be finite")
        if self.fx <= 0 or self.fy <= 0:
            raise ValidationError("intrinsics: focal lengths must be positive")
        if self.width < 1 or self.height < 1:
            raise ValidationError("intrinsics: image size must be at least 1x1")
        if not (0 <= self.cx < self.width and 0 <= self.cy < self.height):
            warnings.warn(
                "principal point (%g, %g) outside %dx%d image"
                % (self.cx, self.cy, self.width, self.height),
                stacklevel=2,
            )

    @property
    def matrix(self) -> np.ndarray:
        """The 3x3 calibration matrix."""
        return np.array(
            [[self.fx, 0.0, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]]
        )


@dataclass(frozen=True)
class RigidPose:
    """SE(3) transform: x_out = rotation @ x_in + translation.

    Used both for virtual-view sampling and for sensor extrinsics.
    """

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        r = np.asarray(self.rotation, dtype=np.float64)
        t = np.asarray(self.translation, dtype=np.float64).reshape(-1)
        if r.shape != (3, 3):
            raise ValidationError("pose rotation must be 3x3")
        if t.shape != (3,):
            raise ValidationError("pose translation must be a 3-vector")
        if not np.all(np.isfinite(t)):
            raise ValidationError("pose translation must be finite")
        if not rotation_validity_check(r):
            raise ValidationError("pose rotation is not a proper rotation matrix")
        object.__setattr__(self, "rotation", r)
        object.__setattr__(self, "translation", t)

    @classmethod
    def identity(cls) -> "RigidPose":
        return cls(np.eye(3), np.zeros(3))

    @classmethod
    def from_euler_deg(cls, rx: float, ry: float, rz: float, translation=None) -> "RigidPose":
        """Compose per-axis rotations as Rz @ Ry @ Rx (angles in degrees)."""
        ax, ay, az = np.deg2rad([rx, ry, rz])
        cx, sx = np.cos(ax), np.sin(ax)
        cy, sy = np.cos(ay), np.sin(ay)
        cz, sz = np.cos(az), np.sin(az)
        rmx = np.array([[1, 0, 0], [0, cx, -sx], [0, sx, cx]])
        rmy = np.array([[cy, 0, sy], [0, 1, 0], [-sy, 0, cy]])
        rmz = np.array([[cz, -sz, 0], [sz, cz, 0], [0, 0, 1]])
        t = np.zeros(3) if translation is None else np.asarray(translation, dtype=np.float64)
        return cls(rmz @ rmy @ rmx, t)

    def apply(self, points: np.ndarray) -> np.ndarray:
        """Transform one (3,) point or an (N, 3) batch."""
        p = np.asarray(points, dtype=np.float64)
        return p @ self.rotation.T + self.translation

    def inverse(self) -> "RigidPose":
        rt = self.rotation.T
        return RigidPose(rt, -rt @ self.translation)


@dataclass
class DepthMap:
    """Per-pixel metric depth with a validity mask.

    The mask is intersected with finiteness/positivity on construction, so
    every valid entry is guaranteed finite and > 0.
    """

    values: np.ndarray
    valid: np.ndarray | None = None

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 2:
            raise ValidationError("depth values must be a 2-D array")
        ok = np.isfinite(v) & (v > 0)
        if self.valid is not None:
            mask = np.asarray(self.valid, dtype=bool)
            if mask.shape != v.shape:
                raise ValidationError("depth valid mask shape mismatch")
            ok &= mask
        self.values = v
        self.valid = ok

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def height(self) -> int:
        return self.values.shape[0]

    def median_valid_depth(self) -> float:
        if not self.valid.any():
            raise EmptyInputError("depth map has no valid pixels")
        return float(np.median(self.values[self.valid]))


@dataclass
class FlowField:
    """Dense per-pixel 2-D displacement in pixels with a validity mask.

    u is horizontal displacement, v vertical. Values at invalid pixels are
    meaningless; non-finite entries are forced invalid on construction.
    """

    u: np.ndarray
    v: np.ndarray
    valid: np.ndarray | None = None

    def __post_init__(self):
        u = np.asarray(self.u, dtype=np.float64)
        v = np.asarray(self.v, dtype=np.float64)
        if u.ndim != 2 or u.shape != v.shape:
            raise ValidationError("flow u/v must be 2-D arrays of equal shape")
        ok = np.isfinite(u) & np.isfinite(v)
        if self.valid is not None:
            mask = np.asarray(self.valid, dtype=bool)
            if mask.shape != u.shape:
                raise ValidationError("flow valid mask shape mismatch")
            ok &= mask
        self.u = u
        self.v = v
        self.valid = ok

    @property
    def width(self) -> int:
        return self.u.shape[1]

    @property
    def height(self) -> int:
        return self.u.shape[0]

    @property
    def vectors(self) -> np.ndarray:
        """(H, W, 2) view-style stack of (u, v)."""
        return np.stack([self.u, self.v], axis=-1)

    @classmethod
    def zeros(cls, width: int, height: int) -> "FlowField":
        return cls(np.zeros((height, width)), np.zeros((height, width)))

    @classmethod
    def constant(cls, width: int, height: int, du: float, dv: float) -> "FlowField":
        return cls(np.full((height, width), float(du)), np.full((height, width), float(dv)))

    @classmethod
    def from_vectors(cls, vectors: np.ndarray, valid=None) -> "FlowField":
        a = np.asarray(vectors, dtype=np.float64)
        if a.ndim != 3 or a.shape[2] != 2:
            raise ValidationError("flow vectors must have shape (H, W, 2)")
        return cls(a[..., 0], a[..., 1], valid)


@dataclass(frozen=True)
class PoseSamplingConfig:
    """Bounds for virtual-view pose sampling.

    Rotation angles are drawn per axis, uniform in +-max_rotation_deg;
    translation components are uniform in +-max_translation_frac times the
    median valid scene depth, so motion scales with the scene.
    """

    max_rotation_deg: float = 5.0
    max_translation_frac: float = 0.1
    seed: int = 0

    def __post_init__(self):
        if self.max_rotation_deg < 0 or self.max_translation_frac < 0:
            raise ValidationError("pose sampling bounds must be >= 0")


class Reprojection(NamedTuple):
    pixel: np.ndarray
    depth: float
    valid: bool


def lift(x, depth: float, intrinsics: CameraIntrinsics) -> Point3:
    """Back-project pixel ``x`` = (u, v) at ``depth`` meters into the camera frame.

    Returns depth * K^-1 * [u, v, 1]; the z component equals ``depth`` exactly.
    """
    d = float(depth)
    if not np.isfinite(d) or d <= 0:
        raise ValidationError(f"lift: depth must be finite and > 0, got {depth!r}")
    u, v = float(x[0]), float(x[1])
    return np.array(
        [d * (u - intrinsics.cx) / intrinsics.fx, d * (v - intrinsics.cy) / intrinsics.fy, d]
    )


def reproject(
    point: Point3,
    intrinsics: CameraIntrinsics,
    pose: RigidPose,
    z_min: float = Z_MIN_DEFAULT,
) -> Reprojection:
    """Map a 3-D camera-frame point into a posed virtual view.

    Applies x' = R x + t, then the pinhole projection. Points with projected
    depth <= z_min come back with valid=False rather than raising; the pixel
    is still reported when the depth is positive enough to divide by.
    """
    p = np.asarray(point, dtype=np.float64).reshape(3)
    if not np.all(np.isfinite(p)):
        raise ValidationError("reproject: point must be finite")
    q = pose.rotation @ p + pose.translation
    z = float(q[2])
    ok = z > z_min
    denom = z if z > 0 else np.nan
    pixel = np.array(
        [
            intrinsics.fx * q[0] / denom + intrinsics.cx,
            intrinsics.fy * q[1] / denom + intrinsics.cy,
        ]
    )
    return Reprojection(pixel, z, bool(ok))


def synth_flow(
    depth: DepthMap,
    intrinsics: CameraIntrinsics,
    pose: RigidPose,
    z_min: float = Z_MIN_DEFAULT,
) -> FlowField:
    """Dense synthetic flow induced by viewing the lifted scene from ``pose``.

    Per valid source pixel x, the flow is x' - x where x' is the lift+reproject
    image of x. Pixels with invalid depth, projected depth <= z_min, or x'
    outside [0, width-1] x [0, height-1] are invalid in the result. Projections
    within 1e-6 px of the border count as in bounds and are snapped onto it,
    so boundary pixels survive float round-trip noise.
    """
    h, w = depth.values.shape
    if not depth.valid.any():
        raise EmptyInputError("synth_flow: depth map has no valid pixels")

    us, vs = np.meshgrid(np.arange(w, dtype=np.float64), np.arange(h, dtype=np.float64))
    d = depth.values
    x = d * (us - intrinsics.cx) / intrinsics.fx
    y = d * (vs - intrinsics.cy) / intrinsics.fy

    r, t = pose.rotation, pose.translation
    xp = r[0, 0] * x + r[0, 1] * y + r[0, 2] * d + t[0]
    yp = r[1, 0] * x + r[1, 1] * y + r[1, 2] * d + t[1]
    zp = r[2, 0] * x + r[2, 1] * y + r[2, 2] * d + t[2]

    ok = depth.valid & (zp > z_min)
    with np.errstate(divide="ignore", invalid="ignore"):
        up = intrinsics.fx * xp / zp + intrinsics.cx
        vp = intrinsics.fy * yp / zp + intrinsics.cy
    eps = 1e-6
    ok &= np.isfinite(up) & np.isfinite(vp)
    ok &= (up >= -eps) & (up <= w - 1 + eps) & (vp >= -eps) & (vp <= h - 1 + eps)
    up = np.clip(up, 0.0, w - 1.0)
    vp = np.clip(vp, 0.0, h - 1.0)

    fu = np.where(ok, up - us, 0.0)
    fv = np.where(ok, vp - vs, 0.0)
    return FlowField(fu, fv, ok)


def sample_pose(
    cfg: PoseSamplingConfig, median_depth: float, rng: np.random.Generator
) -> RigidPose:
    """Draw a virtual camera pose within the configured bounds.

    Per-axis Euler angles are uniform in +-max_rotation_deg and composed
    Rz @ Ry @ Rx; translation components are uniform in +-max_translation_frac
    * median_depth. Deterministic given the generator state.
    """
    if not np.isfinite(median_depth) or median_depth <= 0:
        raise ValidationError("sample_pose: median_depth must be finite and > 0")
    a = cfg.max_rotation_deg
    angles = rng.uniform(-a, a, size=3)
    bound = cfg.max_translation_frac * median_depth
    translation = rng.uniform(-bound, bound, size=3)
    return RigidPose.from_euler_deg(angles[0], angles[1], angles[2], translation)


def sample_intrinsics(width: int, height: int, rng: np.random.Generator) -> CameraIntrinsics:
    """Plausible intrinsics for an uncalibrated image: focal length uniform in
    [0.8, 1.5] x width, principal point at the image center."""
    f = rng.uniform(0.8, 1.5) * width
    return CameraIntrinsics(f, f, (width - 1) / 2.0, (height - 1) / 2.0, width, height)
