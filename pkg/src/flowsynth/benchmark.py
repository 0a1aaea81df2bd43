"""Cross-modal flow benchmark construction and scoring: LiDAR-projected
sparse ground truth, endpoint-error / outlier-rate metrics, focal-length
normalization, and per-sequence train/test splitting.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .errors import ConfigError, EmptyInputError, ValidationError
from .geometry import CameraIntrinsics, FlowField, RigidPose, round_half_up
from .renderer import ImageBuffer, bilinear_sample

OCCLUSION_RADIUS_PX_DEFAULT = 1.0
OCCLUSION_DEPTH_M_DEFAULT = 1.0

F1_PIXEL_THRESHOLD = 3.0
F1_RELATIVE_THRESHOLD = 0.05


@dataclass
class LidarFrame:
    """One sweep of LiDAR points in the sensor frame, meters."""

    points: np.ndarray
    intensity: np.ndarray | None = None

    def __post_init__(self):
        p = np.asarray(self.points, dtype=np.float64)
        if p.ndim != 2 or p.shape[1] != 3 or p.shape[0] == 0:
            raise ValidationError("LiDAR frame needs a nonempty (N, 3) point array")
        if not np.all(np.isfinite(p)):
            raise ValidationError("LiDAR points must be finite")
        self.points = p
        if self.intensity is not None:
            self.intensity = np.asarray(self.intensity, dtype=np.float64).reshape(-1)


@dataclass(frozen=True)
class CameraRig:
    """Two calibrated cameras; extrinsics map the LiDAR frame into each camera."""

    intrinsics_a: CameraIntrinsics
    intrinsics_b: CameraIntrinsics
    extrinsics_a: RigidPose
    extrinsics_b: RigidPose


@dataclass
class SparseFlowGT:
    """Sparse flow labels: integer pixels in image B and the flow vectors
    (continuous) pointing toward image A."""

    pixels: np.ndarray
    flow: np.ndarray
    width: int
    height: int

    def __post_init__(self):
        px = np.asarray(self.pixels, dtype=np.int64).reshape(-1, 2)
        fl = np.asarray(self.flow, dtype=np.float64).reshape(-1, 2)
        if px.shape[0] != fl.shape[0]:
            raise ValidationError("sparse GT pixel/flow counts differ")
        if px.shape[0]:
            if px[:, 0].min() < 0 or px[:, 0].max() >= self.width:
                raise ValidationError("sparse GT pixel u out of bounds")
            if px[:, 1].min() < 0 or px[:, 1].max() >= self.height:
                raise ValidationError("sparse GT pixel v out of bounds")
            if not np.all(np.isfinite(fl)):
                raise ValidationError("sparse GT flow must be finite")
        self.pixels = px
        self.flow = fl

    def __len__(self) -> int:
        return self.pixels.shape[0]

    def to_dense(self):
        """(FlowField, labeled mask) representation on the full image grid."""
        u = np.zeros((self.height, self.width))
        v = np.zeros((self.height, self.width))
        mask = np.zeros((self.height, self.width), dtype=bool)
        u[self.pixels[:, 1], self.pixels[:, 0]] = self.flow[:, 0]
        v[self.pixels[:, 1], self.pixels[:, 0]] = self.flow[:, 1]
        mask[self.pixels[:, 1], self.pixels[:, 0]] = True
        return FlowField(u, v, mask), mask

    @classmethod
    def from_dense(cls, flow: FlowField, mask: np.ndarray) -> "SparseFlowGT":
        m = np.asarray(mask, dtype=bool) & flow.valid
        ys, xs = np.nonzero(m)
        return cls(
            np.stack([xs, ys], axis=1),
            np.stack([flow.u[ys, xs], flow.v[ys, xs]], axis=1),
            flow.width,
            flow.height,
        )


@dataclass
class MetricReport:
    """Mean endpoint error (pixels), outlier percentage, and point count."""

    epe: float
    f1: float
    n_points: int

    def __post_init__(self):
        if self.n_points > 0 and (self.epe < 0 or not (0 <= self.f1 <= 100)):
            raise ValidationError("metric report out of range")

    @classmethod
    def merge(cls, reports) -> "MetricReport":
        """Point-weighted associative merge of per-frame reports."""
        reports = list(reports)
        n = sum(r.n_points for r in reports)
        if n == 0:
            return cls(0.0, 0.0, 0)
        epe = sum(r.epe * r.n_points for r in reports) / n
        f1 = sum(r.f1 * r.n_points for r in reports) / n
        return cls(float(epe), float(f1), n)


def _project_points(points: np.ndarray, pose: RigidPose, intrinsics: CameraIntrinsics):
    cam = pose.apply(points)
    z = cam[:, 2]
    with np.errstate(divide="ignore", invalid="ignore"):
        px = intrinsics.fx * cam[:, 0] / z + intrinsics.cx
        py = intrinsics.fy * cam[:, 1] / z + intrinsics.cy
    return np.stack([px, py], axis=1), z


def _occluded(pixels: np.ndarray, z: np.ndarray, front: np.ndarray, radius: float, depth_margin: float):
    """A point is occluded when another in-front point projects within
    ``radius`` pixels at a depth smaller by more than ``depth_margin``."""
    occ = np.zeros(len(z), dtype=bool)
    idx = np.nonzero(front)[0]
    if idx.size < 2:
        return occ
    pts = pixels[idx]
    depths = z[idx]
    tree = cKDTree(pts)
    neighbors = tree.query_ball_point(pts, r=radius)
    for k, nbrs in enumerate(neighbors):
        if len(nbrs) > 1:
            zmin = depths[nbrs].min()
            if zmin < depths[k] - depth_margin:
                occ[idx[k]] = True
    return occ


def lidar_to_flow(
    frame: LidarFrame,
    rig: CameraRig,
    occlusion_radius_px: float = OCCLUSION_RADIUS_PX_DEFAULT,
    occlusion_depth_m: float = OCCLUSION_DEPTH_M_DEFAULT,
) -> SparseFlowGT:
    """Project LiDAR points into both cameras and keep the valid ones.

    A point survives when its rounded projection is in bounds in both images,
    both projected depths are positive, and it is occluded in neither image.
    The stored pixel is the rounded projection into image B; the flow vector
    is the continuous displacement toward image A. Points colliding on the
    same image-B pixel keep only the nearest in depth (ties: lowest index).
    """
    pa, za = _project_points(frame.points, rig.extrinsics_a, rig.intrinsics_a)
    pb, zb = _project_points(frame.points, rig.extrinsics_b, rig.intrinsics_b)
    front_a = za > 0
    front_b = zb > 0

    occ_a = _occluded(pa, za, front_a, occlusion_radius_px, occlusion_depth_m)
    occ_b = _occluded(pb, zb, front_b, occlusion_radius_px, occlusion_depth_m)

    wa, ha = rig.intrinsics_a.width, rig.intrinsics_a.height
    wb, hb = rig.intrinsics_b.width, rig.intrinsics_b.height
    with np.errstate(invalid="ignore"):
        ra = round_half_up(np.where(front_a[:, None], pa, -1.0))
        rb = round_half_up(np.where(front_b[:, None], pb, -1.0))
    inb_a = (ra[:, 0] >= 0) & (ra[:, 0] < wa) & (ra[:, 1] >= 0) & (ra[:, 1] < ha)
    inb_b = (rb[:, 0] >= 0) & (rb[:, 0] < wb) & (rb[:, 1] >= 0) & (rb[:, 1] < hb)

    keep = front_a & front_b & inb_a & inb_b & ~occ_a & ~occ_b
    idx = np.nonzero(keep)[0]
    if idx.size == 0:
        warnings.warn("lidar_to_flow: no surviving points", stacklevel=2)
        return SparseFlowGT(np.empty((0, 2), dtype=np.int64), np.empty((0, 2)), wb, hb)

    lin_b = rb[idx, 1] * wb + rb[idx, 0]
    order = np.lexsort((idx, zb[idx], lin_b))
    _, first = np.unique(lin_b[order], return_index=True)
    chosen = idx[order[first]]

    flow = pa[chosen] - pb[chosen]
    return SparseFlowGT(rb[chosen], flow, wb, hb)


def score(predicted: FlowField, gt: SparseFlowGT) -> MetricReport:
    """EPE and outlier rate of a dense prediction against sparse ground truth.

    The prediction is read at each labeled integer pixel. An entry is an
    outlier when its endpoint error exceeds both 3 pixels and 5% of the
    ground-truth vector magnitude.
    """
    if len(gt) == 0:
        raise EmptyInputError("score: ground truth is empty")
    if predicted.width < gt.width or predicted.height < gt.height:
        raise ValidationError("score: prediction does not cover the ground-truth image size")
    xs, ys = gt.pixels[:, 0], gt.pixels[:, 1]
    pred = np.stack([predicted.u[ys, xs], predicted.v[ys, xs]], axis=1)
    err = np.linalg.norm(pred - gt.flow, axis=1)
    mag = np.linalg.norm(gt.flow, axis=1)
    outlier = (err > F1_PIXEL_THRESHOLD) & (err > F1_RELATIVE_THRESHOLD * mag)
    return MetricReport(float(err.mean()), float(100.0 * outlier.mean()), len(gt))


def focal_normalize(
    image: ImageBuffer,
    intrinsics: CameraIntrinsics,
    target_f: float,
    target_size: tuple,
) -> tuple:
    """Rescale to a common effective focal length, then center-crop/pad.

    The image is resampled by target_f/fx horizontally and target_f/fy
    vertically (pure coordinate scaling, border replicated), then cropped or
    zero-padded about the center to ``target_size`` = (width, height). The
    returned intrinsics have fx = fy = target_f with the principal point
    scaled and shifted by the crop offset, so projections through the new
    camera land on the resampled content.
    """
    if not np.isfinite(target_f) or target_f <= 0:
        raise ValidationError("focal_normalize: target_f must be > 0")
    tw, th = int(target_size[0]), int(target_size[1])
    sx = target_f / intrinsics.fx
    sy = target_f / intrinsics.fy
    new_w = max(int(round_half_up(intrinsics.width * sx)), 1)
    new_h = max(int(round_half_up(intrinsics.height * sy)), 1)
    if min(new_w, new_h, tw, th) < 8:
        raise ConfigError("focal_normalize: resulting image smaller than 8x8")

    us, vs = np.meshgrid(np.arange(new_w, dtype=np.float64), np.arange(new_h, dtype=np.float64))
    src_x = np.clip(us / sx, 0, intrinsics.width - 1)
    src_y = np.clip(vs / sy, 0, intrinsics.height - 1)
    resampled, _ = bilinear_sample(image.values, src_x, src_y)

    off_x = (new_w - tw) // 2
    off_y = (new_h - th) // 2
    out = np.zeros((th, tw, image.channels))
    src_x0, src_x1 = max(0, off_x), min(new_w, off_x + tw)
    src_y0, src_y1 = max(0, off_y), min(new_h, off_y + th)
    out[src_y0 - off_y : src_y1 - off_y, src_x0 - off_x : src_x1 - off_x] = resampled[
        src_y0:src_y1, src_x0:src_x1
    ]

    with warnings.catch_warnings():
        warnings.simplefilter("ignore")  # crops may push the principal point out
        new_k = CameraIntrinsics(
            target_f,
            target_f,
            intrinsics.cx * sx - off_x,
            intrinsics.cy * sy - off_y,
            tw,
            th,
        )
    return ImageBuffer(out), new_k


def split_sequence(frame_ids, train_frac: float):
    """Split an ordered frame list: the first floor(train_frac * N) frames go
    to train, the rest to test. Order is preserved; the parts are disjoint
    and exhaustive."""
    ids = list(frame_ids)
    if len(ids) == 0:
        raise EmptyInputError("split_sequence: no frames")
    if not (0 < train_frac < 1):
        raise ValidationError("split_sequence: train_frac must be in (0, 1)")
    n_train = int(math.floor(train_frac * len(ids)))
    return ids[:n_train], ids[n_train:]
