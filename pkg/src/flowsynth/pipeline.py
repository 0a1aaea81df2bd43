"""Seeded orchestration: per-frame triplet synthesis, LiDAR ground-truth
generation, and evaluation over manifests.

Reproducibility scheme: a master seed plus a stable hash of (sequence id,
frame id, branch tag) derives each frame's RNG stream, so outputs are
byte-identical regardless of worker count or processing order.
"""

from __future__ import annotations

import hashlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import fileio
from .benchmark import LidarFrame, MetricReport, SparseFlowGT, lidar_to_flow, score
from .config import PipelineConfig
from .errors import EmptyInputError, ValidationError
from .geometry import (
    CameraIntrinsics,
    DepthMap,
    FlowField,
    sample_intrinsics,
    sample_pose,
    synth_flow,
)
from .losses import masked_flow_loss, photometric_mask
from .manifest import FrameRecord, Manifest
from .renderer import ImageBuffer, backward_warp, forward_render


@dataclass
class FlowTriplet:
    """One synthetic training sample: source image, rendered novel view,
    synthetic flow, and the validity mask for supervision."""

    source: ImageBuffer
    rendered: ImageBuffer
    flow: FlowField
    mask: np.ndarray

    def self_check(self, threshold: float) -> None:
        """Verify the supervision contract: zero self-loss and bounded
        round-trip photometric error at every masked pixel."""
        if self.mask.any():
            loss = masked_flow_loss(self.flow, self.flow, self.mask)
            if loss != 0.0:
                raise ValidationError(f"triplet self-check: self-loss {loss} != 0")
        warped, _ = backward_warp(self.rendered, self.flow)
        err = np.mean(np.abs(warped.values - self.source.values), axis=2)
        if self.mask.any() and err[self.mask].max() > threshold:
            raise ValidationError(
                f"triplet self-check: photometric error {err[self.mask].max():.4f} "
                f"exceeds threshold {threshold}"
            )


def frame_rng(master_seed: int, sequence_id: str, frame_id: str, branch: str) -> np.random.Generator:
    """Per-frame RNG stream derived from a stable content hash."""
    key = f"{master_seed}|{sequence_id}|{frame_id}|{branch}".encode()
    digest = hashlib.blake2b(key, digest_size=8).digest()
    return np.random.Generator(np.random.PCG64(int.from_bytes(digest, "little")))


def make_triplet(
    image_path,
    depth_path,
    intrinsics: CameraIntrinsics | None,
    cfg: PipelineConfig,
    rng: np.random.Generator,
) -> FlowTriplet:
    """Synthesize a training triplet from one image with depth.

    Draws a virtual pose (and intrinsics when none are given), computes the
    synthetic flow, forward-renders the novel view, and builds the
    photometric validity mask.
    """
    image = fileio.read_image(image_path)
    depth_values = fileio.read_pfm(depth_path)
    if depth_values.ndim != 2:
        raise ValidationError(f"{depth_path}: depth must be single-channel")
    if depth_values.shape != (image.height, image.width):
        raise ValidationError(
            f"image {image.width}x{image.height} and depth "
            f"{depth_values.shape[1]}x{depth_values.shape[0]} dimensions differ"
        )
    depth = DepthMap(depth_values)
    if not depth.valid.any():
        raise EmptyInputError(f"{depth_path}: depth map has no valid pixels")

    if intrinsics is None:
        intrinsics = sample_intrinsics(image.width, image.height, rng)
    pose = sample_pose(cfg.pose, depth.median_valid_depth(), rng)
    flow = synth_flow(depth, intrinsics, pose)
    render = forward_render(image, flow, depth)
    mask = photometric_mask(
        image, render.image, flow, cfg.photometric_threshold, hole_mask=render.hole_mask
    )
    return FlowTriplet(image, render.image, flow, mask)


def write_triplet(out_dir, stem: str, triplet: FlowTriplet) -> list:
    """Persist the rendered view, flow, and mask; returns the written paths."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = [
        out_dir / f"{stem}_novel.png",
        out_dir / f"{stem}_flow.flo",
        out_dir / f"{stem}_mask.png",
    ]
    fileio.write_image(paths[0], triplet.rendered)
    fileio.write_flow(paths[1], triplet.flow)
    fileio.write_mask(paths[2], triplet.mask)
    return paths


def _synthesize_one(record: FrameRecord, cfg: PipelineConfig, master_seed: int, out_dir: str):
    if record.image is None or record.depth is None:
        raise ValidationError(f"frame {record.stem}: synthesis needs image and depth paths")
    rng = frame_rng(master_seed, record.sequence_id, record.frame_id, record.modality)
    triplet = make_triplet(record.image, record.depth, record.intrinsics, cfg, rng)
    triplet.self_check(cfg.photometric_threshold)
    return [str(p) for p in write_triplet(out_dir, record.stem, triplet)]


def synthesize_manifest(
    manifest: Manifest,
    out_dir,
    cfg: PipelineConfig,
    master_seed: int | None = None,
    workers: int = 1,
) -> list:
    """Synthesize a triplet for every manifest frame; safe to parallelize.

    Results do not depend on ``workers`` or on frame order because each frame
    owns an independent seeded RNG stream.
    """
    seed = cfg.seed if master_seed is None else master_seed
    out = str(out_dir)
    if workers <= 1:
        return [_synthesize_one(fr, cfg, seed, out) for fr in manifest.frames]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        futures = [pool.submit(_synthesize_one, fr, cfg, seed, out) for fr in manifest.frames]
        return [f.result() for f in futures]


def generate_lidar_gt(
    manifest: Manifest,
    rig,
    out_dir,
    occlusion_radius_px: float = 1.0,
    occlusion_depth_m: float = 1.0,
) -> list:
    """Project each frame's LiDAR sweep through the rig and write sparse GT
    as a dense flow file plus an 8-bit PNG label mask (255 = labeled)."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for fr in manifest.frames:
        if fr.lidar is None:
            continue
        points = fileio.read_lidar(fr.lidar)
        gt = lidar_to_flow(LidarFrame(points), rig, occlusion_radius_px, occlusion_depth_m)
        dense, mask = gt.to_dense()
        flow_path = out_dir / f"{fr.stem}.flo"
        mask_path = out_dir / f"{fr.stem}_mask.png"
        fileio.write_flow(flow_path, dense)
        fileio.write_mask(mask_path, mask)
        written.append((str(flow_path), str(mask_path), len(gt)))
    return written


@dataclass
class FrameScore:
    stem: str
    sequence_id: str
    frame_id: str
    modality: str
    report: MetricReport


def run_evaluate(manifest: Manifest, pred_dir, gt_dir):
    """Score every manifest frame's prediction against its ground truth.

    Returns (per-frame scores, per-modality aggregate, overall aggregate).
    All missing files are listed before aborting.
    """
    pred_dir, gt_dir = Path(pred_dir), Path(gt_dir)
    missing = []
    jobs = []
    for fr in manifest.frames:
        pred = pred_dir / f"{fr.stem}.flo"
        gt_flow = gt_dir / f"{fr.stem}.flo"
        gt_mask = gt_dir / f"{fr.stem}_mask.png"
        for p in (pred, gt_flow, gt_mask):
            if not p.exists():
                missing.append(f"{fr.stem}: {p}")
        jobs.append((fr, pred, gt_flow, gt_mask))
    if missing:
        listing = "\n  ".join(missing)
        raise FileNotFoundError(f"evaluation inputs missing:\n  {listing}")

    per_frame = []
    for fr, pred, gt_flow, gt_mask in jobs:
        predicted = fileio.read_flow(pred)
        gt = SparseFlowGT.from_dense(fileio.read_flow(gt_flow), fileio.read_mask(gt_mask))
        per_frame.append(
            FrameScore(fr.stem, fr.sequence_id, fr.frame_id, fr.modality, score(predicted, gt))
        )

    by_modality: dict = {}
    for fs in per_frame:
        by_modality.setdefault(fs.modality, []).append(fs.report)
    groups = {m: MetricReport.merge(rs) for m, rs in sorted(by_modality.items())}
    return per_frame, groups, MetricReport.merge(fs.report for fs in per_frame)


def write_report(path, per_frame, groups, aggregate) -> None:
    """Line-oriented report: one record per frame, then per-modality and
    aggregate records."""
    lines = []
    for fs in per_frame:
        r = fs.report
        lines.append(
            f"frame sequence={fs.sequence_id} frame={fs.frame_id} modality={fs.modality} "
            f"n={r.n_points} epe={r.epe:.6f} f1={r.f1:.6f}"
        )
    for m, r in groups.items():
        lines.append(f"modality name={m} n={r.n_points} epe={r.epe:.6f} f1={r.f1:.6f}")
    lines.append(
        f"aggregate n={aggregate.n_points} epe={aggregate.epe:.6f} f1={aggregate.f1:.6f}"
    )
    Path(path).write_text("\n".join(lines) + "\n")


def format_metric_table(groups: dict) -> str:
    """Plain-text table with one column per dataset/modality group."""
    names = list(groups)
    width = max([8] + [len(n) for n in names]) + 2
    header = "metric".ljust(8) + "".join(n.rjust(width) for n in names)
    epe_row = "EPE".ljust(8) + "".join(f"{groups[n].epe:.2f}".rjust(width) for n in names)
    f1_row = "F1".ljust(8) + "".join(f"{groups[n].f1:.2f}".rjust(width) for n in names)
    return "\n".join([header, epe_row, f1_row])
