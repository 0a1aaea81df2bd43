"""Command-line interface.

Exit codes: 0 on success, 1 on validation errors, 2 on I/O errors.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import fileio, pipeline, viz
from .benchmark import split_sequence
from .config import PipelineConfig
from .errors import ValidationError
from .losses import TrimConfig, masked_flow_loss, trimmed_flow_loss
from .manifest import Manifest, _intrinsics_from_dict, _pose_from_dict, load_manifest, save_manifest


class _Parser(argparse.ArgumentParser):
    # usage mistakes are validation errors -> exit 1, not argparse's default 2
    def error(self, message):
        self.print_usage(sys.stderr)
        raise SystemExit(1)


def _load_config(args) -> PipelineConfig:
    cfg = PipelineConfig.load(args.config) if getattr(args, "config", None) else PipelineConfig()
    if getattr(args, "seed", None) is not None:
        cfg.seed = args.seed
    return cfg


def cmd_synthesize(args) -> int:
    cfg = _load_config(args)
    manifest = load_manifest(args.manifest)
    written = pipeline.synthesize_manifest(manifest, args.out, cfg, workers=args.workers)
    cfg.save(Path(args.out) / "config.yaml")
    print(f"synthesized {len(written)} triplets into {args.out}")
    return 0


def cmd_gt_from_lidar(args) -> int:
    from .benchmark import CameraRig

    manifest = load_manifest(args.manifest)
    rig_raw = json.loads(Path(args.rig).read_text())
    try:
        rig = CameraRig(
            intrinsics_a=_intrinsics_from_dict(rig_raw["intrinsics_a"]),
            intrinsics_b=_intrinsics_from_dict(rig_raw["intrinsics_b"]),
            extrinsics_a=_pose_from_dict(rig_raw["extrinsics_a"]),
            extrinsics_b=_pose_from_dict(rig_raw["extrinsics_b"]),
        )
    except KeyError as e:
        raise ValidationError(f"{args.rig}: missing rig field {e}") from e
    written = pipeline.generate_lidar_gt(
        manifest, rig, args.out, args.occlusion_radius, args.occlusion_depth
    )
    total = sum(n for _, _, n in written)
    print(f"wrote ground truth for {len(written)} frames ({total} labeled points)")
    return 0


def cmd_evaluate(args) -> int:
    manifest = load_manifest(args.manifest, check_paths=False)
    per_frame, groups, aggregate = pipeline.run_evaluate(manifest, args.pred, args.gt)
    if args.report:
        pipeline.write_report(args.report, per_frame, groups, aggregate)
    print(pipeline.format_metric_table(groups))
    print(f"aggregate: n={aggregate.n_points} epe={aggregate.epe:.4f} f1={aggregate.f1:.4f}")
    return 0


def cmd_loss(args) -> int:
    pred = fileio.read_flow(args.pred)
    target = fileio.read_flow(args.target)
    mask = pred.valid & target.valid
    if args.mask:
        mask &= fileio.read_mask(args.mask)
    if args.tau > 0:
        value, keep = trimmed_flow_loss(pred, target, mask, TrimConfig(args.tau))
        print(f"trimmed_l1={value:.6f} tau={args.tau} kept={int(keep.sum())}")
    else:
        value = masked_flow_loss(pred, target, mask)
        print(f"l1={value:.6f} n={int(mask.sum())}")
    return 0


def cmd_viz(args) -> int:
    flow = fileio.read_flow(args.flow)
    image = viz.flow_to_color(flow, args.max_magnitude)
    fileio.write_image(args.out, image)
    print(f"wrote {args.out}")
    return 0


def cmd_split(args) -> int:
    manifest = load_manifest(args.manifest, check_paths=False)
    train_frames, test_frames = [], []
    for seq, frames in manifest.sequences().items():
        tr, te = split_sequence(frames, args.train_frac)
        train_frames.extend(tr)
        test_frames.extend(te)
        print(f"sequence {seq}: {len(tr)} train / {len(te)} test")
    print(f"total: {len(train_frames)} train / {len(test_frames)} test")
    if args.out_train:
        save_manifest(args.out_train, Manifest(train_frames, manifest.base_dir))
    if args.out_test:
        save_manifest(args.out_test, Manifest(test_frames, manifest.base_dir))
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="flowsynth", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synthesize", help="generate flow-supervision triplets from a manifest")
    s.add_argument("--manifest", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--seed", type=int, default=None)
    s.add_argument("--config", default=None, help="YAML pipeline configuration")
    s.add_argument("--workers", type=int, default=1)
    s.set_defaults(func=cmd_synthesize)

    s = sub.add_parser("gt-from-lidar", help="project LiDAR sweeps into sparse flow ground truth")
    s.add_argument("--manifest", required=True)
    s.add_argument("--rig", required=True, help="JSON file with intrinsics_a/b and extrinsics_a/b")
    s.add_argument("--out", required=True)
    s.add_argument("--occlusion-radius", type=float, default=1.0)
    s.add_argument("--occlusion-depth", type=float, default=1.0)
    s.set_defaults(func=cmd_gt_from_lidar)

    s = sub.add_parser("evaluate", help="score predictions against ground truth")
    s.add_argument("--manifest", required=True)
    s.add_argument("--pred", required=True)
    s.add_argument("--gt", required=True)
    s.add_argument("--report", default=None)
    s.set_defaults(func=cmd_evaluate)

    s = sub.add_parser("loss", help="masked/trimmed L1 between two flow files")
    s.add_argument("--pred", required=True)
    s.add_argument("--target", required=True)
    s.add_argument("--mask", default=None)
    s.add_argument("--tau", type=float, default=0.0)
    s.set_defaults(func=cmd_loss)

    s = sub.add_parser("viz", help="render a flow file as a color PNG")
    s.add_argument("--flow", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--max-magnitude", type=float, default=None)
    s.set_defaults(func=cmd_viz)

    s = sub.add_parser("split", help="per-sequence train/test split of a manifest")
    s.add_argument("--manifest", required=True)
    s.add_argument("--train-frac", type=float, default=0.8)
    s.add_argument("--out-train", default=None)
    s.add_argument("--out-test", default=None)
    s.set_defaults(func=cmd_split)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except SystemExit as e:
        return int(e.code or 0)
    except (ValidationError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except OSError as e:
        print(f"i/o error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
