"""Dataset manifests: JSON files listing frames with their assets.

Paths are stored relative to the manifest file. Frame ids must be unique
within a sequence, and every referenced path must exist at load time.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ValidationError
from .geometry import CameraIntrinsics, RigidPose


@dataclass
class FrameRecord:
    frame_id: str
    sequence_id: str
    modality: str
    image: Path | None = None
    depth: Path | None = None
    lidar: Path | None = None
    intrinsics: CameraIntrinsics | None = None
    extrinsics: RigidPose | None = None

    @property
    def stem(self) -> str:
        """Canonical file stem for everything derived from this frame."""
        return f"{self.sequence_id}_{self.frame_id}_{self.modality}"


@dataclass
class Manifest:
    frames: list = field(default_factory=list)
    base_dir: Path = Path(".")

    def sequences(self) -> dict:
        """Frames grouped by sequence id, manifest order preserved."""
        out: dict = {}
        for fr in self.frames:
            out.setdefault(fr.sequence_id, []).append(fr)
        return out


def _intrinsics_from_dict(d: dict) -> CameraIntrinsics:
    return CameraIntrinsics(
        fx=float(d["fx"]),
        fy=float(d["fy"]),
        cx=float(d["cx"]),
        cy=float(d["cy"]),
        width=int(d["width"]),
        height=int(d["height"]),
    )


def _intrinsics_to_dict(k: CameraIntrinsics) -> dict:
    return {"fx": k.fx, "fy": k.fy, "cx": k.cx, "cy": k.cy, "width": k.width, "height": k.height}


def _pose_from_dict(d: dict) -> RigidPose:
    return RigidPose(d["rotation"], d["translation"])


def _pose_to_dict(p: RigidPose) -> dict:
    return {"rotation": p.rotation.tolist(), "translation": p.translation.tolist()}


def load_manifest(path, check_paths: bool = True) -> Manifest:
    path = Path(path)
    try:
        raw = json.loads(path.read_text())
    except json.JSONDecodeError as e:
        raise ValidationError(f"{path}: invalid manifest JSON: {e}") from e
    frames_raw = raw.get("frames")
    if not isinstance(frames_raw, list):
        raise ValidationError(f"{path}: manifest must contain a 'frames' list")

    base = path.parent
    frames = []
    seen = set()
    missing = []
    for i, fr in enumerate(frames_raw):
        try:
            rec = FrameRecord(
                frame_id=str(fr["frame_id"]),
                sequence_id=str(fr["sequence_id"]),
                modality=str(fr.get("modality", "default")),
            )
        except KeyError as e:
            raise ValidationError(f"{path}: frame {i} is missing field {e}") from e
        key = (rec.sequence_id, rec.frame_id, rec.modality)
        if key in seen:
            raise ValidationError(
                f"{path}: duplicate frame {rec.frame_id!r} in sequence {rec.sequence_id!r}"
            )
        seen.add(key)
        for name in ("image", "depth", "lidar"):
            rel = fr.get(name)
            if rel is not None:
                p = base / rel
                if check_paths and not p.exists():
                    missing.append(str(p))
                setattr(rec, name, p)
        if fr.get("intrinsics") is not None:
            rec.intrinsics = _intrinsics_from_dict(fr["intrinsics"])
        if fr.get("extrinsics") is not None:
            rec.extrinsics = _pose_from_dict(fr["extrinsics"])
        frames.append(rec)

    if missing:
        listing = "\n  ".join(missing)
        raise ValidationError(f"{path}: referenced paths do not exist:\n  {listing}")
    return Manifest(frames, base)


def save_manifest(path, manifest: Manifest) -> None:
    path = Path(path)
    base = path.parent
    frames = []
    for fr in manifest.frames:
        d: dict = {
            "frame_id": fr.frame_id,
            "sequence_id": fr.sequence_id,
            "modality": fr.modality,
        }
        for name in ("image", "depth", "lidar"):
            p = getattr(fr, name)
            if p is not None:
                try:
                    d[name] = str(Path(p).relative_to(base))
                except ValueError:
                    d[name] = str(p)
        if fr.intrinsics is not None:
            d["intrinsics"] = _intrinsics_to_dict(fr.intrinsics)
        if fr.extrinsics is not None:
            d["extrinsics"] = _pose_to_dict(fr.extrinsics)
        frames.append(d)
    path.write_text(json.dumps({"frames": frames}, indent=2) + "\n")
