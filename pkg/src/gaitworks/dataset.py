"""On-disk dataset layout and the mask/pose -> energy-image pipeline.

Layout:
    root/manifest.json
    root/<subject>/<class>_<sev1|sev2|na>/seq_NN/
        masks/frame_0000.png      8-bit 0/255 silhouettes
        poses/frame_0000.json     25 [x, y, confidence] triplets per frame
        gei/cycle_00.png, gei/sequence.png
        sei/cycle_00.png, sei/sequence.png
        truth.json                generator sidecar (when synthetic)

The manifest lists every sequence with subject, class, severity, direction.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import CLASS_NAMES
from . import gait
from .silhouette import read_mask, write_mask

TARGET_FPS = 10.0


@dataclass
class SequenceRecord:
    subject: str
    gait_class: str
    severity: int | None
    direction: str
    path: str  # relative to the dataset root
    n_frames: int = 0
    repeat_of: str | None = None

    def to_dict(self) -> dict:
        d = {"subject": self.subject, "gait_class": self.gait_class,
             "severity": self.severity, "direction": self.direction,
             "path": self.path, "n_frames": self.n_frames}
        if self.repeat_of:
            d["repeat_of"] = self.repeat_of
        return d


@dataclass
class Manifest:
    fps: float
    sequences: list[SequenceRecord] = field(default_factory=list)

    def subjects(self) -> list[str]:
        seen: dict[str, None] = {}
        for rec in self.sequences:
            seen.setdefault(rec.subject, None)
        return list(seen)

    def save(self, root: str | Path) -> None:
        root = Path(root)
        root.mkdir(parents=True, exist_ok=True)
        with open(root / "manifest.json", "w") as f:
            json.dump({"fps": self.fps, "classes": CLASS_NAMES,
                       "sequences": [r.to_dict() for r in self.sequences]}, f, indent=1)

    @classmethod
    def load(cls, root: str | Path) -> "Manifest":
        path = Path(root) / "manifest.json"
        if not path.exists():
            raise FileNotFoundError(f"no manifest.json under {root}")
        with open(path) as f:
            raw = json.load(f)
        recs = [SequenceRecord(r["subject"], r["gait_class"], r.get("severity"),
                               r.get("direction", ""), r["path"], r.get("n_frames", 0),
                               r.get("repeat_of"))
                for r in raw["sequences"]]
        return cls(fps=raw["fps"], sequences=recs)


def class_label(name: str) -> int:
    try:
        return CLASS_NAMES.index(name)
    except ValueError:
        raise ValueError(f"unknown gait class {name!r}; expected one of {CLASS_NAMES}") from None


def list_frames(directory: str | Path, suffix: str) -> list[Path]:
    return sorted(Path(directory).glob(f"frame_*{suffix}"))


def load_masks(seq_dir: str | Path) -> list[np.ndarray]:
    paths = list_frames(Path(seq_dir) / "masks", ".png")
    if not paths:
        raise FileNotFoundError(f"no masks under {seq_dir}")
    return [read_mask(p) for p in paths]


def load_poses(seq_dir: str | Path) -> list[np.ndarray]:
    paths = list_frames(Path(seq_dir) / "poses", ".json")
    return [gait.load_pose_json(p) for p in paths]


@dataclass
class SequenceAnalysis:
    """Trim + resample + cycle detection over one sequence's frames."""

    masks: list[np.ndarray]       # at TARGET_FPS, trimmed span
    frame_indices: list[int]      # original frame index of each kept mask
    cycles: list[gait.GaitCycle]  # indices into `masks`


def analyze_masks(masks: list[np.ndarray], source_fps: float) -> SequenceAnalysis:
    seq = gait.SilhouetteSequence(masks, source_fps)
    first, last = gait.trim_span(seq)
    trimmed = seq.with_masks(seq.masks[first : last + 1])
    resampled = gait.resample_fps(trimmed, TARGET_FPS)
    ratio = source_fps / TARGET_FPS
    kept = [first + min(int(j * ratio + 0.5), len(trimmed.masks) - 1)
            for j in range(len(resampled.masks))]
    cycles = gait.detect_cycles(resampled)
    return SequenceAnalysis(resampled.masks, kept, cycles)


def energy_images_from_masks(masks: list[np.ndarray], source_fps: float, kind: str,
                             poses: list[np.ndarray] | None = None,
                             **meta) -> tuple[SequenceAnalysis, list[tuple[gait.GaitCycle, gait.EnergyImage]], gait.EnergyImage | None]:
    """Shared trim -> resample -> cycles -> average pipeline.

    Returns (analysis, [(cycle, per-cycle image)], full-sequence image).
    The CLI stages and the HTTP service both go through here, so piped CLI
    runs and service uploads produce bit-identical energy images.
    """
    analysis = analyze_masks(masks, source_fps)
    if kind == "gei":
        frames = [gait.crop_normalize(m) for m in analysis.masks]
    elif kind == "sei":
        if poses is None:
            raise ValueError("SEI computation needs pose frames")
        if len(poses) < len(masks):
            raise ValueError(f"{len(poses)} pose frames for {len(masks)} masks")
        canvas = masks[0].shape
        frames = [gait.crop_normalize(gait.rasterize_skeleton(poses[i], canvas))
                  for i in analysis.frame_indices]
    else:
        raise ValueError(f"unknown representation kind {kind!r}")

    per_cycle = []
    for cycle in analysis.cycles:
        img = gait.compute_gei(frames[cycle.start : cycle.end + 1], **meta)
        img.kind = kind
        img.provenance = "cycle"
        per_cycle.append((cycle, img))
    full = None
    if frames:
        full = gait.compute_gei(frames, **meta)
        full.kind = kind
        full.provenance = "sequence"
    return analysis, per_cycle, full


def write_energy_images(out_dir: str | Path,
                        per_cycle: list[tuple[gait.GaitCycle, gait.EnergyImage]],
                        full: gait.EnergyImage | None,
                        include_full_sequence: bool = True) -> list[Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for i, (_cycle, img) in enumerate(per_cycle):
        path = out_dir / f"cycle_{i:02d}.png"
        gait.save_energy_png(path, img)
        written.append(path)
    if include_full_sequence and full is not None:
        path = out_dir / "sequence.png"
        gait.save_energy_png(path, full)
        written.append(path)
    return written


def compute_sequence_energy_images(seq_dir: str | Path, source_fps: float, kind: str,
                                   include_full_sequence: bool = True,
                                   **meta) -> list[gait.EnergyImage]:
    """Run the pipeline for one sequence directory and write its energy PNGs."""
    seq_dir = Path(seq_dir)
    masks = load_masks(seq_dir)
    poses = load_poses(seq_dir) if kind == "sei" else None
    analysis, per_cycle, full = energy_images_from_masks(masks, source_fps, kind,
                                                         poses=poses, **meta)
    write_energy_images(seq_dir / kind, per_cycle, full, include_full_sequence)
    with open(seq_dir / "cycles.json", "w") as f:
        json.dump({"fps": TARGET_FPS,
                   "frame_indices": analysis.frame_indices,
                   "cycles": [{"start": c.start, "end": c.end} for c in analysis.cycles]}, f)
    return [img for _, img in per_cycle]


@dataclass
class Sample:
    image: np.ndarray  # (H, W) float32 in [0, 1]
    label: int
    subject: str
    path: str = ""


def load_energy_dataset(root: str | Path, kind: str,
                        include_repeats: bool = True) -> list[Sample]:
    """All per-cycle energy images of one kind, labeled by gait class."""
    root = Path(root)
    manifest = Manifest.load(root)
    samples = []
    for rec in manifest.sequences:
        if not include_repeats and rec.repeat_of:
            continue
        label = class_label(rec.gait_class)
        for png in sorted((root / rec.path / kind).glob("cycle_*.png")):
            img = gait.load_energy_png(png, kind=kind)
            samples.append(Sample(img.pixels, label, rec.subject, str(png)))
    if not samples:
        raise FileNotFoundError(f"no {kind} cycle images found under {root}")
    return samples
