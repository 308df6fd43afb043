"""Gait representations: silhouette sequences to per-cycle energy images.

The energy image of a cycle is the per-pixel mean of its size-normalized
frames: E(x, y) = (1/N) * sum_i B_i(x, y). GEIs average binary silhouettes,
SEIs average rasterized skeleton drawings; both are 224x224 in [0, 1].
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import cv2
import numpy as np

ENERGY_SIZE = 224
POSE_KEYPOINTS = 25
KEYPOINT_CONFIDENCE_THRESHOLD = 0.1
SKELETON_STROKE_PX = 4
MIN_CYCLE_FRAMES = 8
MAX_CYCLE_FRAMES = 40

# BODY_25 limb pairs (nose/neck/shoulders/arms/hips/legs/feet topology).
BODY_25_PAIRS = (
    (1, 8), (1, 2), (1, 5), (2, 3), (3, 4), (5, 6), (6, 7),
    (8, 9), (9, 10), (10, 11), (8, 12), (12, 13), (13, 14),
    (1, 0), (0, 15), (15, 17), (0, 16), (16, 18),
    (14, 19), (19, 20), (14, 21), (11, 22), (22, 23), (11, 24),
)


@dataclass
class SilhouetteSequence:
    masks: list[np.ndarray]
    source_fps: float
    subject: str = ""
    gait_class: str = ""
    severity: int | None = None
    direction: str = ""

    def __post_init__(self):
        if self.source_fps <= 0:
            raise ValueError("source_fps must be positive")
        if self.masks:
            shape = self.masks[0].shape
            for m in self.masks:
                if m.shape != shape:
                    raise ValueError("all masks in a sequence must share dimensions")

    def with_masks(self, masks: list[np.ndarray], fps: float | None = None) -> "SilhouetteSequence":
        return SilhouetteSequence(masks, fps if fps is not None else self.source_fps,
                                  self.subject, self.gait_class, self.severity, self.direction)


@dataclass(frozen=True)
class GaitCycle:
    start: int
    end: int  # inclusive

    def __post_init__(self):
        if self.start >= self.end:
            raise ValueError(f"degenerate cycle [{self.start}, {self.end}]")

    @property
    def length(self) -> int:
        return self.end - self.start + 1


@dataclass
class EnergyImage:
    pixels: np.ndarray  # (224, 224) float32 in [0, 1]
    kind: str  # "gei" | "sei"
    provenance: str = "cycle"  # "cycle" | "sequence"
    subject: str = ""
    gait_class: str = ""
    severity: int | None = None
    direction: str = ""

    def __post_init__(self):
        self.pixels = np.asarray(self.pixels, dtype=np.float32)
        if self.pixels.shape != (ENERGY_SIZE, ENERGY_SIZE):
            raise ValueError(f"energy image must be {ENERGY_SIZE}x{ENERGY_SIZE}, got {self.pixels.shape}")
        if self.kind not in ("gei", "sei"):
            raise ValueError(f"unknown energy image kind {self.kind!r}")
        lo, hi = float(self.pixels.min()), float(self.pixels.max())
        if lo < -1e-6 or hi > 1.0 + 1e-6:
            raise ValueError(f"energy image values outside [0,1]: [{lo}, {hi}]")
        np.clip(self.pixels, 0.0, 1.0, out=self.pixels)


def resample_fps(seq: SilhouetteSequence, target_fps: float = 10.0) -> SilhouetteSequence:
    """Pick frames at nearest-time indices to hit the target framerate."""
    if seq.source_fps < target_fps:
        raise ValueError(f"cannot resample {seq.source_fps} fps up to {target_fps} fps")
    n = len(seq.masks)
    count = int(n * target_fps / seq.source_fps + 1e-9)
    ratio = seq.source_fps / target_fps
    indices = [min(int(j * ratio + 0.5), n - 1) for j in range(count)]
    return seq.with_masks([seq.masks[i] for i in indices], target_fps)


def bounding_box(mask: np.ndarray) -> tuple[int, int, int, int] | None:
    """(rmin, rmax, cmin, cmax) inclusive, or None for an empty mask."""
    rows = np.flatnonzero(mask.any(axis=1))
    cols = np.flatnonzero(mask.any(axis=0))
    if rows.size == 0:
        return None
    return int(rows[0]), int(rows[-1]), int(cols[0]), int(cols[-1])


def crop_normalize(mask: np.ndarray, binary: bool = False) -> np.ndarray:
    """Tight crop, pad width to height keeping the centroid column centered,
    then resize to 224x224.

    Returns float32 in [0, 1]; bilinear interpolation values are kept for
    energy-image accumulation unless ``binary`` re-thresholds at 0.5.
    """
    mask = np.asarray(mask, dtype=np.float32)
    box = bounding_box(mask > 0 if mask.dtype != bool else mask)
    if box is None:
        raise ValueError("crop_normalize on an empty mask")
    rmin, rmax, cmin, cmax = box
    crop = mask[rmin : rmax + 1, cmin : cmax + 1]
    h, w = crop.shape
    if w < h:
        total = crop.sum()
        cx = float((crop * np.arange(w)).sum() / total)
        pad_left = int(round((h - 1) / 2.0 - cx))
        pad_left = min(max(pad_left, 0), h - w)
        crop = np.pad(crop, ((0, 0), (pad_left, h - w - pad_left)))
    elif w > h:
        top = (w - h) // 2
        crop = np.pad(crop, ((top, w - h - top), (0, 0)))
    interp = cv2.INTER_NEAREST if binary else cv2.INTER_LINEAR
    out = cv2.resize(crop, (ENERGY_SIZE, ENERGY_SIZE), interpolation=interp)
    out = np.clip(out.astype(np.float32), 0.0, 1.0)
    if binary:
        out = (out > 0.5).astype(np.float32)
    return out


def width_signal(seq: SilhouetteSequence) -> np.ndarray:
    widths = np.zeros(len(seq.masks), dtype=np.float64)
    for i, m in enumerate(seq.masks):
        box = bounding_box(m)
        widths[i] = 0.0 if box is None else box[3] - box[2] + 1
    return widths


def _smooth3(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    for i in range(len(x)):
        lo, hi = max(0, i - 1), min(len(x), i + 2)
        out[i] = x[lo:hi].mean()
    return out


def detect_cycles(seq: SilhouetteSequence) -> list[GaitCycle]:
    """Delimit gait cycles from the periodicity of the silhouette width.

    Local maxima of the smoothed width are double-support instants; one
    cycle spans three consecutive maxima (two steps). Implausibly short or
    long candidates are discarded.
    """
    if len(seq.masks) < 2 * seq.source_fps:
        raise ValueError("need at least 2 seconds of frames to detect cycles")
    s = _smooth3(width_signal(seq))
    maxima = [i for i in range(1, len(s) - 1) if s[i - 1] < s[i] >= s[i + 1]]
    cycles = []
    for j in range(0, len(maxima) - 2, 2):
        start, end = maxima[j], maxima[j + 2] - 1
        length = end - start + 1
        if MIN_CYCLE_FRAMES <= length <= MAX_CYCLE_FRAMES:
            cycles.append(GaitCycle(start, end))
    return cycles


def trim_span(seq: SilhouetteSequence) -> tuple[int, int]:
    """Inclusive span of frames that do not touch a lateral border at either
    end of the sequence (subject entering or leaving the view)."""
    if not seq.masks:
        raise ValueError("empty sequence")
    w = seq.masks[0].shape[1]

    def touches(mask: np.ndarray) -> bool:
        box = bounding_box(mask)
        if box is None:
            return True  # empty frames are unusable leaders/trailers
        return box[2] == 0 or box[3] == w - 1

    first, last = 0, len(seq.masks) - 1
    while first <= last and touches(seq.masks[first]):
        first += 1
    while last >= first and touches(seq.masks[last]):
        last -= 1
    if first > last:
        raise ValueError("no usable span: every frame touches a lateral border")
    return first, last


def trim_partial(seq: SilhouetteSequence) -> SilhouetteSequence:
    first, last = trim_span(seq)
    return seq.with_masks(seq.masks[first : last + 1])


def compute_gei(frames: list[np.ndarray], **meta) -> EnergyImage:
    """Per-pixel mean of normalized 224x224 silhouette frames."""
    if not frames:
        raise ValueError("compute_gei needs at least one frame")
    stack = np.stack([np.asarray(f, dtype=np.float32) for f in frames])
    if stack.shape[1:] != (ENERGY_SIZE, ENERGY_SIZE):
        raise ValueError(f"frames must be {ENERGY_SIZE}x{ENERGY_SIZE}")
    return EnergyImage(stack.mean(axis=0), kind="gei", **meta)


def sequence_gei(seq: SilhouetteSequence, cycle: GaitCycle | None = None, **meta) -> EnergyImage:
    masks = seq.masks if cycle is None else seq.masks[cycle.start : cycle.end + 1]
    frames = [crop_normalize(m) for m in masks]
    img = compute_gei(frames, **meta)
    img.provenance = "cycle" if cycle is not None else "sequence"
    return img


def rasterize_skeleton(pose: np.ndarray, canvas_shape: tuple[int, int],
                       stroke: int = SKELETON_STROKE_PX,
                       confidence_threshold: float = KEYPOINT_CONFIDENCE_THRESHOLD) -> np.ndarray:
    """Draw the 25-keypoint body topology as strokes on a binary canvas."""
    pose = np.asarray(pose, dtype=np.float32)
    if pose.shape != (POSE_KEYPOINTS, 3):
        raise ValueError(f"pose must be ({POSE_KEYPOINTS}, 3), got {pose.shape}")
    confident = pose[:, 2] >= confidence_threshold
    if confident.sum() < 2:
        raise ValueError("fewer than 2 confident keypoints")
    canvas = np.zeros(canvas_shape, dtype=np.uint8)
    for a, b in BODY_25_PAIRS:
        if not (confident[a] and confident[b]):
            continue
        pa = (int(round(pose[a, 0])), int(round(pose[a, 1])))
        pb = (int(round(pose[b, 0])), int(round(pose[b, 1])))
        cv2.line(canvas, pa, pb, 1, thickness=stroke)
    return canvas


def compute_sei(poses: list[np.ndarray], canvas_shape: tuple[int, int], **meta) -> EnergyImage:
    """Rasterize each pose, normalize, and average (same method as the GEI)."""
    if not poses:
        raise ValueError("compute_sei needs at least one pose")
    frames = [crop_normalize(rasterize_skeleton(p, canvas_shape)) for p in poses]
    img = compute_gei(frames, **meta)
    img.kind = "sei"
    return img


# --- PNG / JSON interchange -------------------------------------------------

def save_energy_png(path: str | Path, image: EnergyImage) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    data = np.round(image.pixels * 255.0).astype(np.uint8)
    if not cv2.imwrite(str(path), data):
        raise IOError(f"cannot write {path}")


def load_energy_png(path: str | Path, kind: str, **meta) -> EnergyImage:
    img = cv2.imread(str(path), cv2.IMREAD_GRAYSCALE)
    if img is None:
        raise FileNotFoundError(f"cannot read energy image {path}")
    if img.shape != (ENERGY_SIZE, ENERGY_SIZE):
        raise ValueError(f"energy image {path} is {img.shape}, expected {ENERGY_SIZE}x{ENERGY_SIZE}")
    return EnergyImage(img.astype(np.float32) / 255.0, kind=kind, **meta)


def load_pose_json(path: str | Path) -> np.ndarray:
    import json

    with open(path) as f:
        triplets = json.load(f)
    pose = np.asarray(triplets, dtype=np.float32)
    if pose.shape != (POSE_KEYPOINTS, 3):
        raise ValueError(f"pose file {path} must hold {POSE_KEYPOINTS} [x, y, confidence] triplets")
    return pose


def save_pose_json(path: str | Path, pose: np.ndarray) -> None:
    import json

    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as f:
        json.dump([[float(v) for v in kp] for kp in pose], f)
