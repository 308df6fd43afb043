"""Chroma-key silhouette extraction from color frames.

A background-only frame is summarised as per-component HSV ranges; pixels
falling outside any range are foreground. Morphological filtering and
component pruning clean the raw mask. Hue uses OpenCV's [0, 180) scale so
everything stays 8-bit friendly.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import cv2
import numpy as np

# [low percentile, high percentile] of the background histogram, widened by
# MARGIN/2 on each side (total widening = MARGIN units per component).
PERCENTILES = (1.0, 99.0)
MARGIN = 4
DEFAULT_MIN_BLOB_FRACTION = 0.0005
_KERNEL = np.ones((3, 3), np.uint8)


@dataclass(frozen=True)
class HsvBackgroundModel:
    """Inclusive [low, high] bounds per HSV component.

    A hue range with low > high denotes a wrap-around interval through 0.
    """

    hue_range: tuple[int, int]
    saturation_range: tuple[int, int]
    value_range: tuple[int, int]

    def to_dict(self) -> dict:
        return {"hue": list(self.hue_range), "saturation": list(self.saturation_range),
                "value": list(self.value_range)}

    @classmethod
    def from_dict(cls, d: dict) -> "HsvBackgroundModel":
        return cls(tuple(d["hue"]), tuple(d["saturation"]), tuple(d["value"]))


def _check_frame(frame: np.ndarray) -> np.ndarray:
    frame = np.asarray(frame)
    if frame.ndim != 3 or frame.shape[2] != 3:
        raise ValueError(f"expected an HxWx3 RGB frame, got shape {frame.shape}")
    if frame.shape[0] == 0 or frame.shape[1] == 0:
        raise ValueError("empty frame")
    return frame.astype(np.uint8, copy=False)


def _to_hsv(frame: np.ndarray) -> np.ndarray:
    return cv2.cvtColor(frame, cv2.COLOR_RGB2HSV)


def _percentile_range(values: np.ndarray, lo_max: int, hi_max: int) -> tuple[int, int]:
    lo = int(np.percentile(values, PERCENTILES[0]))
    hi = int(np.percentile(values, PERCENTILES[1]))
    half = MARGIN // 2
    return max(lo_max, lo - half), min(hi_max, hi + half)


def learn_background(frame: np.ndarray) -> HsvBackgroundModel:
    """Summarise a background-only RGB frame as HSV component ranges."""
    hsv = _to_hsv(_check_frame(frame))
    h = hsv[..., 0].astype(np.int32)
    # center the hue distribution so wrap-around backgrounds (reds) still get
    # a contiguous percentile interval
    angles = h.astype(np.float64) * (2.0 * np.pi / 180.0)
    mean_angle = np.arctan2(np.sin(angles).mean(), np.cos(angles).mean())
    center = (mean_angle * 180.0 / (2.0 * np.pi)) % 180.0
    shift = int(round(90.0 - center))
    h_shifted = (h + shift) % 180
    half = MARGIN // 2
    lo = int(np.percentile(h_shifted, PERCENTILES[0])) - half
    hi = int(np.percentile(h_shifted, PERCENTILES[1])) + half
    hue_range = ((lo - shift) % 180, (hi - shift) % 180)
    if hi - lo >= 179:  # hue carries no information; accept everything
        hue_range = (0, 179)
    sat_range = _percentile_range(hsv[..., 1], 0, 255)
    val_range = _percentile_range(hsv[..., 2], 0, 255)
    return HsvBackgroundModel(hue_range, sat_range, val_range)


def hue_range_width(model: HsvBackgroundModel) -> int:
    lo, hi = model.hue_range
    return hi - lo if lo <= hi else 180 - lo + hi


def segment(frame: np.ndarray, model: HsvBackgroundModel) -> np.ndarray:
    """Foreground mask: pixel is foreground iff any HSV component is outside
    the learned background range. Returns a uint8 0/1 mask."""
    hsv = _to_hsv(_check_frame(frame))
    h = hsv[..., 0]
    lo, hi = model.hue_range
    if lo <= hi:
        h_in = (h >= lo) & (h <= hi)
    else:
        h_in = (h >= lo) | (h <= hi)
    s_in = (hsv[..., 1] >= model.saturation_range[0]) & (hsv[..., 1] <= model.saturation_range[1])
    v_in = (hsv[..., 2] >= model.value_range[0]) & (hsv[..., 2] <= model.value_range[1])
    return (~(h_in & s_in & v_in)).astype(np.uint8)


def denoise(mask: np.ndarray, min_blob_area_fraction: float = DEFAULT_MIN_BLOB_FRACTION) -> np.ndarray:
    """Morphological opening+closing, then drop components below the area
    threshold (fraction of the full mask area)."""
    mask = _check_mask(mask)
    opened = cv2.morphologyEx(mask, cv2.MORPH_OPEN, _KERNEL)
    closed = cv2.morphologyEx(opened, cv2.MORPH_CLOSE, _KERNEL)
    min_area = min_blob_area_fraction * mask.shape[0] * mask.shape[1]
    n, labels, stats, _ = cv2.connectedComponentsWithStats(closed, connectivity=8)
    out = np.zeros_like(closed)
    for i in range(1, n):
        if stats[i, cv2.CC_STAT_AREA] >= min_area:
            out[labels == i] = 1
    return out


def largest_component(mask: np.ndarray) -> np.ndarray:
    """Keep only the largest 8-connected component; ties broken by the
    lexicographically smallest bounding-box top-left (row, col)."""
    mask = _check_mask(mask)
    n, labels, stats, _ = cv2.connectedComponentsWithStats(mask, connectivity=8)
    if n <= 1:
        raise ValueError("largest_component on an empty mask")
    best = None
    best_key = None
    for i in range(1, n):
        area = int(stats[i, cv2.CC_STAT_AREA])
        key = (-area, int(stats[i, cv2.CC_STAT_TOP]), int(stats[i, cv2.CC_STAT_LEFT]))
        if best_key is None or key < best_key:
            best, best_key = i, key
    return (labels == best).astype(np.uint8)


def _check_mask(mask: np.ndarray) -> np.ndarray:
    mask = np.asarray(mask)
    if mask.ndim != 2:
        raise ValueError(f"expected a 2-D mask, got shape {mask.shape}")
    return (mask > 0).astype(np.uint8)


def read_mask(path: str | Path) -> np.ndarray:
    img = cv2.imread(str(path), cv2.IMREAD_GRAYSCALE)
    if img is None:
        raise FileNotFoundError(f"cannot read mask {path}")
    return (img > 127).astype(np.uint8)


def write_mask(path: str | Path, mask: np.ndarray) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    ok = cv2.imwrite(str(path), (_check_mask(mask) * 255).astype(np.uint8))
    if not ok:
        raise IOError(f"cannot write mask {path}")


def read_frame(path: str | Path) -> np.ndarray:
    img = cv2.imread(str(path), cv2.IMREAD_COLOR)
    if img is None:
        raise FileNotFoundError(f"cannot read frame {path}")
    return cv2.cvtColor(img, cv2.COLOR_BGR2RGB)


def write_frame(path: str | Path, frame: np.ndarray) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    ok = cv2.imwrite(str(path), cv2.cvtColor(frame, cv2.COLOR_RGB2BGR))
    if not ok:
        raise IOError(f"cannot write frame {path}")
