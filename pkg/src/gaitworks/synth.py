"""Procedural walking-figure generator for desk-scale training and tests.

A 13-segment planar stick model (pelvis, torso, neck+head, and per side:
upper arm, forearm, thigh, shank, foot) is animated with sinusoidal joint
trajectories and rendered as filled capsules. Class presets encode the
qualitative traits of the five gait classes; everything is seed-driven and
bit-reproducible.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, asdict
from pathlib import Path

import cv2
import numpy as np

from . import CLASS_NAMES
from .dataset import Manifest, SequenceRecord, compute_sequence_energy_images
from .gait import POSE_KEYPOINTS, save_pose_json
from .silhouette import write_frame, write_mask

GREEN_BG = (46, 158, 66)  # RGB
FIGURE_COLOR = (118, 122, 138)


@dataclass
class GaitStyleParams:
    """Qualitative style knobs for the walker; fractions are of leg length."""

    torso_lean_deg: float = 0.0
    step_length: float = 0.55
    knee_lift: float = 0.3
    arm_swing_left: float = 0.5
    arm_swing_right: float = 0.5
    circumduction: float = 0.0
    shake_amplitude: float = 0.0  # pixels
    cadence_frames: int = 20      # frames per gait cycle at 10 fps
    severity_scale: float = 1.0

    def validate(self) -> None:
        for name in ("step_length", "knee_lift", "arm_swing_left", "arm_swing_right", "circumduction"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.5:
                raise ValueError(f"{name}={v} outside [0, 1.5]")
        if not 10 <= self.cadence_frames <= 40:
            raise ValueError(f"cadence_frames={self.cadence_frames} outside [10, 40]")


def preset(gait_class: str, severity: int = 1) -> GaitStyleParams:
    """Style parameters qualitatively encoding each class's traits.

    Severity 2 exaggerates the distinctive parameters of each pathology;
    it is ignored for normal gait.
    """
    if gait_class not in CLASS_NAMES:
        raise ValueError(f"unknown gait class {gait_class!r}")
    if gait_class != "normal" and severity not in (1, 2):
        raise ValueError(f"severity must be 1 or 2, got {severity}")
    sev2 = gait_class != "normal" and severity == 2
    scale = 1.35 if sev2 else 1.0

    if gait_class == "normal":
        p = GaitStyleParams()
    elif gait_class == "diplegic":
        # forward lean, both feet dragged in a circular motion
        p = GaitStyleParams(torso_lean_deg=14.0 * scale, step_length=0.32 / scale,
                            knee_lift=0.10, arm_swing_left=0.18 * scale,
                            arm_swing_right=0.18 * scale,
                            circumduction=min(0.55 * scale, 1.5),
                            cadence_frames=26 + (2 if sev2 else 0))
    elif gait_class == "hemiplegic":
        # one-sided drag with the right arm held still
        p = GaitStyleParams(torso_lean_deg=4.0, step_length=0.42 / scale,
                            knee_lift=0.22, arm_swing_left=0.45,
                            arm_swing_right=0.0,
                            circumduction=min(0.42 * scale, 1.5),
                            cadence_frames=23 + (2 if sev2 else 0))
    elif gait_class == "neuropathic":
        # foot drop compensated by an exaggerated knee lift
        p = GaitStyleParams(torso_lean_deg=0.0, step_length=min(0.5 * scale, 1.5),
                            knee_lift=min(0.9 * scale, 1.5),
                            arm_swing_left=0.4, arm_swing_right=0.4,
                            cadence_frames=22 + (2 if sev2 else 0))
    else:  # parkinsonian: stooped, arms close to the chest, small fast steps
        p = GaitStyleParams(torso_lean_deg=18.0 * scale, step_length=0.20 / scale,
                            knee_lift=0.15, arm_swing_left=0.06 / scale,
                            arm_swing_right=0.06 / scale,
                            shake_amplitude=0.55 * scale,
                            cadence_frames=14 - (2 if sev2 else 0))
    p.severity_scale = scale
    p.validate()
    return p


@dataclass
class Anthropometrics:
    """Per-subject segment lengths as fractions of body height."""

    head_radius: float = 0.068
    neck_to_head: float = 0.115
    torso: float = 0.30
    upper_arm: float = 0.165
    forearm: float = 0.175
    thigh: float = 0.245
    shank: float = 0.245
    foot: float = 0.085

    @classmethod
    def sample(cls, rng: np.random.Generator, spread: float = 0.10) -> "Anthropometrics":
        base = cls()
        kwargs = {k: v * float(rng.uniform(1.0 - spread, 1.0 + spread))
                  for k, v in asdict(base).items()}
        return cls(**kwargs)


@dataclass
class SynthSequence:
    masks: list[np.ndarray]
    poses: list[np.ndarray]
    cycles: list[tuple[int, int]]  # ground-truth inclusive frame spans
    frames: list[np.ndarray] | None = None  # RGB green-screen composites
    background: np.ndarray | None = None


def _joint_positions(params: GaitStyleParams, anthro: Anthropometrics, t: int,
                     height: float, ground_y: float, x_hip: float, direction: int,
                     rng: np.random.Generator, jitter: float) -> dict[str, tuple[float, float]]:
    """All joint coordinates (image coords, y down) for frame t."""
    phi = 2.0 * math.pi * t / params.cadence_frames
    lean = math.radians(params.torso_lean_deg)
    leg = (anthro.thigh + anthro.shank) * height
    a_hip = 0.55 * params.step_length

    def noise(s):
        return float(rng.normal(0.0, s)) if s > 0 else 0.0

    hip_y = ground_y - 0.96 * leg - anthro.foot * height * 0.35
    hip = (x_hip, hip_y + 0.01 * height * (1.0 - math.cos(2.0 * phi)) / 2.0)

    joints: dict[str, tuple[float, float]] = {"mid_hip": hip}
    neck = (hip[0] + anthro.torso * height * math.sin(lean) * direction,
            hip[1] - anthro.torso * height * math.cos(lean))
    joints["neck"] = neck
    head = (neck[0] + anthro.neck_to_head * height * math.sin(lean * 1.35) * direction,
            neck[1] - anthro.neck_to_head * height * math.cos(lean * 1.35))
    joints["head"] = head

    for side, phase in (("right", 0.0), ("left", math.pi)):
        p = phi + phase + noise(jitter * 0.05)
        thigh_angle = a_hip * math.sin(p)
        drag = min(params.circumduction, 1.0)
        knee_amp = 1.1 * params.knee_lift * (1.0 - 0.55 * drag) + 0.05
        knee_flex = 0.08 + knee_amp * max(0.0, math.cos(p))
        thigh_l = anthro.thigh * height
        shank_l = anthro.shank * height
        hip_pt = (hip[0] + (0.015 * height if side == "left" else -0.015 * height) * direction, hip[1])
        joints[f"{side}_hip"] = hip_pt
        knee = (hip_pt[0] + thigh_l * math.sin(thigh_angle) * direction,
                hip_pt[1] + thigh_l * math.cos(thigh_angle))
        joints[f"{side}_knee"] = knee
        shank_angle = thigh_angle - knee_flex
        ankle_x = knee[0] + shank_l * math.sin(shank_angle) * direction
        ankle_y = knee[1] + shank_l * math.cos(shank_angle)
        # circumduction: dragging foot sweeps an exaggerated horizontal arc
        ankle_x += direction * drag * 0.10 * leg * max(0.0, math.sin(p))
        ankle_y = min(ankle_y, ground_y - 0.02 * height)
        joints[f"{side}_ankle"] = (ankle_x, ankle_y)
        foot_l = anthro.foot * height
        joints[f"{side}_toe"] = (ankle_x + foot_l * direction * 0.95, ankle_y + foot_l * 0.25)
        joints[f"{side}_heel"] = (ankle_x - foot_l * direction * 0.3, ankle_y + foot_l * 0.22)

        swing = params.arm_swing_right if side == "right" else params.arm_swing_left
        arm_p = p + math.pi
        arm_angle = 0.5 * swing * math.sin(arm_p) + 0.35 * lean
        ua, fa = anthro.upper_arm * height, anthro.forearm * height
        shoulder = (neck[0] + (0.012 * height if side == "left" else -0.012 * height) * direction,
                    neck[1] + 0.02 * height)
        joints[f"{side}_shoulder"] = shoulder
        elbow = (shoulder[0] + ua * math.sin(arm_angle) * direction,
                 shoulder[1] + ua * math.cos(arm_angle))
        joints[f"{side}_elbow"] = elbow
        elbow_flex = 0.25 + 0.95 * (1.0 - min(swing * 2.0, 1.0)) + 0.25 * max(0.0, math.sin(arm_p)) * min(swing * 2, 1)
        wrist = (elbow[0] + fa * math.sin(arm_angle + elbow_flex) * direction,
                 elbow[1] + fa * math.cos(arm_angle + elbow_flex))
        joints[f"{side}_wrist"] = wrist

    if params.shake_amplitude > 0:
        s = params.shake_amplitude
        joints = {k: (x + noise(s), y + noise(s)) for k, (x, y) in joints.items()}
    return joints


_SEGMENTS = (
    ("mid_hip", "neck", 0.125),
    ("neck", "head", 0.05),
    ("right_hip", "left_hip", 0.07),
    ("right_hip", "right_knee", 0.055),
    ("right_knee", "right_ankle", 0.046),
    ("right_heel", "right_toe", 0.038),
    ("left_hip", "left_knee", 0.055),
    ("left_knee", "left_ankle", 0.046),
    ("left_heel", "left_toe", 0.038),
    ("right_shoulder", "right_elbow", 0.042),
    ("right_elbow", "right_wrist", 0.036),
    ("left_shoulder", "left_elbow", 0.042),
    ("left_elbow", "left_wrist", 0.036),
)

# BODY_25 keypoint index -> joint name (others stay confidence 0)
_KEYPOINT_MAP = {
    0: "nose", 1: "neck",
    2: "right_shoulder", 3: "right_elbow", 4: "right_wrist",
    5: "left_shoulder", 6: "left_elbow", 7: "left_wrist",
    8: "mid_hip", 9: "right_hip", 10: "right_knee", 11: "right_ankle",
    12: "left_hip", 13: "left_knee", 14: "left_ankle",
    19: "left_toe", 21: "left_heel", 22: "right_toe", 24: "right_heel",
}


def _render_mask(joints: dict, height: float, shape: tuple[int, int]) -> np.ndarray:
    canvas = np.zeros(shape, dtype=np.uint8)

    def pt(name):
        x, y = joints[name]
        return int(round(x)), int(round(y))

    for a, b, frac in _SEGMENTS:
        th = max(2, int(round(frac * height)))
        cv2.line(canvas, pt(a), pt(b), 1, thickness=th)
        for end in (a, b):
            cv2.circle(canvas, pt(end), th // 2, 1, thickness=-1)
    cv2.circle(canvas, pt("head"), max(3, int(round(joints["head_radius"]))), 1, thickness=-1)
    return canvas


def _pose_from_joints(joints: dict, direction: int, head_r: float) -> np.ndarray:
    pose = np.zeros((POSE_KEYPOINTS, 3), dtype=np.float32)
    hx, hy = joints["head"]
    joints = dict(joints)
    joints["nose"] = (hx + 0.8 * head_r * direction, hy)
    for idx, name in _KEYPOINT_MAP.items():
        x, y = joints[name]
        pose[idx] = (x, y, 1.0)
    return pose


def generate_sequence(params: GaitStyleParams, n_frames: int,
                      frame_size: tuple[int, int] | None = None,
                      seed: int = 0, jitter: float = 0.0,
                      direction: str = "ltr",
                      anthro: Anthropometrics | None = None,
                      green_screen: bool = False,
                      noise_sigma: float = 2.0) -> SynthSequence:
    """Render a deterministic walking sequence.

    frame_size is (height, width); when omitted it is sized to fit the walk.
    Raises if the figure or its travel do not fit the frame.
    """
    if n_frames < 1:
        raise ValueError("n_frames must be >= 1")
    params.validate()
    anthro = anthro or Anthropometrics()
    rng = np.random.default_rng(seed)

    if frame_size is None:
        fh = 240
    else:
        fh = frame_size[0]
    height = 0.78 * fh
    leg = (anthro.thigh + anthro.shank) * height
    speed = 4.0 * leg * math.sin(0.55 * params.step_length) / params.cadence_frames
    travel = speed * (n_frames - 1)
    span = 0.55 * height  # generous horizontal body extent
    needed_w = int(math.ceil(travel + span + 0.1 * fh))
    if frame_size is None:
        fw = needed_w
    else:
        fw = frame_size[1]
        if needed_w > fw:
            raise ValueError(f"frame width {fw} too small: walk needs {needed_w} px")
    if height < 40:
        raise ValueError(f"frame height {fh} too small for a drawable figure")

    ground_y = fh - 0.06 * fh
    dirsign = 1 if direction == "ltr" else -1
    x0 = span / 2 + 0.05 * fh if dirsign == 1 else fw - span / 2 - 0.05 * fh

    masks, poses = [], []
    head_r = anthro.head_radius * height
    for t in range(n_frames):
        joints = _joint_positions(params, anthro, t, height, ground_y,
                                  x0 + dirsign * speed * t, dirsign, rng, jitter)
        joints["head_radius"] = head_r
        masks.append(_render_mask(joints, height, (fh, fw)))
        poses.append(_pose_from_joints(joints, dirsign, head_r))

    cycles = []
    start = 0
    while start + params.cadence_frames <= n_frames:
        cycles.append((start, start + params.cadence_frames - 1))
        start += params.cadence_frames

    frames = background = None
    if green_screen:
        bg_rng = np.random.default_rng(seed + 1)
        def make_bg():
            bg = np.empty((fh, fw, 3), dtype=np.float64)
            bg[:] = GREEN_BG
            bg += bg_rng.normal(0.0, noise_sigma, bg.shape)
            return np.clip(bg, 0, 255).astype(np.uint8)
        background = make_bg()
        frames = []
        fg = np.array(FIGURE_COLOR, dtype=np.uint8)
        for m in masks:
            frame = make_bg()
            frame[m > 0] = fg
            frames.append(frame)
    return SynthSequence(masks, poses, cycles, frames, background)


def generate_dataset(root: str | Path, n_subjects: int, seqs_per_class: int,
                     seed: int = 0, n_frames: int = 64, frame_height: int = 240,
                     kinds: tuple[str, ...] = ("gei", "sei"),
                     green_screen: bool = False) -> Manifest:
    """Write a labeled synthetic dataset in the standard layout."""
    if n_subjects < 2:
        raise ValueError("need at least 2 subjects")
    root = Path(root)
    rng = np.random.default_rng(seed)
    manifest = Manifest(fps=10.0)

    for s in range(1, n_subjects + 1):
        subject = f"subject_{s:02d}"
        anthro = Anthropometrics.sample(rng)
        anthro_dict = asdict(anthro)
        for gait_class in CLASS_NAMES:
            for q in range(seqs_per_class):
                severity = None if gait_class == "normal" else (q % 2) + 1
                direction = "ltr" if q % 2 == 0 else "rtl"
                params = preset(gait_class, severity or 1)
                seq_seed = int(rng.integers(0, 2**31 - 1))
                seq = generate_sequence(params, n_frames, frame_size=None,
                                        seed=seq_seed, direction=direction,
                                        anthro=anthro, green_screen=green_screen)
                sev_tag = "na" if severity is None else f"sev{severity}"
                rel = f"{subject}/{gait_class}_{sev_tag}/seq_{q + 1:02d}"
                seq_dir = root / rel
                for i, m in enumerate(seq.masks):
                    write_mask(seq_dir / "masks" / f"frame_{i:04d}.png", m)
                for i, p in enumerate(seq.poses):
                    save_pose_json(seq_dir / "poses" / f"frame_{i:04d}.json", p)
                if green_screen and seq.frames is not None:
                    for i, f in enumerate(seq.frames):
                        write_frame(seq_dir / "frames" / f"frame_{i:04d}.png", f)
                    write_frame(seq_dir / "frames" / "background.png", seq.background)
                with open(seq_dir / "truth.json", "w") as f:
                    json.dump({"cycles": [list(c) for c in seq.cycles],
                               "cadence_frames": params.cadence_frames,
                               "style": asdict(params),
                               "anthropometrics": anthro_dict,
                               "seed": seq_seed}, f, indent=1)
                manifest.sequences.append(SequenceRecord(
                    subject, gait_class, severity, direction, rel, n_frames))
    manifest.save(root)

    for rec in manifest.sequences:
        for kind in kinds:
            compute_sequence_energy_images(root / rec.path, manifest.fps, kind,
                                           subject=rec.subject, gait_class=rec.gait_class,
                                           severity=rec.severity, direction=rec.direction)
    return manifest
