"""Energy-image construction: resampling, normalization, cycles, GEI/SEI."""

import math

import cv2
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gaitworks.gait import (
    ENERGY_SIZE,
    BODY_25_PAIRS,
    EnergyImage,
    GaitCycle,
    SilhouetteSequence,
    compute_gei,
    compute_sei,
    crop_normalize,
    detect_cycles,
    load_energy_png,
    rasterize_skeleton,
    resample_fps,
    save_energy_png,
    trim_partial,
)

from oracles import naive_mean_image


def seq_of(masks, fps=10.0):
    return SilhouetteSequence(list(masks), fps)


def mask_with_width(width: int, h: int = 40, w: int = 80) -> np.ndarray:
    m = np.zeros((h, w), dtype=np.uint8)
    left = (w - width) // 2
    m[10:30, left : left + width] = 1
    return m


# --- resample_fps ------------------------------------------------------------

def test_resample_identity_at_10fps():
    masks = [mask_with_width(10 + i) for i in range(20)]
    out = resample_fps(seq_of(masks, 10.0), 10.0)
    assert len(out.masks) == 20
    for a, b in zip(out.masks, masks):
        np.testing.assert_array_equal(a, b)


def test_resample_30fps_takes_every_third():
    masks = [mask_with_width(5 + i) for i in range(30)]
    out = resample_fps(seq_of(masks, 30.0), 10.0)
    assert len(out.masks) == 10
    picked = [int(m.sum() // 20) - 5 for m in out.masks]  # recover source index
    assert picked == [0, 3, 6, 9, 12, 15, 18, 21, 24, 27]


def test_resample_25fps_nearest_time():
    n, src = 50, 25.0
    masks = [mask_with_width(5 + i) for i in range(n)]
    out = resample_fps(seq_of(masks, src), 10.0)
    assert len(out.masks) == 20
    for j, m in enumerate(out.masks):
        i = int(m.sum() // 20) - 5
        # nearest-time pick: off by at most half a source frame period
        assert abs(i / src - j / 10.0) <= 1.0 / (2.0 * src) + 1e-9


def test_resample_upsampling_rejected():
    with pytest.raises(ValueError, match="resample"):
        resample_fps(seq_of([mask_with_width(5)], 5.0), 10.0)


# --- crop_normalize ----------------------------------------------------------

def test_crop_square_blob_fills_output():
    m = np.zeros((200, 200), dtype=np.uint8)
    m[50:150, 50:150] = 1
    out = crop_normalize(m)
    assert out.shape == (ENERGY_SIZE, ENERGY_SIZE)
    assert out.min() == 1.0


def test_crop_centroid_column_centered():
    # mass concentrated left of the bbox center: padding must re-center it
    m = np.zeros((300, 300), dtype=np.uint8)
    m[50:250, 100:120] = 1   # dense 20-wide bar
    m[240:250, 100:160] = 1  # light foot extending right
    out = crop_normalize(m)
    cols = np.arange(ENERGY_SIZE)
    centroid = float((out * cols).sum() / out.sum())
    assert abs(centroid - 112) <= 1.0


def test_crop_square_input_is_pure_resize():
    rng = np.random.default_rng(5)
    m = np.zeros((90, 90), dtype=np.float32)
    m[0, 0] = 1.0
    m[89, 89] = 1.0
    m[20:70, 20:70] = (rng.random((50, 50)) > 0.3).astype(np.float32)
    out = crop_normalize(m)
    ref = cv2.resize(m, (ENERGY_SIZE, ENERGY_SIZE), interpolation=cv2.INTER_LINEAR)
    np.testing.assert_allclose(out, np.clip(ref, 0, 1), atol=1e-6)


def test_crop_empty_mask_rejected():
    with pytest.raises(ValueError, match="empty"):
        crop_normalize(np.zeros((50, 50), dtype=np.uint8))


def test_crop_binary_output_is_binary():
    m = np.zeros((100, 60), dtype=np.uint8)
    m[10:90, 20:40] = 1
    out = crop_normalize(m, binary=True)
    assert set(np.unique(out)) <= {0.0, 1.0}
    assert out.sum() > 0


# --- detect_cycles -----------------------------------------------------------

def cosine_width_seq(n, period, base=30, amp=10):
    widths = [int(round(base + amp * math.cos(2 * math.pi * t / period))) for t in range(n)]
    return seq_of([mask_with_width(w) for w in widths])


def test_cycles_from_periodic_signal():
    seq = cosine_width_seq(64, 10)  # width maxima every 10 frames = one step
    cycles = detect_cycles(seq)
    assert cycles, "no cycles detected"
    for c in cycles:
        assert abs(c.length - 20) <= 1


def test_constant_width_yields_no_cycles():
    seq = seq_of([mask_with_width(20)] * 40)
    assert detect_cycles(seq) == []


def test_two_steps_plus_partial_gives_one_cycle():
    # maxima at 10, 20, 30; the trailing half step cannot complete a cycle
    seq = cosine_width_seq(36, 10)
    cycles = detect_cycles(seq)
    assert len(cycles) == 1
    assert cycles[0].length == 20


def test_short_cycles_discarded():
    seq = cosine_width_seq(40, 3)  # would give 6-frame cycles, below the minimum
    assert detect_cycles(seq) == []


def test_cycles_need_two_seconds():
    with pytest.raises(ValueError, match="2 seconds"):
        detect_cycles(seq_of([mask_with_width(10)] * 10))


def test_cycles_ordered_and_disjoint():
    seq = cosine_width_seq(100, 10)
    cycles = detect_cycles(seq)
    assert len(cycles) >= 3
    for a, b in zip(cycles, cycles[1:]):
        assert a.end < b.start


# --- trim_partial ------------------------------------------------------------

def border_mask(side: str | None, h=40, w=60) -> np.ndarray:
    m = np.zeros((h, w), dtype=np.uint8)
    m[10:30, 20:40] = 1
    if side == "left":
        m[15:25, 0:10] = 1
    elif side == "right":
        m[15:25, w - 10 : w] = 1
    elif side == "top":
        m[0:10, 25:35] = 1
    return m


def test_trim_identity_without_border_contact():
    seq = seq_of([border_mask(None)] * 6)
    out = trim_partial(seq)
    assert len(out.masks) == 6


def test_trim_removes_exact_edges():
    masks = [border_mask("left")] * 5 + [border_mask(None)] * 7 + [border_mask("right")] * 3
    out = trim_partial(seq_of(masks))
    assert len(out.masks) == 7


def test_trim_keeps_top_border_contact():
    masks = [border_mask(None), border_mask("top"), border_mask(None)]
    out = trim_partial(seq_of(masks))
    assert len(out.masks) == 3


def test_trim_interior_touch_is_kept():
    masks = [border_mask(None), border_mask("left"), border_mask(None)]
    out = trim_partial(seq_of(masks))
    assert len(out.masks) == 3  # only leading/trailing frames are dropped


def test_trim_all_touching_rejected():
    with pytest.raises(ValueError, match="no usable span"):
        trim_partial(seq_of([border_mask("left")] * 4))


# --- compute_gei -------------------------------------------------------------

def test_gei_single_frame_identity():
    rng = np.random.default_rng(0)
    frame = (rng.random((ENERGY_SIZE, ENERGY_SIZE)) > 0.5).astype(np.float32)
    img = compute_gei([frame])
    np.testing.assert_array_equal(img.pixels, frame)


def test_gei_half_occupancy_pixel():
    a = np.zeros((ENERGY_SIZE, ENERGY_SIZE), dtype=np.float32)
    b = np.zeros((ENERGY_SIZE, ENERGY_SIZE), dtype=np.float32)
    a[100, 100] = 1.0
    img = compute_gei([a, b])
    assert img.pixels[100, 100] == pytest.approx(0.5)


def test_gei_matches_mean_oracle():
    rng = np.random.default_rng(11)
    frames = [(rng.random((ENERGY_SIZE, ENERGY_SIZE)) > 0.5).astype(np.float32)
              for _ in range(10)]
    img = compute_gei(frames)
    np.testing.assert_allclose(img.pixels, naive_mean_image(frames), atol=1e-6)


def test_gei_empty_rejected():
    with pytest.raises(ValueError, match="at least one"):
        compute_gei([])


@settings(max_examples=25, deadline=None)
@given(st.integers(min_value=0, max_value=10_000))
def test_gei_permutation_invariant_and_bounded(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(2, 6))
    frames = [(rng.random((ENERGY_SIZE, ENERGY_SIZE)) > 0.6).astype(np.float32)
              for _ in range(n)]
    img = compute_gei(frames)
    perm = [frames[i] for i in rng.permutation(n)]
    np.testing.assert_allclose(compute_gei(perm).pixels, img.pixels, atol=1e-6)
    stack = np.stack(frames)
    assert np.all(img.pixels <= stack.max(axis=0) + 1e-6)
    assert np.all(img.pixels >= stack.min(axis=0) - 1e-6)
    assert img.pixels.min() >= 0.0 and img.pixels.max() <= 1.0


def test_energy_image_validation():
    with pytest.raises(ValueError, match="224"):
        EnergyImage(np.zeros((100, 100)), kind="gei")
    with pytest.raises(ValueError, match="kind"):
        EnergyImage(np.zeros((224, 224)), kind="x")
    with pytest.raises(ValueError, match="outside"):
        EnergyImage(np.full((224, 224), 1.5), kind="gei")


# --- rasterize_skeleton ------------------------------------------------------

def two_point_pose(a_idx, b_idx, a_xy, b_xy):
    pose = np.zeros((25, 3), dtype=np.float32)
    pose[a_idx] = (*a_xy, 1.0)
    pose[b_idx] = (*b_xy, 1.0)
    return pose


def test_rasterize_single_limb_stroke():
    pose = two_point_pose(1, 8, (50, 20), (50, 80))  # neck -> mid hip
    mask = rasterize_skeleton(pose, (100, 100), stroke=4)
    assert mask.sum() > 0
    ys, xs = np.nonzero(mask)
    assert ys.min() >= 18 and ys.max() <= 82
    assert xs.min() >= 47 and xs.max() <= 53


def test_rasterize_needs_two_confident_points():
    pose = np.zeros((25, 3), dtype=np.float32)
    pose[0] = (10, 10, 1.0)
    with pytest.raises(ValueError, match="confident"):
        rasterize_skeleton(pose, (64, 64))


def test_rasterize_skips_unconfident_pairs():
    pose = two_point_pose(1, 8, (50, 20), (50, 80))
    pose[2] = (90, 20, 0.05)  # below the confidence threshold
    mask = rasterize_skeleton(pose, (100, 100))
    assert not mask[:, 80:].any()


def test_rasterize_stroke_count_geometric_estimate():
    # sparse upright pose: neck->hip->knees->ankles plus arms
    pose = np.zeros((25, 3), dtype=np.float32)
    pts = {1: (100, 40), 8: (100, 110), 9: (95, 112), 12: (105, 112),
           10: (80, 160), 13: (120, 160), 11: (75, 205), 14: (125, 205),
           2: (95, 45), 5: (105, 45), 3: (70, 80), 6: (130, 80)}
    for idx, (x, y) in pts.items():
        pose[idx] = (x, y, 1.0)
    stroke = 4
    mask = rasterize_skeleton(pose, (240, 220), stroke=stroke)
    # effective stroke width is thickness + 1 (inclusive raster endpoints)
    est = 0.0
    for a, b in BODY_25_PAIRS:
        if pose[a, 2] > 0 and pose[b, 2] > 0:
            est += math.dist(pose[a, :2], pose[b, :2]) * (stroke + 1)
    assert 0.8 * est <= mask.sum() <= 1.2 * est


# --- compute_sei -------------------------------------------------------------

def full_pose(x0=60.0, y0=20.0):
    pose = np.zeros((25, 3), dtype=np.float32)
    layout = {0: (0, 0), 1: (0, 14), 2: (-6, 16), 5: (6, 16), 3: (-10, 44), 6: (10, 44),
              4: (-12, 70), 7: (12, 70), 8: (0, 72), 9: (-5, 73), 12: (5, 73),
              10: (-9, 110), 13: (9, 110), 11: (-7, 150), 14: (7, 150),
              19: (14, 156), 22: (-2, 156), 21: (4, 157), 24: (-11, 157)}
    for idx, (dx, dy) in layout.items():
        pose[idx] = (x0 + dx, y0 + dy, 1.0)
    return pose


def test_sei_single_pose_equals_normalized_rasterization():
    pose = full_pose()
    img = compute_sei([pose], (200, 140))
    ref = crop_normalize(rasterize_skeleton(pose, (200, 140)))
    np.testing.assert_allclose(img.pixels, ref, atol=1e-6)
    assert img.kind == "sei"


def test_sei_identical_poses_collapse_to_one():
    pose = full_pose()
    img1 = compute_sei([pose], (200, 140))
    img3 = compute_sei([pose, pose.copy(), pose.copy()], (200, 140))
    np.testing.assert_allclose(img3.pixels, img1.pixels, atol=1e-6)


def test_sei_matches_mean_oracle():
    poses = [full_pose(x0=60 + 3 * i) for i in range(5)]
    frames = [crop_normalize(rasterize_skeleton(p, (200, 170))) for p in poses]
    img = compute_sei(poses, (200, 170))
    np.testing.assert_allclose(img.pixels, naive_mean_image(frames), atol=1e-6)


# --- PNG round trip ----------------------------------------------------------

def test_energy_png_roundtrip(tmp_path):
    rng = np.random.default_rng(8)
    img = EnergyImage(rng.random((ENERGY_SIZE, ENERGY_SIZE)).astype(np.float32), kind="gei")
    path = tmp_path / "e.png"
    save_energy_png(path, img)
    back = load_energy_png(path, kind="gei")
    np.testing.assert_allclose(back.pixels, np.round(img.pixels * 255) / 255.0, atol=1e-7)


def test_energy_png_deterministic_bytes(tmp_path):
    rng = np.random.default_rng(8)
    img = EnergyImage(rng.random((ENERGY_SIZE, ENERGY_SIZE)).astype(np.float32), kind="sei")
    save_energy_png(tmp_path / "a.png", img)
    save_energy_png(tmp_path / "b.png", img)
    assert (tmp_path / "a.png").read_bytes() == (tmp_path / "b.png").read_bytes()


def test_gait_cycle_validation():
    with pytest.raises(ValueError, match="degenerate"):
        GaitCycle(5, 5)
    assert GaitCycle(0, 19).length == 20
