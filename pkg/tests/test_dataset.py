"""Dataset layout, manifest round-trips, and the shared frame pipeline."""

import json

import numpy as np
import pytest

from gaitworks.dataset import (
    Manifest,
    SequenceRecord,
    analyze_masks,
    class_label,
    compute_sequence_energy_images,
    energy_images_from_masks,
    load_energy_dataset,
    load_masks,
    load_poses,
)
from gaitworks.synth import generate_sequence, preset


def test_manifest_roundtrip(tmp_path):
    m = Manifest(fps=10.0, sequences=[
        SequenceRecord("subject_01", "normal", None, "ltr", "subject_01/normal_na/seq_01", 40),
        SequenceRecord("subject_02", "diplegic", 2, "rtl", "subject_02/diplegic_sev2/seq_01", 40,
                       repeat_of="subject_01"),
    ])
    m.save(tmp_path)
    back = Manifest.load(tmp_path)
    assert back.fps == 10.0
    assert back.subjects() == ["subject_01", "subject_02"]
    assert back.sequences[1].repeat_of == "subject_01"
    assert back.sequences[0].severity is None


def test_manifest_missing(tmp_path):
    with pytest.raises(FileNotFoundError, match="manifest"):
        Manifest.load(tmp_path)


def test_class_label_order():
    assert [class_label(c) for c in
            ("diplegic", "hemiplegic", "neuropathic", "normal", "parkinsonian")] == [0, 1, 2, 3, 4]
    with pytest.raises(ValueError, match="unknown gait class"):
        class_label("skipping")


def test_analyze_masks_frame_indices():
    seq = generate_sequence(preset("normal"), 48, seed=2)
    analysis = analyze_masks(seq.masks, 10.0)
    assert analysis.frame_indices == list(range(48))  # already at 10 fps, no trim
    analysis30 = analyze_masks([m for m in seq.masks for _ in range(3)], 30.0)
    assert len(analysis30.masks) == 48
    assert analysis30.frame_indices[:4] == [0, 3, 6, 9]


def test_sequence_energy_images_deterministic(tmp_path, synth_root):
    src = next(synth_root.glob("subject_01/normal_na/seq_01"))
    first = [p.read_bytes() for p in sorted((src / "gei").glob("*.png"))]
    compute_sequence_energy_images(src, 10.0, "gei")
    second = [p.read_bytes() for p in sorted((src / "gei").glob("*.png"))]
    assert first == second


def test_load_energy_dataset_filters_repeats(tmp_path):
    seq = generate_sequence(preset("normal"), 40, seed=4)
    m = Manifest(fps=10.0)
    for subject, repeat in (("subject_01", None), ("subject_02", "subject_01")):
        rel = f"{subject}/normal_na/seq_01"
        d = tmp_path / rel
        from gaitworks.silhouette import write_mask
        for i, mask in enumerate(seq.masks):
            write_mask(d / "masks" / f"frame_{i:04d}.png", mask)
        m.sequences.append(SequenceRecord(subject, "normal", None, "ltr", rel, 40,
                                          repeat_of=repeat))
        compute_sequence_energy_images(d, 10.0, "gei")
    m.save(tmp_path)
    full = load_energy_dataset(tmp_path, "gei")
    primary = load_energy_dataset(tmp_path, "gei", include_repeats=False)
    assert {s.subject for s in full} == {"subject_01", "subject_02"}
    assert {s.subject for s in primary} == {"subject_01"}


def test_energy_images_require_poses_for_sei():
    seq = generate_sequence(preset("normal"), 40, seed=5)
    with pytest.raises(ValueError, match="pose"):
        energy_images_from_masks(seq.masks, 10.0, "sei")
    with pytest.raises(ValueError, match="kind"):
        energy_images_from_masks(seq.masks, 10.0, "rgb")


def test_sei_pipeline_from_sequence_dir(synth_root):
    src = next(synth_root.glob("subject_02/neuropathic_*/seq_01"))
    masks = load_masks(src)
    poses = load_poses(src)
    assert len(masks) == len(poses)
    analysis, per_cycle, full = energy_images_from_masks(masks, 10.0, "sei", poses=poses)
    assert per_cycle
    for _, img in per_cycle:
        assert img.kind == "sei"
        assert img.pixels.shape == (224, 224)
    # cycles must lie within the trimmed, resampled span
    for cycle, _ in per_cycle:
        assert 0 <= cycle.start < cycle.end < len(analysis.masks)


def test_cycles_sidecar_written(synth_root):
    src = next(synth_root.glob("subject_01/normal_na/seq_01"))
    sidecar = json.loads((src / "cycles.json").read_text())
    assert sidecar["fps"] == 10.0
    assert sidecar["cycles"]
    truth = json.loads((src / "truth.json").read_text())
    for c in sidecar["cycles"]:
        length = c["end"] - c["start"] + 1
        assert abs(length - truth["cadence_frames"]) <= 1
