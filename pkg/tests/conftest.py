import pathlib
import sys

sys.path.insert(0, str(pathlib.Path(__file__).parent))

import numpy as np
import pytest


def pytest_runtest_logreport(report):
    """One visible PASS/FAIL line per acceptance criterion."""
    if report.when == "call" and "test_acceptance" in report.nodeid:
        status = "PASS" if report.passed else ("SKIP" if report.skipped else "FAIL")
        name = report.nodeid.split("::")[-1]
        sys.stdout.write(f"[ACCEPTANCE] {status:4s} {name}\n")


@pytest.fixture(scope="session")
def synth_root(tmp_path_factory):
    """Small synthetic dataset shared across test modules (4 subjects)."""
    from gaitworks.synth import generate_dataset

    root = tmp_path_factory.mktemp("synthdata")
    generate_dataset(root, n_subjects=4, seqs_per_class=1, seed=123,
                     n_frames=56, kinds=("gei", "sei"))
    return root


@pytest.fixture(scope="session")
def trained_models(tmp_path_factory, synth_root):
    """GEI and SEI default-architecture models trained on the shared dataset."""
    from gaitworks.dataset import load_energy_dataset
    from gaitworks.model import TrainConfig, build_model, save_model, train

    out = tmp_path_factory.mktemp("models")
    result = {}
    for kind in ("gei", "sei"):
        samples = load_energy_dataset(synth_root, kind)
        model = build_model(rng=np.random.default_rng(7), kind=kind)
        cfg = TrainConfig(batch_size=16, max_epochs=12, patience=12, seed=7)
        history = train(model, samples, cfg)
        path = out / f"{kind}.gmd"
        save_model(model, path)
        result[kind] = {"path": path, "model": model, "history": history,
                        "samples": samples}
    return result
