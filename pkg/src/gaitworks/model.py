"""The compact 5-class gait CNN: build, train, evaluate, serialize.

Architecture: five 3x3 stride-2 same-padded conv blocks (conv -> batch norm
-> ReLU) with filter plan [32, 32, 32, 64, 64], then flatten -> dense(512)
-> ReLU -> dropout(0.5) -> dense(5) -> softmax. Trained with categorical
cross-entropy and Nadam at learning rate 0.001.
"""

from __future__ import annotations

import json
import struct
import time
import zlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import CLASS_NAMES
from .dataset import Sample
from .gait import ENERGY_SIZE, EnergyImage
from .nn import LayerSpec, NadamState, Tensor, build_layer, nadam_step, softmax, softmax_cross_entropy

FILTER_PLAN = (32, 32, 32, 64, 64)
MODEL_MAGIC = b"GMD1"
MODEL_VERSION = 1
_KIND_BYTES = {"gei": 0, "sei": 1}
_KIND_NAMES = {v: k for k, v in _KIND_BYTES.items()}


@dataclass
class ModelConfig:
    layers: list[LayerSpec]
    input_hw: int = ENERGY_SIZE
    input_channels: int = 1
    n_classes: int = 5

    def validate(self) -> None:
        for spec in self.layers:
            spec.validate()
        convs = [s for s in self.layers if s.kind == "conv2d"]
        if len(convs) != 5:
            raise ValueError(f"the model plan requires exactly 5 conv layers, got {len(convs)}")
        if not self.layers or self.layers[-1].kind != "softmax":
            raise ValueError("the final layer must be softmax")
        denses = [s for s in self.layers if s.kind == "dense"]
        if not denses or denses[-1].units != self.n_classes:
            raise ValueError(f"the last dense layer must have {self.n_classes} units")

    def to_dict(self) -> dict:
        return {"layers": [s.to_dict() for s in self.layers],
                "input_hw": self.input_hw, "input_channels": self.input_channels,
                "n_classes": self.n_classes}

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        cfg = cls(layers=[LayerSpec.from_dict(s) for s in d["layers"]],
                  input_hw=d["input_hw"], input_channels=d["input_channels"],
                  n_classes=d["n_classes"])
        cfg.validate()
        return cfg


def default_config(input_hw: int = ENERGY_SIZE) -> ModelConfig:
    layers = []
    for f in FILTER_PLAN:
        layers.append(LayerSpec(kind="conv2d", filters=f, kernel_size=3, stride=2, padding="same"))
        layers.append(LayerSpec(kind="batchnorm"))
        layers.append(LayerSpec(kind="relu"))
    layers += [LayerSpec(kind="flatten"),
               LayerSpec(kind="dense", units=512),
               LayerSpec(kind="relu"),
               LayerSpec(kind="dropout", rate=0.5),
               LayerSpec(kind="dense", units=5),
               LayerSpec(kind="softmax")]
    cfg = ModelConfig(layers=layers, input_hw=input_hw)
    cfg.validate()
    return cfg


@dataclass
class Prediction:
    probabilities: np.ndarray  # (5,) float32 summing to 1
    label: int                 # argmax, ties to the lowest index
    class_names: list[str] = field(default_factory=lambda: list(CLASS_NAMES))

    @property
    def class_name(self) -> str:
        return self.class_names[self.label]


class GaitModel:
    """A built network: layer objects with parameters and running stats."""

    def __init__(self, config: ModelConfig, rng: np.random.Generator, kind: str = "gei"):
        config.validate()
        if kind not in _KIND_BYTES:
            raise ValueError(f"unknown representation kind {kind!r}")
        self.config = config
        self.kind = kind
        self.layers = []
        shape = (config.input_hw, config.input_hw, config.input_channels)
        self.layer_shapes = [shape]
        for spec in config.layers:
            layer = build_layer(spec, shape, rng)
            shape = layer.output_shape(shape)
            self.layers.append(layer)
            self.layer_shapes.append(shape)
        if shape != (config.n_classes,):
            raise ValueError(f"layer plan produces output shape {shape}, expected ({config.n_classes},)")
        # post-activation layer index per conv block, for feature maps / grad-CAM
        self.conv_activations = []
        for i, spec in enumerate(config.layers):
            if spec.kind == "conv2d":
                j = i
                while j + 1 < len(config.layers) and config.layers[j + 1].kind in ("batchnorm", "relu"):
                    j += 1
                self.conv_activations.append(j)

    # --- parameters -------------------------------------------------------

    def params(self) -> list[Tensor]:
        out = []
        for layer in self.layers:
            out.extend(layer.params())
        return out

    def state_tensors(self) -> list[Tensor]:
        out = []
        for layer in self.layers:
            out.extend(layer.state_tensors())
        return out

    def parameter_counts(self) -> dict:
        trainable = sum(p.size for p in self.params())
        stats = sum(s.size for s in self.state_tensors())
        return {"trainable": trainable, "non_trainable": stats, "total": trainable + stats}

    def layer_table(self) -> list[dict]:
        rows = []
        for spec, layer, shape in zip(self.config.layers, self.layers, self.layer_shapes[1:]):
            rows.append({"kind": spec.kind, "output_shape": list(shape),
                         "params": sum(p.size for p in layer.params()) +
                                   sum(s.size for s in layer.state_tensors())})
        return rows

    # --- forward / backward -----------------------------------------------

    def _prepare(self, x) -> np.ndarray:
        dtype = self.params()[0].data.dtype
        x = np.asarray(x, dtype=dtype)
        if x.ndim == 2:
            x = x[:, :, None]
        if x.ndim == 3:
            x = x[None]
        hw = self.config.input_hw
        if x.shape[1:] != (hw, hw, self.config.input_channels):
            raise ValueError(f"input shape {x.shape[1:]} does not match model input "
                             f"({hw}, {hw}, {self.config.input_channels})")
        return x

    def forward_logits(self, x, train: bool = False,
                       rng: np.random.Generator | None = None) -> np.ndarray:
        out = self._prepare(x)
        for layer in self.layers[:-1]:
            out = layer.forward(out, train=train, rng=rng)
        return out

    def forward(self, x, train: bool = False, rng: np.random.Generator | None = None) -> np.ndarray:
        return softmax(self.forward_logits(x, train=train, rng=rng))

    def forward_recorded(self, x) -> list[np.ndarray]:
        """Inference forward keeping every layer's output (batch of 1)."""
        out = self._prepare(x)
        recorded = []
        for layer in self.layers:
            out = layer.forward(out, train=False)
            recorded.append(out)
        return recorded

    def backward_from_logits(self, dlogits: np.ndarray,
                             capture: set[int] | None = None):
        """Backpropagate a logit-space gradient; the softmax layer is skipped.

        Returns (input_grad, {layer_index: grad wrt that layer's output}).
        """
        captured: dict[int, np.ndarray] = {}
        d = dlogits
        for i in range(len(self.layers) - 2, -1, -1):
            if capture and i in capture:
                captured[i] = d
            d = self.layers[i].backward(d)
        return d, captured

    def zero_grads(self) -> None:
        for p in self.params():
            p.zero_grad()

    def finalize_batchnorm_stats(self, images: np.ndarray, batch_size: int = 64) -> None:
        """Replace EMA running stats with exact activation statistics over
        the given images (train-mode forward passes, dropout off)."""
        bns = [layer for layer in self.layers if layer.kind == "batchnorm"]
        if not bns:
            return
        for bn in bns:
            bn.begin_stat_collection()
        for start in range(0, len(images), batch_size):
            x = self._prepare(images[start : start + batch_size])
            for layer in self.layers[:-1]:
                if layer.kind == "dropout":
                    continue  # identity at inference; keep the stats clean
                x = layer.forward(x, train=layer.kind == "batchnorm")
        for bn in bns:
            bn.end_stat_collection()


def build_model(config: ModelConfig | None = None,
                rng: np.random.Generator | int | None = None,
                kind: str = "gei") -> GaitModel:
    if config is None:
        config = default_config()
    if not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(rng if rng is not None else 0)
    return GaitModel(config, rng, kind=kind)


def predict(model: GaitModel, image) -> Prediction:
    """Deterministic inference on one energy image (dropout off, BN infer)."""
    if isinstance(image, EnergyImage):
        if image.kind != model.kind:
            raise ValueError(f"model expects {model.kind} inputs, got {image.kind}")
        image = image.pixels
    probs = model.forward(image)[0]
    return Prediction(probabilities=probs, label=int(np.argmax(probs)))


# --- training ---------------------------------------------------------------

@dataclass
class TrainConfig:
    learning_rate: float = 0.001
    batch_size: int = 32
    max_epochs: int = 100
    patience: int = 10
    seed: int = 0

    def validate(self) -> None:
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be >= 0")
        if self.batch_size < 1 or self.max_epochs < 1:
            raise ValueError("batch_size and max_epochs must be >= 1")


def train(model: GaitModel, samples: list[Sample], cfg: TrainConfig,
          log=None) -> list[dict]:
    """Train in place; returns the per-epoch history.

    Deterministic for a fixed config seed. Stops early when the epoch loss
    has not improved for `patience` epochs.
    """
    cfg.validate()
    if not samples:
        raise ValueError("empty training set")
    labels = np.array([s.label for s in samples], dtype=np.int64)
    if labels.min() < 0 or labels.max() >= model.config.n_classes:
        raise ValueError(f"labels must lie in [0, {model.config.n_classes})")
    images = np.stack([s.image for s in samples]).astype(np.float32)
    if images.ndim == 3:
        images = images[..., None]

    rng = np.random.default_rng(cfg.seed)
    params = model.params()
    state = NadamState.for_params(params, learning_rate=cfg.learning_rate)
    history: list[dict] = []
    best_loss, since_best = np.inf, 0

    for epoch in range(1, cfg.max_epochs + 1):
        order = rng.permutation(len(samples))
        total_loss, correct = 0.0, 0
        for start in range(0, len(samples), cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            xb, yb = images[idx], labels[idx]
            logits = model.forward_logits(xb, train=True, rng=rng)
            loss, dlogits = softmax_cross_entropy(logits, yb)
            if not np.isfinite(loss):
                raise RuntimeError(f"training diverged: loss={loss} at epoch {epoch}")
            model.zero_grads()
            model.backward_from_logits(dlogits)
            nadam_step(params, [p.grad for p in params], state)
            total_loss += loss * len(idx)
            correct += int((logits.argmax(axis=1) == yb).sum())
        epoch_loss = total_loss / len(samples)
        epoch_acc = correct / len(samples)
        history.append({"epoch": epoch, "loss": epoch_loss, "accuracy": epoch_acc})
        if log:
            log(f"epoch {epoch:3d}  loss {epoch_loss:.4f}  acc {epoch_acc:.3f}")
        if epoch_loss < best_loss - 1e-4:
            best_loss, since_best = epoch_loss, 0
        else:
            since_best += 1
            if since_best >= cfg.patience:
                break
    model.finalize_batchnorm_stats(images, batch_size=max(cfg.batch_size, 64))
    return history


# --- metrics and evaluation protocols ---------------------------------------

@dataclass
class Metrics:
    accuracy: float
    per_class_accuracy: list[float]
    confusion: list[list[float]]  # row-normalized over true classes
    counts: list[int]             # samples per true class

    def to_dict(self) -> dict:
        return {"accuracy": self.accuracy, "per_class_accuracy": self.per_class_accuracy,
                "confusion": self.confusion, "counts": self.counts,
                "class_names": list(CLASS_NAMES)}


def compute_metrics(y_true, y_pred, n_classes: int = 5) -> Metrics:
    y_true = np.asarray(y_true, dtype=np.int64)
    y_pred = np.asarray(y_pred, dtype=np.int64)
    counts = np.zeros((n_classes, n_classes), dtype=np.int64)
    for t, p in zip(y_true, y_pred):
        counts[t, p] += 1
    row_sums = counts.sum(axis=1)
    confusion = np.zeros_like(counts, dtype=np.float64)
    for k in range(n_classes):
        if row_sums[k] > 0:
            confusion[k] = counts[k] / row_sums[k]
    per_class = [float(confusion[k, k]) if row_sums[k] > 0 else float("nan")
                 for k in range(n_classes)]
    accuracy = float(np.trace(counts) / max(1, counts.sum()))
    return Metrics(accuracy, per_class, confusion.tolist(), row_sums.tolist())


def evaluate(model: GaitModel, samples: list[Sample], batch_size: int = 64) -> Metrics:
    images = np.stack([s.image for s in samples]).astype(np.float32)
    if images.ndim == 3:
        images = images[..., None]
    preds = []
    for start in range(0, len(samples), batch_size):
        logits = model.forward_logits(images[start : start + batch_size])
        preds.extend(logits.argmax(axis=1).tolist())
    return compute_metrics([s.label for s in samples], preds, model.config.n_classes)


def make_folds(n_subjects: int = 21) -> list[tuple[int, int, int]]:
    """Ten test triples over S1..S21: fold k tests {S(2k-1), S(2k), S(2k+1)}."""
    if n_subjects != 21:
        raise ValueError("the cross-validation protocol is defined for exactly 21 subjects")
    folds = []
    for k in range(1, 11):
        i = 2 * k - 1
        folds.append((i, i + 1, i + 2))
    return folds


def _subject_order(samples: list[Sample]) -> list[str]:
    return sorted({s.subject for s in samples})


@dataclass
class FoldResult:
    fold: int
    test_subjects: list[str]
    train_subjects: list[str]
    metrics: Metrics


def cross_validate(samples: list[Sample], cfg: TrainConfig,
                   model_config: ModelConfig | None = None, kind: str = "gei",
                   log=None) -> dict:
    """10-fold subject-wise cross-validation (21 subjects required).

    Trains from scratch per fold; asserts the train/test subject split is
    leak-free before any training.
    """
    subjects = _subject_order(samples)
    if len(subjects) != 21:
        raise ValueError(f"cross-validation needs the 21-subject protocol, found {len(subjects)} subjects")
    model_config = model_config or default_config()
    by_subject: dict[str, list[Sample]] = {s: [] for s in subjects}
    for s in samples:
        by_subject[s.subject].append(s)

    fold_results: list[FoldResult] = []
    all_true, all_pred = [], []
    for fold_idx, triple in enumerate(make_folds(21), start=1):
        test_subjects = [subjects[i - 1] for i in triple]
        train_subjects = [s for s in subjects if s not in test_subjects]
        assert not set(test_subjects) & set(train_subjects), "subject leakage between folds"
        train_set = [x for s in train_subjects for x in by_subject[s]]
        test_set = [x for s in test_subjects for x in by_subject[s]]
        for x in train_set:
            assert x.subject not in test_subjects, "sample leakage into training"
        model = build_model(model_config, rng=np.random.default_rng((cfg.seed, fold_idx)), kind=kind)
        fold_cfg = TrainConfig(cfg.learning_rate, cfg.batch_size, cfg.max_epochs,
                               cfg.patience, seed=cfg.seed * 1000 + fold_idx)
        train(model, train_set, fold_cfg)
        metrics = evaluate(model, test_set)
        if log:
            log(f"fold {fold_idx:2d} test={test_subjects} acc={metrics.accuracy:.3f}")
        images = np.stack([s.image for s in test_set]).astype(np.float32)[..., None]
        preds = model.forward_logits(images).argmax(axis=1)
        all_true.extend(s.label for s in test_set)
        all_pred.extend(int(p) for p in preds)
        fold_results.append(FoldResult(fold_idx, test_subjects, train_subjects, metrics))

    pooled = compute_metrics(all_true, all_pred)
    return {"folds": fold_results,
            "mean_accuracy": float(np.mean([f.metrics.accuracy for f in fold_results])),
            "pooled": pooled}


def cross_dataset_eval(train_samples: list[Sample], test_samples: list[Sample],
                       cfg: TrainConfig, model_config: ModelConfig | None = None,
                       kind: str = "gei",
                       train_classes: list[str] | None = None,
                       test_classes: list[str] | None = None,
                       log=None) -> Metrics:
    """Train once on the full train set, evaluate on a disjoint dataset."""
    if (train_classes or CLASS_NAMES) != (test_classes or CLASS_NAMES):
        raise ValueError(f"label-space mismatch: {train_classes} vs {test_classes}")
    model = build_model(model_config or default_config(),
                        rng=np.random.default_rng(cfg.seed), kind=kind)
    train(model, train_samples, cfg, log=log)
    return evaluate(model, test_samples)


def measure_latency(model: GaitModel, runs: int = 10) -> float:
    """Mean per-sample inference time in milliseconds (informational)."""
    hw = model.config.input_hw
    x = np.zeros((hw, hw, model.config.input_channels), dtype=np.float32)
    model.forward(x)  # warm up
    t0 = time.perf_counter()
    for _ in range(runs):
        model.forward(x)
    return (time.perf_counter() - t0) / runs * 1000.0


# --- serialization -----------------------------------------------------------
# File format: magic "GMD1" | u16 version | u8 kind | u32 header length |
# JSON config header | float32-LE parameter and running-stat blobs in layer
# order | u32 CRC32 of the blob payload.

def _ordered_tensors(model: GaitModel) -> list[Tensor]:
    out = []
    for layer in model.layers:
        out.extend(layer.params())
        out.extend(layer.state_tensors())
    return out


def model_file_layout(model: GaitModel) -> dict:
    header_json = json.dumps(model.config.to_dict(), separators=(",", ":")).encode()
    n_floats = sum(t.size for t in _ordered_tensors(model))
    return {"prefix_bytes": 4 + 2 + 1 + 4, "header_json_bytes": len(header_json),
            "payload_bytes": 4 * n_floats, "trailer_bytes": 4,
            "total_bytes": 4 + 2 + 1 + 4 + len(header_json) + 4 * n_floats + 4}


def save_model(model: GaitModel, path: str | Path) -> None:
    header_json = json.dumps(model.config.to_dict(), separators=(",", ":")).encode()
    payload = b"".join(np.ascontiguousarray(t.data, dtype="<f4").tobytes()
                       for t in _ordered_tensors(model))
    with open(path, "wb") as f:
        f.write(MODEL_MAGIC)
        f.write(struct.pack("<H", MODEL_VERSION))
        f.write(struct.pack("<B", _KIND_BYTES[model.kind]))
        f.write(struct.pack("<I", len(header_json)))
        f.write(header_json)
        f.write(payload)
        f.write(struct.pack("<I", zlib.crc32(payload)))


class ModelFormatError(ValueError):
    pass


def load_model(path: str | Path) -> GaitModel:
    raw = Path(path).read_bytes()
    if len(raw) < 15:
        raise ModelFormatError(f"{path}: truncated model file")
    if raw[:4] != MODEL_MAGIC:
        raise ModelFormatError(f"{path}: bad magic {raw[:4]!r}, expected {MODEL_MAGIC!r}")
    version, = struct.unpack_from("<H", raw, 4)
    if version != MODEL_VERSION:
        raise ModelFormatError(f"{path}: unsupported version {version}")
    kind_byte, = struct.unpack_from("<B", raw, 6)
    if kind_byte not in _KIND_NAMES:
        raise ModelFormatError(f"{path}: unknown representation kind byte {kind_byte}")
    hlen, = struct.unpack_from("<I", raw, 7)
    header_end = 11 + hlen
    if len(raw) < header_end + 4:
        raise ModelFormatError(f"{path}: truncated header")
    try:
        config = ModelConfig.from_dict(json.loads(raw[11:header_end]))
    except (json.JSONDecodeError, KeyError, ValueError) as e:
        raise ModelFormatError(f"{path}: bad config header: {e}") from e

    model = build_model(config, rng=np.random.default_rng(0), kind=_KIND_NAMES[kind_byte])
    tensors = _ordered_tensors(model)
    n_floats = sum(t.size for t in tensors)
    expected = header_end + 4 * n_floats + 4
    if len(raw) != expected:
        raise ModelFormatError(f"{path}: file is {len(raw)} bytes, expected {expected}")
    payload = raw[header_end : header_end + 4 * n_floats]
    crc, = struct.unpack_from("<I", raw, header_end + 4 * n_floats)
    if crc != zlib.crc32(payload):
        raise ModelFormatError(f"{path}: payload CRC mismatch")
    offset = 0
    for t in tensors:
        nbytes = 4 * t.size
        t.data = np.frombuffer(payload[offset : offset + nbytes], dtype="<f4").reshape(t.shape).copy()
        offset += nbytes
    return model
