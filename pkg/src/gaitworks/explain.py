"""Prediction explanations: saliency maps, grad-CAM, per-layer feature maps.

The "class score" is the pre-softmax logit of the target class. All methods
run the network in inference mode (dropout off, batch norm on running
stats), so they are deterministic and linear where expected.
"""

from __future__ import annotations

from dataclasses import dataclass

import cv2
import numpy as np

from .gait import ENERGY_SIZE, EnergyImage
from .model import GaitModel


@dataclass
class HeatMap:
    values: np.ndarray  # (H, W) in [0, 1]
    target_class: int
    method: str  # "saliency" | "gradcam"
    source_layer: int | None = None  # conv block index, gradcam only


def _image_array(model: GaitModel, image) -> np.ndarray:
    if isinstance(image, EnergyImage):
        image = image.pixels
    image = np.asarray(image, dtype=np.float32)
    hw = model.config.input_hw
    if image.shape not in ((hw, hw), (hw, hw, 1)):
        raise ValueError(f"image shape {image.shape} does not match model input {hw}x{hw}")
    return image.reshape(hw, hw)


def _logit_gradient_pass(model: GaitModel, image: np.ndarray, target_class: int | None,
                         capture: set[int] | None = None):
    """Forward in inference mode, then backpropagate d(logit_target)."""
    recorded = model.forward_recorded(image)
    probs = recorded[-1][0]
    target = int(np.argmax(probs)) if target_class is None else int(target_class)
    if not 0 <= target < model.config.n_classes:
        raise ValueError(f"target class {target} outside [0, {model.config.n_classes})")
    dlogits = np.zeros_like(recorded[-2])
    dlogits[0, target] = 1.0
    model.zero_grads()
    input_grad, captured = model.backward_from_logits(dlogits, capture=capture)
    return recorded, input_grad, captured, target


def _normalize_map(values: np.ndarray) -> np.ndarray:
    peak = float(values.max())
    if peak <= 0.0:
        return np.zeros_like(values, dtype=np.float32)
    return (values / peak).astype(np.float32)


def saliency(model: GaitModel, image, target_class: int | None = None) -> HeatMap:
    """|d(class logit) / d(input pixel)|, max-normalized."""
    arr = _image_array(model, image)
    _, input_grad, _, target = _logit_gradient_pass(model, arr, target_class)
    values = np.abs(input_grad[0, :, :, 0])
    return HeatMap(_normalize_map(values), target, "saliency")


def input_gradient(model: GaitModel, image, target_class: int | None = None) -> np.ndarray:
    """Raw (un-normalized) class-logit gradient w.r.t. input pixels."""
    arr = _image_array(model, image)
    _, input_grad, _, _ = _logit_gradient_pass(model, arr, target_class)
    return input_grad[0, :, :, 0]


def grad_cam(model: GaitModel, image, conv_layer: int | None = None,
             target_class: int | None = None) -> HeatMap:
    """Gradient-weighted class activation map from a conv block's
    post-activation feature maps, bilinearly upsampled to the input size."""
    arr = _image_array(model, image)
    n_blocks = len(model.conv_activations)
    block = n_blocks - 1 if conv_layer is None else int(conv_layer)
    if not 0 <= block < n_blocks:
        raise ValueError(f"conv layer index {block} outside [0, {n_blocks})")
    layer_idx = model.conv_activations[block]
    recorded, _, captured, target = _logit_gradient_pass(
        model, arr, target_class, capture={layer_idx})
    activations = recorded[layer_idx][0]          # (h, w, channels)
    grads = captured[layer_idx][0]
    weights = grads.mean(axis=(0, 1))             # alpha_k: spatial mean
    cam = np.maximum((activations * weights).sum(axis=-1), 0.0)
    hw = model.config.input_hw
    cam = cv2.resize(cam.astype(np.float32), (hw, hw), interpolation=cv2.INTER_LINEAR)
    return HeatMap(_normalize_map(cam), target, "gradcam", source_layer=block)


def feature_maps(model: GaitModel, image, layer: int) -> list[np.ndarray]:
    """Per-channel post-activation maps of one conv block, each min-max
    normalized independently to [0, 1]."""
    arr = _image_array(model, image)
    n_blocks = len(model.conv_activations)
    if not 0 <= layer < n_blocks:
        raise ValueError(f"invalid conv layer {layer}; valid layers: 0..{n_blocks - 1}")
    recorded = model.forward_recorded(arr)
    maps = recorded[model.conv_activations[layer]][0]  # (h, w, channels)
    out = []
    for ch in range(maps.shape[-1]):
        m = maps[:, :, ch].astype(np.float32)
        lo, hi = float(m.min()), float(m.max())
        out.append((m - lo) / (hi - lo) if hi > lo else np.zeros_like(m))
    return out


def conv_layer_summary(model: GaitModel) -> list[dict]:
    """Index, channel count, and spatial dims per conv block."""
    rows = []
    for block, layer_idx in enumerate(model.conv_activations):
        shape = model.layer_shapes[layer_idx + 1]
        rows.append({"index": block, "kind": "conv2d", "channels": int(shape[2]),
                     "spatial": [int(shape[0]), int(shape[1])]})
    return rows


# --- rendering ---------------------------------------------------------------

def heatmap_to_u8(heat: HeatMap) -> np.ndarray:
    return np.round(heat.values * 255.0).astype(np.uint8)


def render_overlay(base_image, heat: HeatMap, alpha: float = 0.55) -> np.ndarray:
    """Blend the heatmap over the grayscale energy image as an RGB picture.

    Color ramp: perceptually uniform dark-to-warm (OpenCV inferno).
    """
    if isinstance(base_image, EnergyImage):
        base_image = base_image.pixels
    base = np.asarray(base_image, dtype=np.float32)
    heat_u8 = heatmap_to_u8(heat)
    if heat_u8.shape != base.shape:
        heat_u8 = cv2.resize(heat_u8, (base.shape[1], base.shape[0]),
                             interpolation=cv2.INTER_LINEAR)
    colored = cv2.applyColorMap(heat_u8, cv2.COLORMAP_INFERNO)  # BGR
    colored = cv2.cvtColor(colored, cv2.COLOR_BGR2RGB).astype(np.float32)
    gray = (base * 255.0)[:, :, None].repeat(3, axis=2)
    weight = (heat_u8.astype(np.float32) / 255.0 * alpha)[:, :, None]
    blended = gray * (1.0 - weight) + colored * weight
    return np.clip(np.round(blended), 0, 255).astype(np.uint8)
