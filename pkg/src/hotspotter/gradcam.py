"""Gradient-weighted class activation maps and hotspot mask extraction.

The heatmap is built from the classifier's final convolutional feature map:
channel weights are the spatially averaged gradients of the class score,
the weighted volume is averaged across channels, rectified, upsampled to
the source image resolution and normalized by its maximum.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import cv2
import numpy as np
import torch
from scipy import ndimage

from .augment import resize_view
from .classify import Classifier
from .data import ThermalImage
from .errors import ValidationError
from .networks import views_to_tensor

EIGHT_CONNECTED = np.ones((3, 3), dtype=int)


@dataclass
class Heatmap:
    values: np.ndarray
    source_image_id: str = ""
    class_index: int = 1

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float32)
        if self.values.ndim != 2:
            raise ValidationError(f"heatmap must be H×W, got shape {self.values.shape}")
        lo, hi = float(self.values.min()), float(self.values.max())
        if lo < 0.0 or hi > 1.0:
            raise ValidationError(f"heatmap values outside [0,1]: min={lo}, max={hi}")
        if hi != 0.0 and not np.isclose(hi, 1.0, atol=1e-6):
            raise ValidationError("non-zero heatmap must peak at 1")


@dataclass
class Component:
    bbox: tuple[int, int, int, int]  # (row0, col0, row1, col1), exclusive ends
    centroid: tuple[float, float]  # (row, col)
    area: int


@dataclass
class HotspotRegion:
    mask: np.ndarray
    components: list[Component] = field(default_factory=list)


def gradcam_heatmap(clf: Classifier, img: ThermalImage, class_index: int = 1) -> Heatmap:
    """Attention heatmap of the class score over the source image grid."""
    if class_index not in (0, 1):
        raise ValidationError(f"class_index must be 0 or 1, got {class_index}")
    clf.eval()
    x = views_to_tensor(resize_view(img.pixels)[None])
    fmap, logits = clf.features_and_logits(x)
    score = logits[0, class_index]
    (grads,) = torch.autograd.grad(score, fmap)

    weights = grads.mean(dim=(2, 3), keepdim=True)
    cam = (weights * fmap).mean(dim=1)[0]
    cam = torch.relu(cam).detach().numpy()

    h, w = img.shape
    cam = cv2.resize(cam, (w, h), interpolation=cv2.INTER_LINEAR)
    cam = np.maximum(cam, 0.0)
    peak = float(cam.max())
    if peak > 0.0:
        cam = cam / peak
    return Heatmap(values=cam.astype(np.float32), source_image_id=img.id, class_index=class_index)


def isolate_hotspots(h: Heatmap, threshold: float = 0.5, min_area: int = 20) -> HotspotRegion:
    """Threshold the heatmap and keep 8-connected components >= min_area px,
    sorted by area descending."""
    if not 0.0 < threshold < 1.0:
        raise ValidationError("threshold must lie in (0, 1)")
    raw = h.values >= threshold
    labeled, n = ndimage.label(raw, structure=EIGHT_CONNECTED)
    mask = np.zeros_like(raw)
    components: list[Component] = []
    for lbl in range(1, n + 1):
        member = labeled == lbl
        area = int(member.sum())
        if area < min_area:
            continue
        mask |= member
        rows, cols = np.nonzero(member)
        components.append(
            Component(
                bbox=(int(rows.min()), int(cols.min()), int(rows.max()) + 1, int(cols.max()) + 1),
                centroid=(float(rows.mean()), float(cols.mean())),
                area=area,
            )
        )
    components.sort(key=lambda c: -c.area)
    return HotspotRegion(mask=mask, components=components)


def _colorize(values: np.ndarray) -> np.ndarray:
    """Black -> red -> yellow -> white ramp, uint8 RGB."""
    v = values.astype(np.float32)
    r = np.clip(3.0 * v, 0, 1)
    g = np.clip(3.0 * v - 1.0, 0, 1)
    b = np.clip(3.0 * v - 2.0, 0, 1)
    return np.round(np.stack([r, g, b], axis=2) * 255.0).astype(np.uint8)


def compose_overlay(img: ThermalImage, h: Heatmap, region: HotspotRegion) -> np.ndarray:
    """Side-by-side input / heatmap / mask-overlay composite (uint8 RGB)."""
    if h.values.shape != img.shape or region.mask.shape != img.shape:
        raise ValidationError("image, heatmap and mask dimensions must agree")
    base = np.round(img.pixels * 255.0).astype(np.uint8)
    heat = _colorize(h.values)
    marked = base.copy()
    if region.mask.any():
        red = np.array([255, 0, 0], dtype=np.float32)
        marked[region.mask] = np.round(
            0.4 * marked[region.mask].astype(np.float32) + 0.6 * red
        ).astype(np.uint8)
    return np.concatenate([base, heat, marked], axis=1)


def render_overlay(
    img: ThermalImage, h: Heatmap, region: HotspotRegion, path: Path | str
) -> Path:
    """Write the composite as a PNG; re-reading it reproduces the array."""
    path = Path(path)
    composite = compose_overlay(img, h, region)
    if not cv2.imwrite(str(path), cv2.cvtColor(composite, cv2.COLOR_RGB2BGR)):
        raise OSError(f"failed to write overlay image: {path}")
    return path


def write_regions_json(region: HotspotRegion, h: Heatmap, path: Path | str) -> Path:
    path = Path(path)
    payload = {
        "source_image_id": h.source_image_id,
        "class_index": h.class_index,
        "components": [
            {"bbox": list(c.bbox), "centroid": list(c.centroid), "area": c.area}
            for c in region.components
        ],
    }
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
    return path
