"""Thermal image container plus dataset ingestion and writing.

Dataset layout on disk:

    root/
      images/*.png       8-bit grayscale or RGB
      masks/*.png        optional, 0/255 ground-truth hotspot masks
      manifest.csv       columns: path,label (label may be empty)
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import cv2
import numpy as np

from .errors import IngestionError, ValidationError

MANIFEST_NAME = "manifest.csv"


@dataclass
class ThermalImage:
    """Dense H×W×3 raster in [0,1] with optional label and hotspot mask.

    label: 0 = normal, 1 = anomalous, None = unlabeled.
    mask:  H×W boolean ground truth; must be all-False when label == 0.
    """

    pixels: np.ndarray
    label: int | None = None
    mask: np.ndarray | None = None
    id: str = field(default="")

    def __post_init__(self):
        self.pixels = np.asarray(self.pixels, dtype=np.float32)
        if self.pixels.ndim != 3 or self.pixels.shape[2] != 3:
            raise ValidationError(f"pixels must be H×W×3, got {self.pixels.shape}")
        lo, hi = float(self.pixels.min()), float(self.pixels.max())
        if lo < 0.0 or hi > 1.0:
            raise ValidationError(f"pixel values outside [0,1]: min={lo}, max={hi}")
        if self.label is not None and self.label not in (0, 1):
            raise ValidationError(f"label must be 0, 1 or None, got {self.label!r}")
        if self.mask is not None:
            self.mask = np.asarray(self.mask).astype(bool)
            if self.mask.shape != self.pixels.shape[:2]:
                raise ValidationError(
                    f"mask shape {self.mask.shape} != image shape {self.pixels.shape[:2]}"
                )
            if self.label == 0 and self.mask.any():
                raise ValidationError("label=0 image carries a non-empty mask")

    @property
    def shape(self) -> tuple[int, int]:
        return self.pixels.shape[:2]


def _read_raster(path: Path) -> np.ndarray:
    raw = cv2.imread(str(path), cv2.IMREAD_UNCHANGED)
    if raw is None:
        raise IngestionError(f"cannot read image file: {path}")
    if raw.ndim == 2:
        raw = np.repeat(raw[:, :, None], 3, axis=2)
    elif raw.shape[2] == 4:
        raw = raw[:, :, :3]
    if raw.ndim == 3 and raw.shape[2] == 3:
        raw = cv2.cvtColor(raw, cv2.COLOR_BGR2RGB)
    if raw.dtype == np.uint8:
        return raw.astype(np.float32) / 255.0
    if raw.dtype == np.uint16:
        return raw.astype(np.float32) / 65535.0
    return np.clip(raw.astype(np.float32), 0.0, 1.0)


def _parse_label(text: str, row_no: int) -> int | None:
    text = text.strip()
    if text == "":
        return None
    if text in ("0", "1"):
        return int(text)
    raise ValidationError(f"manifest row {row_no}: label must be 0, 1 or empty, got {text!r}")


def read_manifest(manifest: Path) -> list[tuple[str, int | None]]:
    """Parse a path,label CSV. Returns rows in file order."""
    rows = []
    with open(manifest, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise ValidationError(f"empty manifest: {manifest}")
        if [c.strip().lower() for c in header[:2]] != ["path", "label"]:
            raise ValidationError(f"manifest must start with 'path,label' header: {manifest}")
        for i, row in enumerate(reader, start=2):
            if not row or not row[0].strip():
                continue
            label = _parse_label(row[1] if len(row) > 1 else "", i)
            rows.append((row[0].strip(), label))
    return rows


def load_dataset(root: Path | str, manifest: Path | str | None = None) -> list[ThermalImage]:
    """Load every image named by the manifest, in manifest order.

    A mask is attached when masks/<stem>.png exists. Missing image files
    raise IngestionError naming the offending row.
    """
    root = Path(root)
    manifest = Path(manifest) if manifest is not None else root / MANIFEST_NAME
    if not manifest.exists():
        raise IngestionError(f"manifest not found: {manifest}")

    images = []
    for i, (rel, label) in enumerate(read_manifest(manifest), start=2):
        img_path = root / rel
        if not img_path.exists():
            raise IngestionError(f"manifest row {i}: missing image file {img_path}")
        pixels = _read_raster(img_path)
        mask = None
        mask_path = root / "masks" / (img_path.stem + ".png")
        if mask_path.exists():
            m = cv2.imread(str(mask_path), cv2.IMREAD_GRAYSCALE)
            if m is None:
                raise IngestionError(f"manifest row {i}: unreadable mask {mask_path}")
            mask = m > 127
        images.append(ThermalImage(pixels=pixels, label=label, mask=mask, id=img_path.stem))
    return images


def write_dataset(images: list[ThermalImage], root: Path | str) -> Path:
    """Write images (and any masks) in the standard layout; returns manifest path."""
    root = Path(root)
    (root / "images").mkdir(parents=True, exist_ok=True)
    rows = []
    for img in images:
        name = f"{img.id}.png"
        raster = np.round(img.pixels * 255.0).astype(np.uint8)
        cv2.imwrite(str(root / "images" / name), cv2.cvtColor(raster, cv2.COLOR_RGB2BGR))
        if img.mask is not None and img.mask.any():
            (root / "masks").mkdir(exist_ok=True)
            cv2.imwrite(str(root / "masks" / name), img.mask.astype(np.uint8) * 255)
        rows.append((f"images/{name}", img.label))

    manifest = root / MANIFEST_NAME
    with open(manifest, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["path", "label"])
        for rel, label in rows:
            writer.writerow([rel, "" if label is None else label])
    return manifest
