"""Seeded synthetic thermal dataset: shaped plates with optional hotspots.

Each image holds one cool plate (rectangle / triangle / oval / rhombus) on a
dark background. Anomalous images add 1-3 bright Gaussian blobs whose centres
lie safely inside the plate. The ground-truth mask marks pixels where a blob
contributes at least half of its peak, so it can be re-rendered exactly from
the recorded blob geometry.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import ndimage

from .data import ThermalImage, write_dataset
from .errors import ValidationError

SHAPES = ("oval", "rectangle", "rhombus", "triangle")

# Half-peak radius of a Gaussian blob: exp(-r^2 / 2 sigma^2) = 1/2.
HALF_PEAK_FACTOR = math.sqrt(2.0 * math.log(2.0))

GEN_CONFIG_NAME = "gen_config.json"


@dataclass(frozen=True)
class SyntheticConfig:
    n_images: int = 100
    shapes: tuple[str, ...] = SHAPES
    hotspots_per_anomalous: tuple[int, ...] = (1, 2, 3)
    anomalous_fraction: float = 0.5
    image_size: tuple[int, int] = (128, 128)
    seed: int = 0

    def __post_init__(self):
        if self.n_images < 1:
            raise ValidationError("n_images must be >= 1")
        object.__setattr__(self, "shapes", tuple(sorted(set(self.shapes))))
        if not self.shapes or any(s not in SHAPES for s in self.shapes):
            raise ValidationError(f"shapes must be a non-empty subset of {SHAPES}")
        counts = tuple(sorted(set(int(k) for k in self.hotspots_per_anomalous)))
        object.__setattr__(self, "hotspots_per_anomalous", counts)
        if not counts or any(k not in (1, 2, 3) for k in counts):
            raise ValidationError("hotspots_per_anomalous must be a non-empty subset of {1,2,3}")
        if not 0.0 <= self.anomalous_fraction <= 1.0:
            raise ValidationError("anomalous_fraction must be in [0, 1]")
        h, w = self.image_size
        if h < 32 or w < 32:
            raise ValidationError("image_size must be at least 32×32")

    def to_dict(self) -> dict:
        return {
            "n_images": self.n_images,
            "shapes": list(self.shapes),
            "hotspots_per_anomalous": list(self.hotspots_per_anomalous),
            "anomalous_fraction": self.anomalous_fraction,
            "image_size": list(self.image_size),
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SyntheticConfig":
        return cls(
            n_images=d["n_images"],
            shapes=tuple(d["shapes"]),
            hotspots_per_anomalous=tuple(d["hotspots_per_anomalous"]),
            anomalous_fraction=d["anomalous_fraction"],
            image_size=tuple(d["image_size"]),
            seed=d["seed"],
        )


def render_plate_mask(shape: str, size: tuple[int, int], geom: dict) -> np.ndarray:
    """Rasterize plate membership from its geometry record."""
    h, w = size
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    cy, cx, ry, rx = geom["cy"], geom["cx"], geom["ry"], geom["rx"]

    if shape == "rectangle":
        return (np.abs(yy - cy) <= ry) & (np.abs(xx - cx) <= rx)
    if shape == "oval":
        return ((yy - cy) / ry) ** 2 + ((xx - cx) / rx) ** 2 <= 1.0
    if shape == "rhombus":
        return np.abs(yy - cy) / ry + np.abs(xx - cx) / rx <= 1.0
    # isoceles triangle, apex up
    ay, ax = cy - ry, cx
    by, bx = cy + ry, cx - rx
    ey, ex = cy + ry, cx + rx

    def half_plane(py, px, qy, qx):
        return (qx - px) * (yy - py) - (qy - py) * (xx - px)

    d1 = half_plane(ay, ax, by, bx)
    d2 = half_plane(by, bx, ey, ex)
    d3 = half_plane(ey, ex, ay, ax)
    inside_pos = (d1 >= 0) & (d2 >= 0) & (d3 >= 0)
    inside_neg = (d1 <= 0) & (d2 <= 0) & (d3 <= 0)
    return inside_pos | inside_neg


def _plate_mask(
    shape: str, size: tuple[int, int], rng: np.random.Generator
) -> tuple[np.ndarray, dict]:
    """Draw plate geometry and rasterize its membership mask."""
    h, w = size
    ry = rng.uniform(0.22, 0.36) * h
    rx = rng.uniform(0.22, 0.36) * w
    cy = rng.uniform(ry + 2, h - 1 - ry - 2)
    cx = rng.uniform(rx + 2, w - 1 - rx - 2)
    geom = {"cy": float(cy), "cx": float(cx), "ry": float(ry), "rx": float(rx)}
    return render_plate_mask(shape, size, geom), geom


def render_blob_mask(
    size: tuple[int, int], blobs: list[dict], *, analytic: bool = False
) -> np.ndarray:
    """Union of per-blob half-peak regions.

    analytic=True renders from the closed-form half-peak radius instead of
    evaluating the Gaussian field; both routes must agree pixelwise.
    """
    h, w = size
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    mask = np.zeros((h, w), dtype=bool)
    for b in blobs:
        d2 = (yy - b["cy"]) ** 2 + (xx - b["cx"]) ** 2
        if analytic:
            r = HALF_PEAK_FACTOR * b["sigma"]
            mask |= d2 <= r * r
        else:
            mask |= np.exp(-d2 / (2.0 * b["sigma"] ** 2)) >= 0.5
    return mask


def generate_with_geometry(cfg: SyntheticConfig) -> tuple[list[ThermalImage], list[dict]]:
    """Generate the dataset plus per-image geometry records."""
    rng = np.random.default_rng(cfg.seed)
    h, w = cfg.image_size
    n = cfg.n_images
    n_anom = int(round(n * cfg.anomalous_fraction))
    labels = np.zeros(n, dtype=int)
    labels[rng.permutation(n)[:n_anom]] = 1

    min_dim = min(h, w)
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)

    images: list[ThermalImage] = []
    records: list[dict] = []
    for i in range(n):
        shape = cfg.shapes[rng.integers(len(cfg.shapes))]
        background = rng.uniform(0.05, 0.10)
        plate_level = rng.uniform(0.30, 0.62)
        plate, plate_geom = _plate_mask(shape, cfg.image_size, rng)
        noise = rng.normal(0.0, 0.015, size=(h, w))

        field = np.full((h, w), background)
        field[plate] = plate_level

        blobs: list[dict] = []
        if labels[i] == 1:
            k = cfg.hotspots_per_anomalous[rng.integers(len(cfg.hotspots_per_anomalous))]
            dist_inside = ndimage.distance_transform_edt(plate)
            # cap the blob radius so its half-peak disk always fits the plate
            sigma_cap = 0.9 * (dist_inside.max() - 1.5) / HALF_PEAK_FACTOR
            for _ in range(k):
                sigma = min(rng.uniform(0.07, 0.12) * min_dim, sigma_cap)
                amp = rng.uniform(0.14, 0.32)
                r_half = HALF_PEAK_FACTOR * sigma
                valid = np.flatnonzero(dist_inside >= r_half + 1.5)
                idx = valid[rng.integers(len(valid))]
                cy, cx = float(idx // w), float(idx % w)
                blobs.append({"cy": cy, "cx": cx, "sigma": float(sigma), "amp": float(amp)})
                field = field + amp * np.exp(
                    -((yy - cy) ** 2 + (xx - cx) ** 2) / (2.0 * sigma**2)
                )

        pixels = np.clip(field + noise, 0.0, 1.0).astype(np.float32)
        pixels = np.repeat(pixels[:, :, None], 3, axis=2)
        mask = render_blob_mask(cfg.image_size, blobs) if blobs else None

        img_id = f"synth_{i:05d}"
        images.append(ThermalImage(pixels=pixels, label=int(labels[i]), mask=mask, id=img_id))
        records.append(
            {
                "id": img_id,
                "label": int(labels[i]),
                "shape": shape,
                "plate": plate_geom,
                "blobs": blobs,
            }
        )
    return images, records


def generate_synthetic_dataset(cfg: SyntheticConfig) -> list[ThermalImage]:
    return generate_with_geometry(cfg)[0]


def write_synthetic_dataset(cfg: SyntheticConfig, root: Path | str) -> Path:
    """Write the standard dataset layout plus gen_config.json; returns root."""
    root = Path(root)
    images, records = generate_with_geometry(cfg)
    write_dataset(images, root)
    payload = {"config": cfg.to_dict(), "seed": cfg.seed, "images": records}
    with open(root / GEN_CONFIG_NAME, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
    return root
