"""Declarative run configuration: JSON file plus flag overrides, validated
against a fixed schema before any work starts."""

from __future__ import annotations

import json
from pathlib import Path

from .errors import ValidationError

# key -> (type, default). A tuple type means "list of element type".
SCHEMA: dict[str, tuple] = {
    "seed": (int, 0),
    "out_root": (str, "out"),
    # synthetic generation
    "n_images": (int, 200),
    "image_size": ((int,), [128, 128]),
    "anomalous_fraction": (float, 0.5),
    "shapes": ((str,), ["oval", "rectangle", "rhombus", "triangle"]),
    "hotspots_per_anomalous": ((int,), [1, 2, 3]),
    # augmentation policy
    "translate_max_frac": (float, 0.10),
    "flip_prob": (float, 0.5),
    "blur_sigma_lo": (float, 0.0),
    "blur_sigma_hi": (float, 1.5),
    "jitter_strength": (float, 0.2),
    "drop_color_prob": (float, 0.2),
    "rotate_max_deg": (float, 15.0),
    # contrastive training
    "backbone": (str, "tiny"),
    "projection_dim": (int, 2048),
    "predictor_hidden": (int, 512),
    "batch_size": (int, 81),
    "lr": (float, 0.0008),
    "momentum": (float, 0.6),
    "epochs": (int, 200),
    "variant": (str, "compound"),
    "beta": (float, 2.0 / 3.0),
    # fine-tuning
    "finetune_epochs": (int, 200),
    "finetune_lr": (float, 1e-3),
    "finetune_batch_size": (int, 32),
    "early_stop_patience": (int, 10),
    "val_fraction": (float, 0.2),
    # ensemble / isolation
    "ensemble_weight": (float, 0.5),
    "cam_threshold": (float, 0.5),
    "min_area": (int, 20),
    "cam_class_index": (int, 1),
    # baselines
    "kmeans_k": (int, 2),
    "n_thresholds": (int, 2),
    "opening_radius": (int, 1),
}


def _check_type(key: str, value, type_spec):
    if isinstance(type_spec, tuple):
        elem = type_spec[0]
        if not isinstance(value, list) or not all(_scalar_ok(v, elem) for v in value):
            raise ValidationError(f"config key {key!r} must be a list of {elem.__name__}")
        return [elem(v) for v in value]
    if not _scalar_ok(value, type_spec):
        raise ValidationError(
            f"config key {key!r} must be {type_spec.__name__}, got {type(value).__name__}"
        )
    return type_spec(value)


def _scalar_ok(value, typ) -> bool:
    if typ is float:
        return isinstance(value, (int, float)) and not isinstance(value, bool)
    if typ is int:
        return isinstance(value, int) and not isinstance(value, bool)
    return isinstance(value, typ)


def validate_config(values: dict) -> dict:
    """Fill defaults, coerce types, and reject unknown keys."""
    unknown = sorted(set(values) - set(SCHEMA))
    if unknown:
        raise ValidationError(f"unknown config keys: {', '.join(unknown)}")
    merged = {}
    for key, (type_spec, default) in SCHEMA.items():
        if key in values and values[key] is not None:
            merged[key] = _check_type(key, values[key], type_spec)
        else:
            merged[key] = default
    return merged


def load_config(path: Path | str | None = None, overrides: dict | None = None) -> dict:
    """Merge a JSON config file with explicit overrides (overrides win)."""
    values: dict = {}
    if path is not None:
        path = Path(path)
        if not path.exists():
            raise ValidationError(f"config file not found: {path}")
        try:
            with open(path) as fh:
                loaded = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ValidationError(f"config file is not valid JSON: {path} ({exc})") from exc
        if not isinstance(loaded, dict):
            raise ValidationError(f"config file must hold a JSON object: {path}")
        values.update(loaded)
    for key, value in (overrides or {}).items():
        if value is not None:
            values[key] = value
    return validate_config(values)
