"""Command-line entry point wiring the full workflow.

Subcommands: gen-data, train-ssl, finetune, classify, isolate, baseline,
evaluate, ablate. A JSON config file provides defaults; explicit flags
override it. All artifacts are staged in a temp directory and moved under
out/<run-name>/ only on success.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import random
import shutil
import sys
from datetime import datetime, timezone
from pathlib import Path

import cv2
import numpy as np
import torch

from . import baselines as bl
from .augment import AugmentPolicy
from .classify import (
    EnsembleModel,
    classifier_from_spec,
    classifier_from_ssl_checkpoint,
    finetune,
    grid_search_weight,
    load_classifier,
    predictions_for,
    save_classifier,
    write_predictions,
)
from .config import SCHEMA, load_config
from .data import load_dataset
from .errors import HotspotterError, ValidationError
from .gradcam import gradcam_heatmap, isolate_hotspots, render_overlay, write_regions_json
from .losses import LossConfig
from .metrics import (
    ablation_report,
    dice_summary,
    evaluate_predictions,
    format_ablation_markdown,
    labels_from_manifest,
    read_predictions,
    write_metrics_json,
    write_roc_csv,
)
from .networks import EncoderSpec, PredictorSpec
from .pretrain import TrainConfig, train_and_checkpoint
from .synthetic import SyntheticConfig, write_synthetic_dataset

OUT_ROOT_ENV = "HOTSPOTTER_OUT_ROOT"

SUBCOMMANDS = (
    "gen-data", "train-ssl", "finetune", "classify",
    "isolate", "baseline", "evaluate", "ablate",
)


def seed_everything(seed: int) -> None:
    random.seed(seed)
    np.random.seed(seed % 2**32)
    torch.manual_seed(seed)


def _policy_from(cfg: dict) -> AugmentPolicy:
    return AugmentPolicy(
        translate_max_frac=cfg["translate_max_frac"],
        flip_prob=cfg["flip_prob"],
        blur_sigma_range=(cfg["blur_sigma_lo"], cfg["blur_sigma_hi"]),
        jitter_strength=cfg["jitter_strength"],
        drop_color_prob=cfg["drop_color_prob"],
        rotate_max_deg=cfg["rotate_max_deg"],
        seed=cfg["seed"],
    )


def _write_mask_png(mask: np.ndarray, path: Path) -> None:
    cv2.imwrite(str(path), mask.astype(np.uint8) * 255)


def _write_gray_png(values: np.ndarray, path: Path) -> None:
    cv2.imwrite(str(path), np.round(values * 255.0).astype(np.uint8))


# ---------------------------------------------------------------------------
# subcommand handlers (each writes into the staged run directory)


def _cmd_gen_data(args, cfg, run_dir: Path) -> None:
    syn = SyntheticConfig(
        n_images=cfg["n_images"],
        shapes=tuple(cfg["shapes"]),
        hotspots_per_anomalous=tuple(cfg["hotspots_per_anomalous"]),
        anomalous_fraction=cfg["anomalous_fraction"],
        image_size=tuple(cfg["image_size"]),
        seed=cfg["seed"],
    )
    write_synthetic_dataset(syn, run_dir)


def _cmd_train_ssl(args, cfg, run_dir: Path) -> None:
    data = load_dataset(args.data)
    encoder_spec = EncoderSpec(backbone=cfg["backbone"], projection_dim=cfg["projection_dim"])
    predictor_spec = PredictorSpec(
        input_dim=cfg["projection_dim"], hidden_dim=cfg["predictor_hidden"]
    )
    tcfg = TrainConfig(
        batch_size=cfg["batch_size"], lr=cfg["lr"], momentum=cfg["momentum"],
        epochs=cfg["epochs"], seed=cfg["seed"],
    )
    lcfg = LossConfig(variant=cfg["variant"], beta=cfg["beta"])
    train_and_checkpoint(
        encoder_spec, predictor_spec, data, tcfg, lcfg, run_dir,
        policy=_policy_from(cfg), verbose=args.verbose,
    )


def _cmd_finetune(args, cfg, run_dir: Path) -> None:
    if args.checkpoint is None and not args.random_init:
        raise ValidationError("finetune needs --checkpoint or --random-init")
    if args.random_init:
        spec = EncoderSpec(backbone=cfg["backbone"], projection_dim=cfg["projection_dim"])
        clf = classifier_from_spec(spec, seed=cfg["seed"])
    else:
        clf = classifier_from_ssl_checkpoint(args.checkpoint, head_seed=cfg["seed"])
    data = load_dataset(args.data)
    result = finetune(
        clf, data,
        epochs=cfg["finetune_epochs"],
        lr=cfg["finetune_lr"],
        batch_size=cfg["finetune_batch_size"],
        early_stop_patience=cfg["early_stop_patience"],
        val_fraction=cfg["val_fraction"],
        seed=cfg["seed"],
        verbose=args.verbose,
    )
    save_classifier(run_dir / "classifier.pt", result.classifier, clf._encoder_spec)
    with open(run_dir / "curve.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "train_loss", "val_loss", "val_accuracy"])
        for row in result.history:
            writer.writerow(
                [row.epoch, f"{row.train_loss:.6f}", f"{row.val_loss:.6f}", f"{row.val_accuracy:.6f}"]
            )


def _cmd_classify(args, cfg, run_dir: Path) -> None:
    if not args.model or len(args.model) > 2:
        raise ValidationError("classify takes one or two --model archives")
    models = [load_classifier(p) for p in args.model]
    data = load_dataset(args.data)
    if len(models) == 2:
        if args.grid_search:
            if args.val_data is None:
                raise ValidationError("--grid-search needs --val-data")
            weight = grid_search_weight(models[0], models[1], load_dataset(args.val_data))
        else:
            weight = cfg["ensemble_weight"]
        subject = EnsembleModel(models[0], models[1], weight)
        with open(run_dir / "ensemble.json", "w") as fh:
            json.dump({"weight": weight, "grid_search": bool(args.grid_search)}, fh, indent=2)
    else:
        subject = models[0]
    write_predictions(run_dir / "predictions.csv", predictions_for(subject, data))


def _cmd_isolate(args, cfg, run_dir: Path) -> None:
    clf = load_classifier(args.model)
    data = load_dataset(args.data)
    for img in data:
        heat = gradcam_heatmap(clf, img, class_index=cfg["cam_class_index"])
        region = isolate_hotspots(heat, threshold=cfg["cam_threshold"], min_area=cfg["min_area"])
        _write_gray_png(heat.values, run_dir / f"heatmap_{img.id}.png")
        _write_mask_png(region.mask, run_dir / f"mask_{img.id}.png")
        write_regions_json(region, heat, run_dir / f"regions_{img.id}.json")
        if args.overlays:
            render_overlay(img, heat, region, run_dir / f"overlay_{img.id}.png")


def _cmd_baseline(args, cfg, run_dir: Path) -> None:
    data = load_dataset(args.data)
    dice_rows = []
    for img in data:
        if args.method == "kmeans_lab":
            seg = bl.kmeans_lab_segment(img.pixels, k=cfg["kmeans_k"], seed=cfg["seed"])
        elif args.method == "kmeans_pv":
            h, w = img.shape
            bbox = tuple(args.bbox) if args.bbox else (0, 0, h, w)
            seg = bl.kmeans_pv_segment(img.pixels, bbox, seed=cfg["seed"])
        elif args.method == "hsv":
            if args.hsv_lower is None or args.hsv_upper is None:
                raise ValidationError("hsv method needs --hsv-lower and --hsv-upper")
            seg = bl.hsv_threshold_segment(img.pixels, tuple(args.hsv_lower), tuple(args.hsv_upper))
        elif args.method == "otsu":
            seg = bl.multilevel_otsu_segment(
                img.pixels, n_thresholds=cfg["n_thresholds"], opening_radius=cfg["opening_radius"]
            )
        else:
            raise ValidationError(f"unknown baseline method {args.method!r}")
        _write_mask_png(seg.mask, run_dir / f"mask_{img.id}.png")
        if img.mask is not None:
            dice_rows.append((img.id, bl.dice_compare(seg, img.mask)))

    if dice_rows:
        with open(run_dir / "dice_report.csv", "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["id", "dice"])
            for img_id, value in dice_rows:
                writer.writerow([img_id, f"{value:.6f}"])
        summary = dice_summary([v for _, v in dice_rows])
        with open(run_dir / "dice_summary.json", "w") as fh:
            json.dump(
                {"mean": summary.mean, "std": summary.std, "formatted": summary.formatted()},
                fh, indent=2, sort_keys=True,
            )


def _cmd_evaluate(args, cfg, run_dir: Path) -> None:
    preds = read_predictions(args.preds)
    labels = labels_from_manifest(args.labels)
    report, curve = evaluate_predictions(preds, labels)
    write_metrics_json(report, run_dir / "metrics.json")
    if curve:
        write_roc_csv(curve, run_dir / "roc.csv")


def _cmd_ablate(args, cfg, run_dir: Path) -> None:
    runs = []
    for item in args.run or []:
        if "=" not in item:
            raise ValidationError(f"--run entries look like name=predictions.csv, got {item!r}")
        name, _, path = item.partition("=")
        runs.append((name, Path(path)))
    if not runs:
        raise ValidationError("ablate needs at least one --run name=predictions.csv")
    labels = labels_from_manifest(args.labels)
    rows = ablation_report(runs, labels)
    (run_dir / "ablation.md").write_text(format_ablation_markdown(rows))
    with open(run_dir / "ablation.json", "w") as fh:
        json.dump({name: rep.to_dict() for name, rep in rows}, fh, indent=2, sort_keys=True)


HANDLERS = {
    "gen-data": _cmd_gen_data,
    "train-ssl": _cmd_train_ssl,
    "finetune": _cmd_finetune,
    "classify": _cmd_classify,
    "isolate": _cmd_isolate,
    "baseline": _cmd_baseline,
    "evaluate": _cmd_evaluate,
    "ablate": _cmd_ablate,
}


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hotspotter",
        description="Self-supervised hotspot detection and isolation pipeline",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", type=Path, help="JSON config file")
        p.add_argument("--run-name", help="artifact directory name under the output root")
        p.add_argument("--out-root", dest="out_root", help="output root directory")
        p.add_argument("--seed", type=int, dest="seed")
        p.add_argument("--verbose", action="store_true")
        return p

    p = common(sub.add_parser("gen-data", help="generate a synthetic labeled dataset"))
    p.add_argument("--n-images", type=int, dest="n_images")
    p.add_argument("--image-size", type=int, nargs=2, dest="image_size", metavar=("H", "W"))
    p.add_argument("--anomalous-fraction", type=float, dest="anomalous_fraction")
    p.add_argument("--shapes", nargs="+", dest="shapes")
    p.add_argument("--hotspots", type=int, nargs="+", dest="hotspots_per_anomalous")

    p = common(sub.add_parser("train-ssl", help="contrastive pre-training"))
    p.add_argument("--data", type=Path, required=True, help="dataset root (manifest.csv inside)")
    p.add_argument("--backbone", dest="backbone", choices=["tiny", "xception"])
    p.add_argument("--variant", dest="variant", choices=["regular", "compound"])
    p.add_argument("--beta", type=float, dest="beta")
    p.add_argument("--epochs", type=int, dest="epochs")
    p.add_argument("--batch-size", type=int, dest="batch_size")
    p.add_argument("--lr", type=float, dest="lr")
    p.add_argument("--momentum", type=float, dest="momentum")
    p.add_argument("--projection-dim", type=int, dest="projection_dim")

    p = common(sub.add_parser("finetune", help="fine-tune a classifier from a checkpoint"))
    p.add_argument("--checkpoint", type=Path, help="SSL checkpoint archive")
    p.add_argument("--random-init", action="store_true", help="skip pre-trained weights")
    p.add_argument("--data", type=Path, required=True, help="labeled dataset root")
    p.add_argument("--backbone", dest="backbone", choices=["tiny", "xception"])
    p.add_argument("--epochs", type=int, dest="finetune_epochs")
    p.add_argument("--lr", type=float, dest="finetune_lr")
    p.add_argument("--batch-size", type=int, dest="finetune_batch_size")
    p.add_argument("--patience", type=int, dest="early_stop_patience")

    p = common(sub.add_parser("classify", help="write predictions.csv for a dataset"))
    p.add_argument("--model", type=Path, action="append", required=True,
                   help="classifier archive (repeat for a 2-member ensemble)")
    p.add_argument("--data", type=Path, required=True)
    p.add_argument("--weight", type=float, dest="ensemble_weight")
    p.add_argument("--grid-search", action="store_true")
    p.add_argument("--val-data", type=Path, help="labeled validation root for grid search")

    p = common(sub.add_parser("isolate", help="GradCAM heatmaps, masks and regions"))
    p.add_argument("--model", type=Path, required=True)
    p.add_argument("--data", type=Path, required=True)
    p.add_argument("--threshold", type=float, dest="cam_threshold")
    p.add_argument("--min-area", type=int, dest="min_area")
    p.add_argument("--class-index", type=int, dest="cam_class_index")
    p.add_argument("--overlays", action="store_true", help="also write composite overlays")

    p = common(sub.add_parser("baseline", help="classical segmentation baselines"))
    p.add_argument("--method", required=True, choices=["kmeans_lab", "kmeans_pv", "hsv", "otsu"])
    p.add_argument("--data", type=Path, required=True)
    p.add_argument("--k", type=int, dest="kmeans_k")
    p.add_argument("--bbox", type=int, nargs=4, metavar=("R0", "C0", "R1", "C1"))
    p.add_argument("--hsv-lower", type=float, nargs=3, metavar=("H", "S", "V"))
    p.add_argument("--hsv-upper", type=float, nargs=3, metavar=("H", "S", "V"))
    p.add_argument("--n-thresholds", type=int, dest="n_thresholds")
    p.add_argument("--opening-radius", type=int, dest="opening_radius")

    p = common(sub.add_parser("evaluate", help="metrics.json and roc.csv from predictions"))
    p.add_argument("--preds", type=Path, required=True)
    p.add_argument("--labels", type=Path, required=True, help="manifest.csv with true labels")

    p = common(sub.add_parser("ablate", help="markdown grid over prediction files"))
    p.add_argument("--run", action="append", metavar="NAME=PREDICTIONS_CSV")
    p.add_argument("--labels", type=Path, required=True)

    return parser


def _emit_error(kind: str, exc: Exception) -> None:
    record = {"error": type(exc).__name__, "kind": kind, "message": str(exc)}
    print(json.dumps(record, sort_keys=True), file=sys.stderr)


def dispatch(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)

    try:
        overrides = {k: v for k, v in vars(args).items() if k in SCHEMA}
        cfg = load_config(args.config, overrides)
    except ValidationError as exc:
        _emit_error("config", exc)
        return 2

    out_root = Path(os.environ.get(OUT_ROOT_ENV) or cfg["out_root"])
    stamp = datetime.now(timezone.utc).strftime("%Y%m%dT%H%M%SZ")
    run_name = args.run_name or f"{args.command}-{stamp}-{cfg['seed']}"

    seed_everything(cfg["seed"])
    staging = out_root / f".tmp-{run_name}"
    try:
        if staging.exists():
            shutil.rmtree(staging)
        staging.mkdir(parents=True)
        HANDLERS[args.command](args, cfg, staging)
        final = out_root / run_name
        if final.exists():
            shutil.rmtree(final)
        staging.replace(final)
        print(final)
        return 0
    except ValidationError as exc:
        _emit_error("validation", exc)
        return 2
    except (HotspotterError, OSError) as exc:
        _emit_error("runtime", exc)
        return 1
    finally:
        if staging.exists():
            shutil.rmtree(staging, ignore_errors=True)


def main() -> None:
    sys.exit(dispatch())


if __name__ == "__main__":
    main()
