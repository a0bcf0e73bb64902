"""Downstream anomalous/normal classification.

A classifier is the pre-trained encoder's pooled backbone features under a
2-unit softmax head; two classifiers trained from differently-configured
pre-training runs can be blended into a convex ensemble whose weight is
found by grid search on a validation split.
"""

from __future__ import annotations

import copy
import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
from torch import nn

from .augment import resize_view
from .data import ThermalImage
from .errors import ValidationError
from .networks import (
    BACKBONES,
    CHECKPOINT_VERSION,
    EncoderSpec,
    encoder_from_checkpoint,
    global_average_pool,
    views_to_tensor,
)


class Classifier(nn.Module):
    """Backbone features -> global average pool -> dense(2) -> softmax."""

    def __init__(self, backbone: nn.Module, provenance: str = ""):
        super().__init__()
        self.backbone = backbone
        self.head = nn.Linear(backbone.feature_dim, 2)
        self.provenance = provenance

    def features_and_logits(self, x: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        fmap = self.backbone.forward_features(x)
        return fmap, self.head(global_average_pool(fmap))

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.features_and_logits(x)[1]


def classifier_from_ssl_checkpoint(path: Path | str, head_seed: int = 0) -> Classifier:
    encoder, spec, payload = encoder_from_checkpoint(path)
    torch.manual_seed(head_seed)
    clf = Classifier(encoder.backbone, provenance=str(path))
    clf._encoder_spec = spec
    return clf


def classifier_from_spec(spec: EncoderSpec, seed: int = 0) -> Classifier:
    """Randomly initialized classifier (no pre-training)."""
    torch.manual_seed(seed)
    clf = Classifier(BACKBONES[spec.backbone](), provenance="random-init")
    clf._encoder_spec = spec
    return clf


def _label_from_probs(probs: np.ndarray) -> int:
    # Ties break toward 'normal' (class 0).
    return int(probs[1] > probs[0])


def predict_probs(clf: Classifier, images: list[ThermalImage]) -> np.ndarray:
    """Deterministic N×2 softmax probabilities (inference mode)."""
    clf.eval()
    out = []
    with torch.no_grad():
        for i in range(0, len(images), 64):
            batch = np.stack([resize_view(img.pixels) for img in images[i : i + 64]])
            logits = clf(views_to_tensor(batch))
            out.append(torch.softmax(logits, dim=1).numpy())
    return np.concatenate(out, axis=0)


def classify(clf: Classifier, img: ThermalImage) -> tuple[int, np.ndarray]:
    probs = predict_probs(clf, [img])[0]
    return _label_from_probs(probs), probs


@dataclass
class EnsembleModel:
    c1: Classifier
    c2: Classifier
    w: float = 0.5

    def __post_init__(self):
        if not 0.0 <= self.w <= 1.0:
            raise ValidationError("ensemble weight must be in [0, 1]")


def blend_probs(p1: np.ndarray, p2: np.ndarray, w: float) -> np.ndarray:
    """Convex combination of two probability vectors/batches."""
    return w * np.asarray(p1) + (1.0 - w) * np.asarray(p2)


def ensemble_probs(m: EnsembleModel, images: list[ThermalImage]) -> np.ndarray:
    return blend_probs(predict_probs(m.c1, images), predict_probs(m.c2, images), m.w)


def ensemble_predict(m: EnsembleModel, img: ThermalImage) -> tuple[int, np.ndarray]:
    probs = ensemble_probs(m, [img])[0]
    return _label_from_probs(probs), probs


WEIGHT_GRID = np.round(np.arange(0, 101) / 100.0, 2)


def grid_search_weight(
    c1: Classifier, c2: Classifier, validation: list[ThermalImage]
) -> float:
    """Ensemble weight in {0.00, 0.01, ..., 1.00} maximizing accuracy.

    Ties break toward the maximizer nearest 0.5 (then the smaller w).
    """
    if not validation:
        raise ValidationError("validation set is empty")
    labels = _require_labels(validation)
    if len(set(labels)) < 2:
        raise ValidationError("validation set must contain both classes")
    p1 = predict_probs(c1, validation)
    p2 = predict_probs(c2, validation)
    best_w, best_acc = 0.5, -1.0
    for w in WEIGHT_GRID:
        probs = w * p1 + (1.0 - w) * p2
        preds = (probs[:, 1] > probs[:, 0]).astype(int)
        acc = float(np.mean(preds == labels))
        better = acc > best_acc
        tied = acc == best_acc and (
            abs(w - 0.5) < abs(best_w - 0.5)
            or (abs(w - 0.5) == abs(best_w - 0.5) and w < best_w)
        )
        if better or tied:
            best_w, best_acc = float(w), acc
    return best_w


def _require_labels(images: list[ThermalImage]) -> np.ndarray:
    labels = []
    for img in images:
        if img.label not in (0, 1):
            raise ValidationError(f"image {img.id!r} is unlabeled; fine-tuning needs 0/1 labels")
        labels.append(img.label)
    return np.array(labels, dtype=int)


def stratified_split(
    images: list[ThermalImage], val_fraction: float, rng: np.random.Generator
) -> tuple[list[int], list[int]]:
    labels = _require_labels(images)
    train_idx, val_idx = [], []
    for cls in np.unique(labels):
        members = np.flatnonzero(labels == cls)
        rng.shuffle(members)
        n_val = max(1, int(round(len(members) * val_fraction))) if len(members) > 1 else 0
        val_idx.extend(members[:n_val].tolist())
        train_idx.extend(members[n_val:].tolist())
    return sorted(train_idx), sorted(val_idx)


@dataclass
class FinetuneEpoch:
    epoch: int
    train_loss: float
    val_loss: float
    val_accuracy: float


@dataclass
class FinetuneResult:
    classifier: Classifier
    history: list[FinetuneEpoch]

    @property
    def best_val_accuracy(self) -> float:
        return max(row.val_accuracy for row in self.history)


def _evaluate(clf: Classifier, images: list[ThermalImage], labels: np.ndarray):
    probs = predict_probs(clf, images)
    preds = (probs[:, 1] > probs[:, 0]).astype(int)
    loss = float(-np.mean(np.log(np.clip(probs[np.arange(len(labels)), labels], 1e-12, None))))
    return loss, float(np.mean(preds == labels))


def finetune(
    clf: Classifier,
    data: list[ThermalImage],
    epochs: int,
    *,
    lr: float = 1e-3,
    batch_size: int = 32,
    early_stop_patience: int = 10,
    val_fraction: float = 0.2,
    seed: int = 0,
    restore_best: bool = True,
    verbose: bool = False,
) -> FinetuneResult:
    """Train the whole classifier with Adam on cross-entropy labels.

    Internally splits data 80/20 (stratified, seeded), stops early when the
    validation loss stalls, and by default restores the best-loss weights.
    """
    labels = _require_labels(data)
    rng = np.random.default_rng(seed)
    train_idx, val_idx = stratified_split(data, val_fraction, rng)
    train = [data[i] for i in train_idx]
    val = [data[i] for i in val_idx]
    train_labels = labels[train_idx]
    val_labels = labels[val_idx]
    if len(set(train_labels.tolist())) < 2:
        raise ValidationError("training split contains a single class")

    optimizer = torch.optim.Adam(clf.parameters(), lr=lr)
    criterion = nn.CrossEntropyLoss()

    val_loss, val_acc = _evaluate(clf, val, val_labels)
    history = [FinetuneEpoch(0, float("nan"), val_loss, val_acc)]
    best_loss, best_state, stale = val_loss, None, 0
    if restore_best:
        best_state = copy.deepcopy(clf.state_dict())

    for epoch in range(1, epochs + 1):
        clf.train()
        order = rng.permutation(len(train))
        epoch_losses = []
        for start in range(0, len(order), batch_size):
            idx = order[start : start + batch_size]
            if len(idx) < 2:
                continue  # a singleton batch breaks batch-norm statistics
            batch = np.stack([resize_view(train[i].pixels) for i in idx])
            target = torch.as_tensor(train_labels[idx], dtype=torch.long)
            logits = clf(views_to_tensor(batch))
            loss = criterion(logits, target)
            optimizer.zero_grad()
            loss.backward()
            optimizer.step()
            epoch_losses.append(float(loss.detach()))

        val_loss, val_acc = _evaluate(clf, val, val_labels)
        history.append(FinetuneEpoch(epoch, float(np.mean(epoch_losses)), val_loss, val_acc))
        if verbose:
            print(f"epoch {epoch:4d}  train {history[-1].train_loss:.4f}  "
                  f"val {val_loss:.4f}  acc {val_acc:.4f}")
        if val_loss < best_loss - 1e-6:
            best_loss, stale = val_loss, 0
            if restore_best:
                best_state = copy.deepcopy(clf.state_dict())
        else:
            stale += 1
            if stale >= early_stop_patience:
                break

    if restore_best and best_state is not None:
        clf.load_state_dict(best_state)
    return FinetuneResult(classifier=clf, history=history)


def save_classifier(path: Path | str, clf: Classifier, spec: EncoderSpec) -> Path:
    path = Path(path)
    torch.save(
        {
            "format_version": CHECKPOINT_VERSION,
            "state": clf.state_dict(),
            "encoder_spec": {"backbone": spec.backbone, "projection_dim": spec.projection_dim},
            "provenance": clf.provenance,
        },
        path,
    )
    return path


def load_classifier(path: Path | str) -> Classifier:
    payload = torch.load(Path(path), map_location="cpu", weights_only=False)
    if payload.get("format_version") != CHECKPOINT_VERSION:
        raise ValidationError(f"unsupported classifier archive version in {path}")
    spec = EncoderSpec(**payload["encoder_spec"])
    clf = Classifier(BACKBONES[spec.backbone](), provenance=payload.get("provenance", ""))
    clf.load_state_dict(payload["state"])
    clf._encoder_spec = spec
    return clf


def write_predictions(path: Path | str, rows: list[tuple[str, int, float, float]]) -> Path:
    """Emit predictions.csv with columns id,label,p0,p1."""
    path = Path(path)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["id", "label", "p0", "p1"])
        for img_id, label, p0, p1 in rows:
            writer.writerow([img_id, label, f"{p0:.6f}", f"{p1:.6f}"])
    return path


def predictions_for(clf_or_ensemble, images: list[ThermalImage]):
    if isinstance(clf_or_ensemble, EnsembleModel):
        probs = ensemble_probs(clf_or_ensemble, images)
    else:
        probs = predict_probs(clf_or_ensemble, images)
    return [
        (img.id, _label_from_probs(p), float(p[0]), float(p[1]))
        for img, p in zip(images, probs)
    ]
