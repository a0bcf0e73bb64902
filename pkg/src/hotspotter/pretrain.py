"""SGD training loop for the two-view contrastive setup.

Each step augments a batch twice, encodes both views, predicts across the
branches and minimizes the configured loss (mean over the batch). The
stop-gradient lives inside the loss functions, so the projection branch
never backpropagates. A collapse monitor (mean per-dimension std of the
normalized projections) is logged per epoch alongside the loss.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch

from .augment import AugmentPolicy, make_view_pair
from .data import ThermalImage
from .errors import TrainingDiverged, ValidationError
from .losses import LossConfig, loss_terms
from .networks import (
    Encoder,
    EncoderSpec,
    Predictor,
    PredictorSpec,
    save_ssl_checkpoint,
    views_to_tensor,
)


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 81
    lr: float = 0.0008
    momentum: float = 0.6
    epochs: int = 200
    seed: int = 0

    def __post_init__(self):
        if self.batch_size < 2:
            raise ValidationError("batch_size must be >= 2 (view pairs form batches)")
        if self.epochs < 0:
            raise ValidationError("epochs must be >= 0")
        if self.lr < 0 or self.momentum < 0:
            raise ValidationError("lr and momentum must be >= 0")


@dataclass
class EpochStats:
    epoch: int
    loss: float
    collapse: float


def _batch_loss(encoder: Encoder, predictor: Predictor, x1, x2, lcfg: LossConfig):
    z1, z2 = encoder(x1), encoder(x2)
    p1, p2 = predictor(z1), predictor(z2)
    terms = {k: v.mean() for k, v in loss_terms(p1, z1, p2, z2, lcfg).items()}
    return terms, z1


def projection_spread(z: torch.Tensor) -> float:
    """Mean per-dimension std of l2-normalized projections across the batch."""
    with torch.no_grad():
        zn = z.detach()
        zn = zn / zn.norm(dim=1, keepdim=True).clamp_min(1e-12)
        return float(zn.std(dim=0, unbiased=False).mean())


def ssl_train(
    encoder: Encoder,
    predictor: Predictor,
    data: list[ThermalImage],
    tcfg: TrainConfig,
    lcfg: LossConfig,
    policy: AugmentPolicy | None = None,
    history_path: Path | str | None = None,
    verbose: bool = False,
) -> list[EpochStats]:
    """Train encoder+predictor in place; returns per-epoch stats."""
    if not data:
        raise ValidationError("training data is empty")
    if tcfg.batch_size > len(data):
        raise ValidationError(f"batch_size {tcfg.batch_size} exceeds dataset size {len(data)}")
    policy = policy or AugmentPolicy(seed=tcfg.seed)
    rng = np.random.default_rng(tcfg.seed)

    params = list(encoder.parameters()) + list(predictor.parameters())
    optimizer = torch.optim.SGD(params, lr=tcfg.lr, momentum=tcfg.momentum)
    encoder.train()
    predictor.train()

    history: list[EpochStats] = []
    n_batches = len(data) // tcfg.batch_size
    for epoch in range(1, tcfg.epochs + 1):
        order = rng.permutation(len(data))
        losses, spreads = [], []
        for step in range(n_batches):
            idx = order[step * tcfg.batch_size : (step + 1) * tcfg.batch_size]
            pairs = [make_view_pair(data[i], policy, rng) for i in idx]
            x1 = views_to_tensor(np.stack([p.v1 for p in pairs]))
            x2 = views_to_tensor(np.stack([p.v2 for p in pairs]))

            terms, z1 = _batch_loss(encoder, predictor, x1, x2, lcfg)
            loss = terms["total"]
            if not torch.isfinite(loss):
                raise TrainingDiverged(
                    epoch, step, {k: float(v) for k, v in terms.items()}
                )
            optimizer.zero_grad()
            loss.backward()
            optimizer.step()

            losses.append(float(loss.detach()))
            spreads.append(projection_spread(z1))

        stats = EpochStats(epoch, float(np.mean(losses)), float(np.mean(spreads)))
        history.append(stats)
        if verbose:
            print(f"epoch {stats.epoch:4d}  loss {stats.loss:+.4f}  spread {stats.collapse:.4f}")

    if history_path is not None:
        write_history(history, history_path)
    return history


def write_history(history: list[EpochStats], path: Path | str) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "loss", "collapse"])
        for row in history:
            writer.writerow([row.epoch, f"{row.loss:.6f}", f"{row.collapse:.6f}"])


def train_and_checkpoint(
    encoder_spec: EncoderSpec,
    predictor_spec: PredictorSpec,
    data: list[ThermalImage],
    tcfg: TrainConfig,
    lcfg: LossConfig,
    out_dir: Path | str,
    policy: AugmentPolicy | None = None,
    verbose: bool = False,
) -> tuple[Path, list[EpochStats]]:
    """Build fresh networks from the seed, train, and archive the result."""
    from .networks import build_encoder, build_predictor

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    encoder = build_encoder(encoder_spec, seed=tcfg.seed)
    predictor = build_predictor(predictor_spec, seed=tcfg.seed + 1)
    history = ssl_train(
        encoder, predictor, data, tcfg, lcfg,
        policy=policy, history_path=out_dir / "history.csv", verbose=verbose,
    )
    ckpt = save_ssl_checkpoint(
        out_dir / "checkpoint.pt",
        encoder,
        predictor,
        encoder_spec,
        predictor_spec,
        train_cfg=tcfg.__dict__.copy(),
        loss_cfg={"variant": lcfg.variant, "beta": lcfg.beta},
        seed=tcfg.seed,
    )
    return ckpt, history
