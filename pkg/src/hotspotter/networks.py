"""Encoder/predictor networks and the backbone registry.

Backbones expose ``forward_features`` (final conv feature map, NCHW) and a
``feature_dim``; the encoder pools that map and projects it through
dense -> batch-norm -> ReLU -> dense to a fixed-width embedding. ``tiny``
is a 3-block convnet for desk-scale runs; ``xception`` follows the
depthwise-separable entry/middle/exit layout of the original network.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
from torch import nn

from .errors import ValidationError

CHECKPOINT_VERSION = 1
VIEW_SIZE = 224


@dataclass(frozen=True)
class EncoderSpec:
    backbone: str = "tiny"
    projection_dim: int = 2048

    def __post_init__(self):
        if self.backbone not in BACKBONES:
            raise ValidationError(f"unknown backbone {self.backbone!r}; have {list(BACKBONES)}")
        if self.projection_dim < 1:
            raise ValidationError("projection_dim must be >= 1")


@dataclass(frozen=True)
class PredictorSpec:
    input_dim: int = 2048
    hidden_dim: int = 512
    output_dim: int | None = None

    def __post_init__(self):
        if self.input_dim < 1 or self.hidden_dim < 1:
            raise ValidationError("predictor dims must be >= 1")
        if self.output_dim is None:
            object.__setattr__(self, "output_dim", self.input_dim)


class TinyBackbone(nn.Module):
    """Three conv blocks with pooling; final map 28×28 for a 224 input."""

    feature_dim = 32

    def __init__(self):
        super().__init__()
        def block(cin, cout, stride):
            return nn.Sequential(
                nn.Conv2d(cin, cout, 3, stride=stride, padding=1, padding_mode="replicate"),
                nn.BatchNorm2d(cout),
                nn.ReLU(inplace=True),
            )
        self.block1 = block(3, 8, stride=2)
        self.block2 = block(8, 16, stride=1)
        self.block3 = block(16, 32, stride=1)
        self.pool = nn.MaxPool2d(2)

    def forward_features(self, x: torch.Tensor) -> torch.Tensor:
        x = self.pool(self.block1(x))
        x = self.pool(self.block2(x))
        return self.block3(x)


class SeparableConv(nn.Module):
    def __init__(self, cin, cout):
        super().__init__()
        self.depthwise = nn.Conv2d(cin, cin, 3, padding=1, groups=cin, bias=False)
        self.pointwise = nn.Conv2d(cin, cout, 1, bias=False)
        self.bn = nn.BatchNorm2d(cout)

    def forward(self, x):
        return self.bn(self.pointwise(self.depthwise(x)))


class XceptionBlock(nn.Module):
    def __init__(self, cin, cout, *, reps=2, downsample=True, start_with_relu=True):
        super().__init__()
        layers = []
        c = cin
        for i in range(reps):
            if start_with_relu or i > 0:
                layers.append(nn.ReLU(inplace=False))
            layers.append(SeparableConv(c, cout))
            c = cout
        if downsample:
            layers.append(nn.MaxPool2d(3, stride=2, padding=1))
        self.body = nn.Sequential(*layers)
        if downsample or cin != cout:
            self.skip = nn.Sequential(
                nn.Conv2d(cin, cout, 1, stride=2 if downsample else 1, bias=False),
                nn.BatchNorm2d(cout),
            )
        else:
            self.skip = nn.Identity()

    def forward(self, x):
        return self.body(x) + self.skip(x)


class XceptionBackbone(nn.Module):
    """Entry, 8-block middle, and exit flows of separable convolutions."""

    feature_dim = 2048

    def __init__(self):
        super().__init__()
        self.stem = nn.Sequential(
            nn.Conv2d(3, 32, 3, stride=2, padding=1, bias=False),
            nn.BatchNorm2d(32),
            nn.ReLU(inplace=True),
            nn.Conv2d(32, 64, 3, padding=1, bias=False),
            nn.BatchNorm2d(64),
            nn.ReLU(inplace=True),
        )
        self.entry = nn.Sequential(
            XceptionBlock(64, 128, start_with_relu=False),
            XceptionBlock(128, 256),
            XceptionBlock(256, 728),
        )
        self.middle = nn.Sequential(
            *[XceptionBlock(728, 728, reps=3, downsample=False) for _ in range(8)]
        )
        self.exit_block = XceptionBlock(728, 1024)
        self.tail = nn.Sequential(
            SeparableConv(1024, 1536),
            nn.ReLU(inplace=True),
            SeparableConv(1536, 2048),
            nn.ReLU(inplace=True),
        )

    def forward_features(self, x: torch.Tensor) -> torch.Tensor:
        x = self.stem(x)
        x = self.entry(x)
        x = self.middle(x)
        x = self.exit_block(x)
        return self.tail(x)


BACKBONES = {"tiny": TinyBackbone, "xception": XceptionBackbone}


def global_average_pool(features: torch.Tensor) -> torch.Tensor:
    return features.mean(dim=(2, 3))


class Encoder(nn.Module):
    """Backbone features -> global average pool -> dense -> BN -> ReLU -> dense."""

    def __init__(self, backbone: nn.Module, projection_dim: int):
        super().__init__()
        self.backbone = backbone
        self.projection_dim = projection_dim
        self.fc1 = nn.Linear(backbone.feature_dim, projection_dim)
        self.bn = nn.BatchNorm1d(projection_dim)
        self.fc2 = nn.Linear(projection_dim, projection_dim)

    def pooled_features(self, x: torch.Tensor) -> torch.Tensor:
        return global_average_pool(self.backbone.forward_features(x))

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        h = self.pooled_features(x)
        return self.fc2(torch.relu(self.bn(self.fc1(h))))


class Predictor(nn.Module):
    """Dense -> BN -> ReLU -> dense MLP head over the projection."""

    def __init__(self, input_dim: int, hidden_dim: int, output_dim: int):
        super().__init__()
        self.fc1 = nn.Linear(input_dim, hidden_dim)
        self.bn = nn.BatchNorm1d(hidden_dim)
        self.fc2 = nn.Linear(hidden_dim, output_dim)

    def forward(self, z: torch.Tensor) -> torch.Tensor:
        squeeze = z.ndim == 1
        if squeeze:
            z = z.unsqueeze(0)
        out = self.fc2(torch.relu(self.bn(self.fc1(z))))
        return out.squeeze(0) if squeeze else out


def build_encoder(spec: EncoderSpec, seed: int | None = None) -> Encoder:
    if seed is not None:
        torch.manual_seed(seed)
    return Encoder(BACKBONES[spec.backbone](), spec.projection_dim)


def build_predictor(spec: PredictorSpec, seed: int | None = None) -> Predictor:
    if seed is not None:
        torch.manual_seed(seed)
    return Predictor(spec.input_dim, spec.hidden_dim, spec.output_dim)


def views_to_tensor(batch: np.ndarray | torch.Tensor) -> torch.Tensor:
    """N×H×W×3 array in [0,1] -> N×3×H×W float tensor."""
    t = torch.as_tensor(np.ascontiguousarray(batch)) if isinstance(batch, np.ndarray) else batch
    if t.ndim == 3:
        t = t.unsqueeze(0)
    if t.ndim != 4 or t.shape[-1] != 3:
        raise ValidationError(f"expected N×H×W×3 batch, got shape {tuple(t.shape)}")
    return t.permute(0, 3, 1, 2).float()


def encoder_forward(encoder: Encoder, batch, mode: str = "infer") -> torch.Tensor:
    """Run the encoder on an N×224×224×3 batch; infer mode is deterministic."""
    if mode not in ("train", "infer"):
        raise ValidationError("mode must be 'train' or 'infer'")
    x = views_to_tensor(batch)
    if x.shape[2] != VIEW_SIZE or x.shape[3] != VIEW_SIZE:
        raise ValidationError(f"encoder expects {VIEW_SIZE}×{VIEW_SIZE} inputs, got {tuple(x.shape)}")
    if mode == "infer":
        encoder.eval()
        with torch.no_grad():
            return encoder(x)
    encoder.train()
    return encoder(x)


def predictor_forward(predictor: Predictor, z, mode: str = "infer") -> torch.Tensor:
    t = _to_2d(z)
    if t.shape[1] != predictor.fc1.in_features:
        raise ValidationError(
            f"predictor expects dim {predictor.fc1.in_features}, got {t.shape[1]}"
        )
    if mode == "infer":
        predictor.eval()
        with torch.no_grad():
            return predictor(t)
    predictor.train()
    return predictor(t)


def _to_2d(z) -> torch.Tensor:
    t = torch.as_tensor(z).float()
    return t.unsqueeze(0) if t.ndim == 1 else t


def save_ssl_checkpoint(
    path: Path | str,
    encoder: Encoder,
    predictor: Predictor,
    encoder_spec: EncoderSpec,
    predictor_spec: PredictorSpec,
    train_cfg: dict,
    loss_cfg: dict,
    seed: int,
) -> Path:
    """Single archive holding weights, both configs, the seed and a version tag."""
    path = Path(path)
    payload = {
        "format_version": CHECKPOINT_VERSION,
        "encoder_state": encoder.state_dict(),
        "predictor_state": predictor.state_dict(),
        "encoder_spec": {"backbone": encoder_spec.backbone, "projection_dim": encoder_spec.projection_dim},
        "predictor_spec": {
            "input_dim": predictor_spec.input_dim,
            "hidden_dim": predictor_spec.hidden_dim,
            "output_dim": predictor_spec.output_dim,
        },
        "train_cfg": train_cfg,
        "loss_cfg": loss_cfg,
        "seed": seed,
    }
    torch.save(payload, path)
    return path


def load_ssl_checkpoint(path: Path | str) -> dict:
    payload = torch.load(Path(path), map_location="cpu", weights_only=False)
    if payload.get("format_version") != CHECKPOINT_VERSION:
        raise ValidationError(f"unsupported checkpoint version in {path}")
    payload["encoder_spec"] = EncoderSpec(**payload["encoder_spec"])
    payload["predictor_spec"] = PredictorSpec(**payload["predictor_spec"])
    return payload


def encoder_from_checkpoint(path: Path | str) -> tuple[Encoder, EncoderSpec, dict]:
    payload = load_ssl_checkpoint(path)
    encoder = build_encoder(payload["encoder_spec"])
    encoder.load_state_dict(payload["encoder_state"])
    return encoder, payload["encoder_spec"], payload
