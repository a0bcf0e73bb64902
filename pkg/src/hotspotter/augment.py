"""Two-view augmentation pipeline feeding the contrastive trainer.

Every view is resized to 224×224×3 and then passed through translation,
left-right flip, Gaussian blur, colour jitter, colour drop and rotation,
each with a magnitude drawn from the policy bounds. All draws are taken
from an explicit numpy Generator so (policy, rng state) fully determine
the output.
"""

from __future__ import annotations

from dataclasses import dataclass

import cv2
import numpy as np

from .data import ThermalImage
from .errors import ValidationError

VIEW_SIZE = 224

# Rec. 601 luma, used for the colour-drop (grayscale) branch.
_LUMA = np.array([0.299, 0.587, 0.114], dtype=np.float32)


@dataclass(frozen=True)
class AugmentPolicy:
    """Bounds for the random view transforms; zero magnitudes give identity."""

    translate_max_frac: float = 0.10
    flip_prob: float = 0.5
    blur_sigma_range: tuple[float, float] = (0.0, 1.5)
    jitter_strength: float = 0.2
    drop_color_prob: float = 0.2
    rotate_max_deg: float = 15.0
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.translate_max_frac <= 0.3:
            raise ValidationError("translate_max_frac must be in [0, 0.3]")
        if not 0.0 <= self.flip_prob <= 1.0:
            raise ValidationError("flip_prob must be in [0, 1]")
        lo, hi = self.blur_sigma_range
        if lo < 0 or hi < lo:
            raise ValidationError("blur_sigma_range must satisfy 0 <= lo <= hi")
        if self.jitter_strength < 0:
            raise ValidationError("jitter_strength must be >= 0")
        if not 0.0 <= self.drop_color_prob <= 1.0:
            raise ValidationError("drop_color_prob must be in [0, 1]")
        if self.rotate_max_deg < 0:
            raise ValidationError("rotate_max_deg must be >= 0")

    @classmethod
    def identity(cls, seed: int = 0) -> "AugmentPolicy":
        return cls(0.0, 0.0, (0.0, 0.0), 0.0, 0.0, 0.0, seed)

    def rng(self) -> np.random.Generator:
        return np.random.default_rng(self.seed)


def resize_view(pixels: np.ndarray, size: int = VIEW_SIZE) -> np.ndarray:
    """Bilinear resize to size×size×3 float32."""
    out = cv2.resize(pixels.astype(np.float32), (size, size), interpolation=cv2.INTER_LINEAR)
    return np.clip(out, 0.0, 1.0)


def augment_view(
    img: ThermalImage, policy: AugmentPolicy, rng: np.random.Generator | None = None
) -> np.ndarray:
    """Produce one randomly augmented 224×224×3 view of the image.

    Draws follow a fixed order, so replaying the same rng state replays
    the same view. Out-of-frame pixels use edge replication; the output
    is clipped to [0,1].
    """
    if rng is None:
        rng = policy.rng()
    view = resize_view(img.pixels)
    side = view.shape[0]

    # Draw the full random vector up front so skipped ops cannot shift
    # the stream for later ones.
    dx, dy = rng.uniform(-1.0, 1.0, size=2) * policy.translate_max_frac * side
    do_flip = rng.uniform() < policy.flip_prob
    lo, hi = policy.blur_sigma_range
    sigma = rng.uniform(lo, hi)
    gains = 1.0 + rng.uniform(-1.0, 1.0, size=3) * policy.jitter_strength
    offsets = rng.uniform(-1.0, 1.0, size=3) * policy.jitter_strength
    do_drop = rng.uniform() < policy.drop_color_prob
    angle = rng.uniform(-1.0, 1.0) * policy.rotate_max_deg

    if dx != 0.0 or dy != 0.0:
        m = np.float32([[1, 0, dx], [0, 1, dy]])
        view = cv2.warpAffine(
            view, m, (side, side), flags=cv2.INTER_LINEAR, borderMode=cv2.BORDER_REPLICATE
        )
    if do_flip:
        view = view[:, ::-1, :].copy()
    if sigma > 0.0:
        view = cv2.GaussianBlur(view, (0, 0), sigmaX=sigma, sigmaY=sigma)
    if policy.jitter_strength > 0.0:
        view = view * gains.astype(np.float32) + offsets.astype(np.float32)
    if do_drop:
        gray = view @ _LUMA
        view = np.repeat(gray[:, :, None], 3, axis=2)
    if angle != 0.0:
        center = ((side - 1) / 2.0, (side - 1) / 2.0)
        m = cv2.getRotationMatrix2D(center, angle, 1.0)
        view = cv2.warpAffine(
            view, m, (side, side), flags=cv2.INTER_LINEAR, borderMode=cv2.BORDER_REPLICATE
        )
    return np.clip(view, 0.0, 1.0).astype(np.float32)


@dataclass
class ViewPair:
    """Two independently augmented views of one source image."""

    v1: np.ndarray
    v2: np.ndarray
    source_id: str

    def __post_init__(self):
        for name, v in (("v1", self.v1), ("v2", self.v2)):
            if v.shape != (VIEW_SIZE, VIEW_SIZE, 3):
                raise ValidationError(f"{name} must be {VIEW_SIZE}×{VIEW_SIZE}×3, got {v.shape}")
            if float(v.min()) < 0.0 or float(v.max()) > 1.0:
                raise ValidationError(f"{name} values outside [0,1]")


def make_view_pair(
    img: ThermalImage, policy: AugmentPolicy, rng: np.random.Generator | None = None
) -> ViewPair:
    """Two independent draws through augment_view on the same source."""
    if rng is None:
        rng = policy.rng()
    v1 = augment_view(img, policy, rng)
    v2 = augment_view(img, policy, rng)
    return ViewPair(v1=v1, v2=v2, source_id=img.id)
