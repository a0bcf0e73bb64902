"""Contrastive losses: negative cosine similarity, its symmetric form, and
the compound variant with a cross-entropy regularizer.

All functions accept single vectors or batches (reduction over the last
dim) and return a tensor of per-sample values; gradients never flow
through z arguments where stop-gradient applies.

The cross-entropy term maps both embeddings onto the probability simplex
with a softmax before evaluating -sum(q log r); raw embeddings may be
non-positive, so the logarithm needs this repair to stay well-defined.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
import torch.nn.functional as F

from .errors import NumericDomainError, ValidationError

DEFAULT_BETA = 2.0 / 3.0

VARIANTS = ("regular", "compound")


@dataclass(frozen=True)
class LossConfig:
    variant: str = "compound"
    beta: float = DEFAULT_BETA

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValidationError(f"variant must be one of {VARIANTS}, got {self.variant!r}")
        if self.beta < 0:
            raise ValidationError("beta must be >= 0")


def _as_tensor(x) -> torch.Tensor:
    t = torch.as_tensor(x)
    return t.double() if not torch.is_floating_point(t) else t


def negative_cosine_similarity(p, z) -> torch.Tensor:
    """-(p/|p|) . (z/|z|); value in [-1, 1]."""
    p, z = _as_tensor(p), _as_tensor(z)
    pn = p.norm(dim=-1, keepdim=True)
    zn = z.norm(dim=-1, keepdim=True)
    if (pn == 0).any() or (zn == 0).any():
        raise NumericDomainError("cosine similarity undefined for zero-norm vectors")
    return -((p / pn) * (z / zn)).sum(dim=-1)


def symmetric_similarity_loss(p1, z1, p2, z2) -> torch.Tensor:
    """D(p1, sg(z2)) + D(p2, sg(z1)); gradient flows only through p1, p2."""
    z1 = _as_tensor(z1).detach()
    z2 = _as_tensor(z2).detach()
    return negative_cosine_similarity(p1, z2) + negative_cosine_similarity(p2, z1)


def cross_entropy_term(p, z) -> torch.Tensor:
    """-sum(softmax(p) * log softmax(z)); z is treated as a constant."""
    p, z = _as_tensor(p), _as_tensor(z).detach()
    if not (torch.isfinite(p).all() and torch.isfinite(z).all()):
        raise NumericDomainError("cross-entropy term requires finite inputs")
    q = F.softmax(p, dim=-1)
    log_r = F.log_softmax(z, dim=-1)
    return -(q * log_r).sum(dim=-1)


def compound_loss(p1, z1, p2, z2, cfg: LossConfig) -> torch.Tensor:
    """Symmetric similarity plus beta-weighted symmetric cross-entropy."""
    if cfg.variant != "compound":
        raise ValidationError("compound_loss requires cfg.variant == 'compound'")
    sim = symmetric_similarity_loss(p1, z1, p2, z2)
    ce = cross_entropy_term(p1, z2) + cross_entropy_term(p2, z1)
    return sim + cfg.beta * ce


def loss_terms(p1, z1, p2, z2, cfg: LossConfig) -> dict[str, torch.Tensor]:
    """Per-sample loss plus its components, per the configured variant."""
    sim = symmetric_similarity_loss(p1, z1, p2, z2)
    if cfg.variant == "regular":
        return {"total": sim, "similarity": sim}
    ce = cross_entropy_term(p1, z2) + cross_entropy_term(p2, z1)
    return {"total": sim + cfg.beta * ce, "similarity": sim, "cross_entropy": ce}
