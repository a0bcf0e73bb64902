"""Classical hotspot isolation methods used for comparison: k-means in
CIE L*a*b*, bounding-box k-means on intensity, HSV in-range thresholding,
and multilevel Otsu with morphological opening.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction

import cv2
import numpy as np
from scipy import ndimage

from .errors import SegmentationFailure, ValidationError

KMEANS_MAX_ITER = 300
KMEANS_TOL = 1e-4


@dataclass
class SegmentationResult:
    mask: np.ndarray
    method: str
    params: dict = field(default_factory=dict)


# ---------------------------------------------------------------------------
# k-means core (Lloyd's algorithm, k-means++ style init)


def _kmeans_init(x: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    """k-means++ seeding: next centre drawn with probability prop. to D^2."""
    centers = np.empty((k, x.shape[1]), dtype=np.float64)
    centers[0] = x[rng.integers(len(x))]
    d2 = ((x - centers[0]) ** 2).sum(axis=1)
    for j in range(1, k):
        total = d2.sum()
        idx = rng.integers(len(x)) if total <= 0 else rng.choice(len(x), p=d2 / total)
        centers[j] = x[idx]
        d2 = np.minimum(d2, ((x - centers[j]) ** 2).sum(axis=1))
    return centers


def _pairwise_sq_dists(x: np.ndarray, centers: np.ndarray) -> np.ndarray:
    return (
        (x**2).sum(axis=1)[:, None]
        - 2.0 * x @ centers.T
        + (centers**2).sum(axis=1)[None, :]
    )


def lloyd_kmeans(
    x: np.ndarray,
    k: int,
    seed: int,
    max_iter: int = KMEANS_MAX_ITER,
    tol: float = KMEANS_TOL,
) -> tuple[np.ndarray, np.ndarray]:
    """Cluster rows of x; returns (centers, assignments).

    Stops when the largest centre movement drops to <= tol. Empty clusters
    are re-seeded at the point farthest from its assigned centre.
    """
    x = np.asarray(x, dtype=np.float64)
    if k < 2:
        raise ValidationError("k must be >= 2")
    if len(np.unique(x, axis=0)) < k:
        raise ValidationError(f"k={k} exceeds the number of distinct pixel vectors")
    rng = np.random.default_rng(seed)
    centers = _kmeans_init(x, k, rng)
    for _ in range(max_iter):
        d2 = _pairwise_sq_dists(x, centers)
        assign = d2.argmin(axis=1)
        new_centers = centers.copy()
        for j in range(k):
            members = assign == j
            if members.any():
                new_centers[j] = x[members].mean(axis=0)
            else:
                new_centers[j] = x[d2.min(axis=1).argmax()]
        shift = np.sqrt(((new_centers - centers) ** 2).sum(axis=1)).max()
        centers = new_centers
        if shift <= tol:
            break
    assign = _pairwise_sq_dists(x, centers).argmin(axis=1)
    return centers, assign


def kmeans_lab_segment(pixels: np.ndarray, k: int = 2, seed: int = 0) -> SegmentationResult:
    """Cluster per-pixel L*a*b* vectors; hotspot = cluster with highest mean L*."""
    lab = cv2.cvtColor(np.asarray(pixels, dtype=np.float32), cv2.COLOR_RGB2Lab)
    x = lab.reshape(-1, 3)
    centers, assign = lloyd_kmeans(x, k, seed)
    hottest = int(centers[:, 0].argmax())
    mask = (assign == hottest).reshape(pixels.shape[:2])
    return SegmentationResult(mask=mask, method="kmeans_lab", params={"k": k, "seed": seed})


PV_K = 3  # fixed cluster count of the photovoltaic method


def kmeans_pv_segment(
    pixels: np.ndarray, bbox: tuple[int, int, int, int], seed: int = 0
) -> SegmentationResult:
    """k=3 intensity clustering inside a bounding box; brightest cluster wins.

    bbox is (row0, col0, row1, col1) with exclusive ends, standing in for the
    method's manual region selection.
    """
    h, w = pixels.shape[:2]
    r0, c0, r1, c1 = bbox
    if not (0 <= r0 < r1 <= h and 0 <= c0 < c1 <= w):
        raise ValidationError(f"bbox {bbox} is empty or outside the {h}×{w} image")
    crop = np.asarray(pixels, dtype=np.float64)[r0:r1, c0:c1].mean(axis=2)
    centers, assign = lloyd_kmeans(crop.reshape(-1, 1), PV_K, seed)
    brightest = int(centers[:, 0].argmax())
    mask = np.zeros((h, w), dtype=bool)
    mask[r0:r1, c0:c1] = (assign == brightest).reshape(crop.shape)
    return SegmentationResult(mask=mask, method="kmeans_pv", params={"bbox": list(bbox), "seed": seed})


# ---------------------------------------------------------------------------
# HSV in-range thresholding


def hsv_threshold_segment(
    pixels: np.ndarray,
    lower: tuple[float, float, float],
    upper: tuple[float, float, float],
) -> SegmentationResult:
    """Conjunction of per-channel in-range masks in HSV space.

    Hue is in degrees [0,360] and may wrap (lower hue > upper hue selects
    the arc through 0); saturation/value bounds must be ordered.
    """
    (h_lo, s_lo, v_lo), (h_hi, s_hi, v_hi) = lower, upper
    for name, lo, hi in (("saturation", s_lo, s_hi), ("value", v_lo, v_hi)):
        if lo > hi:
            raise ValidationError(f"{name} bounds are disjoint: {lo} > {hi}")
        if lo < 0 or hi > 1:
            raise ValidationError(f"{name} bounds must lie in [0,1]")
    if not (0 <= h_lo <= 360 and 0 <= h_hi <= 360):
        raise ValidationError("hue bounds must lie in [0,360]")

    hsv = cv2.cvtColor(np.asarray(pixels, dtype=np.float32), cv2.COLOR_RGB2HSV)
    hue, sat, val = hsv[:, :, 0], hsv[:, :, 1], hsv[:, :, 2]
    if h_lo <= h_hi:
        h_mask = (hue >= h_lo) & (hue <= h_hi)
    else:
        h_mask = (hue >= h_lo) | (hue <= h_hi)
    mask = h_mask & (sat >= s_lo) & (sat <= s_hi) & (val >= v_lo) & (val <= v_hi)
    return SegmentationResult(
        mask=mask, method="hsv_threshold", params={"lower": list(lower), "upper": list(upper)}
    )


# ---------------------------------------------------------------------------
# multilevel Otsu


def gray_levels(pixels: np.ndarray) -> np.ndarray:
    """Quantize the channel-mean intensity to 8-bit levels."""
    gray = np.asarray(pixels, dtype=np.float64)
    if gray.ndim == 3:
        gray = gray.mean(axis=2)
    return np.clip(np.round(gray * 255.0), 0, 255).astype(np.int64)


def multilevel_otsu_thresholds(hist: np.ndarray, n_thresholds: int) -> list[float]:
    """Thresholds maximizing between-class variance, exactly.

    Uses integer cumulative moments with rational arithmetic, so optima and
    tie-breaks (lexicographically smallest tuple) are exact. Thresholds are
    midpoints between adjacent occupied levels, on the 0..255 scale.
    """
    hist = np.asarray(hist, dtype=np.int64)
    vals = np.flatnonzero(hist)
    if len(vals) < n_thresholds + 1:
        raise SegmentationFailure(
            f"{len(vals)} distinct gray levels cannot support {n_thresholds} thresholds"
        )
    counts = hist[vals].tolist()
    weighted = [int(v) * int(c) for v, c in zip(vals.tolist(), counts)]
    m = len(vals)
    cum_p = np.concatenate([[0], np.cumsum(counts)])
    cum_s = np.concatenate([[0], np.cumsum(weighted)])

    def term(i: int, j: int) -> Fraction:
        # sum_k p_k mu_k^2 contribution of the class covering levels i..j
        p = int(cum_p[j + 1] - cum_p[i])
        s = int(cum_s[j + 1] - cum_s[i])
        return Fraction(s * s, p)

    n_classes = n_thresholds + 1
    # suffix[c][i]: best value partitioning levels i.. into c classes
    suffix = [[None] * (m + 1) for _ in range(n_classes + 1)]
    suffix[1] = [term(i, m - 1) for i in range(m)] + [None]
    for c in range(2, n_classes + 1):
        for i in range(m - c, -1, -1):
            best = None
            for j in range(i, m - c + 1):
                cand = term(i, j) + suffix[c - 1][j + 1]
                if best is None or cand > best:
                    best = cand
            suffix[c][i] = best

    # greedy left-to-right reconstruction keeps the lexicographically
    # smallest optimal tuple
    boundaries = []
    pos, remaining = 0, suffix[n_classes][0]
    for c in range(n_classes, 1, -1):
        for j in range(pos, m - c + 1):
            if term(pos, j) + suffix[c - 1][j + 1] == remaining:
                boundaries.append(j)
                remaining -= term(pos, j)
                pos = j + 1
                break
    return [(float(vals[j]) + float(vals[j + 1])) / 2.0 for j in boundaries]


def multilevel_otsu_segment(
    pixels: np.ndarray, n_thresholds: int = 2, opening_radius: int = 1
) -> SegmentationResult:
    """Binarize at the largest Otsu threshold, then open with a disk."""
    if not 1 <= n_thresholds <= 4:
        raise ValidationError("n_thresholds must be in 1..4")
    if opening_radius < 0:
        raise ValidationError("opening_radius must be >= 0")
    levels = gray_levels(pixels)
    hist = np.bincount(levels.ravel(), minlength=256)
    thresholds = multilevel_otsu_thresholds(hist, n_thresholds)
    mask = levels > thresholds[-1]
    if opening_radius > 0:
        mask = binary_opening_disk(mask, opening_radius)
    return SegmentationResult(
        mask=mask,
        method="multilevel_otsu",
        params={
            "n_thresholds": n_thresholds,
            "opening_radius": opening_radius,
            "thresholds": thresholds,
        },
    )


def disk_element(radius: int) -> np.ndarray:
    span = np.arange(-radius, radius + 1)
    yy, xx = np.meshgrid(span, span, indexing="ij")
    return (yy**2 + xx**2) <= radius**2


def binary_opening_disk(mask: np.ndarray, radius: int) -> np.ndarray:
    return ndimage.binary_opening(mask, structure=disk_element(radius))


# ---------------------------------------------------------------------------
# Dice


def dice_compare(result: SegmentationResult | np.ndarray, truth: np.ndarray) -> float:
    """2|A∩B| / (|A|+|B|); defined as 1.0 when both masks are empty."""
    mask = result.mask if isinstance(result, SegmentationResult) else result
    mask = np.asarray(mask).astype(bool)
    truth = np.asarray(truth).astype(bool)
    if mask.shape != truth.shape:
        raise ValidationError(f"mask shapes differ: {mask.shape} vs {truth.shape}")
    total = int(mask.sum()) + int(truth.sum())
    if total == 0:
        return 1.0
    return 2.0 * int((mask & truth).sum()) / total
