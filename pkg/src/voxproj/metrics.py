"""Set-level shape metrics: MMD over binarized samples and aligned IoU coverage/accuracy."""

from __future__ import annotations

import math
from typing import NamedTuple, Sequence

import numpy as np

from .core import ProjectionConfig, ViewpointSet
from .projection import rotate_grid

__all__ = [
    "binarize",
    "hamming_mean",
    "mmd",
    "iou",
    "align_best_rotation",
    "chamfer_iou",
    "ChamferIoU",
    "IMAGE_BANDWIDTH",
    "GRID_BANDWIDTH",
    "GENERATED_THRESHOLD",
    "DENSE_GRID_THRESHOLD",
]

IMAGE_BANDWIDTH = 1e-3
GRID_BANDWIDTH = 1e-2
GENERATED_THRESHOLD = 1e-3
DENSE_GRID_THRESHOLD = 0.1


def binarize(values, threshold: float) -> np.ndarray:
    """1 where ``values > threshold`` (strict), else 0, as ``uint8``."""
    if not 0 < threshold < 1:
        raise ValueError("threshold must lie in (0, 1)")
    return (np.asarray(values) > threshold).astype(np.uint8)


def _pair(a, b):
    a, b = np.asarray(a), np.asarray(b)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    return a.astype(bool), b.astype(bool)


def hamming_mean(a, b) -> float:
    """Fraction of differing elements between two equal-shaped binary arrays."""
    a, b = _pair(a, b)
    return np.count_nonzero(a != b) / a.size


def _as_set(items: Sequence) -> np.ndarray:
    if len(items) == 0:
        raise ValueError("shape set must be non-empty")
    arrays = [np.asarray(x) for x in items]
    shape = arrays[0].shape
    if any(x.shape != shape for x in arrays):
        raise ValueError("all items in a shape set must share one shape")
    flat = np.stack([x.reshape(-1) for x in arrays])
    if not np.all((flat == 0) | (flat == 1)):
        raise ValueError("shape set items must be binary")
    return flat.astype(np.float64)


def _hamming_matrix(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    # exact: entries are integer counts well below 2**53
    counts = x.sum(axis=1)[:, None] + y.sum(axis=1)[None, :] - 2.0 * (x @ y.T)
    return counts / x.shape[1]


def _kernel_mean(x: np.ndarray, y: np.ndarray, bandwidth: float) -> float:
    k = np.exp(-_hamming_matrix(x, y) / bandwidth)
    return math.fsum(k.ravel()) / k.size


def mmd(set_a: Sequence, set_b: Sequence, bandwidth: float) -> float:
    """Biased squared MMD with the kernel ``exp(-hamming_mean(x, y) / bandwidth)``.

    Items must be binary arrays of one shape (binarize first). Kernel means
    are summed with :func:`math.fsum`, so the result is exactly symmetric
    in its arguments and exactly zero for identical sets.
    """
    if not bandwidth > 0:
        raise ValueError("bandwidth must be positive")
    x, y = _as_set(set_a), _as_set(set_b)
    if x.shape[1] != y.shape[1]:
        raise ValueError("sets have different item shapes")
    kxx = _kernel_mean(x, x, bandwidth)
    kyy = _kernel_mean(y, y, bandwidth)
    kxy = _kernel_mean(x, y, bandwidth)
    return max((kxx + kyy) - 2.0 * kxy, 0.0)


def iou(a, b) -> float:
    """Intersection over union of two binary arrays; two empty arrays score 1."""
    a, b = _pair(a, b)
    union = np.count_nonzero(a | b)
    if union == 0:
        return 1.0
    return np.count_nonzero(a & b) / union


_ALIGN_CFG = ProjectionConfig(resampling="nearest", supersample=1)


def _rotations(g: np.ndarray, count: int = 8) -> list:
    g = np.asarray(g)
    return [
        rotate_grid(g.astype(np.float64), view, _ALIGN_CFG) > 0.5
        for view in ViewpointSet.evenly_spaced(count)
    ]


def _check_cubic(a):
    a = np.asarray(a)
    if a.ndim != 3 or not (a.shape[0] == a.shape[1] == a.shape[2]):
        raise ValueError(f"expected a cubic (n, n, n) grid, got shape {a.shape}")
    return a


def align_best_rotation(g, x) -> tuple:
    """Rotate ``g`` by each of the eight azimuths and keep the best IoU with ``x``.

    Returns ``(view_index, iou)``; ties go to the lowest index.
    """
    g, x = _check_cubic(g), _check_cubic(x)
    if g.shape != x.shape:
        raise ValueError(f"shape mismatch: {g.shape} vs {x.shape}")
    scores = [iou(r, x) for r in _rotations(g)]
    best = int(np.argmax(scores))
    return best, scores[best]


class ChamferIoU(NamedTuple):
    coverage: float
    accuracy: float
    average: float


def chamfer_iou(set_g: Sequence, set_d: Sequence) -> ChamferIoU:
    """Coverage (dataset -> generated) and accuracy (generated -> dataset) under aligned IoU.

    For each pair the generated shape is rotated to its best azimuth before
    scoring. Coverage averages, over dataset shapes, the best score against
    any generated shape; accuracy does the reverse.
    """
    if len(set_g) == 0 or len(set_d) == 0:
        raise ValueError("shape sets must be non-empty")
    gs = [_check_cubic(g) for g in set_g]
    ds = [_check_cubic(x).astype(bool) for x in set_d]
    rotated = [_rotations(g) for g in gs]
    scores = np.empty((len(gs), len(ds)))
    for i, rots in enumerate(rotated):
        for j, x in enumerate(ds):
            scores[i, j] = max(iou(r, x) for r in rots)
    coverage = float(np.mean(scores.max(axis=0)))
    accuracy = float(np.mean(scores.max(axis=1)))
    return ChamferIoU(coverage, accuracy, (coverage + accuracy) / 2)
