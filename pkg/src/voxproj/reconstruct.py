"""Multi-view shape recovery by gradient descent through the projections, plus a visual hull."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .core import ProjectionConfig, Viewpoint, VoxelGrid
from .metrics import binarize, iou
from .projection import KINDS, _map_for, _to_image_vjp, project_with_vjp, rotation_matrix

__all__ = [
    "Target",
    "ReconProblem",
    "ReconReport",
    "reconstruct",
    "visual_hull",
    "evaluate_recon",
]

log = logging.getLogger(__name__)

MAX_HALVINGS = 10
GROWTH = 2.0


@dataclass(frozen=True)
class Target:
    image: np.ndarray
    view: Viewpoint
    kind: str = "silhouette"


@dataclass
class ReconProblem:
    """Images of one shape from known views; every target shares kind and size."""

    targets: Sequence[Target]
    n: int
    cfg: ProjectionConfig = field(default_factory=ProjectionConfig)

    def __post_init__(self):
        if not self.targets:
            raise ValueError("a reconstruction problem needs at least one target")
        kinds = {t.kind for t in self.targets}
        if len(kinds) != 1 or not kinds <= set(KINDS):
            raise ValueError(f"targets must share one known kind, got {sorted(kinds)}")
        shapes = {np.shape(t.image) for t in self.targets}
        if len(shapes) != 1:
            raise ValueError("targets must share one image shape")
        shape = shapes.pop()
        if shape[-2:] != (self.n, self.n):
            raise ValueError(f"target images are {shape[-2:]}, expected ({self.n}, {self.n})")
        if self.kind == "semantic" and len(shape) != 3:
            raise ValueError("semantic targets must be (C, n, n) arrays")
        if self.kind != "semantic" and len(shape) != 2:
            raise ValueError(f"{self.kind} targets must be (n, n) arrays")

    @property
    def kind(self) -> str:
        return self.targets[0].kind

    @property
    def channels(self) -> int:
        shape = np.shape(self.targets[0].image)
        return shape[0] if len(shape) == 3 else 1


@dataclass
class ReconReport:
    grid: VoxelGrid
    loss_curve: list  # (iteration, loss) pairs, iteration 0 is the initial field
    residuals: list  # per-target mean squared pixel error at the final iterate

    @property
    def final_loss(self) -> float:
        return self.loss_curve[-1][1]


def _sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def _objective(logits: np.ndarray, problem: ReconProblem):
    occ = _sigmoid(logits)
    grad_occ = np.zeros_like(occ)
    per_view = []
    for t in problem.targets:
        img, pullback = project_with_vjp(t.kind, occ, t.view, problem.cfg)
        diff = img - np.asarray(t.image, dtype=np.float64)
        per_view.append(float(np.mean(diff * diff)))
        grad_occ += pullback(2.0 * diff / diff.size)
    loss = math.fsum(per_view)
    return loss, grad_occ * occ * (1.0 - occ), per_view


def reconstruct(
    problem: ReconProblem,
    iters: int = 400,
    step: float = 50.0,
    seed: int = 0,
    growth: float = GROWTH,
) -> ReconReport:
    """Fit a sigmoid-parameterized occupancy field to the targets by gradient descent.

    The objective is the per-target mean squared pixel error, summed over
    targets. The logit field starts at 0 (occupancy 0.5) plus uniform noise
    of amplitude 0.01 drawn from ``seed``. A step that raises the loss is
    retried at half the step size, at most ten times per iteration; if all
    retries fail the iterate is left unchanged. An accepted step multiplies
    the step size by ``growth``, so the loss curve never increases.
    """
    if iters < 0:
        raise ValueError("iters must be >= 0")
    if not step > 0:
        raise ValueError("step must be positive")
    rng = np.random.default_rng(seed)
    shape = (problem.channels, problem.n, problem.n, problem.n)
    if problem.kind != "semantic":
        shape = shape[1:]
    logits = rng.uniform(-0.01, 0.01, size=shape)

    loss, grad, per_view = _objective(logits, problem)
    curve = [(0, loss)]
    for it in range(1, iters + 1):
        for _ in range(MAX_HALVINGS + 1):
            cand = logits - step * grad
            c_loss, c_grad, c_per_view = _objective(cand, problem)
            if c_loss <= loss:
                logits, loss, grad, per_view = cand, c_loss, c_grad, c_per_view
                step *= growth
                break
            step *= 0.5
            log.debug("iteration %d: loss rose, step halved to %g", it, step)
        curve.append((it, loss))

    occ = _sigmoid(logits).astype(np.float32)
    return ReconReport(VoxelGrid(occ), curve, per_view)


_HULL_CFG = ProjectionConfig(resampling="nearest", supersample=1)


def visual_hull(
    silhouettes: Sequence,
    views: Sequence[Viewpoint],
    n: int,
    cfg: ProjectionConfig = _HULL_CFG,
) -> VoxelGrid:
    """Carve an ``n^3`` grid with binary silhouettes taken from known views.

    A voxel is removed when any ray sample that reads it (through the same
    resampling map the projections use) lands on a zero pixel. A voxel that
    no sample reads in some view is removed when the pixel under its
    rotated center is zero or outside the image frame.
    """
    sils = [np.asarray(s) for s in silhouettes]
    views = list(views)
    if len(sils) != len(views):
        raise ValueError(f"{len(sils)} silhouettes for {len(views)} views")
    if not sils:
        raise ValueError("need at least one silhouette")
    if any(s.shape != (n, n) for s in sils):
        raise ValueError(f"silhouettes must all be ({n}, {n})")
    if not all(np.all((s == 0) | (s == 1)) for s in sils):
        raise ValueError("silhouettes must be binary")

    s = cfg.supersample
    keep = np.ones(n**3, dtype=bool)
    c0 = (n - 1) / 2.0
    centers = np.stack(np.meshgrid(*(np.arange(n) - c0,) * 3, indexing="ij"), axis=-1).reshape(-1, 3)
    for sil, view in zip(sils, views):
        m, mt = _map_for(n, view, cfg, fine=True)
        empty = _to_image_vjp(1.0 - sil.astype(np.float64), s) > 0  # (s*n, s*n) ray plane
        empty_samples = np.repeat(empty[..., None], n, axis=-1).ravel().astype(np.float64)
        carved = (mt @ empty_samples) > 0
        read = np.diff(mt.indptr) > 0
        # voxels no sample reads: test the pixel under the rotated center
        rotated = centers @ rotation_matrix(view).T + c0
        px = np.floor(rotated[:, :2] + 0.5).astype(np.int64)
        inside = np.all((px >= 0) & (px < n), axis=1)
        lit = np.zeros(n**3, dtype=bool)
        lit[inside] = sil[n - 1 - px[inside, 1], px[inside, 0]] > 0
        keep &= ~carved & (read | lit)
    return VoxelGrid(keep.reshape(n, n, n).astype(np.float32))


def evaluate_recon(result, ground_truth, threshold: float = 0.5) -> float:
    """IoU between binarized ``result`` and binarized ``ground_truth``."""
    a, b = np.asarray(result), np.asarray(ground_truth)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    return iou(binarize(a, threshold), binarize(b, threshold))
