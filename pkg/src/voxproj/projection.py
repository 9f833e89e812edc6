"""Differentiable orthographic projections of occupancy grids.

Every renderer has a forward pass and a vector-Jacobian product (``*_vjp``)
returning the gradient of ``<forward(grid), upstream>`` with respect to the
voxel occupancies. All arithmetic is float64 regardless of the input dtype.

Rotation is gather-style: each destination sample reads the source grid at
``R^-1 (c - c0) + c0`` with ``R = R_y(phi) @ R_x(theta)``. A resampling
pass is a fixed sparse linear map, so it is built once per
``(n, view, mode, supersample)`` and cached.
"""

from __future__ import annotations

import math
from functools import lru_cache
from typing import Literal

import numpy as np
from scipy import sparse

from .core import ProjectionConfig, Viewpoint, as_grid_array

__all__ = [
    "rotation_matrix",
    "rotate_grid",
    "rotate_grid_vjp",
    "accessibility",
    "project_silhouette",
    "project_depth",
    "project_semantic",
    "project",
    "project_vjp",
    "project_with_vjp",
    "grad_check",
    "random_grid",
    "KINDS",
]

Kind = Literal["silhouette", "depth", "semantic"]
KINDS = ("silhouette", "depth", "semantic")


def _snap(x: float) -> float:
    # exact 0/+-1 so quarter turns become lattice permutations
    for target in (0.0, 1.0, -1.0):
        if abs(x - target) < 1e-12:
            return target
    return x


def rotation_matrix(view: Viewpoint) -> np.ndarray:
    """Elevation (about x) followed by azimuth (about y)."""
    ct, st = _snap(math.cos(view.theta)), _snap(math.sin(view.theta))
    cp, sp = _snap(math.cos(view.phi)), _snap(math.sin(view.phi))
    rx = np.array([[1.0, 0.0, 0.0], [0.0, ct, -st], [0.0, st, ct]])
    ry = np.array([[cp, 0.0, sp], [0.0, 1.0, 0.0], [-sp, 0.0, cp]])
    return ry @ rx


@lru_cache(maxsize=128)
def _sampling_map(n: int, theta: float, phi: float, mode: str, s: int):
    """Sparse gather matrix for a rotated ``(s*n, s*n, n)`` sample lattice.

    Returns ``(m, mt)``: ``m`` is CSR of shape ``((s*n)**2 * n, n**3)`` whose
    row ``d`` holds the nearest-neighbour or trilinear weights of sample
    ``d``; ``mt`` is its transpose, also CSR. Out-of-grid taps are dropped,
    which is the zero-occupancy boundary rule.
    """
    c0 = (n - 1) / 2.0
    fine = (np.arange(s * n) + 0.5) / s - 0.5
    depth = np.arange(n, dtype=np.float64)
    dx, dy, dz = np.meshgrid(fine - c0, fine - c0, depth - c0, indexing="ij")
    rinv = rotation_matrix(Viewpoint(theta, phi)).T
    src = np.einsum("ij,jxyz->xyzi", rinv, np.stack([dx, dy, dz])) + c0
    src = src.reshape(-1, 3)

    if mode == "nearest":
        corners = np.floor(src + 0.5).astype(np.int64)[:, None, :]
        weights = np.ones((src.shape[0], 1))
    else:
        base = np.floor(src)
        frac = src - base
        offsets = np.array([[a, b, c] for a in (0, 1) for b in (0, 1) for c in (0, 1)])
        corners = base.astype(np.int64)[:, None, :] + offsets
        fw = np.where(offsets == 1, frac[:, None, :], 1.0 - frac[:, None, :])
        weights = fw.prod(axis=-1)

    rows = np.broadcast_to(np.arange(src.shape[0])[:, None], weights.shape)
    keep = np.all((corners >= 0) & (corners < n), axis=-1) & (weights > 0)
    cols = (corners[..., 0] * n + corners[..., 1]) * n + corners[..., 2]
    m = sparse.csr_matrix(
        (weights[keep], (rows[keep], cols[keep])), shape=(src.shape[0], n**3)
    )
    m.sum_duplicates()
    return m, m.T.tocsr()


def _map_for(n: int, view: Viewpoint, cfg: ProjectionConfig, fine: bool):
    s = cfg.supersample if fine else 1
    mode = "trilinear" if s > 1 else cfg.resampling
    return _sampling_map(n, float(view.theta), float(view.phi), mode, int(s))


def _gather(vol: np.ndarray, maps) -> np.ndarray:
    """Resample a ``(C, n, n, n)`` volume to ``(C, s*n, s*n, n)``."""
    m = maps[0]
    c, n = vol.shape[0], vol.shape[1]
    side = int(round((m.shape[0] // n) ** 0.5))
    out = (m @ vol.reshape(c, -1).T).T
    return out.reshape(c, side, side, n)


def _scatter(upstream: np.ndarray, maps) -> np.ndarray:
    """Adjoint of :func:`_gather`."""
    mt = maps[1]
    c = upstream.shape[0]
    n = upstream.shape[-1]
    out = (mt @ upstream.reshape(c, -1).T).T
    return out.reshape(c, n, n, n)


def rotate_grid(grid, view: Viewpoint, cfg: ProjectionConfig = ProjectionConfig()) -> np.ndarray:
    """Resample ``grid`` into the frame of ``view`` on the same lattice.

    Accepts ``(n, n, n)`` or ``(C, n, n, n)``; returns the same shape.
    ``cfg.supersample`` is ignored here.
    """
    a = np.asarray(grid)
    vol = as_grid_array(a)
    maps = _map_for(vol.shape[1], view, cfg, fine=False)
    return _gather(vol, maps).reshape(a.shape)


def rotate_grid_vjp(grid, view: Viewpoint, cfg: ProjectionConfig, upstream) -> np.ndarray:
    """Transpose of the :func:`rotate_grid` resampling map applied to ``upstream``."""
    a = np.asarray(grid)
    u = np.asarray(upstream, dtype=np.float64)
    if u.shape != a.shape:
        raise ValueError(f"upstream shape {u.shape} does not match grid shape {a.shape}")
    vol = as_grid_array(u)
    maps = _map_for(vol.shape[1], view, cfg, fine=False)
    return _scatter(vol, maps).reshape(a.shape)


def _exclusive_cumsum(a: np.ndarray) -> np.ndarray:
    """``out[..., k] = sum_{l < k} a[..., l]``, accumulated in ray order."""
    out = np.zeros_like(a)
    np.cumsum(a[..., :-1], axis=-1, out=out[..., 1:])
    return out


def _suffix_sum_after(a: np.ndarray) -> np.ndarray:
    """``out[..., l] = sum_{k > l} a[..., k]`` (adjoint of the exclusive prefix sum)."""
    rev = np.cumsum(a[..., ::-1], axis=-1)[..., ::-1]
    return rev - a


def accessibility(rotated, tau: float = 1.0) -> np.ndarray:
    """``A[x, y, k] = exp(-tau * sum_{l < k} V[x, y, l])`` along the ``z`` rays.

    ``rotated`` is a single-channel grid already in the view frame, shaped
    ``(X, Y, K)`` or ``(1, X, Y, K)``; the output has shape ``(X, Y, K)``.
    """
    v = np.asarray(rotated, dtype=np.float64)
    if v.ndim == 4:
        if v.shape[0] != 1:
            raise ValueError("accessibility takes a single-channel grid")
        v = v[0]
    if v.ndim != 3:
        raise ValueError(f"expected a 3-D grid, got shape {v.shape}")
    if not tau > 0:
        raise ValueError("tau must be positive")
    return np.exp(-tau * _exclusive_cumsum(v))


def _to_image(plane: np.ndarray, s: int) -> np.ndarray:
    """``(..., X, Y)`` ray plane -> ``(..., H, W)`` upright image, box-filtered by ``s``."""
    img = np.swapaxes(plane, -1, -2)[..., ::-1, :]
    if s > 1:
        h, w = img.shape[-2] // s, img.shape[-1] // s
        img = img.reshape(img.shape[:-2] + (h, s, w, s)).mean(axis=(-3, -1))
    return img


def _to_image_vjp(img_bar: np.ndarray, s: int) -> np.ndarray:
    if s > 1:
        img_bar = np.repeat(np.repeat(img_bar, s, axis=-2), s, axis=-1) / (s * s)
    return np.swapaxes(img_bar[..., ::-1, :], -1, -2)


def _single_channel(grid) -> np.ndarray:
    vol = as_grid_array(grid)
    if vol.shape[0] != 1:
        raise ValueError(f"expected a single-channel grid, got {vol.shape[0]} channels")
    return vol


def project_with_vjp(kind: Kind, grid, view: Viewpoint, cfg: ProjectionConfig = ProjectionConfig()):
    """Forward projection plus a pullback sharing its intermediates.

    Returns ``(image, pullback)`` where ``pullback(upstream)`` is the
    gradient of ``<image, upstream>`` with respect to ``grid``, shaped like
    ``grid``.
    """
    if kind not in KINDS:
        raise ValueError(f"unknown projection kind {kind!r}")
    shape = np.shape(grid)
    vol = as_grid_array(grid) if kind == "semantic" else _single_channel(grid)
    n, s, tau = vol.shape[1], cfg.supersample, cfg.tau
    maps = _map_for(n, view, cfg, fine=True)
    rot = _gather(vol, maps)  # (C, s*n, s*n, n)

    if kind == "silhouette":
        total = rot[0].sum(axis=-1)
    elif kind == "depth":
        acc = accessibility(rot[0], tau)
        total = acc.sum(axis=-1)
    else:
        agg_raw = vol.sum(axis=0)
        agg_rot = _gather(np.minimum(agg_raw, 1.0)[None], maps)[0]
        acc = accessibility(agg_rot, tau)
        total = (rot * acc).sum(axis=-1)
    decay = np.exp(-total)
    image = _to_image(-np.expm1(-total), s)

    def pullback(upstream) -> np.ndarray:
        u = np.asarray(upstream, dtype=np.float64)
        if u.shape != image.shape:
            raise ValueError(f"upstream shape {u.shape} does not match image shape {image.shape}")
        total_bar = _to_image_vjp(u, s) * decay
        if kind == "silhouette":
            rot_bar = np.repeat(total_bar[..., None], n, axis=-1)[None]
            grad = _scatter(rot_bar, maps)
        elif kind == "depth":
            rot_bar = _suffix_sum_after(-tau * acc * total_bar[..., None])
            grad = _scatter(rot_bar[None], maps)
        else:
            rot_bar = total_bar[..., None] * acc
            acc_bar = (total_bar[..., None] * rot).sum(axis=0)
            agg_rot_bar = _suffix_sum_after(-tau * acc * acc_bar)
            # the clamp passes gradient only where the channel sum is below 1
            agg_bar = _scatter(agg_rot_bar[None], maps)[0] * (agg_raw < 1.0)
            grad = _scatter(rot_bar, maps) + agg_bar
        return grad.reshape(shape)

    return image, pullback


def project_silhouette(grid, view: Viewpoint, cfg: ProjectionConfig = ProjectionConfig()) -> np.ndarray:
    """Silhouette image ``1 - exp(-sum_k V_rot[x, y, k])`` of a single-channel grid."""
    return project_with_vjp("silhouette", grid, view, cfg)[0]


def project_depth(grid, view: Viewpoint, cfg: ProjectionConfig = ProjectionConfig()) -> np.ndarray:
    """Depth image ``1 - exp(-sum_k A[x, y, k])``.

    Larger values mean more accessible voxels in front of the surface, i.e.
    a farther surface; empty rays approach ``1 - exp(-n)``.
    """
    return project_with_vjp("depth", grid, view, cfg)[0]


def project_semantic(grid, view: Viewpoint, cfg: ProjectionConfig = ProjectionConfig()) -> np.ndarray:
    """Per-part images ``1 - exp(-sum_k V_rot[c, x, y, k] * A(G)[x, y, k])``.

    ``G`` is the channel sum clamped to 1, so a part is only visible where
    no other part occludes it. Returns shape ``(C, n, n)``.
    """
    return project_with_vjp("semantic", grid, view, cfg)[0]


def project(kind: Kind, grid, view: Viewpoint, cfg: ProjectionConfig = ProjectionConfig()) -> np.ndarray:
    return project_with_vjp(kind, grid, view, cfg)[0]


def project_vjp(kind: Kind, grid, view: Viewpoint, cfg: ProjectionConfig, upstream) -> np.ndarray:
    """Gradient of ``<project(kind, grid), upstream>`` with respect to ``grid``."""
    return project_with_vjp(kind, grid, view, cfg)[1](upstream)


def grad_check(
    kind: Kind,
    grid,
    view: Viewpoint,
    cfg: ProjectionConfig = ProjectionConfig(),
    eps: float = 1e-3,
    seed: int = 0,
) -> float:
    """Worst relative error between :func:`project_vjp` and central differences.

    The scalar loss is ``<project(kind, grid), u>`` for a fixed random ``u``
    drawn from ``seed``. Every voxel is perturbed by ``+-eps``; the relative
    error uses ``max(|a|, |b|, 1e-12)`` as denominator.
    """
    if not eps > 0:
        raise ValueError("eps must be positive")
    g = np.array(grid, dtype=np.float64)
    out_shape = project(kind, g, view, cfg).shape
    u = np.random.default_rng(seed).uniform(-1.0, 1.0, size=out_shape)
    analytic = project_vjp(kind, g, view, cfg, u)

    def loss(x):
        return float(np.sum(project(kind, x, view, cfg) * u))

    numeric = np.empty_like(g)
    flat = g.reshape(-1)
    num_flat = numeric.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + eps
        up = loss(g)
        flat[i] = orig - eps
        down = loss(g)
        flat[i] = orig
        num_flat[i] = (up - down) / (2 * eps)

    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), 1e-12)
    return float(np.max(np.abs(analytic - numeric) / denom))


def random_grid(rng: np.random.Generator, n: int, channels: int = 1) -> np.ndarray:
    """Uniform random ``(channels, n, n, n)`` occupancy for gradient checks.

    For several channels, voxels whose channel sum lies within 0.05 of 1
    are scaled by 0.9 so a finite-difference step never straddles the
    clamp on the aggregated grid.
    """
    g = rng.uniform(0.0, 1.0, size=(channels, n, n, n))
    if channels > 1:
        near = np.abs(g.sum(axis=0) - 1.0) < 0.05
        g[:, near] *= 0.9
    return g
