"""Render one voxel shape three ways: silhouette, depth, and part-labelled.

Run: python3 demos/01_projections.py [out_dir]
Writes PGM images you can open in any image viewer.
"""
import sys
from pathlib import Path

import numpy as np

from voxproj import ProjectionConfig, Viewpoint, project, write_image_pgm
from voxproj.shapes import box_grid, sphere_grid

out = Path(sys.argv[1] if len(sys.argv) > 1 else "demo_out/projections")
out.mkdir(parents=True, exist_ok=True)
n = 32

# A "mushroom": sphere cap on a box stem, as two part channels.
cap = np.asarray(sphere_grid(n, 9, center=(15.5, 20, 15.5)))[0]
stem = np.asarray(box_grid(n, (13, 4, 13), (19, 16, 19)))[0]
stem = stem * (cap == 0)
parts = np.stack([cap, stem])
occupancy = parts.max(axis=0)

cfg = ProjectionConfig()  # trilinear, 2x ray supersampling, tau = 1
view = Viewpoint.from_degrees(20, 45)

sil = project("silhouette", occupancy, view, cfg)
depth = project("depth", occupancy, view, cfg)
sem = project("semantic", parts, view, cfg)

# Silhouette: 1 - exp(-sum of occupancy along the ray)
print("silhouette range  %.3f .. %.3f" % (sil.min(), sil.max()))
# Depth: 1 - exp(-sum of accessibility). Every empty voxel in front of the
# surface adds ~1 to that sum, so at n = 32 the raw values crowd near 1;
# -log(1 - d) recovers the sum, roughly the distance to the first surface.
ray_sum = -np.log1p(-np.minimum(depth, 1 - 1e-15))
hit = sil > 0.5
print("depth ray sums on the shape  %.1f .. %.1f voxels" % (ray_sum[hit].min(), ray_sum[hit].max()))
print("empty-ray depth   %.6f (1 - e^-%d)" % (depth[0, 0], n))
# Semantic: every channel is weighted by the accessibility of the union,
# so hidden stem voxels don't bleed through the cap
print("cap / stem pixels above 0.5: %d / %d" % ((sem[0] > 0.5).sum(), (sem[1] > 0.5).sum()))

write_image_pgm(sil, out / "silhouette.pgm")
write_image_pgm(depth, out / "depth.pgm")
for c, name in enumerate(["cap", "stem"]):
    write_image_pgm(sem[c], out / f"semantic_{name}.pgm")
print("wrote", sorted(p.name for p in out.iterdir()))
