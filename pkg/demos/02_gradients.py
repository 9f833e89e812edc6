"""Check analytic projection gradients against central finite differences.

Run: python3 demos/02_gradients.py
"""
import numpy as np

from voxproj import ProjectionConfig, ViewpointSet, grad_check, project_vjp
from voxproj.projection import random_grid

rng = np.random.default_rng(0)
views = ViewpointSet()
cfg = ProjectionConfig()

for kind, channels in [("silhouette", 1), ("depth", 1), ("semantic", 3)]:
    grid = random_grid(rng, 6, channels)
    errs = [grad_check(kind, grid, views[j], cfg, eps=1e-3, seed=j) for j in (0, 3, 5)]
    print("%-10s worst relative error over 3 views: %.2e" % (kind, max(errs)))

# The residual at eps = 1e-3 is finite-difference truncation, not a wrong
# gradient: shrinking eps shrinks it roughly quadratically.
grid = random_grid(rng, 5, 3)
for eps in (1e-2, 1e-3, 1e-4):
    print("semantic eps=%g -> %.2e" % (eps, grad_check("semantic", grid, views[1], cfg, eps=eps)))

# Where does a silhouette pixel get its gradient from? Every voxel its ray
# passes through, scaled by exp(-ray sum).
g = np.zeros((6, 6, 6))
g[2, 3, :] = 0.5
up = np.zeros((6, 6))
up[6 - 1 - 3, 2] = 1.0
grad = project_vjp("silhouette", g, views[0], ProjectionConfig(resampling="nearest", supersample=1), up)
print("gradient along the ray:", np.round(grad[2, 3], 4), " exp(-3) =", round(np.exp(-3), 4))
