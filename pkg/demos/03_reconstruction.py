"""Recover a sphere from 8 silhouettes, and compare with the visual hull.

Then show why depth supervision helps on a shape with a camera-facing pocket.
Run: python3 demos/03_reconstruction.py  (about a minute)
"""
import time


from voxproj import ProjectionConfig, ReconProblem, Target, ViewpointSet, evaluate_recon, project, visual_hull
from voxproj.reconstruct import reconstruct
from voxproj.shapes import pocket_box_grid, sphere_grid

views = list(ViewpointSet())
n = 32

# --- sphere from silhouettes ------------------------------------------------
cfg = ProjectionConfig(resampling="nearest", supersample=1)
sphere = sphere_grid(n, 10)
sils = [project("silhouette", sphere, v, cfg) for v in views]
hull = visual_hull([(s > 0).astype(float) for s in sils], views, n, cfg)

t = time.time()
report = reconstruct(ReconProblem([Target(s, v) for s, v in zip(sils, views)], n, cfg), iters=400, step=50.0)
print("sphere: %.1fs, loss %.3g -> %.3g" % (time.time() - t, report.loss_curve[0][1], report.final_loss))
print("  hull vs sphere IoU          %.3f" % evaluate_recon(hull, sphere))
print("  reconstruction vs hull IoU  %.3f" % evaluate_recon(report.grid, hull))
for it, loss in report.loss_curve[::100]:
    print("  iter %3d  loss %.4g" % (it, loss))

# --- a pocket the silhouettes cannot see ------------------------------------
# An open box with its mouth toward the view-0 camera. No silhouette shows the
# hole; depth images do, because the visible surface inside it is farther away.
cfg = ProjectionConfig(supersample=1)
box = pocket_box_grid(n, (1, 1, 1), (n - 1, n - 1, n - 1), 2)
for kind in ("silhouette", "depth"):
    targets = [Target(project(kind, box, v, cfg), v, kind) for v in views]
    r = reconstruct(ReconProblem(targets, n, cfg), iters=400, step=50.0)
    print("open box, %-10s supervision: IoU %.3f" % (kind, evaluate_recon(r.grid, box)))
