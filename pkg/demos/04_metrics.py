"""Compare shape sets with MMD and with rotation-aligned IoU coverage/accuracy.

Run: python3 demos/04_metrics.py
"""
import numpy as np

from voxproj import ProjectionConfig, ViewpointSet, align_best_rotation, binarize, chamfer_iou, iou, mmd, rotate_grid
from voxproj.metrics import GRID_BANDWIDTH
from voxproj.shapes import box_grid, sphere_grid

n = 16
cubes = [np.asarray(box_grid(n, (2, 2, 2), (6 + k, 6 + k, 6 + k)))[0] for k in range(4)]
balls = [np.asarray(sphere_grid(n, r))[0] for r in (3, 4, 5, 6)]

print("MMD cubes vs cubes (reordered): %.4f" % mmd(cubes, cubes[::-1], GRID_BANDWIDTH))
print("MMD cubes vs balls:             %.4f" % mmd(cubes, balls, GRID_BANDWIDTH))

r = chamfer_iou(cubes, balls)
print("cubes vs balls: coverage %.3f accuracy %.3f avg %.3f" % r)
print("balls vs balls:", tuple(chamfer_iou(balls, balls)))

# Alignment: a rotated copy scores 1 once the matching azimuth is found.
l_shape = np.zeros((n, n, n))
l_shape[3:12, 3:5, 3:6] = 1
l_shape[3:5, 3:12, 3:6] = 1
turned = binarize(rotate_grid(l_shape, ViewpointSet()[6], ProjectionConfig(resampling="nearest", supersample=1)), 0.5)
print("unaligned IoU %.3f, aligned (index, IoU) = %s" % (iou(l_shape, turned), align_best_rotation(l_shape, turned)))
