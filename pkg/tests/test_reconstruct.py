import numpy as np
import pytest

from voxproj.core import ProjectionConfig, Viewpoint, ViewpointSet
from voxproj.projection import _map_for, project
from voxproj.reconstruct import ReconProblem, Target, evaluate_recon, reconstruct, visual_hull
from voxproj.shapes import box_grid, sphere_grid

NEAREST = ProjectionConfig(resampling="nearest", supersample=1)


def _problem(truth, kind="silhouette", views=ViewpointSet(), cfg=NEAREST):
    views = list(views)
    return ReconProblem([Target(project(kind, truth, v, cfg), v, kind) for v in views], np.shape(truth)[-1], cfg)


def test_zero_iterations_is_a_no_op():
    problem = _problem(box_grid(8, (2, 2, 2), (6, 6, 6)))
    report = reconstruct(problem, iters=0)
    assert len(report.loss_curve) == 1 and report.loss_curve[0][0] == 0
    assert np.allclose(np.asarray(report.grid), 0.5, atol=0.01)


def test_loss_curve_is_non_increasing_and_deterministic():
    problem = _problem(sphere_grid(12, 4))
    a = reconstruct(problem, iters=40, seed=3)
    b = reconstruct(problem, iters=40, seed=3)
    losses = [loss for _, loss in a.loss_curve]
    assert [it for it, _ in a.loss_curve] == list(range(41))
    assert all(y <= x for x, y in zip(losses, losses[1:]))
    assert losses[-1] < losses[0] / 10
    assert a.loss_curve == b.loss_curve
    assert a.grid == b.grid
    assert len(a.residuals) == 8


def test_semantic_problem_runs():
    truth = np.zeros((2, 8, 8, 8))
    truth[0, 2:4, 2:6, 2:6] = 1
    truth[1, 4:6, 2:6, 2:6] = 1
    report = reconstruct(_problem(truth, "semantic"), iters=10)
    assert np.asarray(report.grid).shape == (2, 8, 8, 8)
    assert report.final_loss < report.loss_curve[0][1]


def test_problem_validation():
    img = np.zeros((8, 8))
    with pytest.raises(ValueError):
        ReconProblem([], 8)
    with pytest.raises(ValueError):
        ReconProblem([Target(img, Viewpoint()), Target(img, Viewpoint(), "depth")], 8)
    with pytest.raises(ValueError):
        ReconProblem([Target(img, Viewpoint())], 6)
    with pytest.raises(ValueError):
        reconstruct(ReconProblem([Target(img, Viewpoint())], 8), iters=-1)


def test_visual_hull_trivial_cases():
    views = list(ViewpointSet())
    full = visual_hull([np.ones((6, 6))], views[:1], 6)
    assert np.asarray(full).all()
    sils = [np.ones((6, 6))] * 7 + [np.zeros((6, 6))]
    assert not np.asarray(visual_hull(sils, views, 6)).any()
    with pytest.raises(ValueError):
        visual_hull([np.full((6, 6), 0.5)], views[:1], 6)


def test_visual_hull_contains_truth():
    rng = np.random.default_rng(4)
    views = list(ViewpointSet())
    for _ in range(3):
        truth = (rng.uniform(size=(10, 10, 10)) > 0.8).astype(float)
        truth[:2] = truth[-2:] = 0
        sils = [(project("silhouette", truth, v, NEAREST) > 0).astype(float) for v in views]
        hull = np.asarray(visual_hull(sils, views, 10))[0]
        # voxels some ray sample reads in every view show up in every silhouette
        visible = np.ones(truth.shape, bool)
        for v in views:
            mt = _map_for(10, v, NEAREST, fine=True)[1]
            visible &= (np.diff(mt.indptr) > 0).reshape(truth.shape)
        assert np.all(hull[visible] >= truth[visible])


def test_evaluate_recon_examples():
    s = sphere_grid(10, 3)
    assert evaluate_recon(s, s) == 1.0
    assert evaluate_recon(np.zeros((1, 10, 10, 10)), s) == 0.0
    with pytest.raises(ValueError):
        evaluate_recon(np.zeros((1, 8, 8, 8)), s)
