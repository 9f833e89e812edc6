import numpy as np
import pytest

from voxproj.shapes import box_mesh, sphere_mesh

# (criterion number, passed, detail) rows filled in by test_acceptance.py
ACCEPTANCE = []


def write_obj(path, vertices, triangles, quads=()):
    with open(path, "w") as f:
        for v in vertices:
            f.write("v %.17g %.17g %.17g\n" % tuple(v))
        for t in triangles:
            f.write("f %d %d %d\n" % tuple(np.asarray(t) + 1))
        for q in quads:
            f.write("f %d %d %d %d\n" % tuple(np.asarray(q) + 1))


@pytest.fixture
def mesh_dir(tmp_path):
    d = tmp_path / "meshes"
    d.mkdir()
    write_obj(d / "cube.obj", *box_mesh())
    write_obj(d / "ball.obj", *sphere_mesh(1.0, 12, 24))
    return d


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number, passed, detail in sorted(ACCEPTANCE):
        terminalreporter.write_line(f"criterion {number}: {'PASS' if passed else 'FAIL'}  {detail}")
