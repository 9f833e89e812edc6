import subprocess
import sys

import pytest

from voxproj.cli import main
from voxproj.core import VoxelGrid, read_grid, write_grid
from voxproj.shapes import box_grid, sphere_grid


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def test_voxelize(capsys, mesh_dir, tmp_path):
    code, out, _ = run(capsys, "voxelize", "--in", str(mesh_dir / "cube.obj"), "--out", str(tmp_path / "g"), "--n", "16", "--solid")
    assert code == 0
    shape_id, occ = out.split()
    assert shape_id == "cube"
    assert 14**3 <= int(occ.split("=")[1]) <= 16**3
    first = (tmp_path / "g" / "cube.voxg").read_bytes()
    run(capsys, "voxelize", "--in", str(mesh_dir / "cube.obj"), "--out", str(tmp_path / "g"), "--n", "16", "--solid")
    assert (tmp_path / "g" / "cube.voxg").read_bytes() == first


def test_missing_input_exits_1(capsys, tmp_path):
    code, _, err = run(capsys, "voxelize", "--in", str(tmp_path / "nope"), "--out", str(tmp_path / "g"))
    assert code == 1 and "nope" in err


def test_render_defaults(capsys, tmp_path):
    write_grid(sphere_grid(32, 10), tmp_path / "s.voxg")
    code, _, _ = run(capsys, "render", "--grid", str(tmp_path / "s.voxg"), "--out", str(tmp_path / "r"))
    assert code == 0
    rows = (tmp_path / "r" / "manifest.tsv").read_text().splitlines()
    assert len(rows) == 8
    assert len(list((tmp_path / "r" / "images").glob("*.pgm"))) == 8


def test_render_depth_of_empty_grid_saturates(capsys, tmp_path):
    write_grid(VoxelGrid.zeros(32), tmp_path / "e.voxg")
    run(capsys, "render", "--grid", str(tmp_path / "e.voxg"), "--out", str(tmp_path / "r"), "--kind", "depth")
    img = (tmp_path / "r" / "images" / "e_v0.pgm").read_bytes()
    assert set(img[-32 * 32 :]) == {255}


def test_render_three_views(capsys, tmp_path):
    write_grid(sphere_grid(8, 3), tmp_path / "s.voxg")
    run(capsys, "render", "--grid", str(tmp_path / "s.voxg"), "--out", str(tmp_path / "r"), "--views", "3")
    phis = [row.split("\t")[3] for row in (tmp_path / "r" / "manifest.tsv").read_text().splitlines()]
    assert phis == ["0", "120", "240"]


def test_reconstruct_flags(capsys, tmp_path):
    write_grid(sphere_grid(12, 4), tmp_path / "s.voxg")
    run(capsys, "render", "--grid", str(tmp_path / "s.voxg"), "--out", str(tmp_path / "r"))
    manifest = str(tmp_path / "r" / "manifest.tsv")
    code, out, _ = run(
        capsys, "reconstruct", "--manifest", manifest, "--shape", "s", "--out", str(tmp_path / "rec.voxg"),
        "--iters", "30", "--losscurve", str(tmp_path / "lc.tsv"), "--truth", str(tmp_path / "s.voxg"),
    )
    assert code == 0
    assert out.startswith("loss=") and "iou=" in out
    lines = (tmp_path / "lc.tsv").read_text().splitlines()
    assert len(lines) == 31 and lines[0].split("\t")[0] == "0"
    assert read_grid(tmp_path / "rec.voxg").n == 12

    code, _, _ = run(capsys, "reconstruct", "--manifest", manifest, "--shape", "zzz", "--out", str(tmp_path / "x"))
    assert code == 1
    with pytest.raises(SystemExit) as exc:
        main(["reconstruct", "--manifest", manifest, "--shape", "s", "--out", "x", "--iters", "0"])
    assert exc.value.code == 2


def test_evaluate(capsys, tmp_path):
    cubes, balls = tmp_path / "cubes", tmp_path / "balls"
    cubes.mkdir()
    balls.mkdir()
    for k in range(3):
        write_grid(box_grid(16, (1, 1, 1), (4 + k, 4 + k, 4 + k)), cubes / f"c{k}.voxg")
    for r in (3, 4):
        write_grid(sphere_grid(16, r, center=(11, 11, 11)), balls / f"b{r}.voxg")
    assert run(capsys, "evaluate", "--set-a", str(cubes), "--set-b", str(cubes), "--metric", "chamfer")[1] == "coverage=1 accuracy=1 avg=1\n"
    assert run(capsys, "evaluate", "--set-a", str(cubes), "--set-b", str(cubes))[1] == "mmd=0\n"
    out = run(capsys, "evaluate", "--set-a", str(cubes), "--set-b", str(balls), "--metric", "chamfer")[1]
    assert float(out.split("avg=")[1]) < 0.5


def test_gradcheck(capsys):
    code, out, _ = run(capsys, "gradcheck", "--kind", "depth", "--trials", "3")
    assert code == 0 and out.startswith("depth max_rel_err=")
    code, out, _ = run(capsys, "gradcheck", "--kind", "depth", "--trials", "1", "--eps", "10.0")
    assert code == 1 and float(out.split("=")[1].split()[0]) > 1e-4
    with pytest.raises(SystemExit) as exc:
        main(["gradcheck", "--trials", "0"])
    assert exc.value.code == 2


def test_module_entry_point(tmp_path):
    result = subprocess.run([sys.executable, "-m", "voxproj", "--help"], capture_output=True, text=True)
    assert result.returncode == 0 and "reconstruct" in result.stdout
    result = subprocess.run([sys.executable, "-m", "voxproj", "render"], capture_output=True, text=True)
    assert result.returncode == 2
