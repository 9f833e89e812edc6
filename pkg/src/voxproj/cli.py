"""Command-line entry point: ``voxproj <subcommand> ...``.

Exit codes: 0 success, 1 runtime failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import logging
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from .core import (
    ProjectionConfig,
    ViewpointSet,
    read_grid,
    read_image_pgm,
    write_grid,
)
from .dataset import (
    DEFAULT_SAMPLES_PER_AREA,
    DatasetManifest,
    _seed_int,
    load_obj,
    read_manifest,
    render_views,
    voxelize,
    write_manifest,
    write_renders,
)
from .metrics import GRID_BANDWIDTH, IMAGE_BANDWIDTH, binarize, chamfer_iou, mmd
from .projection import KINDS, grad_check, random_grid
from .reconstruct import ReconProblem, Target, evaluate_recon, reconstruct

GRADCHECK_TOLERANCE = 1e-4


class CommandError(Exception):
    """Runtime failure reported on stderr with exit code 1."""


def _positive_int(text):
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected an integer >= 1, got {text}")
    return value


def _positive_float(text):
    value = float(text)
    if not value > 0:
        raise argparse.ArgumentTypeError(f"expected a positive number, got {text}")
    return value


def _unit_interval(text):
    value = float(text)
    if not 0 < value < 1:
        raise argparse.ArgumentTypeError(f"expected a value in (0, 1), got {text}")
    return value


def _inputs(path: Path, suffix: str) -> list:
    if not path.exists():
        raise CommandError(f"{path}: no such file or directory")
    if path.is_dir():
        files = sorted(path.glob(f"*{suffix}"))
        if not files:
            raise CommandError(f"{path}: no {suffix} files")
        return files
    return [path]


def _pool_map(fn, items, threads):
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def cmd_voxelize(args) -> int:
    meshes = _inputs(Path(args.input), ".obj")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    def one(path):
        try:
            mesh = load_obj(path)
            seed = _seed_int(args.seed, "voxelize", path.stem)
            grid = voxelize(mesh, args.n, args.samples, args.solid, seed=seed)
            write_grid(grid, out / f"{path.stem}.voxg")
            return path.stem, int(np.count_nonzero(np.asarray(grid).max(axis=0)))
        except (OSError, ValueError) as e:
            print(f"{path}: {e}", file=sys.stderr)
            return None

    results = _pool_map(one, meshes, args.threads)
    for r in results:
        if r is not None:
            print(f"{r[0]} occ={r[1]}")
    if all(r is None for r in results):
        raise CommandError("every input mesh failed")
    return 0


def cmd_render(args) -> int:
    grids = _inputs(Path(args.grid), ".voxg")
    out = Path(args.out)
    cfg = ProjectionConfig(tau=args.tau, resampling=args.resampling, supersample=args.supersample)
    views = list(ViewpointSet.evenly_spaced(args.views))

    def one(path):
        try:
            grid = read_grid(path)
            images = render_views(grid, views, args.kind, cfg)
            return grid.n, write_renders(path.stem, images, views, args.kind, out)
        except (OSError, ValueError) as e:
            print(f"{path}: {e}", file=sys.stderr)
            return None

    results = _pool_map(one, grids, args.threads)
    done = [r for r in results if r is not None]
    if not done:
        raise CommandError("every input grid failed")
    entries = [e for _, batch in done for e in batch]
    n = done[0][0]
    write_manifest(DatasetManifest(entries, n=n, image_side=n, n_views=len(views)), out / "manifest.tsv")
    print(f"shapes={len(done)} images={len(entries)}")
    return 0


def _load_targets(manifest_path: Path, shape_id: str) -> list:
    manifest = read_manifest(manifest_path)
    entries = manifest.for_shape(shape_id)
    if not entries:
        raise CommandError(f"shape {shape_id!r} not in {manifest_path}")
    root = manifest_path.parent
    by_view: dict = {}
    for e in entries:
        by_view.setdefault(e.view_index, []).append(e)
    targets = []
    for j in sorted(by_view):
        group = sorted(by_view[j], key=lambda e: e.path)
        kind = group[0].kind
        planes = [read_image_pgm(root / e.path) for e in group]
        image = np.stack(planes) if kind == "semantic" else planes[0]
        targets.append(Target(image, group[0].view, kind))
    return targets


def cmd_reconstruct(args) -> int:
    targets = _load_targets(Path(args.manifest), args.shape)
    n = np.shape(targets[0].image)[-1]
    cfg = ProjectionConfig(tau=args.tau, resampling=args.resampling, supersample=args.supersample)
    report = reconstruct(ReconProblem(targets, n, cfg), args.iters, args.step, seed=_seed_int(args.seed, "recon-init", args.shape))
    write_grid(report.grid, args.out)
    if args.losscurve:
        with open(args.losscurve, "w", encoding="utf-8", newline="\n") as f:
            f.write("".join(f"{it}\t{loss!r}\n" for it, loss in report.loss_curve))
    print(f"loss={report.final_loss:.6g}")
    if args.truth:
        truth = np.asarray(read_grid(args.truth))
        result = np.asarray(report.grid)
        if truth.shape[0] != result.shape[0]:
            truth, result = truth.max(axis=0), result.max(axis=0)
        print(f"iou={evaluate_recon(result, truth, 0.5):.6g}")
    return 0


def _load_set(path: Path, threshold: float):
    if not path.is_dir():
        raise CommandError(f"{path}: not a directory")
    grids = sorted(path.glob("*.voxg"))
    images = sorted(path.glob("*.pgm"))
    if grids and images:
        raise CommandError(f"{path}: mixes grids and images")
    if grids:
        return "grid", [binarize(np.asarray(read_grid(p)).max(axis=0), threshold) for p in grids]
    if images:
        return "image", [binarize(read_image_pgm(p), threshold) for p in images]
    raise CommandError(f"{path}: no .voxg or .pgm files")


def cmd_evaluate(args) -> int:
    kind_a, set_a = _load_set(Path(args.set_a), args.threshold)
    kind_b, set_b = _load_set(Path(args.set_b), args.threshold)
    if kind_a != kind_b:
        raise CommandError("both sets must hold the same kind of data")
    if args.metric == "mmd":
        bandwidth = args.bandwidth or (GRID_BANDWIDTH if kind_a == "grid" else IMAGE_BANDWIDTH)
        print(f"mmd={mmd(set_a, set_b, bandwidth):.6g}")
    else:
        if kind_a != "grid":
            raise CommandError("the chamfer metric needs voxel grids")
        # set-a plays the generated role, set-b the dataset
        r = chamfer_iou(set_a, set_b)
        print(f"coverage={r.coverage:.6g} accuracy={r.accuracy:.6g} avg={r.average:.6g}")
    return 0


def cmd_gradcheck(args) -> int:
    kinds = KINDS if args.kind == "all" else (args.kind,)
    views = ViewpointSet()
    cfg = ProjectionConfig(tau=args.tau)
    ok = True
    for kind in kinds:
        rng = np.random.default_rng([args.seed, KINDS.index(kind)])
        worst = 0.0
        for trial in range(args.trials):
            grid = random_grid(rng, args.n, 3 if kind == "semantic" else 1)
            view = views[int(rng.integers(len(views)))]
            worst = max(worst, grad_check(kind, grid, view, cfg, args.eps, seed=int(rng.integers(2**31))))
        passed = worst <= GRADCHECK_TOLERANCE
        ok &= passed
        print(f"{kind} max_rel_err={worst:.3e} {'ok' if passed else 'FAIL'}")
    return 0 if ok else 1


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="voxproj", description=__doc__.splitlines()[0])
    p.add_argument("--threads", type=_positive_int, default=1, help="worker threads for per-shape work")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("voxelize", help="OBJ meshes -> VOXG grids")
    s.add_argument("--in", dest="input", required=True, help="OBJ file or directory")
    s.add_argument("--out", required=True)
    s.add_argument("--n", type=_positive_int, default=32)
    s.add_argument("--solid", action="store_true")
    s.add_argument("--samples", type=_positive_float, default=DEFAULT_SAMPLES_PER_AREA, help="samples per squared voxel")
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(func=cmd_voxelize)

    s = sub.add_parser("render", help="VOXG grids -> PGM views + manifest")
    s.add_argument("--grid", required=True, help="VOXG file or directory")
    s.add_argument("--out", required=True)
    s.add_argument("--kind", choices=KINDS, default="silhouette")
    s.add_argument("--views", type=_positive_int, default=8)
    s.add_argument("--supersample", type=_positive_int, default=2)
    s.add_argument("--tau", type=_positive_float, default=1.0)
    s.add_argument("--resampling", choices=("nearest", "trilinear"), default="trilinear")
    s.set_defaults(func=cmd_render)

    s = sub.add_parser("reconstruct", help="fit a grid to one shape's views")
    s.add_argument("--manifest", required=True)
    s.add_argument("--shape", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--iters", type=_positive_int, default=400)
    s.add_argument("--step", type=_positive_float, default=50.0)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--losscurve")
    s.add_argument("--truth", help="VOXG ground truth to score against")
    s.add_argument("--supersample", type=_positive_int, default=2)
    s.add_argument("--tau", type=_positive_float, default=1.0)
    s.add_argument("--resampling", choices=("nearest", "trilinear"), default="trilinear")
    s.set_defaults(func=cmd_reconstruct)

    s = sub.add_parser("evaluate", help="compare two directories of grids or images")
    s.add_argument("--set-a", required=True)
    s.add_argument("--set-b", required=True)
    s.add_argument("--metric", choices=("mmd", "chamfer"), default="mmd")
    s.add_argument("--bandwidth", type=_positive_float, help="default 1e-3 for images, 1e-2 for grids")
    s.add_argument("--threshold", type=_unit_interval, default=0.001)
    s.set_defaults(func=cmd_evaluate)

    s = sub.add_parser("gradcheck", help="compare analytic gradients with finite differences")
    s.add_argument("--kind", choices=("all",) + KINDS, default="all")
    s.add_argument("--n", type=_positive_int, default=6)
    s.add_argument("--trials", type=_positive_int, default=20)
    s.add_argument("--eps", type=_positive_float, default=1e-3)
    s.add_argument("--tau", type=_positive_float, default=1.0)
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(func=cmd_gradcheck)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except CommandError as e:
        print(f"voxproj {args.command}: {e}", file=sys.stderr)
        return 1
    except (OSError, ValueError) as e:
        print(f"voxproj {args.command}: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
