"""Command-line driver: run / mesh / slice / stats / eval / all.

Exit codes: 0 success, 1 validation error, 2 I/O or parse error,
3 watertightness failure.
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

from .config import load_config
from .errors import (NotWatertightError, ParseError, PhyscaffoldError,
                     ValidationError)
from .evaluate import network_report
from .field import GridTransform, field_stats, slice_to_image
from .geometry import load_mesh, read_npy, weld_vertices
from .pipeline import (ingest_points, load_run_log, plan_grid, reconstruct_mesh,
                       resolve_iso, run_all, run_simulation)
from .reconstruct import mesh_stats

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_IO = 2
EXIT_NOT_WATERTIGHT = 3


def _threads_arg(args) -> int | None:
    if args.threads is not None:
        return args.threads
    env = os.environ.get("SCAFFOLD_THREADS")
    return int(env) if env else None


def _apply_threads(threads: int | None) -> None:
    # Results are thread-count independent by construction; this only sizes
    # the worker pool of the propagation kernel.
    if threads is not None:
        if threads < 1:
            raise ValidationError("--threads must be >= 1")
        import numba
        numba.set_num_threads(min(threads, numba.config.NUMBA_NUM_THREADS))


def _load_cfg(args):
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg.seed = args.seed
    if getattr(args, "out", None):
        cfg.out_dir = args.out
    return cfg


def _cmd_run(args) -> int:
    cfg = _load_cfg(args)
    _apply_threads(_threads_arg(args))
    run_simulation(cfg, cfg.out_dir)
    return EXIT_OK


def _cmd_all(args) -> int:
    cfg = _load_cfg(args)
    _apply_threads(_threads_arg(args))
    run_all(cfg, cfg.out_dir)
    return EXIT_OK


def _mesh_transform(args) -> GridTransform:
    if args.transform:
        _, transform = load_run_log(args.transform)
        if transform is None:
            raise ValidationError(f"{args.transform}: no result.transform.* entries")
        return transform
    return GridTransform(1.0, (0.0, 0.0, 0.0))


def _cmd_mesh(args) -> int:
    field = read_npy(args.field)
    transform = _mesh_transform(args)
    field.voxel_size = transform.scale
    if args.iso is not None:
        iso = args.iso
    else:
        iso = resolve_iso(field, "percentile", args.iso_percentile)
    if iso <= 0:
        print(f"warning: resolved iso {iso!r} is not positive; no mesh produced")
        return EXIT_OK
    mesh = reconstruct_mesh(field, iso, transform, args.out)
    return EXIT_OK if mesh is not None else EXIT_OK


def _cmd_slice(args) -> int:
    field = read_npy(args.field)
    slice_to_image(field, args.axis, args.index, args.out)
    print(f"wrote {args.out}")
    return EXIT_OK


def _cmd_stats(args) -> int:
    if args.field:
        field = read_npy(args.field)
        nx, ny, nz = field.dims
        print(f"dims={nx}x{ny}x{nz}")
        print(f"voxel_size={field.voxel_size}")
        for key, val in field_stats(field).items():
            print(f"{key}={val}")
    if args.mesh:
        stats = mesh_stats(weld_vertices(load_mesh(args.mesh)))
        for key in ("vertex_count", "triangle_count", "edge_count",
                    "boundary_edge_count", "euler_characteristic",
                    "connected_component_count", "surface_area"):
            print(f"{key}={getattr(stats, key)}")
    if not args.field and not args.mesh:
        raise ValidationError("stats needs --field and/or --mesh")
    return EXIT_OK


def _cmd_eval(args) -> int:
    cfg = load_config(args.config)
    cloud = ingest_points(cfg)
    transform, _, food = plan_grid(cfg, cloud)
    trace = read_npy(args.field, voxel_size=transform.scale)
    if args.threshold is not None:
        threshold = args.threshold
    else:
        threshold = resolve_iso(trace, "percentile", args.threshold_percentile)
    report = network_report(trace, food, threshold, transform)
    print(report.to_text(), end="")
    if args.csv:
        Path(args.csv).write_text(report.to_csv())
        print(f"wrote {args.csv}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="physcaffold",
        description="Grow a slime-mold transport-network scaffold over input "
                    "geometry and reconstruct it as a printable STL.")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_run_flags(p):
        p.add_argument("--config", required=True, help="flat key=value config file")
        p.add_argument("--seed", type=int, default=None, help="override config seed")
        p.add_argument("--threads", type=int, default=None,
                       help="worker count (results are identical for any value); "
                            "falls back to SCAFFOLD_THREADS")
        p.add_argument("--out", default=None, help="override output directory")

    p = sub.add_parser("run", help="simulate and write trace/deposit NPY artifacts")
    add_run_flags(p)
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("all", help="full pipeline: run + mesh -> STL")
    add_run_flags(p)
    p.set_defaults(func=_cmd_all)

    p = sub.add_parser("mesh", help="marching-cubes a field NPY into a watertight STL")
    p.add_argument("--field", required=True, help="input NPY scalar field")
    g = p.add_mutually_exclusive_group()
    g.add_argument("--iso", type=float, default=None, help="absolute iso threshold")
    g.add_argument("--iso-percentile", type=float, default=50.0,
                   help="percentile of nonzero voxels (default 50)")
    p.add_argument("--transform", default=None,
                   help="run log supplying the grid-to-model transform")
    p.add_argument("--out", required=True, help="output STL path")
    p.set_defaults(func=_cmd_mesh)

    p = sub.add_parser("slice", help="write one field slice as a PGM image")
    p.add_argument("--field", required=True)
    p.add_argument("--axis", choices=("x", "y", "z"), required=True)
    p.add_argument("--index", type=int, required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_slice)

    p = sub.add_parser("stats", help="print field and/or mesh statistics")
    p.add_argument("--field", default=None, help="NPY scalar field")
    p.add_argument("--mesh", default=None, help="mesh file (STL/OBJ/PLY)")
    p.set_defaults(func=_cmd_stats)

    p = sub.add_parser("eval", help="network cost/connectivity report vs MST baseline")
    p.add_argument("--config", required=True,
                   help="config (or run log) used to re-derive food points")
    p.add_argument("--field", required=True, help="trace NPY")
    g = p.add_mutually_exclusive_group()
    g.add_argument("--threshold", type=float, default=None)
    g.add_argument("--threshold-percentile", type=float, default=50.0)
    p.add_argument("--csv", default=None, help="also write the CSV report here")
    p.set_defaults(func=_cmd_eval)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except NotWatertightError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NOT_WATERTIGHT
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (OSError, ParseError, PhyscaffoldError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
