"""Batch pipeline stages: ingest geometry, simulate, export, reconstruct."""

from __future__ import annotations

from pathlib import Path

import numpy as np

from . import __version__
from .config import PipelineConfig, parse_config_text
from .errors import ValidationError
from .field import (GridTransform, fit_transform, percentile_of_nonzero,
                    slice_to_image)
from .geometry import (PointCloud, load_mesh, load_points, mesh_to_points,
                       thicken_points, write_npy, write_stl_binary)
from .mcpm import FoodSources, MCPMParams, SimState, run
from .reconstruct import IsoSurfaceMesh, is_watertight, marching_cubes, mesh_stats


def ingest_points(cfg: PipelineConfig) -> PointCloud:
    """Input geometry -> model-space food-source candidates."""
    if cfg.input_kind == "mesh":
        mesh = load_mesh(cfg.input_path)
        cloud = mesh_to_points(mesh, cfg.dedup_epsilon)
    else:
        cloud = load_points(cfg.input_path)
    if cfg.thicken_offset > 0:
        cloud = thicken_points(cloud, cfg.thicken_offset)
    return cloud


def plan_grid(cfg: PipelineConfig, cloud: PointCloud):
    transform, dims = fit_transform(cloud, cfg.resolution, cfg.margin)
    food = FoodSources(transform.to_grid(cloud.points), cloud.weights)
    return transform, dims, food


def resolve_iso(field, mode: str, value: float) -> float:
    if mode == "absolute":
        return float(value)
    return percentile_of_nonzero(field, value)


def run_log_lines(cfg: PipelineConfig, transform: GridTransform, dims) -> list[str]:
    t = transform.translation
    return cfg.to_lines() + [
        f"result.version = {__version__}",
        f"result.transform.scale = {transform.scale!r}",
        f"result.transform.tx = {t[0]!r}",
        f"result.transform.ty = {t[1]!r}",
        f"result.transform.tz = {t[2]!r}",
        f"result.dims = {dims[0]} {dims[1]} {dims[2]}",
    ]


def load_run_log(path) -> tuple[PipelineConfig, GridTransform | None]:
    """Parse a run log back into (config, transform)."""
    text = Path(path).read_text()
    cfg = parse_config_text(text, source=str(path))
    vals: dict[str, float] = {}
    for raw in text.splitlines():
        line = raw.split("#", 1)[0].strip()
        if line.startswith("result.transform."):
            key, _, value = line.partition("=")
            vals[key.strip().rsplit(".", 1)[1]] = float(value.strip())
    transform = None
    if {"scale", "tx", "ty", "tz"} <= vals.keys():
        transform = GridTransform(vals["scale"], (vals["tx"], vals["ty"], vals["tz"]))
    return cfg, transform


def run_simulation(cfg: PipelineConfig, out_dir, echo=print) -> tuple[SimState, GridTransform]:
    """Execute ingestion + simulation and write all run artifacts."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    echo("stage=ingest step=0/1")
    cloud = ingest_points(cfg)
    transform, dims, food = plan_grid(cfg, cloud)
    params = cfg.mcpm_params()
    echo(f"stage=ingest step=1/1 points={len(cloud)} dims={dims[0]}x{dims[1]}x{dims[2]}")

    interval = cfg.snapshot_interval
    nsteps = params.num_steps
    report_every = max(1, nsteps // 10)

    def progress(state: SimState) -> None:
        s = state.step
        if s % report_every == 0 or s == nsteps:
            echo(f"stage=simulate step={s}/{nsteps}")
        if interval and s % interval == 0 and s < nsteps:
            write_npy(state.trace, out / f"trace_{s:06d}.npy")
            slice_to_image(state.trace, "z", state.trace.dims[2] // 2,
                           out / f"trace_{s:06d}_z.pgm")

    state = run(params, food, dims, voxel_size=transform.scale, progress=progress)
    echo(f"stage=simulate step={nsteps}/{nsteps}")

    write_npy(state.trace, out / "trace.npy")
    write_npy(state.deposit, out / "deposit.npy")
    slice_to_image(state.trace, "z", state.trace.dims[2] // 2, out / "trace_z.pgm")
    (out / "run_log.txt").write_text("\n".join(run_log_lines(cfg, transform, dims)) + "\n")
    return state, transform


def reconstruct_mesh(field, iso: float, transform: GridTransform,
                     stl_path=None, echo=print) -> IsoSurfaceMesh | None:
    """Marching cubes + watertightness gate + optional STL export.

    Returns None when nothing crosses the iso level.
    """
    mesh = marching_cubes(field, iso, transform)
    if mesh.empty:
        echo(f"warning: no voxel reaches iso={iso!r}; no mesh produced")
        return None
    tight, diagnostics = is_watertight(mesh)
    if not tight:
        from .errors import NotWatertightError
        raise NotWatertightError(
            f"reconstructed mesh is not watertight; offending edges: {diagnostics[:10]}")
    stats = mesh_stats(mesh)
    for key in ("vertex_count", "triangle_count", "edge_count", "boundary_edge_count",
                "euler_characteristic", "connected_component_count", "surface_area"):
        echo(f"{key}={getattr(stats, key)}")
    if stl_path is not None:
        nbytes = write_stl_binary(mesh.as_triangle_mesh(), stl_path)
        echo(f"stl_bytes={nbytes}")
    return mesh


def run_all(cfg: PipelineConfig, out_dir, echo=print) -> Path | None:
    """Full pipeline: geometry -> simulation artifacts -> printable STL."""
    state, transform = run_simulation(cfg, out_dir, echo=echo)
    echo("stage=reconstruct step=0/1")
    iso = resolve_iso(state.trace, cfg.iso_mode, cfg.iso_value)
    if iso <= 0:
        raise ValidationError("resolved iso threshold is not positive; trace field empty?")
    stl_path = Path(out_dir) / "scaffold.stl"
    mesh = reconstruct_mesh(state.trace, iso, transform, stl_path, echo=echo)
    echo("stage=reconstruct step=1/1")
    return stl_path if mesh is not None else None
