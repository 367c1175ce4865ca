"""Command line entry point: ``texbake {bake,conditions,ablate-alpha,ablate-framerate,stats,inspect}``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import kernels
from .config import ConfigError, PipelineConfig, load_config
from .mesh import MeshError, load_mesh, validate
from .pipeline import StageError, ablate_alpha, ablate_framerate, bake, conditions_only, stats

# CLI flag -> PipelineConfig field
_FLAGS = {
    "out": "out_dir",
    "resolution": "resolution",
    "frames": "frames",
    "alpha": "alpha",
    "radius_scale": "radius_scale",
    "height": "height",
    "vfov": "vfov",
    "render_resolution": "render_resolution",
    "source": "source",
    "inpaint": "inpaint",
    "segmentation": "segmentation",
    "edge_low": "edge_low",
    "edge_high": "edge_high",
    "edge_source": "edge_source",
    "depth_eps": "depth_eps",
    "fill_low_confidence": "tau",
    "seed": "seed",
    "prompt": "prompt",
    "gt": "gt_texture",
    "timeout": "timeout",
}


def _add_bake_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("mesh", nargs="?", help="OBJ / glTF / GLB mesh with UVs")
    p.add_argument("--config", help="TOML-style config file; flags override it")
    p.add_argument("--out", help="output directory")
    p.add_argument("--resolution", type=int, help="texture size (power of two)")
    p.add_argument("--frames", type=int, help="views on the orbit")
    p.add_argument("--alpha", type=float, help="confidence exponent")
    p.add_argument("--radius-scale", type=float, help="orbit radius in bounding-sphere radii")
    p.add_argument("--height", type=float, help="orbit height above the bounding-box centre")
    p.add_argument("--vfov", type=float, help="vertical field of view, degrees")
    p.add_argument("--render-resolution", type=int, help="condition map / frame size")
    p.add_argument("--source", help="oracle:<texture.png> | files:<dir> | remote:<url>")
    p.add_argument("--inpaint", help="diffuse | remote:<url> | none")
    p.add_argument("--segmentation", choices=["auto", "file_groups", "connectivity"])
    p.add_argument("--edge-low", type=float)
    p.add_argument("--edge-high", type=float)
    p.add_argument("--edge-source", choices=["depth", "normal", "render"])
    p.add_argument("--depth-eps", type=float, help="relative depth tolerance of the visibility test")
    p.add_argument("--fill-low-confidence", type=float, metavar="TAU",
                   help="also inpaint texels whose coverage is below TAU")
    p.add_argument("--seed", type=int)
    p.add_argument("--prompt")
    p.add_argument("--gt", help="ground-truth texture for quality metrics")
    p.add_argument("--timeout", type=float, help="remote request timeout, seconds")
    p.add_argument("--debug", action="store_true", default=None, help="write intermediate artifacts")


def build_config(args: argparse.Namespace) -> PipelineConfig:
    values = load_config(args.config) if getattr(args, "config", None) else {}
    if args.mesh:
        values["mesh"] = args.mesh
    for flag, name in _FLAGS.items():
        val = getattr(args, flag, None)
        if val is not None:
            values[name] = val
    if getattr(args, "debug", None):
        values["debug"] = True
    return PipelineConfig(**values)


def _parse_list(text: str, cast=float):
    return [cast(x) for x in text.split(",") if x.strip()]


def cmd_bake(args) -> int:
    config = build_config(args)
    _, report = bake(config)
    print(report.to_json())
    return 0


def cmd_conditions(args) -> int:
    config = build_config(args)
    conds = conditions_only(config)
    print(f"wrote condition maps for {len(conds)} views to {config.out_dir}")
    return 0


def cmd_ablate_alpha(args) -> int:
    config = build_config(args)
    rows = ablate_alpha(config, _parse_list(args.alphas))
    for row in rows:
        print(json.dumps(row))
    return 0


def cmd_ablate_framerate(args) -> int:
    config = build_config(args)
    rows = ablate_framerate(config, _parse_list(args.frame_counts, int))
    for row in rows:
        print(json.dumps(row))
    return 0


def cmd_stats(args) -> int:
    paths = []
    for p in args.paths:
        p = Path(p)
        paths += sorted(q for q in p.rglob("*") if q.suffix.lower() in (".obj", ".gltf", ".glb")) if p.is_dir() else [p]
    hist = stats(paths, args.segmentation)
    if not hist:
        print("{}")
        return 0
    print(f"{'components':>12} {'count':>8} {'proportion':>11}")
    for key, count in hist["counts"].items():
        print(f"{key:>12} {count:>8} {hist['proportions'][key]:>10.1f}%")
    print(f"{'total':>12} {hist['total']:>8} {100.0:>10.1f}%")
    if args.json:
        Path(args.json).write_text(json.dumps(hist, indent=2))
    return 0


def cmd_inspect(args) -> int:
    from .pipeline import _segment

    mesh = load_mesh(args.mesh)
    report = validate(mesh)
    mesh = _segment(mesh, args.segmentation)
    lo, hi = mesh.bounds()
    uv = mesh.corner_uvs().reshape(-1, 2)
    summary = {
        "name": mesh.name,
        "faces": mesh.n_faces,
        "positions": len(mesh.positions),
        "uvs": len(mesh.uvs),
        "bounds": [lo.tolist(), hi.tolist()],
        "uv_bounds": [uv.min(axis=0).tolist(), uv.max(axis=0).tolist()],
        "groups": mesh.group_names,
        "components": mesh.n_components,
        "faces_per_component": np.bincount(mesh.face_component).tolist(),
        "validation": vars(report),
        "kernel_backend": kernels.BACKEND,
    }
    print(json.dumps(summary, indent=2))
    return 0


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="texbake", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("bake", help="run the full pipeline")
    _add_bake_args(p)
    p.set_defaults(func=cmd_bake)

    p = sub.add_parser("conditions", help="stop after writing condition maps")
    _add_bake_args(p)
    p.set_defaults(func=cmd_conditions)

    p = sub.add_parser("ablate-alpha", help="one blend per confidence exponent")
    _add_bake_args(p)
    p.add_argument("--alphas", default="1,2,4,8,16,32")
    p.set_defaults(func=cmd_ablate_alpha)

    p = sub.add_parser("ablate-framerate", help="one bake per orbit frame count")
    _add_bake_args(p)
    p.add_argument("--frame-counts", default="4,8,16,24")
    p.set_defaults(func=cmd_ablate_framerate)

    p = sub.add_parser("stats", help="component-count histogram over mesh files")
    p.add_argument("paths", nargs="+", help="mesh files or directories")
    p.add_argument("--segmentation", default="auto", choices=["auto", "file_groups", "connectivity"])
    p.add_argument("--json", help="also write the histogram as JSON")
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("inspect", help="print mesh / UV / component summary")
    p.add_argument("mesh")
    p.add_argument("--segmentation", default="auto", choices=["auto", "file_groups", "connectivity"])
    p.set_defaults(func=cmd_inspect)
    return parser


def main(argv=None) -> int:
    args = make_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except StageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (ConfigError, MeshError, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
