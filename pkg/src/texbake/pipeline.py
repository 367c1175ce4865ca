"""End-to-end bake: load, segment, orbit, condition maps, frames, reverse projection, blend, inpaint, export."""

from __future__ import annotations

import csv
import json
import logging
import time
from contextlib import contextmanager
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import blend as blend_mod
from .blend import BlendAccumulator, accumulate, blend_colors, effective_view_counts, finalize
from .camera import orbit_cameras, orbit_for_mesh
from .config import PipelineConfig
from .frames import FrameRequest, FrameSource, ProceduralSource, parse_source
from .images import load_png, sample_texture, save_png, to_float, to_uint8
from .inpaint import (ComponentLabelMap, inpaint_diffuse, inpaint_remote, occlusion_mask,
                      render_component_map)
from .mesh import TriMesh, component_stats, load_mesh, save_obj, segment_components
from .raster import condition_maps, rasterize
from .uvproject import confidence_image, project_view, rasterize_uv

log = logging.getLogger(__name__)

GBUFFER_CACHE_BYTES = 768 * 2**20
GBUFFER_BYTES_PER_PIXEL = 64
CONFIDENT = 0.5


class StageError(RuntimeError):
    def __init__(self, stage: str, cause: BaseException):
        super().__init__(f"stage '{stage}' failed: {cause}")
        self.stage = stage
        self.cause = cause


@dataclass
class BakeReport:
    stage_seconds: dict = field(default_factory=dict)
    covered: int = 0
    filled: int = 0
    masked: int = 0
    inpainted: int = 0
    filled_after_inpaint: int = 0
    visible_fraction: float = 0.0
    seedless_components: list = field(default_factory=list)
    components: int = 0
    frames: int = 0
    alpha: float = 8.0
    texel_overlaps: int = 0
    inpaint_iterations: int = 0
    mean_effective_views: float = 0.0
    metrics: dict = field(default_factory=dict)
    artifacts: dict = field(default_factory=dict)

    @property
    def wall_seconds(self) -> float:
        return float(sum(self.stage_seconds.values()))

    def to_json(self) -> str:
        d = asdict(self)
        d["wall_seconds"] = self.wall_seconds
        return json.dumps(d, indent=2, sort_keys=True)


@dataclass
class Prepared:
    """Everything up to and including per-view reverse projection; independent of alpha."""

    config: PipelineConfig
    mesh: TriMesh
    texels: object
    samples: list
    labels: ComponentLabelMap
    report: BakeReport
    gt: np.ndarray | None = None


@contextmanager
def _stage(report: BakeReport, name: str):
    t0 = time.perf_counter()
    try:
        yield
    except StageError:
        raise
    except Exception as exc:
        raise StageError(name, exc) from exc
    finally:
        report.stage_seconds[name] = report.stage_seconds.get(name, 0.0) + time.perf_counter() - t0


def _segment(mesh: TriMesh, strategy: str) -> TriMesh:
    if strategy == "auto":
        named = [g for g in mesh.group_names if g != "default"]
        strategy = "file_groups" if named else "connectivity"
    return segment_components(mesh, strategy)


def _source(config: PipelineConfig, mesh: TriMesh) -> FrameSource:
    if isinstance(config.source, FrameSource):
        return config.source
    return parse_source(str(config.source), mesh=mesh, timeout=config.timeout)


def _gt(config: PipelineConfig, source: FrameSource):
    gt = config.gt_texture
    if gt is None and isinstance(source, ProceduralSource):
        return source.gt_texture
    if gt is None:
        return None
    if isinstance(gt, (str, Path)):
        return to_float(load_png(gt, "RGB"))
    return to_float(np.asarray(gt))


def render_conditions(config: PipelineConfig, mesh: TriMesh, report: BakeReport, out: Path | None,
                      keep_gbuffers: bool = True):
    spec = orbit_for_mesh(mesh, frames=config.frames, radius_scale=config.radius_scale, height=config.height,
                          vfov_deg=config.vfov, resolution=config.render_resolution)
    cameras = orbit_cameras(spec)
    conds = []
    with _stage(report, "conditions"):
        for t, cam in enumerate(cameras):
            cm = condition_maps(rasterize(mesh, cam), config.edge_low, config.edge_high, config.edge_source)
            if out is not None:
                cm.save(out, t)
                if config.debug:
                    cm.save_raw_depth(out / f"view_{t:03d}_depth.tbdp")
            if not keep_gbuffers:
                cm.release()
            conds.append(cm)
    return cameras, conds


def prepare(config: PipelineConfig, out: Path | None = None) -> Prepared:
    config.validate()
    report = BakeReport(frames=config.frames, alpha=config.alpha)

    with _stage(report, "load"):
        mesh = config.mesh if isinstance(config.mesh, TriMesh) else load_mesh(config.mesh)
    with _stage(report, "segment"):
        mesh = _segment(mesh, config.segmentation)
        report.components = mesh.n_components
    with _stage(report, "source"):
        source = _source(config, mesh)
        gt = _gt(config, source)

    cache = config.frames * config.render_resolution ** 2 * GBUFFER_BYTES_PER_PIXEL <= GBUFFER_CACHE_BYTES
    cond_dir = None
    if out is not None and config.debug:
        cond_dir = out / "conditions"
        cond_dir.mkdir(parents=True, exist_ok=True)
    cameras, conds = render_conditions(config, mesh, report, cond_dir, keep_gbuffers=cache)

    with _stage(report, "generate"):
        request = FrameRequest(conds, prompt=config.prompt, seed=config.seed,
                               control_strengths=config.strengths, resolution=config.render_resolution)
        seq = source.generate(request)

    with _stage(report, "uv"):
        texels = rasterize_uv(mesh, config.resolution)
        report.texel_overlaps = texels.overlaps
        labels = ComponentLabelMap.from_texels(texels)

    samples = []
    with _stage(report, "project"):
        for t, (cam, cm, frame) in enumerate(zip(cameras, conds, seq.frames)):
            gb = cm.gbuffer if cm.gbuffer is not None else rasterize(mesh, cam)
            s = project_view(texels, cam, frame, gb, depth_eps=config.depth_eps)
            samples.append(s)
            if out is not None and config.debug:
                save_png(out / f"confidence_view_{t:03d}.png", confidence_image(texels, s))
            cm.release()
    return Prepared(config, mesh, texels, samples, labels, report, gt)


def _metrics(prep: Prepared, acc: BlendAccumulator, final_entries: np.ndarray) -> dict:
    if prep.gt is None:
        return {}
    texels = prep.texels
    truth = sample_texture(prep.gt, texels.uv)
    core = ~texels.dilated
    blended, filled = blend_colors(acc)
    confident = core & filled & (acc.raw_sum >= CONFIDENT)
    out = {}
    for name, sel, vals in (("confident", confident, blended), ("all", core, final_entries)):
        if not sel.any():
            out[name] = {"texels": 0, "mae": None, "psnr": None}
            continue
        diff = vals[sel] - truth[sel]
        mse = float(np.mean(diff ** 2))
        out[name] = {
            "texels": int(sel.sum()),
            "mae": float(np.mean(np.abs(diff))),
            "max_abs": float(np.abs(diff).max()),
            "psnr": float("inf") if mse == 0 else float(10.0 * np.log10(1.0 / mse)),
        }
    return out


def complete(prep: Prepared, alpha: float | None = None, out: Path | None = None, keep_colors: bool = False):
    """Blend, mask, inpaint and (optionally) export for one alpha. Returns (texture, report, accumulator)."""
    config = prep.config
    alpha = config.alpha if alpha is None else alpha
    report = BakeReport(**{**asdict(prep.report), "alpha": alpha})
    report.stage_seconds = dict(prep.report.stage_seconds)
    texels = prep.texels

    with _stage(report, "blend"):
        acc = BlendAccumulator.for_texels(texels, alpha, keep_colors=keep_colors)
        for s in prep.samples:
            accumulate(acc, s)
        baked = finalize(acc)
        report.covered = int(prep.labels.covered.sum())
        report.filled = int(baked.filled_mask.sum())
        report.visible_fraction = float((acc.sample_count > 0).mean()) if len(texels) else 0.0
        evc = effective_view_counts(acc)
        report.mean_effective_views = float(evc[acc.weight_sum > 0].mean()) if (acc.weight_sum > 0).any() else 0.0

    with _stage(report, "inpaint"):
        mask = occlusion_mask(acc, prep.labels, config.tau)
        report.masked = mask.count()
        if config.inpaint == "diffuse":
            final, ireport = inpaint_diffuse(baked, mask, prep.labels, config.inpaint_iters, config.inpaint_tol)
        elif str(config.inpaint).startswith("remote:"):
            final, ireport = inpaint_remote(baked, mask, prep.labels, config.prompt,
                                            str(config.inpaint).split(":", 1)[1], timeout=config.timeout)
        else:
            final, ireport = baked, None
        if ireport is not None:
            report.inpainted = ireport.inpainted
            report.inpaint_iterations = ireport.iterations
            report.seedless_components = ireport.seedless_components
        report.filled_after_inpaint = int((final.filled_mask & prep.labels.covered).sum())

    final_entries = final.color.reshape(-1, 3)[texels.index]
    report.metrics = _metrics(prep, acc, final_entries)

    if out is not None and config.write_outputs:
        with _stage(report, "export"):
            report.artifacts = export(prep, final, baked, acc, mask, out, config.debug)
    return final, report, acc


def export(prep: Prepared, final, baked, acc, mask, out: Path, debug: bool) -> dict:
    out.mkdir(parents=True, exist_ok=True)
    files = {}
    files["texture"] = str(save_png(out / "texture.png", to_uint8(final.export())))
    (out / "material.mtl").write_text("newmtl baked\nKa 1 1 1\nKd 1 1 1\nKs 0 0 0\nmap_Kd texture.png\n")
    files["material"] = str(out / "material.mtl")
    save_obj(prep.mesh, out / "mesh.obj", mtl_name="material.mtl")
    files["mesh"] = str(out / "mesh.obj")
    files["confidence"] = str(save_png(out / "confidence.png",
                                       blend_mod.accumulated_confidence_image(acc, prep.texels)))
    if debug:
        files["blended"] = str(save_png(out / "blended_debug.png", to_uint8(baked.color)))
        files["mask"] = str(save_png(out / "occlusion_mask.png", mask.needs_fill))
        files["components"] = str(save_png(out / "components.png", render_component_map(prep.labels)))
        blend_mod.write_view_count_histogram(out / "effective_views.csv", effective_view_counts(acc))
        files["effective_views"] = str(out / "effective_views.csv")
    return files


def bake(config: PipelineConfig):
    """Run the full pipeline. Returns (final texture, report)."""
    out = Path(config.out_dir) if config.write_outputs else None
    prep = prepare(config, out)
    final, report, _ = complete(prep, out=out)
    if out is not None:
        (out / "report.json").write_text(report.to_json())
    return final, report


def conditions_only(config: PipelineConfig) -> list:
    """Render and write the condition maps for every orbit view."""
    out = Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    report = BakeReport(frames=config.frames)
    mesh = config.mesh if isinstance(config.mesh, TriMesh) else load_mesh(config.mesh)
    mesh = _segment(mesh, config.segmentation)
    _, conds = render_conditions(config, mesh, report, out, keep_gbuffers=config.debug)
    return conds


def _write_csv(path: Path, rows: list[dict]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(rows[0]))
        writer.writeheader()
        writer.writerows(rows)


def _metric(report: BakeReport, scope: str, key: str):
    m = report.metrics.get(scope) or {}
    return m.get(key)


def ablate_alpha(config: PipelineConfig, alphas=(1, 2, 4, 8, 16, 32), gt_texture=None) -> list[dict]:
    """One blend per alpha over a shared set of projected views; writes ablate_alpha.csv."""
    if gt_texture is not None:
        config = config.replace(gt_texture=gt_texture)
    out = Path(config.out_dir)
    if config.write_outputs:
        out.mkdir(parents=True, exist_ok=True)
    prep = prepare(config.replace(debug=False), None)
    rows = []
    for a in alphas:
        sub = out / f"alpha_{a:g}" if config.write_outputs else None
        _, report, acc = complete(prep, alpha=float(a), out=sub)
        if config.write_outputs:
            save_png(out / f"confidence_alpha_{a:g}.png", blend_mod.accumulated_confidence_image(acc, prep.texels))
        rows.append({
            "alpha": a,
            "mae": _metric(report, "all", "mae"),
            "psnr": _metric(report, "all", "psnr"),
            "mae_confident": _metric(report, "confident", "mae"),
            "mean_effective_views": report.mean_effective_views,
        })
    if config.write_outputs:
        _write_csv(out / "ablate_alpha.csv", rows)
    return rows


def ablate_framerate(config: PipelineConfig, frame_counts=(4, 8, 16, 24), gt_texture=None) -> list[dict]:
    """One full bake per frame count; writes ablate_framerate.csv."""
    if gt_texture is not None:
        config = config.replace(gt_texture=gt_texture)
    out = Path(config.out_dir)
    rows = []
    for n in frame_counts:
        sub = config.replace(frames=int(n), out_dir=str(out / f"frames_{n}"), debug=False)
        t0 = time.perf_counter()
        _, report = bake(sub)
        wall = time.perf_counter() - t0
        rows.append({
            "frames": n,
            "visible_fraction": report.visible_fraction,
            "mae": _metric(report, "all", "mae"),
            "psnr": _metric(report, "all", "psnr"),
            "wall_seconds": wall,
        })
    if config.write_outputs:
        out.mkdir(parents=True, exist_ok=True)
        _write_csv(out / "ablate_framerate.csv", rows)
    return rows


def stats(paths, strategy: str = "auto") -> dict:
    meshes = [_segment(load_mesh(p), strategy) for p in paths]
    return component_stats(meshes)
