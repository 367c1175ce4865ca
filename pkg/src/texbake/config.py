"""Bake configuration and its TOML-style file format."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib


class ConfigError(ValueError):
    pass


@dataclass
class PipelineConfig:
    mesh: object = None  # path or an in-memory TriMesh
    out_dir: str = "bake_out"
    resolution: int = 1024
    frames: int = 8
    alpha: float = 8.0
    radius_scale: float = 1.8
    height: float = 0.0
    vfov: float = 50.0
    render_resolution: int = 1024
    source: object = None  # "oracle:<png>", "files:<dir>", "remote:<url>" or a FrameSource
    inpaint: str = "diffuse"  # diffuse | remote:<url> | none
    segmentation: str = "auto"  # auto | file_groups | connectivity
    edge_low: float = 0.1
    edge_high: float = 0.3
    edge_source: str = "depth"
    depth_eps: float = 1e-3
    tau: float = 1e-6
    inpaint_iters: int = 4096
    inpaint_tol: float = 1.0 / 512.0
    gt_texture: object = None  # path or array used for quality metrics
    seed: int = 0
    prompt: str = ""
    timeout: float = 300.0
    debug: bool = False
    write_outputs: bool = True
    strengths: dict = field(default_factory=lambda: {"depth": 0.7, "normal": 0.7, "edge": 0.7, "component": 0.5})

    def validate(self) -> PipelineConfig:
        r = self.resolution
        if not (64 <= r <= 4096 and r & (r - 1) == 0):
            raise ConfigError(f"resolution must be a power of two in [64, 4096], got {r}")
        if not 1 <= self.frames <= 256:
            raise ConfigError(f"frames must lie in [1, 256], got {self.frames}")
        if self.alpha < 1:
            raise ConfigError(f"alpha must be >= 1, got {self.alpha}")
        if self.render_resolution < 16:
            raise ConfigError("render resolution too small")
        if self.mesh is None:
            raise ConfigError("no mesh given")
        if self.source is None:
            raise ConfigError("no frame source given")
        if not (self.inpaint in ("diffuse", "none") or str(self.inpaint).startswith("remote:")):
            raise ConfigError(f"unknown inpaint mode {self.inpaint!r}")
        if self.segmentation not in ("auto", "file_groups", "connectivity"):
            raise ConfigError(f"unknown segmentation {self.segmentation!r}")
        return self

    def replace(self, **changes) -> PipelineConfig:
        return dataclasses.replace(self, **changes)


FIELD_NAMES = {f.name for f in dataclasses.fields(PipelineConfig)}


def load_config(path) -> dict:
    """Read a config file into a flat dict of PipelineConfig fields.

    Sections only group keys; ``[orbit] frames = 8`` and a top-level
    ``frames = 8`` mean the same. Dashes in keys are accepted.
    """
    with open(path, "rb") as fh:
        try:
            doc = tomllib.load(fh)
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from exc
    flat = {}

    def walk(table):
        for key, val in table.items():
            name = key.replace("-", "_")
            if isinstance(val, dict) and name != "strengths":
                walk(val)
            elif name in FIELD_NAMES:
                flat[name] = val
            else:
                raise ConfigError(f"{path}: unknown key {key!r}")

    walk(doc)
    base = Path(path).parent
    for key in ("mesh", "gt_texture"):
        if isinstance(flat.get(key), str) and not Path(flat[key]).is_absolute():
            flat[key] = str(base / flat[key])
    src = flat.get("source")
    if isinstance(src, str):
        kind, _, arg = src.partition(":")
        if kind in ("oracle", "files") and arg and not Path(arg).is_absolute():
            flat["source"] = f"{kind}:{base / arg}"
    return flat
