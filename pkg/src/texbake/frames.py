"""Frame sources: where the per-view RGB texture frames come from.

A source turns a sequence of condition maps (one per orbit view) into the
same number of RGB frames. Three sources ship: a procedural oracle that
renders a known ground-truth texture, a directory of PNG files, and an HTTP
client for an external video-generation service.
"""

from __future__ import annotations

import json
import logging
import socket
import urllib.error
import urllib.request
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .images import b64_png, decode_b64_png, load_png, sample_texture, to_float
from .mesh import TriMesh
from .raster import GBuffer, rasterize

log = logging.getLogger(__name__)

DEFAULT_STRENGTHS = {"depth": 0.7, "normal": 0.7, "edge": 0.7, "component": 0.5}


class FrameSourceError(RuntimeError):
    """Generation failed; ``view`` is the offending view index when known."""

    def __init__(self, message: str, view: int | None = None):
        super().__init__(message if view is None else f"view {view}: {message}")
        self.view = view


class FrameCountError(FrameSourceError):
    pass


@dataclass
class FrameRequest:
    frames: list  # ConditionMaps, in orbit order
    prompt: str = ""
    seed: int = 0
    control_strengths: dict = field(default_factory=lambda: dict(DEFAULT_STRENGTHS))
    resolution: int | None = None

    def __post_init__(self):
        if not self.frames:
            raise ValueError("a frame request needs at least one view")
        merged = dict(DEFAULT_STRENGTHS)
        merged.update(self.control_strengths or {})
        for key, val in merged.items():
            if not 0.0 <= float(val) <= 1.0:
                raise ValueError(f"control strength {key}={val} outside [0, 1]")
        self.control_strengths = merged
        if self.resolution is None:
            self.resolution = self.frames[0].normal_map.shape[0]


@dataclass
class FrameSequence:
    frames: list  # (H, W, 3) float arrays in [0, 1]
    provenance: str

    def __post_init__(self):
        shapes = {f.shape for f in self.frames}
        if len(shapes) > 1:
            raise FrameSourceError(f"frames differ in size: {sorted(shapes)}")

    def __len__(self):
        return len(self.frames)


def surface_uv(mesh: TriMesh, gb: GBuffer) -> np.ndarray:
    """Per-pixel texture coordinates from the G-buffer barycentrics."""
    return gb.interpolate(mesh.corner_uvs())


def procedural_oracle(mesh: TriMesh, gt_texture: np.ndarray, gbuffers) -> FrameSequence:
    """Render ``gt_texture`` through each G-buffer: every covered pixel gets the texture at its UV."""
    tex = to_float(gt_texture)
    frames = []
    for gb in gbuffers:
        frame = np.zeros((gb.height, gb.width, 3), dtype=np.float32)
        cov = gb.covered
        uv = surface_uv(mesh, gb)[cov]
        frame[cov] = sample_texture(tex, uv)
        frames.append(frame)
    return FrameSequence(frames, "procedural")


class FrameSource:
    provenance = "abstract"

    def generate(self, request: FrameRequest) -> FrameSequence:
        raise NotImplementedError


class ProceduralSource(FrameSource):
    """Deterministic stand-in for a generator: renders a known texture."""

    provenance = "procedural"

    def __init__(self, mesh: TriMesh, gt_texture: np.ndarray):
        self.mesh = mesh
        self.gt_texture = to_float(gt_texture)

    def generate(self, request: FrameRequest) -> FrameSequence:
        gbs = (cm.gbuffer if cm.gbuffer is not None else rasterize(self.mesh, cm.camera) for cm in request.frames)
        # one view at a time keeps peak memory at a single G-buffer
        frames = [procedural_oracle(self.mesh, self.gt_texture, [gb]).frames[0] for gb in gbs]
        return _checked(FrameSequence(frames, self.provenance), request)


class FileSource(FrameSource):
    """Reads ``frame_{t:03d}.png`` for t = 0 .. T-1 from a directory."""

    provenance = "files"

    def __init__(self, directory):
        self.directory = Path(directory)

    def generate(self, request: FrameRequest) -> FrameSequence:
        frames = []
        for t in range(len(request.frames)):
            path = self.directory / f"frame_{t:03d}.png"
            if not path.exists():
                raise FrameCountError(f"missing {path}", view=t)
            frames.append(load_png(path, "RGB").astype(np.float32) / 255.0)
        extra = self.directory / f"frame_{len(request.frames):03d}.png"
        if extra.exists():
            raise FrameCountError(f"{self.directory} holds more frames than the {len(request.frames)} requested")
        return _checked(FrameSequence(frames, self.provenance), request)


class RemoteSource(FrameSource):
    """Client for ``POST <url>/v1/generate``; one request per orbit."""

    provenance = "remote"

    def __init__(self, url: str, timeout: float = 300.0, retries: int = 1):
        self.url = url.rstrip("/")
        self.timeout = timeout
        self.retries = retries

    def payload(self, request: FrameRequest) -> dict:
        views = []
        for cm in request.frames:
            view = {
                "normal": b64_png(cm.normal_map),
                "depth": b64_png(cm.depth_map),
                "edge": b64_png(cm.edge_map),
            }
            if cm.render is not None:
                view["render"] = b64_png(cm.render)
            views.append(view)
        return {
            "prompt": request.prompt,
            "seed": int(request.seed),
            "strengths": dict(request.control_strengths),
            "resolution": int(request.resolution),
            "views": views,
        }

    def generate(self, request: FrameRequest) -> FrameSequence:
        body = post_json(f"{self.url}/v1/generate", self.payload(request), self.timeout, self.retries)
        encoded = body.get("frames") if isinstance(body, dict) else None
        if not isinstance(encoded, list):
            raise FrameSourceError("response has no 'frames' list")
        if len(encoded) != len(request.frames):
            raise FrameCountError(f"service returned {len(encoded)} frames for {len(request.frames)} views")
        frames = []
        for t, item in enumerate(encoded):
            try:
                frames.append(decode_b64_png(item, "RGB").astype(np.float32) / 255.0)
            except ValueError as exc:
                raise FrameSourceError(str(exc), view=t) from exc
        return _checked(FrameSequence(frames, self.provenance), request)


def post_json(url: str, payload: dict, timeout: float, retries: int = 1) -> dict:
    """POST a JSON document and decode the JSON reply, retrying transport failures."""
    data = json.dumps(payload).encode("utf-8")
    last = None
    for attempt in range(retries + 1):
        req = urllib.request.Request(url, data=data, headers={"Content-Type": "application/json"}, method="POST")
        try:
            with urllib.request.urlopen(req, timeout=timeout) as resp:
                raw = resp.read()
            break
        except urllib.error.HTTPError as exc:
            raise FrameSourceError(f"{url} answered HTTP {exc.code}") from exc
        except (urllib.error.URLError, socket.timeout, ConnectionError, OSError) as exc:
            last = exc
            log.warning("request to %s failed (attempt %d): %s", url, attempt + 1, exc)
    else:
        raise FrameSourceError(f"cannot reach {url}: {last}")
    try:
        return json.loads(raw.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FrameSourceError(f"malformed JSON from {url}: {exc}") from exc


def _checked(seq: FrameSequence, request: FrameRequest) -> FrameSequence:
    if len(seq) != len(request.frames):
        raise FrameCountError(f"{len(seq)} frames for {len(request.frames)} views")
    for t, (frame, cm) in enumerate(zip(seq.frames, request.frames)):
        if frame.shape[:2] != cm.normal_map.shape[:2]:
            raise FrameSourceError(f"frame {frame.shape[:2]} does not match condition maps {cm.normal_map.shape[:2]}", view=t)
    return seq


def generate(source: FrameSource, request: FrameRequest) -> FrameSequence:
    return source.generate(request)


def parse_source(spec: str, mesh: TriMesh | None = None, timeout: float = 300.0) -> FrameSource:
    """Build a source from ``oracle:<texture.png>``, ``files:<dir>`` or ``remote:<url>``."""
    kind, _, arg = spec.partition(":")
    if not arg:
        raise ValueError(f"source spec {spec!r} needs a value after ':'")
    if kind == "oracle":
        if mesh is None:
            raise ValueError("the oracle source needs the mesh")
        return ProceduralSource(mesh, load_png(arg, "RGB"))
    if kind == "files":
        return FileSource(arg)
    if kind == "remote":
        return RemoteSource(arg, timeout=timeout)
    raise ValueError(f"unknown frame source kind {kind!r}")
