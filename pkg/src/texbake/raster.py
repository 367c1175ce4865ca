"""Software rasterizer producing G-buffers and the normal / depth / edge condition maps."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import kernels
from .camera import Camera
from .edges import canny
from .images import save_png, write_depth
from .mesh import TriMesh

BACKGROUND_NORMAL = 128
EDGE_SOURCES = ("depth", "normal", "render")


@dataclass
class GBuffer:
    depth: np.ndarray  # (H, W) view depth, +inf where empty
    normal: np.ndarray  # (H, W, 3) world-space unit normals, zero where empty
    face_id: np.ndarray  # (H, W) face index, -1 where empty
    bary: np.ndarray  # (H, W, 3) perspective-correct barycentrics w.r.t. the face corners
    camera: Camera

    @property
    def width(self) -> int:
        return self.depth.shape[1]

    @property
    def height(self) -> int:
        return self.depth.shape[0]

    @property
    def covered(self) -> np.ndarray:
        return self.face_id >= 0

    def interpolate(self, corner_values: np.ndarray) -> np.ndarray:
        """Interpolate per-corner (F, 3, D) attributes to covered pixels; zero elsewhere."""
        out = np.zeros((self.height, self.width, corner_values.shape[-1]))
        cov = self.covered
        vals = corner_values[self.face_id[cov]]
        out[cov] = np.einsum("nk,nkd->nd", self.bary[cov], vals)
        return out


@dataclass
class ConditionMaps:
    normal_map: np.ndarray  # (H, W, 3) uint8
    depth_map: np.ndarray  # (H, W) uint8
    edge_map: np.ndarray  # (H, W) uint8, 0 or 255
    render: np.ndarray  # (H, W) uint8 flat headlight preview
    gbuffer: GBuffer | None
    camera: Camera | None = None

    def __post_init__(self):
        if self.camera is None and self.gbuffer is not None:
            self.camera = self.gbuffer.camera

    def release(self) -> ConditionMaps:
        """Drop the full-precision G-buffer; the camera is kept so it can be re-rendered."""
        self.gbuffer = None
        return self

    def save(self, out_dir, index: int) -> list[Path]:
        out_dir = Path(out_dir)
        stem = f"view_{index:03d}"
        return [
            save_png(out_dir / f"{stem}_normal.png", self.normal_map),
            save_png(out_dir / f"{stem}_depth.png", self.depth_map),
            save_png(out_dir / f"{stem}_edge.png", self.edge_map),
            save_png(out_dir / f"{stem}_render.png", self.render),
        ]

    def save_raw_depth(self, path) -> None:
        if self.gbuffer is None:
            raise ValueError("G-buffer already released")
        write_depth(path, self.gbuffer.depth)


def _clip_near(view: np.ndarray, near: float):
    """Clip view-space triangles against the near plane.

    Returns (triangles, corner attributes, source face) where the attributes are
    barycentric coordinates relative to the source face.
    """
    depth = -view[..., 2]
    inside = depth > near
    full = inside.all(axis=1)
    eye = np.eye(3)
    tris = [view[full]]
    attrs = [np.broadcast_to(eye, (int(full.sum()), 3, 3))]
    src = [np.flatnonzero(full)]
    for f in np.flatnonzero(inside.any(axis=1) & ~full):
        poly = []
        for k in range(3):
            a, b = k, (k + 1) % 3
            pa, pb = view[f, a], view[f, b]
            da, db = depth[f, a], depth[f, b]
            if inside[f, a]:
                poly.append((pa, eye[a]))
            if inside[f, a] != inside[f, b]:
                s = (near - da) / (db - da)
                poly.append((pa + s * (pb - pa), eye[a] + s * (eye[b] - eye[a])))
        for k in range(1, len(poly) - 1):
            tri = (poly[0], poly[k], poly[k + 1])
            tris.append(np.array([p for p, _ in tri])[None])
            attrs.append(np.array([b for _, b in tri])[None])
            src.append(np.array([f]))
    return np.concatenate(tris), np.concatenate(attrs), np.concatenate(src)


def rasterize(mesh: TriMesh, camera: Camera) -> GBuffer:
    """Depth-tested, perspective-correct rasterization of all faces (no back-face culling)."""
    w, h = camera.width, camera.height
    depth = np.full((h, w), np.inf)
    face_id = np.full((h, w), -1, dtype=np.int64)
    bary = np.zeros((h, w, 3))

    view = camera.to_view(mesh.corner_positions())
    tris, attrs, src = _clip_near(view, camera.near)
    if len(tris):
        z = -tris[..., 2]
        f = camera.focal_px
        xy = np.empty(tris.shape[:2] + (2,))
        xy[..., 0] = 0.5 * w + f * tris[..., 0] / z
        xy[..., 1] = 0.5 * h - f * tris[..., 1] / z
        lo, hi = xy.min(axis=1), xy.max(axis=1)
        onscreen = (hi[:, 0] >= 0) & (lo[:, 0] <= w) & (hi[:, 1] >= 0) & (lo[:, 1] <= h)
        kernels.raster_triangles(
            np.ascontiguousarray(xy[onscreen]),
            np.ascontiguousarray(z[onscreen]),
            np.ascontiguousarray(attrs[onscreen], dtype=np.float64),
            np.ascontiguousarray(src[onscreen], dtype=np.int64),
            depth, face_id, bary, True,
        )

    gb = GBuffer(depth, np.zeros((h, w, 3)), face_id, bary, camera)
    cov = gb.covered
    if cov.any():
        n = gb.interpolate(mesh.corner_normals())[cov]
        length = np.linalg.norm(n, axis=1)
        bad = length < 1e-12
        if bad.any():
            tri = mesh.corner_positions()[face_id[cov][bad]]
            fn = np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0])
            n[bad] = fn
            length[bad] = np.linalg.norm(fn, axis=1)
        gb.normal[cov] = n / np.maximum(length, 1e-300)[:, None]
    return gb


def encode_normals(gb: GBuffer) -> np.ndarray:
    out = np.full((gb.height, gb.width, 3), BACKGROUND_NORMAL, dtype=np.uint8)
    cov = gb.covered
    out[cov] = np.clip(np.round((gb.normal[cov] * 0.5 + 0.5) * 255.0), 0, 255).astype(np.uint8)
    return out


def decode_normals(normal_map: np.ndarray) -> np.ndarray:
    return normal_map.astype(np.float64) / 255.0 * 2.0 - 1.0


def normalized_depth(gb: GBuffer) -> np.ndarray:
    """Per-frame min-max depth in [0, 1], near = 1, far and background = 0."""
    out = np.zeros((gb.height, gb.width))
    cov = gb.covered
    if not cov.any():
        return out
    d = gb.depth[cov]
    lo, hi = d.min(), d.max()
    # a range at rounding-noise level is a constant-depth frame
    out[cov] = (hi - d) / (hi - lo) if hi - lo > 1e-9 * hi else 1.0
    return out


def silhouette(covered: np.ndarray) -> np.ndarray:
    """Covered pixels with at least one 4-neighbour outside the coverage."""
    pad = np.pad(covered, 1, mode="edge")  # the frame border is not a boundary
    nb_empty = ~pad[:-2, 1:-1] | ~pad[2:, 1:-1] | ~pad[1:-1, :-2] | ~pad[1:-1, 2:]
    return covered & nb_empty


def headlight(gb: GBuffer) -> np.ndarray:
    """Flat headlight shading in [0, 1]: |n . direction to camera|."""
    out = np.zeros((gb.height, gb.width))
    cov = gb.covered
    if not cov.any():
        return out
    rows, cols = np.nonzero(cov)
    pts = gb.camera.unproject(cols + 0.5, rows + 0.5, gb.depth[cov])
    to_cam = gb.camera.position - pts
    to_cam /= np.linalg.norm(to_cam, axis=1, keepdims=True)
    out[cov] = np.abs(np.einsum("nd,nd->n", gb.normal[cov], to_cam))
    return out


def condition_maps(gb: GBuffer, low: float = 0.1, high: float = 0.3, edge_source: str = "depth") -> ConditionMaps:
    if edge_source not in EDGE_SOURCES:
        raise ValueError(f"edge_source must be one of {EDGE_SOURCES}")
    normal_map = encode_normals(gb)
    depth01 = normalized_depth(gb)
    depth_map = np.round(depth01 * 255.0).astype(np.uint8)
    shade = headlight(gb)
    if edge_source == "depth":
        src = depth_map.astype(np.float64) / 255.0
    elif edge_source == "normal":
        src = normal_map.astype(np.float64).mean(axis=2) / 255.0
    else:
        src = shade
    edges = canny(src, low, high) | silhouette(gb.covered)
    return ConditionMaps(
        normal_map=normal_map,
        depth_map=depth_map,
        edge_map=np.where(edges, 255, 0).astype(np.uint8),
        render=np.round(shade * 255.0).astype(np.uint8),
        gbuffer=gb,
    )
