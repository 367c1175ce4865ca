"""Texel enumeration in UV space and per-view reverse projection with visibility and confidence."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from . import kernels
from .camera import Camera
from .images import sample_screen
from .mesh import MeshError, TriMesh, triangle_areas
from .raster import GBuffer

log = logging.getLogger(__name__)

DILATION = 2
DEPTH_EPS = 1e-3
ABS_EPS_SCALE = 1e-4


@dataclass
class TexelTable:
    """Covered texels of a square UV atlas, stored as parallel arrays.

    ``index`` holds the flat texel index (row * resolution + col) with row 0 at
    the top of the texture (v = 1). Entries flagged ``dilated`` belong to the
    seam-guard band and copy the surface sample of their nearest covered texel.
    """

    resolution: int
    index: np.ndarray
    position: np.ndarray
    normal: np.ndarray
    face: np.ndarray
    component: np.ndarray
    uv: np.ndarray
    dilated: np.ndarray
    overlaps: int
    mesh: TriMesh

    def __len__(self):
        return len(self.index)

    @property
    def rows(self) -> np.ndarray:
        return self.index // self.resolution

    @property
    def cols(self) -> np.ndarray:
        return self.index % self.resolution

    def grid(self, values, fill=0):
        """Scatter per-entry ``values`` into a (R, R, ...) image."""
        values = np.asarray(values)
        out = np.full((self.resolution * self.resolution,) + values.shape[1:], fill, dtype=values.dtype)
        out[self.index] = values
        return out.reshape((self.resolution, self.resolution) + values.shape[1:])

    def entry_map(self) -> np.ndarray:
        """(R, R) map of entry numbers, -1 where the atlas is empty."""
        return self.grid(np.arange(len(self)), fill=-1)


def texel_centers(resolution: int) -> np.ndarray:
    """(R*R, 2) UV of every texel centre in flat order."""
    c = (np.arange(resolution) + 0.5) / resolution
    uu, vv = np.meshgrid(c, 1.0 - c)
    return np.stack([uu.ravel(), vv.ravel()], axis=1)


def rasterize_uv(mesh: TriMesh, resolution: int, dilation: int = DILATION) -> TexelTable:
    """Enumerate texels whose centre falls in a UV triangle; first face wins on overlaps."""
    if resolution < 16:
        raise ValueError("texture resolution must be at least 16")
    uv = mesh.corner_uvs()
    if triangle_areas(uv).sum() <= 1e-14:
        raise MeshError(f"mesh {mesh.name!r} has zero total UV area")
    r = resolution
    xy = np.empty(uv.shape)
    xy[..., 0] = uv[..., 0] * r
    xy[..., 1] = (1.0 - uv[..., 1]) * r
    depth = np.full((r, r), np.inf)
    face_id = np.full((r, r), -1, dtype=np.int64)
    bary = np.zeros((r, r, 3))
    overlaps = kernels.raster_triangles(
        np.ascontiguousarray(xy),
        np.ones((mesh.n_faces, 3)),
        np.tile(np.eye(3), (mesh.n_faces, 1, 1)),
        np.arange(mesh.n_faces, dtype=np.int64),
        depth, face_id, bary, False,
    )
    if overlaps:
        log.warning("%s: %d texels claimed by more than one UV triangle (first face kept)", mesh.name, overlaps)

    covered = face_id >= 0
    src = np.arange(r * r).reshape(r, r)
    dilated = np.zeros((r, r), dtype=bool)
    if dilation > 0 and covered.any():
        band = ndimage.binary_dilation(covered, structure=np.ones((3, 3), dtype=bool), iterations=dilation) & ~covered
        _, (nr, nc) = ndimage.distance_transform_edt(~covered, return_indices=True)
        src = np.where(band, nr * r + nc, src)
        dilated = band

    keep = (covered | dilated).ravel()
    index = np.flatnonzero(keep)
    origin = src.ravel()[index]
    fids = face_id.ravel()[origin]
    b = bary.reshape(-1, 3)[origin]
    position = np.einsum("nk,nkd->nd", b, mesh.corner_positions()[fids])
    normal = np.einsum("nk,nkd->nd", b, mesh.corner_normals()[fids])
    length = np.linalg.norm(normal, axis=1)
    flat = length < 1e-12
    if flat.any():
        tri = mesh.corner_positions()[fids[flat]]
        normal[flat] = np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0])
        length[flat] = np.linalg.norm(normal[flat], axis=1)
    normal /= np.maximum(length, 1e-300)[:, None]
    return TexelTable(
        resolution=r,
        index=index,
        position=position,
        normal=normal,
        face=fids,
        component=mesh.face_component[fids],
        uv=texel_centers(r)[index],
        dilated=dilated.ravel()[index],
        overlaps=int(overlaps),
        mesh=mesh,
    )


@dataclass
class ViewSamples:
    """One view's samples for every texel entry (struct of arrays)."""

    color: np.ndarray  # (K, 3)
    w: np.ndarray  # (K,) raw confidence, 0 where not visible
    visible: np.ndarray  # (K,) bool
    texel: np.ndarray  # (K,) entry numbers into the TexelTable

    def __len__(self):
        return len(self.texel)


def occluder_ratio(texels: TexelTable, camera: Camera, gb: GBuffer, rows, cols, depth, idx):
    """Distance ratio s such that the surface stored at pixel (rows, cols) sits at s * depth.

    The G-buffer face at the pixel is intersected with the camera ray through
    the texel, which evaluates that surface at the texel's exact sub-pixel
    location rather than at the pixel centre. Empty pixels give +inf.
    """
    mesh = texels.mesh
    fid = gb.face_id[rows, cols]
    ratio = np.full(len(idx), np.inf)
    hit = fid >= 0
    tri = mesh.corner_positions()[fid[hit]]
    n = np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0])
    ray = texels.position[idx[hit]] - camera.position
    denom = np.einsum("nd,nd->n", n, ray)
    num = np.einsum("nd,nd->n", n, tri[:, 0] - camera.position)
    ok = np.abs(denom) > 1e-12 * np.linalg.norm(n, axis=1) * np.linalg.norm(ray, axis=1)
    plane = np.where(ok, num / np.where(ok, denom, 1.0), 0.0)
    pix = gb.depth[rows[hit], cols[hit]] / depth[idx[hit]]
    ratio[hit] = np.where(ok, plane, pix)
    return ratio


def project_view(texels: TexelTable, camera: Camera, frame: np.ndarray, gb: GBuffer,
                 depth_eps: float = DEPTH_EPS, abs_eps: float | None = None) -> ViewSamples:
    """Reverse-project one frame onto the texel table.

    A texel is visible when it projects inside the image and its depth agrees,
    within ``depth_eps`` (relative) plus ``abs_eps``, with the surface stored at
    one of the covered pixels of its bilinear footprint. Visible texels take the
    bilinearly sampled frame colour and confidence max(0, n . v) with v the unit
    direction towards the camera.
    """
    if frame.shape[:2] != (gb.height, gb.width) or (camera.height, camera.width) != (gb.height, gb.width):
        raise ValueError(f"frame {frame.shape[:2]} and G-buffer {(gb.height, gb.width)} differ in size")
    if abs_eps is None:
        abs_eps = ABS_EPS_SCALE * max(texels.mesh.bounding_radius(), 1e-12)
    k = len(texels)
    px, py, depth, front = camera.project(texels.position)
    inside = front & (px >= 0) & (px < gb.width) & (py >= 0) & (py < gb.height)
    idx = np.flatnonzero(inside)
    d = depth[idx]
    c0 = np.floor(px[idx] - 0.5).astype(np.int64)
    r0 = np.floor(py[idx] - 0.5).astype(np.int64)
    agree = np.zeros(len(idx), dtype=bool)
    for dr in (0, 1):
        for dc in (0, 1):
            rows = np.clip(r0 + dr, 0, gb.height - 1)
            cols = np.clip(c0 + dc, 0, gb.width - 1)
            ratio = occluder_ratio(texels, camera, gb, rows, cols, depth, idx)
            fin = np.isfinite(ratio)
            err = np.abs(np.where(fin, ratio, 0.0) * d - d)
            agree |= fin & (err <= depth_eps * np.abs(np.where(fin, ratio, 0.0)) * d + abs_eps)
    visible = np.zeros(k, dtype=bool)
    visible[idx] = agree

    color = np.zeros((k, 3))
    vis = np.flatnonzero(visible)
    sampled, ok = sample_screen(np.asarray(frame, dtype=np.float64), px[vis], py[vis], gb.covered)
    color[vis] = sampled
    visible[vis[~ok]] = False
    color[vis[~ok]] = 0.0

    w = np.zeros(k)
    vis = np.flatnonzero(visible)
    to_cam = camera.position - texels.position[vis]
    to_cam /= np.linalg.norm(to_cam, axis=1, keepdims=True)
    w[vis] = np.clip(np.einsum("nd,nd->n", texels.normal[vis], to_cam), 0.0, 1.0)
    return ViewSamples(color=color, w=w, visible=visible, texel=np.arange(k))


def confidence_image(texels: TexelTable, samples: ViewSamples) -> np.ndarray:
    """Per-view confidence map (w scaled to 8 bits) in texture space."""
    img = texels.grid(samples.w[np.argsort(samples.texel)], fill=0.0)
    return np.round(img * 255.0).astype(np.uint8)
