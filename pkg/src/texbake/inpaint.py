"""Occlusion masks and component-constrained UV inpainting."""

from __future__ import annotations

import colorsys
import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from . import kernels
from .blend import BakedTexture, BlendAccumulator
from .frames import FrameSourceError, post_json
from .images import b64_png, decode_b64_png, to_uint8
from .uvproject import TexelTable

log = logging.getLogger(__name__)

EMPTY = -1
GOLDEN_ANGLE = 137.50776405003785
DEFAULT_TAU = 1e-6
DEFAULT_TOL = 1.0 / 512.0
DEFAULT_MAX_ITERS = 4096
COMPONENT_STRENGTH = 0.5


class InpaintError(RuntimeError):
    pass


@dataclass
class ComponentLabelMap:
    labels: np.ndarray  # (R, R) int, EMPTY outside the atlas

    @property
    def resolution(self) -> int:
        return self.labels.shape[0]

    @property
    def covered(self) -> np.ndarray:
        return self.labels != EMPTY

    @classmethod
    def from_texels(cls, texels: TexelTable) -> ComponentLabelMap:
        return cls(texels.grid(texels.component, fill=EMPTY))


@dataclass
class OcclusionMask:
    needs_fill: np.ndarray  # (R, R) bool

    @property
    def resolution(self) -> int:
        return self.needs_fill.shape[0]

    def count(self) -> int:
        return int(self.needs_fill.sum())


@dataclass
class InpaintReport:
    iterations: int = 0
    masked: int = 0
    inpainted: int = 0
    seedless_components: list = field(default_factory=list)


def occlusion_mask(acc: BlendAccumulator, labels: ComponentLabelMap, tau: float = DEFAULT_TAU,
                   texels: TexelTable | None = None) -> OcclusionMask:
    """Atlas texels whose accumulated coverage is below ``tau``.

    Coverage is the alpha-norm of the raw view weights (see
    ``BlendAccumulator.coverage``), so the default threshold selects texels that
    no view saw regardless of the blending exponent.
    """
    texels = texels if texels is not None else acc.texels
    if texels is None or texels.resolution != labels.resolution or len(texels) != acc.size:
        raise ValueError("accumulator, texel table and label map resolutions differ")
    low = (acc.coverage < tau) | (acc.weight_sum <= 0.0)
    grid = texels.grid(low, fill=False)
    return OcclusionMask(grid & labels.covered)


def reachable(need: np.ndarray, seeds: np.ndarray, lab: np.ndarray) -> np.ndarray:
    """Masked texels joined to some seed through same-label 4-neighbour steps over masked texels.

    Others can never be filled by averaging, so the sweeps skip them.
    """
    r = lab.shape[0]
    flat_need, flat_seed, flat_lab = need.ravel(), seeds.ravel(), lab.ravel()
    masked = np.flatnonzero(flat_need)
    pos = np.full(flat_need.size, -1, dtype=np.int64)
    pos[masked] = np.arange(len(masked))
    touches = np.zeros(len(masked), dtype=bool)
    src, dst = [], []
    col = masked % r
    for ok, nb in ((col != 0, masked - 1), (col != r - 1, masked + 1),
                   (masked >= r, masked - r), (masked < flat_need.size - r, masked + r)):
        i = np.flatnonzero(ok)
        nb = nb[i]
        same = flat_lab[nb] == flat_lab[masked[i]]
        i, nb = i[same], nb[same]
        touches[i[flat_seed[nb]]] = True
        both = flat_need[nb]
        src.append(i[both])
        dst.append(pos[nb[both]])
    src, dst = np.concatenate(src), np.concatenate(dst)
    graph = coo_matrix((np.ones(len(src), dtype=np.int8), (src, dst)), shape=(len(masked),) * 2)
    n, region = connected_components(graph, directed=False)
    seeded = np.zeros(n, dtype=bool)
    seeded[region[touches]] = True
    out = np.zeros(flat_need.size, dtype=bool)
    out[masked[seeded[region]]] = True
    return out.reshape(need.shape)


def inpaint_diffuse(texture: BakedTexture, mask: OcclusionMask, labels: ComponentLabelMap,
                    max_iters: int = DEFAULT_MAX_ITERS, tol: float = DEFAULT_TOL):
    """Fill masked texels by Jacobi averaging of same-component, already-filled 4-neighbours.

    Returns ``(texture, report)``. Texels left unreachable after convergence get
    the mean seed colour of their component, or the global seed mean when the
    component has no seeds at all; the latter are listed in the report.
    """
    need = mask.needs_fill
    lab = labels.labels
    if need.shape != lab.shape or need.shape != texture.filled_mask.shape:
        raise ValueError("texture, mask and labels differ in size")
    if (need & ~labels.covered).any():
        raise ValueError("mask selects texels outside the atlas")
    r = lab.shape[0]
    seeds = labels.covered & ~need & texture.filled_mask
    color = np.ascontiguousarray(texture.color.reshape(-1, 3), dtype=np.float64).copy()
    filled = np.ascontiguousarray(seeds.ravel(), dtype=np.uint8).copy()
    masked = np.flatnonzero(need.ravel()).astype(np.int64)
    report = InpaintReport(masked=len(masked))
    active = np.flatnonzero(reachable(need, seeds, lab).ravel()).astype(np.int64) if len(masked) else masked
    if len(active):
        report.iterations = kernels.jacobi_fill(
            color, filled, np.ascontiguousarray(lab.ravel(), dtype=np.int64), active, r, max_iters, tol)

    flat_lab = lab.ravel()
    left = masked[filled[masked] == 0]
    if len(left):
        seed_idx = np.flatnonzero(seeds.ravel())
        global_mean = color[seed_idx].mean(axis=0) if len(seed_idx) else np.zeros(3)
        for comp in np.unique(flat_lab[left]):
            sel = left[flat_lab[left] == comp]
            own = seed_idx[flat_lab[seed_idx] == comp]
            if len(own):
                color[sel] = color[own].mean(axis=0)
            else:
                color[sel] = global_mean
                report.seedless_components.append(int(comp))
            filled[sel] = 1
        if report.seedless_components:
            log.warning("components without seeds filled with the global mean: %s", report.seedless_components)
    report.inpainted = len(masked)
    out = BakedTexture(
        color=color.reshape(r, r, 3),
        filled_mask=texture.filled_mask | need,
        confidence=texture.confidence.copy(),
    )
    return out, report


def palette(n: int) -> np.ndarray:
    """(n, 3) uint8 colours: hue advances by the golden angle per component id."""
    out = np.zeros((n, 3), dtype=np.uint8)
    for i in range(n):
        rgb = colorsys.hsv_to_rgb((i * GOLDEN_ANGLE / 360.0) % 1.0, 0.85, 0.95)
        out[i] = np.round(np.asarray(rgb) * 255.0)
    return out


def render_component_map(labels: ComponentLabelMap) -> np.ndarray:
    lab = labels.labels
    img = np.zeros(lab.shape + (3,), dtype=np.uint8)
    if labels.covered.any():
        pal = palette(int(lab.max()) + 1)
        img[labels.covered] = pal[lab[labels.covered]]
    return img


def inpaint_request(texture: BakedTexture, mask: OcclusionMask, labels: ComponentLabelMap, prompt: str,
                    strength: float = COMPONENT_STRENGTH) -> dict:
    return {
        "prompt": prompt,
        "strength": float(strength),
        "texture": b64_png(to_uint8(texture.export())),
        "mask": b64_png(mask.needs_fill, bits1=True),
        "components": b64_png(render_component_map(labels)),
    }


def inpaint_remote(texture: BakedTexture, mask: OcclusionMask, labels: ComponentLabelMap, prompt: str,
                   url: str, timeout: float = 300.0, strength: float = COMPONENT_STRENGTH):
    """Delegate the fill to ``POST <url>/v1/inpaint``; only masked texels are taken from the reply."""
    payload = inpaint_request(texture, mask, labels, prompt, strength)
    try:
        body = post_json(f"{url.rstrip('/')}/v1/inpaint", payload, timeout)
    except FrameSourceError as exc:
        raise InpaintError(str(exc)) from exc
    if not isinstance(body, dict) or "texture" not in body:
        raise InpaintError("inpaint response has no 'texture' field")
    try:
        img = decode_b64_png(body["texture"], "RGB")
    except ValueError as exc:
        raise InpaintError(str(exc)) from exc
    if img.shape[:2] != mask.needs_fill.shape:
        raise InpaintError(f"inpaint response is {img.shape[:2]}, expected {mask.needs_fill.shape}")
    color = texture.color.copy()
    need = mask.needs_fill
    color[need] = img[need].astype(np.float64) / 255.0
    out = BakedTexture(color, texture.filled_mask | need, texture.confidence.copy())
    return out, InpaintReport(masked=int(need.sum()), inpainted=int(need.sum()))
