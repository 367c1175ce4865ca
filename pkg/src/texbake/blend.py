"""Confidence-weighted blending of reverse-projected views.

Each view contributes w**alpha times its colour; the blended texel is the
weighted mean. Running sums are kept in float64; per-view raw weights are
retained for diagnostics (effective view count, argmax checks).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .uvproject import TexelTable, ViewSamples

FILL_EPS = 1e-8
MAGENTA = (1.0, 0.0, 1.0)


@dataclass
class BlendAccumulator:
    size: int
    alpha: float = 8.0
    keep_colors: bool = False
    texels: TexelTable | None = field(default=None, repr=False)
    weight_sum: np.ndarray = field(init=False)
    color_sum: np.ndarray = field(init=False)
    raw_sum: np.ndarray = field(init=False)
    sample_count: np.ndarray = field(init=False)
    contributors: np.ndarray = field(init=False)
    last_color: np.ndarray = field(init=False)
    view_weights: list = field(init=False, default_factory=list)
    view_colors: list = field(init=False, default_factory=list)

    def __post_init__(self):
        if self.alpha < 1:
            raise ValueError("alpha must be >= 1")
        self.weight_sum = np.zeros(self.size)
        self.color_sum = np.zeros((self.size, 3))
        self.raw_sum = np.zeros(self.size)
        self.sample_count = np.zeros(self.size, dtype=np.int64)
        # texels fed by exactly one positive weight reproduce that colour bit-exactly
        self.contributors = np.zeros(self.size, dtype=np.int64)
        self.last_color = np.zeros((self.size, 3))

    @classmethod
    def for_texels(cls, texels: TexelTable, alpha: float = 8.0, keep_colors: bool = False):
        return cls(len(texels), alpha, keep_colors, texels)

    @property
    def coverage(self) -> np.ndarray:
        """weight_sum ** (1/alpha): the alpha-norm of the raw weights, comparable across alphas."""
        return self.weight_sum ** (1.0 / self.alpha)

    def max_view_weight(self) -> np.ndarray:
        if not self.view_weights:
            return np.zeros(self.size)
        return np.max(np.stack(self.view_weights), axis=0)


def accumulate(acc: BlendAccumulator, samples: ViewSamples) -> BlendAccumulator:
    texel = np.asarray(samples.texel)
    if len(texel) and (texel.min() < 0 or texel.max() >= acc.size):
        raise IndexError("sample texel index outside the accumulator")
    vis = np.asarray(samples.visible, dtype=bool)
    w = np.where(vis, samples.w, 0.0)
    wf = w ** acc.alpha
    t = texel[vis]
    np.add.at(acc.weight_sum, t, wf[vis])
    np.add.at(acc.color_sum, t, wf[vis, None] * samples.color[vis])
    np.add.at(acc.raw_sum, t, w[vis])
    np.add.at(acc.sample_count, t, 1)
    pos = vis & (wf > 0.0)
    np.add.at(acc.contributors, texel[pos], 1)
    acc.last_color[texel[pos]] = samples.color[pos]
    full_w = np.zeros(acc.size)
    full_w[texel] = w
    acc.view_weights.append(full_w)
    if acc.keep_colors:
        full_c = np.zeros((acc.size, 3), dtype=np.float32)
        full_c[texel] = samples.color
        acc.view_colors.append(full_c)
    return acc


@dataclass
class BakedTexture:
    color: np.ndarray  # (R, R, 3) float in [0, 1]
    filled_mask: np.ndarray  # (R, R) bool
    confidence: np.ndarray  # (R, R) float in [0, 1]

    def export(self, background=(0.0, 0.0, 0.0)) -> np.ndarray:
        out = self.color.copy()
        out[~self.filled_mask] = background
        return out


def blend_colors(acc: BlendAccumulator, eps: float = FILL_EPS):
    """Per-entry blended colours and the filled flag (coverage above ``eps``)."""
    filled = (acc.coverage > eps) & (acc.weight_sum > 0.0)
    color = np.zeros((acc.size, 3))
    color[filled] = acc.color_sum[filled] / acc.weight_sum[filled, None]
    single = filled & (acc.contributors == 1)
    color[single] = acc.last_color[single]
    return color, filled


def finalize(acc: BlendAccumulator, texels: TexelTable | None = None, eps: float = FILL_EPS,
             background=MAGENTA) -> BakedTexture:
    texels = texels if texels is not None else acc.texels
    color, filled = blend_colors(acc, eps)
    color[~filled] = background
    top = acc.weight_sum.max() if acc.size else 0.0
    conf = np.minimum(1.0, acc.weight_sum / top) if top > 0 else np.zeros(acc.size)
    r = texels.resolution
    img = np.zeros((r * r, 3))
    img[:] = background
    img[texels.index] = color
    return BakedTexture(
        color=img.reshape(r, r, 3),
        filled_mask=texels.grid(filled, fill=False),
        confidence=texels.grid(conf, fill=0.0),
    )


def participation(weights: np.ndarray, alpha: float) -> np.ndarray:
    """(sum w^a)^2 / sum w^2a over the first axis, computed with per-column max scaling."""
    weights = np.asarray(weights, dtype=np.float64)
    top = weights.max(axis=0)
    out = np.zeros(weights.shape[1:])
    ok = top > 0
    r = (weights[:, ok] / top[ok]) ** alpha
    out[ok] = r.sum(axis=0) ** 2 / (r * r).sum(axis=0)
    return out


def effective_view_counts(acc: BlendAccumulator) -> np.ndarray:
    if not acc.view_weights:
        return np.zeros(acc.size)
    return participation(np.stack(acc.view_weights), acc.alpha)


def effective_view_count(acc: BlendAccumulator, texel: int) -> float:
    """Inverse participation ratio of the final weights at one texel."""
    if not acc.view_weights:
        return 0.0
    w = np.array([vw[texel] for vw in acc.view_weights])
    return float(participation(w[:, None], acc.alpha)[0])


def accumulated_confidence_image(acc: BlendAccumulator, texels: TexelTable) -> np.ndarray:
    top = acc.weight_sum.max() if acc.size else 0.0
    conf = acc.weight_sum / top if top > 0 else np.zeros(acc.size)
    return np.round(texels.grid(conf, fill=0.0) * 255.0).astype(np.uint8)


def write_view_count_histogram(path, counts: np.ndarray, bins: int = 32, max_views: float | None = None) -> None:
    """CSV histogram of effective view counts over texels with any weight."""
    counts = np.asarray(counts)
    counts = counts[counts > 0]
    top = max_views or (float(counts.max()) if len(counts) else 1.0)
    hist, edges = np.histogram(counts, bins=bins, range=(0.0, max(top, 1.0)))
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh)
        out.writerow(["bin_lo", "bin_hi", "texels"])
        for lo, hi, n in zip(edges[:-1], edges[1:], hist):
            out.writerow([f"{lo:.6g}", f"{hi:.6g}", int(n)])
