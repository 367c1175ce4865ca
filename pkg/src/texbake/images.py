"""Image helpers: PNG round trips, base64 transport, raw depth dumps and bilinear sampling."""

from __future__ import annotations

import base64
import io
import struct
from pathlib import Path

import numpy as np
from PIL import Image

DEPTH_MAGIC = b"TBDP"


def to_uint8(img: np.ndarray) -> np.ndarray:
    """Quantise a float image in [0, 1] to 8 bits (round half to even)."""
    return np.clip(np.round(np.asarray(img, dtype=np.float64) * 255.0), 0, 255).astype(np.uint8)


def to_float(img: np.ndarray) -> np.ndarray:
    img = np.asarray(img)
    if img.dtype == np.uint8:
        return img.astype(np.float64) / 255.0
    if img.dtype == bool:
        return img.astype(np.float64)
    return img.astype(np.float64)


def save_png(path, img: np.ndarray) -> Path:
    path = Path(path)
    arr = np.asarray(img)
    if arr.dtype == bool:
        Image.fromarray(arr).convert("1").save(path)
        return path
    if arr.dtype != np.uint8:
        arr = to_uint8(arr)
    Image.fromarray(arr).save(path, optimize=False)
    return path


def load_png(path, mode: str = "RGB") -> np.ndarray:
    """Load an image as uint8 array; ``mode`` is a PIL mode ("RGB", "L", "1")."""
    with Image.open(path) as im:
        return np.asarray(im.convert(mode))


def png_bytes(img: np.ndarray, bits1: bool = False) -> bytes:
    arr = np.asarray(img)
    if bits1:
        im = Image.fromarray(arr.astype(bool)).convert("1")
    else:
        if arr.dtype != np.uint8:
            arr = to_uint8(arr)
        im = Image.fromarray(arr)
    buf = io.BytesIO()
    im.save(buf, format="PNG")
    return buf.getvalue()


def b64_png(img: np.ndarray, bits1: bool = False) -> str:
    return base64.b64encode(png_bytes(img, bits1=bits1)).decode("ascii")


def decode_b64_png(text: str, mode: str | None = None) -> np.ndarray:
    """Decode a base64 PNG; raises ValueError on malformed payloads."""
    try:
        raw = base64.b64decode(text, validate=True)
        with Image.open(io.BytesIO(raw)) as im:
            im.load()
            return np.asarray(im.convert(mode) if mode else im)
    except (ValueError, OSError, TypeError) as exc:
        raise ValueError(f"malformed base64 PNG: {exc}") from exc


def write_depth(path, depth: np.ndarray) -> None:
    """Raw float32 depth with a 16-byte header: magic, width, height, reserved."""
    depth = np.asarray(depth, dtype="<f4")
    h, w = depth.shape
    with open(path, "wb") as fh:
        fh.write(DEPTH_MAGIC + struct.pack("<III", w, h, 0))
        fh.write(depth.tobytes())


def read_depth(path) -> np.ndarray:
    data = Path(path).read_bytes()
    if data[:4] != DEPTH_MAGIC:
        raise ValueError(f"{path}: not a TBDP depth file")
    w, h, _ = struct.unpack_from("<III", data, 4)
    return np.frombuffer(data, dtype="<f4", count=w * h, offset=16).reshape(h, w).copy()


def sample_texture(tex: np.ndarray, uv: np.ndarray) -> np.ndarray:
    """Bilinear lookup with wrap addressing.

    ``tex`` is (H, W, C) float; ``uv`` is (..., 2) with v pointing up, so
    v = 1 is the top image row.
    """
    h, w = tex.shape[:2]
    x = uv[..., 0] * w - 0.5
    y = (1.0 - uv[..., 1]) * h - 0.5
    x0 = np.floor(x)
    y0 = np.floor(y)
    fx = (x - x0)[..., None]
    fy = (y - y0)[..., None]
    x0 = x0.astype(np.int64)
    y0 = y0.astype(np.int64)
    xa, xb = x0 % w, (x0 + 1) % w
    ya, yb = y0 % h, (y0 + 1) % h
    top = tex[ya, xa] * (1.0 - fx) + tex[ya, xb] * fx
    bot = tex[yb, xa] * (1.0 - fx) + tex[yb, xb] * fx
    return top * (1.0 - fy) + bot * fy


def sample_screen(img: np.ndarray, px: np.ndarray, py: np.ndarray, valid: np.ndarray | None = None):
    """Bilinear lookup at continuous pixel coordinates (pixel centres at +0.5).

    Taps outside the image, or where ``valid`` is False, are dropped and the
    remaining weights renormalised. Returns (values, ok) where ``ok`` marks
    samples that had at least one usable tap.
    """
    h, w = img.shape[:2]
    x = np.asarray(px, dtype=np.float64) - 0.5
    y = np.asarray(py, dtype=np.float64) - 0.5
    x0 = np.floor(x).astype(np.int64)
    y0 = np.floor(y).astype(np.int64)
    fx = x - x0
    fy = y - y0
    acc = np.zeros(x.shape + img.shape[2:], dtype=np.float64)
    wsum = np.zeros(x.shape, dtype=np.float64)
    for dy, wy in ((0, 1.0 - fy), (1, fy)):
        for dx, wx in ((0, 1.0 - fx), (1, fx)):
            xi = x0 + dx
            yi = y0 + dy
            inside = (xi >= 0) & (xi < w) & (yi >= 0) & (yi < h)
            xs = np.clip(xi, 0, w - 1)
            ys = np.clip(yi, 0, h - 1)
            if valid is not None:
                inside &= valid[ys, xs]
            wt = np.where(inside, wx * wy, 0.0)
            vals = img[ys, xs]
            acc += (wt[..., None] * vals) if img.ndim == 3 else wt * vals
            wsum += wt
    ok = wsum > 1e-12
    safe = np.where(ok, wsum, 1.0)
    out = acc / (safe[..., None] if img.ndim == 3 else safe)
    return out, ok
