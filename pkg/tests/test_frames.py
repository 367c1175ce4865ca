import base64
import io
import math

import numpy as np
import pytest
from PIL import Image

from conftest import free_port_url
from texbake import fixtures
from texbake.camera import Camera, orbit_cameras, orbit_for_mesh
from texbake.frames import (DEFAULT_STRENGTHS, FileSource, FrameCountError, FrameRequest, FrameSourceError,
                            ProceduralSource, RemoteSource, generate, parse_source, procedural_oracle)
from texbake.images import b64_png, decode_b64_png, sample_texture, save_png
from texbake.raster import condition_maps, rasterize
from texbake.uvproject import project_view, rasterize_uv


def _orbit_maps(mesh, frames=8, res=64):
    spec = orbit_for_mesh(mesh, frames=frames, resolution=res)
    return [condition_maps(rasterize(mesh, cam)) for cam in orbit_cameras(spec)]


def _ray_uv(mesh, cam):
    """Per-pixel UV from an independent nearest-hit ray/triangle intersection."""
    h, w = cam.height, cam.width
    jj, ii = np.mgrid[0:h, 0:w]
    far = cam.unproject((ii + 0.5).ravel(), (jj + 0.5).ravel(), np.ones(h * w))
    dirs = far - cam.position
    tri = mesh.corner_positions()
    tuv = mesh.corner_uvs()
    best = np.full(h * w, np.inf)
    uv = np.zeros((h * w, 2))
    for f in range(len(tri)):
        e1, e2 = tri[f, 1] - tri[f, 0], tri[f, 2] - tri[f, 0]
        p = np.cross(dirs, e2)
        det = p @ e1
        if abs(det).max() < 1e-14:
            continue
        inv = 1.0 / np.where(np.abs(det) > 1e-14, det, np.inf)
        s = cam.position - tri[f, 0]
        u = (p @ s) * inv
        q = np.cross(s, e1)
        v = (dirs @ q) * inv
        t = (q @ e2) * inv
        hit = (u >= 0) & (v >= 0) & (u + v <= 1) & (t > cam.near) & (t < best)
        best[hit] = t[hit]
        uv[hit] = ((1 - u - v)[:, None] * tuv[f, 0] + u[:, None] * tuv[f, 1] + v[:, None] * tuv[f, 2])[hit]
    return uv.reshape(h, w, 2), np.isfinite(best).reshape(h, w)


def test_request_defaults_and_validation(sphere):
    maps = _orbit_maps(sphere, frames=2, res=16)
    req = FrameRequest(maps)
    assert req.control_strengths == {"depth": 0.7, "normal": 0.7, "edge": 0.7, "component": 0.5}
    assert req.control_strengths == DEFAULT_STRENGTHS
    assert req.resolution == 16
    with pytest.raises(ValueError):
        FrameRequest(maps, control_strengths={"edge": 1.5})
    with pytest.raises(ValueError):
        FrameRequest([])


def test_constant_red_oracle(sphere):
    maps = _orbit_maps(sphere, frames=3, res=48)
    red = fixtures.constant(32, (1.0, 0.0, 0.0))
    seq = procedural_oracle(sphere, red, [m.gbuffer for m in maps])
    for frame, m in zip(seq.frames, maps):
        cov = m.gbuffer.covered
        np.testing.assert_allclose(frame[cov], np.broadcast_to([1.0, 0.0, 0.0], frame[cov].shape), atol=1e-6)
        assert (frame[~cov] == 0).all()


def test_checker_on_facing_quad_is_axis_aligned():
    tex = fixtures.checker(64, 2)
    quad = fixtures.quad(width=1.0, height=1.0, z=0.0, normal_axis=0)
    cam = Camera((1.0, 0, 0), (0, 0, 0), vfov=2 * math.atan(0.5), width=64, height=64)
    frame = procedural_oracle(quad, tex, [rasterize(quad, cam)]).frames[0]
    np.testing.assert_allclose(frame, tex, atol=1e-6)


def test_checker_oracle_eight_views(cube, checker):
    maps = _orbit_maps(cube, frames=8, res=48)
    seq = generate(ProceduralSource(cube, checker), FrameRequest(maps))
    assert len(seq) == 8 and seq.provenance == "procedural"
    for frame, m in zip(seq.frames, maps):
        cov = m.gbuffer.covered
        uv = m.gbuffer.interpolate(cube.corner_uvs())[cov]
        np.testing.assert_allclose(frame[cov], sample_texture(checker, uv), atol=1e-6)


def test_sphere_polar_grid_matches_ray_traced_reference():
    sphere = fixtures.uv_sphere(n_lat=12, n_lon=24)
    tex = fixtures.polar_grid(256, 8)
    cam = orbit_cameras(orbit_for_mesh(sphere, frames=8, height=0.6, resolution=64))[1]
    frame = procedural_oracle(sphere, tex, [rasterize(sphere, cam)]).frames[0]
    uv, hit = _ray_uv(sphere, cam)
    ref = np.zeros_like(frame)
    ref[hit] = sample_texture(tex, uv[hit])
    assert np.abs(frame[hit] - ref[hit]).mean() <= 2 / 255


def test_released_gbuffers_are_rerendered(cube, checker):
    maps = _orbit_maps(cube, frames=2, res=32)
    want = ProceduralSource(cube, checker).generate(FrameRequest(maps)).frames
    for m in maps:
        m.release()
    got = ProceduralSource(cube, checker).generate(FrameRequest(maps)).frames
    for a, b in zip(want, got):
        np.testing.assert_array_equal(a, b)


def test_oracle_consistency_across_views():
    sphere = fixtures.uv_sphere()
    yy, xx = np.mgrid[0:256, 0:256]
    u, v = (xx + 0.5) / 256, 1 - (yy + 0.5) / 256
    tex = np.stack([0.5 + 0.4 * np.sin(2 * np.pi * u), 0.5 + 0.4 * np.cos(np.pi * v), 0.3 + 0 * u], axis=-1)
    cams = orbit_cameras(orbit_for_mesh(sphere, frames=8, resolution=256))[:2]
    gbs = [rasterize(sphere, c) for c in cams]
    frames = procedural_oracle(sphere, tex, gbs).frames
    texels = rasterize_uv(sphere, 128)
    s = [project_view(texels, c, f, g) for c, f, g in zip(cams, frames, gbs)]
    both = (s[0].w > 0.3) & (s[1].w > 0.3)
    assert both.sum() > 100
    assert np.abs(s[0].color[both] - s[1].color[both]).max() <= 2 / 255


def test_file_source_reads_frames_verbatim(tmp_path, sphere):
    maps = _orbit_maps(sphere, frames=8, res=24)
    rng = np.random.default_rng(3)
    images = [rng.integers(0, 256, (24, 24, 3), dtype=np.uint8) for _ in range(8)]
    for t, img in enumerate(images):
        save_png(tmp_path / f"frame_{t:03d}.png", img)
    seq = parse_source(f"files:{tmp_path}").generate(FrameRequest(maps))
    assert seq.provenance == "files"
    for frame, img in zip(seq.frames, images):
        np.testing.assert_array_equal(np.round(frame * 255).astype(np.uint8), img)


def test_file_source_count_mismatch(tmp_path, sphere):
    maps = _orbit_maps(sphere, frames=3, res=16)
    for t in range(2):
        save_png(tmp_path / f"frame_{t:03d}.png", np.zeros((16, 16, 3), np.uint8))
    with pytest.raises(FrameCountError) as info:
        FileSource(tmp_path).generate(FrameRequest(maps))
    assert info.value.view == 2
    for t in range(2, 4):
        save_png(tmp_path / f"frame_{t:03d}.png", np.zeros((16, 16, 3), np.uint8))
    with pytest.raises(FrameCountError):
        FileSource(tmp_path).generate(FrameRequest(maps))


def test_file_source_wrong_size(tmp_path, sphere):
    maps = _orbit_maps(sphere, frames=1, res=16)
    save_png(tmp_path / "frame_000.png", np.zeros((8, 8, 3), np.uint8))
    with pytest.raises(FrameSourceError, match="view 0"):
        FileSource(tmp_path).generate(FrameRequest(maps))


def _echo_edges(path, body):
    return 200, {"frames": [v["edge"] for v in body["views"]]}


def test_remote_echo_of_edge_maps(stub_server, sphere):
    server = stub_server(_echo_edges)
    maps = _orbit_maps(sphere, frames=4, res=32)
    req = FrameRequest(maps, prompt="wooden chair", seed=11)
    seq = RemoteSource(server.url, timeout=5).generate(req)
    assert seq.provenance == "remote"
    for frame, m in zip(seq.frames, maps):
        got = np.round(frame * 255).astype(np.uint8)
        for c in range(3):
            np.testing.assert_array_equal(got[..., c], m.edge_map)
    path, body = server.requests[0]
    assert path == "/v1/generate"
    assert len(server.requests) == 1  # one request per orbit
    assert body["prompt"] == "wooden chair" and body["seed"] == 11
    assert body["strengths"] == DEFAULT_STRENGTHS
    assert body["resolution"] == 32
    assert set(body["views"][0]) == {"normal", "depth", "edge", "render"}
    np.testing.assert_array_equal(decode_b64_png(body["views"][2]["normal"], "RGB"), maps[2].normal_map)


def test_remote_frame_count_mismatch(stub_server, sphere):
    server = stub_server(lambda p, b: (200, {"frames": [v["edge"] for v in b["views"]][:-1]}))
    with pytest.raises(FrameCountError):
        RemoteSource(server.url, timeout=5).generate(FrameRequest(_orbit_maps(sphere, frames=3, res=16)))


def test_remote_malformed_frame_names_view(stub_server, sphere):
    def handler(path, body):
        frames = [v["edge"] for v in body["views"]]
        frames[1] = base64.b64encode(b"definitely not a png").decode()
        return 200, {"frames": frames}

    server = stub_server(handler)
    with pytest.raises(FrameSourceError) as info:
        RemoteSource(server.url, timeout=5).generate(FrameRequest(_orbit_maps(sphere, frames=3, res=16)))
    assert info.value.view == 1


def test_remote_bad_json_and_http_errors(stub_server, sphere):
    maps = _orbit_maps(sphere, frames=1, res=16)
    server = stub_server(lambda p, b: (200, b"<html>"))
    with pytest.raises(FrameSourceError, match="malformed"):
        RemoteSource(server.url, timeout=5).generate(FrameRequest(maps))
    server = stub_server(lambda p, b: (503, {"error": "busy"}))
    with pytest.raises(FrameSourceError, match="503"):
        RemoteSource(server.url, timeout=5).generate(FrameRequest(maps))
    server = stub_server(lambda p, b: (200, {"nothing": []}))
    with pytest.raises(FrameSourceError, match="frames"):
        RemoteSource(server.url, timeout=5).generate(FrameRequest(maps))


def test_remote_unreachable(sphere):
    with pytest.raises(FrameSourceError, match="cannot reach"):
        RemoteSource(free_port_url(), timeout=2).generate(FrameRequest(_orbit_maps(sphere, frames=1, res=16)))


def test_parse_source_errors(sphere):
    with pytest.raises(ValueError):
        parse_source("magic:thing")
    with pytest.raises(ValueError):
        parse_source("files:")
    with pytest.raises(ValueError):
        parse_source("oracle:x.png")


def test_b64_png_round_trip():
    img = np.random.default_rng(0).integers(0, 256, (9, 7, 3), dtype=np.uint8)
    np.testing.assert_array_equal(decode_b64_png(b64_png(img), "RGB"), img)
    mask = np.zeros((5, 5), bool)
    mask[1:3] = True
    with Image.open(io.BytesIO(base64.b64decode(b64_png(mask, bits1=True)))) as im:
        assert im.mode == "1"
