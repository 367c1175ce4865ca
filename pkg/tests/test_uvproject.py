import dataclasses
import math

import numpy as np
import pytest

from texbake import fixtures
from texbake.camera import Camera, orbit_cameras, orbit_for_mesh
from texbake.mesh import MeshError, TriMesh, segment_components
from texbake.raster import rasterize
from texbake.uvproject import confidence_image, project_view, rasterize_uv, texel_centers


def _tri_mesh(uv_triangles):
    n = len(uv_triangles)
    pos = np.array([[u, v, 0.0] for tri in uv_triangles for u, v in tri])
    uvs = pos[:, :2].copy()
    faces = [[(3 * f + k, 0, 3 * f + k) for k in range(3)] for f in range(n)]
    return TriMesh(pos, [[0, 0, 1]], uvs, faces, np.arange(n))


def point_in_triangle(p, a, b, c):
    def side(p, q, r):
        return (q[0] - p[..., 0]) * (r[1] - p[..., 1]) - (q[1] - p[..., 1]) * (r[0] - p[..., 0])

    d0, d1, d2 = side(p, a, b), side(p, b, c), side(p, c, a)
    return ((d0 >= 0) & (d1 >= 0) & (d2 >= 0)) | ((d0 <= 0) & (d1 <= 0) & (d2 <= 0))


def test_triangle_covering_the_square():
    # the smallest resolution accepted is 16; every one of the 256 centres is inside
    t = rasterize_uv(_tri_mesh([[(0, 0), (2, 0), (0, 2)]]), 16)
    assert len(t) == 256 and not t.dilated.any()


def test_covered_texels_match_point_in_triangle_oracle():
    rng = np.random.default_rng(5)
    for _ in range(5):
        tri = rng.uniform(0.05, 0.95, (3, 2))
        t = rasterize_uv(_tri_mesh([tri.tolist()]), 32)
        oracle = np.flatnonzero(point_in_triangle(texel_centers(32), *tri))
        np.testing.assert_array_equal(np.sort(t.index[~t.dilated]), oracle)


def test_left_half_quad():
    quad = fixtures.quad(width=1, height=1, uv_rect=(0.0, 0.0, 0.5, 1.0))
    t = rasterize_uv(quad, 16)
    assert t.cols[~t.dilated].max() == 7
    assert t.cols.max() == 9  # two-texel dilation band


def test_component_islands():
    mesh = fixtures.merge([fixtures.quad(uv_rect=(0.05, 0.05, 0.45, 0.95)),
                           fixtures.quad(z=1, uv_rect=(0.55, 0.05, 0.95, 0.95))])
    mesh = segment_components(mesh, "connectivity")
    t = rasterize_uv(mesh, 64)
    left = t.uv[:, 0] < 0.5
    assert (t.component[left] == 0).all() and (t.component[~left] == 1).all()


def test_entries_lie_in_their_faces(sphere):
    t = rasterize_uv(sphere, 64)
    np.testing.assert_allclose(np.linalg.norm(t.normal, axis=1), 1.0, atol=1e-4)
    core = ~t.dilated
    tri = sphere.corner_uvs()[t.face[core]]
    uv = t.uv[core]
    inside = [point_in_triangle(uv[i], *tri[i]) for i in range(len(uv))]
    assert all(inside)
    # dilated entries copy a covered neighbour's surface sample
    assert t.dilated.any()


def test_uv_errors():
    with pytest.raises(MeshError):
        rasterize_uv(_tri_mesh([[(0.2, 0.2), (0.4, 0.4), (0.6, 0.6)]]), 16)
    with pytest.raises(ValueError):
        rasterize_uv(fixtures.quad(), 8)


def test_overlapping_uv_first_face_wins():
    t = rasterize_uv(_tri_mesh([[(0, 0), (1, 0), (0, 1)], [(0, 0), (1, 0), (0, 1)]]), 16)
    assert t.overlaps == (~t.dilated).sum() > 0
    assert (t.face == 0).all()


# --------------------------------------------------------------------------- projection


def _facing_quad():
    quad = fixtures.quad(width=1, height=1, normal_axis=0)
    return quad, rasterize_uv(quad, 16)


def _view(texels, cam, res=64):
    gb = rasterize(texels.mesh, cam)
    frame = np.full((res, res, 3), 0.25)
    return project_view(texels, cam, frame, gb)


def test_normal_towards_camera_gives_unit_weight():
    quad, t = _facing_quad()
    k = 100
    p = t.position[k]
    s = _view(t, Camera(p + [3, 0, 0], p, width=64, height=64))
    assert s.visible[k]
    assert s.w[k] == pytest.approx(1.0, abs=1e-12)
    np.testing.assert_allclose(s.color[k], 0.25)


def test_sixty_degrees_gives_half():
    quad, t = _facing_quad()
    k = 100
    p = t.position[k]
    d = np.array([math.cos(math.radians(60)), math.sin(math.radians(60)), 0.0])
    s = _view(t, Camera(p + 3 * d, p, width=64, height=64))
    assert s.visible[k]
    assert s.w[k] == pytest.approx(0.5, abs=1e-9)


def test_far_side_of_sphere_is_hidden(sphere):
    t = rasterize_uv(sphere, 64)
    cam = Camera((0, 4, 0), (0, 0, 0), width=128, height=128)
    s = _view(t, cam, 128)
    back = t.position[:, 1] < -0.2
    assert not s.visible[back].any()
    assert (s.w[back] == 0).all()
    assert s.visible[t.position[:, 1] > 0.5].all()
    assert (s.w[~s.visible] == 0).all()


def test_back_facing_but_depth_passing_is_clamped():
    quad, t = _facing_quad()
    flipped = dataclasses.replace(t, normal=-t.normal)
    s = _view(flipped, Camera((3, 0, 0), (0, 0, 0), width=64, height=64))
    assert s.visible.sum() > 0.9 * len(t)
    assert (s.w == 0).all()


def test_frame_size_mismatch():
    quad, t = _facing_quad()
    cam = Camera((3, 0, 0), (0, 0, 0), width=32, height=32)
    with pytest.raises(ValueError):
        project_view(t, cam, np.zeros((16, 16, 3)), rasterize(quad, cam))


def test_confidence_image():
    quad, t = _facing_quad()
    s = _view(t, Camera((3, 0, 0), (0, 0, 0), width=64, height=64))
    img = confidence_image(t, s)
    assert img.shape == (16, 16) and img.dtype == np.uint8
    assert img.max() == 255


@pytest.mark.parametrize("name", ["cube", "sphere"])
def test_visible_texels_face_the_camera_on_convex_meshes(name):
    mesh = fixtures.cube() if name == "cube" else fixtures.uv_sphere()
    t = rasterize_uv(mesh, 128)
    for cam in orbit_cameras(orbit_for_mesh(mesh, frames=8, height=0.4, resolution=256)):
        s = _view(t, cam, 256)
        to_cam = cam.position - t.position
        to_cam /= np.linalg.norm(to_cam, axis=1, keepdims=True)
        tri = mesh.corner_positions()[t.face]
        n = np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0])
        n /= np.linalg.norm(n, axis=1, keepdims=True)
        assert (np.einsum("nd,nd->n", n, to_cam)[s.visible] >= -1e-3).all()
        # smooth normals tilt from the facet by at most one facet angle (7.5 deg on the sphere)
        cos = np.einsum("nd,nd->n", t.normal, to_cam)
        assert cos[s.visible].min() >= -math.sin(math.radians(7.5)) - 1e-9


@pytest.mark.parametrize("name", ["cube", "sphere"])
def test_visible_fraction_is_stable_across_resolution(name):
    mesh = fixtures.cube() if name == "cube" else fixtures.uv_sphere()
    cam = orbit_cameras(orbit_for_mesh(mesh, frames=8, height=0.3, resolution=512))[1]
    fracs = []
    for res in (512, 1024):
        t = rasterize_uv(mesh, res)
        fracs.append(_view(t, cam, 512).visible.mean())
    assert abs(fracs[0] - fracs[1]) < 0.02


def test_equator_seen_by_at_least_two_views(sphere):
    t = rasterize_uv(sphere, 256)
    spec = orbit_for_mesh(sphere, frames=8, resolution=256)
    equator = np.abs(t.position[:, 2]) < 0.02
    hits = np.zeros(len(t), dtype=int)
    expected = np.zeros(len(t), dtype=int)
    az = np.arctan2(t.position[:, 1], t.position[:, 0])
    # a unit-sphere equator point at azimuth phi sees a camera at distance r iff cos(phi - theta) > 1 / r
    for k, cam in enumerate(orbit_cameras(spec)):
        hits += _view(t, cam, 256).visible
        expected += np.cos(az - 2 * np.pi * k / 8) > 1 / spec.radius
    assert (expected[equator] >= 2).all()
    assert (hits[equator] >= 2).all()
    # away from the grazing boundary the depth test agrees with the analytic count
    margin = np.ones(len(t), dtype=bool)
    for k in range(8):
        margin &= np.abs(np.cos(az - 2 * np.pi * k / 8) - 1 / spec.radius) > 0.05
    np.testing.assert_array_equal(hits[equator & margin], expected[equator & margin])
