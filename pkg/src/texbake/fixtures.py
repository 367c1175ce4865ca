"""Procedural meshes and textures used by tests, benchmarks and the CLI demos."""

from __future__ import annotations

import math

import numpy as np

from .mesh import TriMesh, validate

# 3x2 atlas cells for the cube faces: +x, -x, +y, -y, +z, -z
_CUBE_FACES = [
    ((1, 0, 0), (0, 1, 0), (0, 0, 1)),
    ((-1, 0, 0), (0, -1, 0), (0, 0, 1)),
    ((0, 1, 0), (-1, 0, 0), (0, 0, 1)),
    ((0, -1, 0), (1, 0, 0), (0, 0, 1)),
    ((0, 0, 1), (1, 0, 0), (0, 1, 0)),
    ((0, 0, -1), (1, 0, 0), (0, -1, 0)),
]


def _finish(mesh: TriMesh) -> TriMesh:
    validate(mesh)
    return mesh


def cube(size: float = 1.0, center=(0.0, 0.0, 0.0), pad: float = 0.02, name: str = "cube") -> TriMesh:
    """Axis-aligned cube, 12 faces, 8 shared corners, flat normals, one atlas cell per side."""
    h = 0.5 * size
    center = np.asarray(center, dtype=np.float64)
    corners = np.array([[x, y, z] for x in (-h, h) for y in (-h, h) for z in (-h, h)]) + center
    index = {tuple(np.sign(c - center).astype(int)): i for i, c in enumerate(corners)}
    uvs, faces, normals = [], [], []
    for fi, (n, right, up) in enumerate(_CUBE_FACES):
        n, right, up = map(np.asarray, (n, right, up))
        quad = [n - right - up, n + right - up, n + right + up, n - right + up]
        pid = [index[tuple(q.astype(int))] for q in quad]
        col, row = fi % 3, fi // 3
        u0, u1 = col / 3 + pad, (col + 1) / 3 - pad
        v0, v1 = row / 2 + pad, (row + 1) / 2 - pad
        base = len(uvs)
        uvs += [(u0, v0), (u1, v0), (u1, v1), (u0, v1)]
        normals.append(n.astype(float))
        c = [(pid[k], fi, base + k) for k in range(4)]
        faces += [(c[0], c[1], c[2]), (c[0], c[2], c[3])]
    return _finish(TriMesh(corners, normals, uvs, faces, np.zeros(len(faces), dtype=np.int64), name=name))


def uv_sphere(radius: float = 1.0, n_lat: int = 24, n_lon: int = 48, center=(0.0, 0.0, 0.0),
              uv_rect=(0.0, 0.0, 1.0, 1.0), name: str = "sphere") -> TriMesh:
    """Latitude/longitude sphere with shared seam positions and smooth normals.

    UVs span ``uv_rect`` = (u0, v0, u1, v1); u follows longitude, v latitude.
    """
    center = np.asarray(center, dtype=np.float64)
    u0, v0, u1, v1 = uv_rect
    positions = [(0.0, 0.0, -1.0)]
    for i in range(1, n_lat):
        theta = -0.5 * math.pi + math.pi * i / n_lat
        for j in range(n_lon):
            phi = 2.0 * math.pi * j / n_lon
            positions.append((math.cos(theta) * math.cos(phi), math.cos(theta) * math.sin(phi), math.sin(theta)))
    positions.append((0.0, 0.0, 1.0))
    unit = np.asarray(positions)
    south, north = 0, len(positions) - 1

    def pid(i, j):
        if i == 0:
            return south
        if i == n_lat:
            return north
        return 1 + (i - 1) * n_lon + (j % n_lon)

    uvs = []
    uv_index = {}

    def tid(i, j):
        key = (i, j)
        if key not in uv_index:
            uv_index[key] = len(uvs)
            uvs.append((u0 + (u1 - u0) * j / n_lon, v0 + (v1 - v0) * i / n_lat))
        return uv_index[key]

    def pole_uv(i, j):
        key = ("pole", i, j)
        if key not in uv_index:
            uv_index[key] = len(uvs)
            uvs.append((u0 + (u1 - u0) * (j + 0.5) / n_lon, v0 + (v1 - v0) * i / n_lat))
        return uv_index[key]

    faces = []
    for i in range(n_lat):
        for j in range(n_lon):
            a = (pid(i, j), pid(i, j), tid(i, j))
            b = (pid(i, j + 1), pid(i, j + 1), tid(i, j + 1))
            c = (pid(i + 1, j + 1), pid(i + 1, j + 1), tid(i + 1, j + 1))
            d = (pid(i + 1, j), pid(i + 1, j), tid(i + 1, j))
            if i == 0:
                a = (south, south, pole_uv(0, j))
                faces.append((a, c, d))
            elif i == n_lat - 1:
                c = (north, north, pole_uv(n_lat, j))
                faces.append((a, b, c))
            else:
                faces += [(a, b, c), (a, c, d)]
    return _finish(TriMesh(unit * radius + center, unit, uvs, faces,
                           np.zeros(len(faces), dtype=np.int64), name=name))


def merge(meshes, name: str = "merged") -> TriMesh:
    """Concatenate meshes; each input becomes one file group / component."""
    pos, nrm, uv, faces, groups = [], [], [], [], []
    off = np.zeros(3, dtype=np.int64)
    for g, m in enumerate(meshes):
        f = m.faces + off
        pos.append(m.positions)
        nrm.append(m.normals)
        uv.append(m.uvs)
        faces.append(f)
        groups.append(np.full(m.n_faces, g))
        off += (len(m.positions), len(m.normals), len(m.uvs))
    groups = np.concatenate(groups)
    return _finish(TriMesh(np.vstack(pos), np.vstack(nrm), np.vstack(uv), np.concatenate(faces),
                           groups, name=name, group_names=[m.name for m in meshes]))


def concentric_spheres(outer: float = 1.0, inner: float = 0.5, n_lat: int = 24, n_lon: int = 48) -> TriMesh:
    """Two nested spheres on disjoint UV islands (left / right half); the inner one is never visible."""
    a = uv_sphere(outer, n_lat, n_lon, uv_rect=(0.01, 0.01, 0.49, 0.99), name="outer")
    b = uv_sphere(inner, n_lat, n_lon, uv_rect=(0.51, 0.01, 0.99, 0.99), name="inner")
    return merge([a, b], name="concentric_spheres")


def quad(width: float = 2.0, height: float = 2.0, z: float = 0.0, uv_rect=(0.0, 0.0, 1.0, 1.0),
         normal_axis: int = 2, name: str = "quad") -> TriMesh:
    """Planar rectangle facing +z (or +x when ``normal_axis`` = 0), centred on the axis."""
    w, h = 0.5 * width, 0.5 * height
    u0, v0, u1, v1 = uv_rect
    if normal_axis == 2:
        pos = [(-w, -h, z), (w, -h, z), (w, h, z), (-w, h, z)]
        n = (0.0, 0.0, 1.0)
    else:
        pos = [(z, -w, -h), (z, w, -h), (z, w, h), (z, -w, h)]
        n = (1.0, 0.0, 0.0)
    uvs = [(u0, v0), (u1, v0), (u1, v1), (u0, v1)]
    faces = [((0, 0, 0), (1, 0, 1), (2, 0, 2)), ((0, 0, 0), (2, 0, 2), (3, 0, 3))]
    return _finish(TriMesh(pos, [n], uvs, faces, np.zeros(2, dtype=np.int64), name=name))


def torus(major: float = 1.0, minor: float = 0.35, n_major: int = 32, n_minor: int = 16) -> TriMesh:
    pos, uvs, faces = [], [], []
    for i in range(n_major):
        a = 2 * math.pi * i / n_major
        for j in range(n_minor):
            b = 2 * math.pi * j / n_minor
            r = major + minor * math.cos(b)
            pos.append((r * math.cos(a), r * math.sin(a), minor * math.sin(b)))
    for i in range(n_major + 1):
        for j in range(n_minor + 1):
            uvs.append((i / n_major, j / n_minor))
    for i in range(n_major):
        for j in range(n_minor):
            p = lambda ii, jj: (ii % n_major) * n_minor + (jj % n_minor)  # noqa: E731
            t = lambda ii, jj: ii * (n_minor + 1) + jj  # noqa: E731
            c00, c10 = (p(i, j), -1, t(i, j)), (p(i + 1, j), -1, t(i + 1, j))
            c11, c01 = (p(i + 1, j + 1), -1, t(i + 1, j + 1)), (p(i, j + 1), -1, t(i, j + 1))
            faces += [(c00, c10, c11), (c00, c11, c01)]
    return _finish(TriMesh(pos, np.zeros((0, 3)), uvs, faces, np.zeros(len(faces), dtype=np.int64), name="torus"))


def cup(radius: float = 0.5, height: float = 1.0, wall: float = 0.05, segments: int = 32) -> TriMesh:
    """Open-topped cylinder with a floor: the inside floor is a deep cavity for side views.

    Outer wall, inner wall, floor (inside) and bottom (outside) use separate UV bands.
    """
    pos, uvs, faces = [], [], []
    nrm = []

    def ring(r, z):
        start = len(pos)
        for k in range(segments):
            a = 2 * math.pi * k / segments
            pos.append((r * math.cos(a), r * math.sin(a), z))
        return start

    def band(u0, u1, v0, v1):
        start = len(uvs)
        for row in (v0, v1):
            for k in range(segments + 1):
                uvs.append((u0 + (u1 - u0) * k / segments, row))
        return start

    def wall_faces(lo, hi, uv0, n_sign):
        for k in range(segments):
            k1 = (k + 1) % segments
            a = (lo + k, -1, uv0 + k)
            b = (lo + k1, -1, uv0 + k + 1)
            c = (hi + k1, -1, uv0 + segments + 1 + k + 1)
            d = (hi + k, -1, uv0 + segments + 1 + k)
            faces.extend([(a, b, c), (a, c, d)] if n_sign > 0 else [(a, c, b), (a, d, c)])

    r_in = radius - wall
    floor_z = -0.5 * height + wall
    o_lo, o_hi = ring(radius, -0.5 * height), ring(radius, 0.5 * height)
    i_lo, i_hi = ring(r_in, floor_z), ring(r_in, 0.5 * height)
    wall_faces(o_lo, o_hi, band(0.02, 0.48, 0.52, 0.98), +1)
    wall_faces(i_lo, i_hi, band(0.52, 0.98, 0.52, 0.98), -1)
    # rim between outer and inner tops
    wall_faces(o_hi, i_hi, band(0.02, 0.98, 0.40, 0.48), +1)

    def disk(start, z, u_c, v_c, r_uv, up):
        centre = len(pos)
        pos.append((0.0, 0.0, z))
        c_uv = len(uvs)
        uvs.append((u_c, v_c))
        first = len(uvs)
        for k in range(segments):
            a = 2 * math.pi * k / segments
            uvs.append((u_c + r_uv * math.cos(a), v_c + r_uv * math.sin(a)))
        for k in range(segments):
            k1 = (k + 1) % segments
            tri = ((centre, -1, c_uv), (start + k, -1, first + k), (start + k1, -1, first + k1))
            faces.append(tri if up else (tri[0], tri[2], tri[1]))

    disk(i_lo, floor_z, 0.25, 0.2, 0.18, True)
    disk(o_lo, -0.5 * height, 0.75, 0.2, 0.18, False)
    mesh = TriMesh(pos, nrm, uvs, faces, np.zeros(len(faces), dtype=np.int64), name="cup")
    return _finish(mesh)


def checker(size: int = 256, cells: int = 8, colors=((0.9, 0.15, 0.1), (0.1, 0.3, 0.85))) -> np.ndarray:
    """(size, size, 3) float checkerboard."""
    idx = (np.arange(size) * cells // size)
    parity = (idx[:, None] + idx[None, :]) % 2
    a, b = np.asarray(colors[0]), np.asarray(colors[1])
    return np.where(parity[..., None] == 0, a, b).astype(np.float64)


def polar_grid(size: int = 256, lines: int = 8) -> np.ndarray:
    """Smooth latitude/longitude colour grid for sphere tests."""
    u = (np.arange(size) + 0.5) / size
    uu, vv = np.meshgrid(u, 1.0 - u)
    r = 0.5 + 0.4 * np.sin(2 * np.pi * lines * uu)
    g = 0.5 + 0.4 * np.sin(np.pi * lines * vv)
    b = 0.5 + 0.3 * np.cos(2 * np.pi * (uu + vv))
    return np.stack([r, g, b], axis=-1)


def constant(size: int, color) -> np.ndarray:
    return np.broadcast_to(np.asarray(color, dtype=np.float64), (size, size, 3)).copy()
