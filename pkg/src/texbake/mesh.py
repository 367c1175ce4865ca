"""Triangle mesh container, OBJ / glTF loading, validation and component segmentation."""

from __future__ import annotations

import base64
import json
import logging
import struct
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

log = logging.getLogger(__name__)

POS, NRM, UV = 0, 1, 2


class MeshError(ValueError):
    """Raised when a mesh file cannot be turned into a bakeable TriMesh."""


@dataclass
class TriMesh:
    """Indexed triangle mesh.

    ``faces`` has shape (F, 3, 3): for each corner a (position, normal, uv)
    index triple. A normal or uv index of -1 means the file did not supply one.
    ``face_group`` keeps the loader's provisional labels so that segmentation
    strategies can be switched after the fact.
    """

    positions: np.ndarray
    normals: np.ndarray
    uvs: np.ndarray
    faces: np.ndarray
    face_component: np.ndarray
    name: str = "mesh"
    face_group: np.ndarray | None = None
    group_names: list[str] = field(default_factory=list)

    def __post_init__(self):
        self.positions = np.asarray(self.positions, dtype=np.float64).reshape(-1, 3)
        self.normals = np.asarray(self.normals, dtype=np.float64).reshape(-1, 3)
        self.uvs = np.asarray(self.uvs, dtype=np.float64).reshape(-1, 2)
        self.faces = np.asarray(self.faces, dtype=np.int64).reshape(-1, 3, 3)
        self.face_component = np.asarray(self.face_component, dtype=np.int64).reshape(-1)
        if self.face_group is None:
            self.face_group = self.face_component.copy()
        else:
            self.face_group = np.asarray(self.face_group, dtype=np.int64).reshape(-1)

    @property
    def n_faces(self) -> int:
        return len(self.faces)

    @property
    def n_components(self) -> int:
        return int(self.face_component.max()) + 1 if self.n_faces else 0

    def corner_positions(self) -> np.ndarray:
        """(F, 3, 3) world positions of every face corner."""
        return self.positions[self.faces[:, :, POS]]

    def corner_normals(self) -> np.ndarray:
        return self.normals[self.faces[:, :, NRM]]

    def corner_uvs(self) -> np.ndarray:
        return self.uvs[self.faces[:, :, UV]]

    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        used = self.positions[np.unique(self.faces[:, :, POS])]
        return used.min(axis=0), used.max(axis=0)

    def bbox_center(self) -> np.ndarray:
        lo, hi = self.bounds()
        return 0.5 * (lo + hi)

    def bounding_radius(self, center=None) -> float:
        if center is None:
            center = self.bbox_center()
        used = self.positions[np.unique(self.faces[:, :, POS])]
        return float(np.linalg.norm(used - center, axis=1).max())

    def components(self) -> list[Component]:
        out = []
        uv = self.corner_uvs()
        for cid in range(self.n_components):
            idx = np.flatnonzero(self.face_component == cid)
            pts = uv[idx].reshape(-1, 2)
            out.append(Component(cid, frozenset(idx.tolist()), (pts.min(axis=0), pts.max(axis=0))))
        return out


@dataclass(frozen=True)
class Component:
    id: int
    faces: frozenset
    uv_bbox: tuple


@dataclass
class ValidationReport:
    missing_uvs: int = 0
    degenerate_faces: int = 0
    out_of_range_uvs_wrapped: int = 0
    normals_recomputed: bool = False


def triangle_areas(corners: np.ndarray) -> np.ndarray:
    """Areas of (F, 3, D) triangles for D in {2, 3}."""
    e1 = corners[:, 1] - corners[:, 0]
    e2 = corners[:, 2] - corners[:, 0]
    if corners.shape[-1] == 2:
        return 0.5 * np.abs(e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])
    return 0.5 * np.linalg.norm(np.cross(e1, e2), axis=1)


def vertex_normals(positions: np.ndarray, pos_faces: np.ndarray) -> np.ndarray:
    """Area-weighted vertex normals (the unnormalised cross product is already area-weighted)."""
    tri = positions[pos_faces]
    fn = np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0])
    acc = np.zeros_like(positions)
    for k in range(3):
        np.add.at(acc, pos_faces[:, k], fn)
    length = np.linalg.norm(acc, axis=1, keepdims=True)
    out = np.zeros_like(acc)
    ok = length[:, 0] > 1e-300
    out[ok] = acc[ok] / length[ok]
    # isolated or fully degenerate vertices get an arbitrary but valid normal
    out[~ok] = (0.0, 0.0, 1.0)
    return out


def validate(mesh: TriMesh) -> ValidationReport:
    """Normalise ``mesh`` in place and report what had to be fixed."""
    report = ValidationReport()
    faces = mesh.faces

    missing_uv = (faces[:, :, UV] < 0).any(axis=1)
    report.missing_uvs = int(missing_uv.sum())
    if report.missing_uvs:
        # faces without UVs collapse onto a single UV point so the texel rasterizer skips them
        mesh.uvs = np.vstack([mesh.uvs, [[0.0, 0.0]]])
        faces[missing_uv, :, UV] = len(mesh.uvs) - 1

    outside = (mesh.uvs < 0.0) | (mesh.uvs > 1.0)
    report.out_of_range_uvs_wrapped = int(outside.any(axis=1).sum())
    if report.out_of_range_uvs_wrapped:
        mesh.uvs = np.where(outside, mesh.uvs - np.floor(mesh.uvs), mesh.uvs)

    lengths = np.linalg.norm(mesh.normals, axis=1) if len(mesh.normals) else np.zeros(0)
    if (faces[:, :, NRM] < 0).any() or (lengths < 1e-12).any():
        mesh.normals = vertex_normals(mesh.positions, faces[:, :, POS])
        faces[:, :, NRM] = faces[:, :, POS]
        report.normals_recomputed = True
    else:
        mesh.normals = mesh.normals / lengths[:, None]

    lo, hi = mesh.bounds()
    scale2 = float(np.sum((hi - lo) ** 2)) or 1.0
    area3 = triangle_areas(mesh.corner_positions())
    area_uv = triangle_areas(mesh.corner_uvs())
    report.degenerate_faces = int(((area3 <= 1e-12 * scale2) | (area_uv <= 1e-14)).sum())
    if report.degenerate_faces:
        log.info("%s: %d degenerate faces kept", mesh.name, report.degenerate_faces)
    return report


def _relabel_first_seen(labels: np.ndarray) -> np.ndarray:
    _, first, inverse = np.unique(labels, return_index=True, return_inverse=True)
    order = np.argsort(np.argsort(first))
    return order[inverse].astype(np.int64)


def connectivity_labels(pos_faces: np.ndarray, n_positions: int) -> np.ndarray:
    """Connected components of faces that share a position index."""
    n_faces = len(pos_faces)
    rows = np.repeat(np.arange(n_faces), 3)
    cols = n_faces + pos_faces.reshape(-1)
    size = n_faces + n_positions
    graph = coo_matrix((np.ones(len(rows), dtype=np.int8), (rows, cols)), shape=(size, size))
    _, labels = connected_components(graph, directed=False)
    return _relabel_first_seen(labels[:n_faces])


def segment_components(mesh: TriMesh, strategy: str = "file_groups") -> TriMesh:
    if strategy == "file_groups":
        labels = _relabel_first_seen(mesh.face_group)
    elif strategy == "connectivity":
        labels = connectivity_labels(mesh.faces[:, :, POS], len(mesh.positions))
    else:
        raise ValueError(f"unknown segmentation strategy {strategy!r}")
    return replace(mesh, face_component=labels, faces=mesh.faces.copy())


COMPONENT_BUCKETS = ("1", "2-10", ">10")


def component_bucket(count: int) -> str:
    if count <= 1:
        return "1"
    return "2-10" if count <= 10 else ">10"


def component_stats(meshes) -> dict:
    """Histogram of per-mesh component counts over the buckets 1 / 2-10 / >10.

    Returns ``{}`` for an empty input, otherwise ``{"counts": {...},
    "proportions": {...}, "total": n}`` with proportions in percent.
    """
    meshes = list(meshes)
    if not meshes:
        return {}
    counts = dict.fromkeys(COMPONENT_BUCKETS, 0)
    for m in meshes:
        counts[component_bucket(m.n_components)] += 1
    total = len(meshes)
    return {
        "counts": counts,
        "proportions": {k: round(100.0 * v / total, 1) for k, v in counts.items()},
        "total": total,
    }


# --------------------------------------------------------------------------- loading


def load_mesh(path, format: str | None = None) -> TriMesh:
    """Load an OBJ or glTF (.gltf/.glb) file and validate it.

    Raises MeshError on parse failures, a missing UV channel or an empty mesh.
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(path)
    fmt = format or {".obj": "obj", ".gltf": "gltf", ".glb": "gltf"}.get(path.suffix.lower())
    if fmt == "obj":
        mesh = _read_obj(path)
    elif fmt == "gltf":
        mesh = _read_gltf(path)
    else:
        raise MeshError(f"unsupported mesh format for {path}")
    if mesh.n_faces == 0:
        raise MeshError(f"mesh {mesh.name!r} has no faces")
    if (mesh.faces[:, :, UV] < 0).all():
        raise MeshError(f"mesh {mesh.name!r} has no UV coordinates; texture baking needs UVs")
    report = validate(mesh)
    log.debug("loaded %s: %d faces, %s", path, mesh.n_faces, report)
    return mesh


def _obj_index(token: str, count: int) -> int:
    if not token:
        return -1
    i = int(token)
    return i - 1 if i > 0 else count + i


def _read_obj(path: Path) -> TriMesh:
    positions, normals, uvs = [], [], []
    faces, groups = [], []
    group_ids: dict[str, int] = {}
    obj_name, grp_name = "", ""
    current = None

    def group_id():
        key = f"{obj_name}/{grp_name}" if obj_name and grp_name else (grp_name or obj_name or "default")
        return group_ids.setdefault(key, len(group_ids))

    with open(path, encoding="utf-8", errors="replace") as fh:
        for lineno, raw in enumerate(fh, 1):
            parts = raw.split("#", 1)[0].split()
            if not parts:
                continue
            tag, args = parts[0], parts[1:]
            try:
                if tag == "v":
                    positions.append([float(a) for a in args[:3]])
                elif tag == "vn":
                    normals.append([float(a) for a in args[:3]])
                elif tag == "vt":
                    uv = [float(a) for a in args[:2]]
                    uvs.append(uv + [0.0] * (2 - len(uv)))
                elif tag == "o":
                    obj_name, current = " ".join(args), None
                elif tag == "g":
                    grp_name, current = " ".join(args), None
                elif tag == "f":
                    if len(args) < 3:
                        raise MeshError("face with fewer than 3 vertices")
                    corners = []
                    for a in args:
                        bits = (a.split("/") + ["", ""])[:3]
                        corners.append((
                            _obj_index(bits[0], len(positions)),
                            _obj_index(bits[2], len(normals)),
                            _obj_index(bits[1], len(uvs)),
                        ))
                    if current is None:
                        current = group_id()
                    for k in range(1, len(corners) - 1):
                        faces.append((corners[0], corners[k], corners[k + 1]))
                        groups.append(current)
            except (ValueError, IndexError) as exc:
                raise MeshError(f"{path}:{lineno}: cannot parse {raw.strip()!r}: {exc}") from exc

    faces = np.asarray(faces, dtype=np.int64).reshape(-1, 3, 3)
    if len(faces):
        for col, arr in ((POS, positions), (NRM, normals), (UV, uvs)):
            idx = faces[:, :, col]
            if (idx >= len(arr)).any() or (col == POS and (idx < 0).any()):
                raise MeshError(f"{path}: face index out of range")
    names = [k for k, _ in sorted(group_ids.items(), key=lambda kv: kv[1])]
    return TriMesh(positions, normals, uvs, faces, np.asarray(groups, dtype=np.int64),
                   name=path.stem, group_names=names)


def save_obj(mesh: TriMesh, path, mtl_name: str | None = None, material: str = "baked") -> None:
    """Write ``mesh`` as OBJ, one group per component, optionally referencing an MTL file."""
    path = Path(path)
    lines = [f"# {mesh.name}"]
    if mtl_name:
        lines.append(f"mtllib {mtl_name}")
    lines += [f"v {x:.9g} {y:.9g} {z:.9g}" for x, y, z in mesh.positions]
    lines += [f"vt {u:.9g} {v:.9g}" for u, v in mesh.uvs]
    lines += [f"vn {x:.9g} {y:.9g} {z:.9g}" for x, y, z in mesh.normals]
    if mtl_name:
        lines.append(f"usemtl {material}")
    last = None
    for fi, face in enumerate(mesh.faces):
        comp = int(mesh.face_component[fi])
        if comp != last:
            lines.append(f"g component_{comp}")
            last = comp
        lines.append("f " + " ".join(f"{p + 1}/{t + 1}/{n + 1}" for p, n, t in face))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


# --------------------------------------------------------------------------- glTF subset

_GLTF_DTYPES = {5120: np.int8, 5121: np.uint8, 5122: np.int16, 5123: np.uint16, 5125: np.uint32, 5126: np.float32}
_GLTF_WIDTH = {"SCALAR": 1, "VEC2": 2, "VEC3": 3, "VEC4": 4, "MAT4": 16}


def _read_gltf(path: Path) -> TriMesh:
    data = path.read_bytes()
    glb_bin = None
    try:
        if data[:4] == b"glTF":
            _, _, total = struct.unpack_from("<III", data, 0)
            offset, doc = 12, None
            while offset < total:
                length, kind = struct.unpack_from("<II", data, offset)
                chunk = data[offset + 8: offset + 8 + length]
                if kind == 0x4E4F534A:
                    doc = json.loads(chunk.decode("utf-8"))
                elif kind == 0x004E4942:
                    glb_bin = chunk
                offset += 8 + length
            if doc is None:
                raise MeshError(f"{path}: GLB without JSON chunk")
        else:
            doc = json.loads(data.decode("utf-8"))
    except (json.JSONDecodeError, struct.error, UnicodeDecodeError) as exc:
        raise MeshError(f"{path}: cannot parse glTF: {exc}") from exc

    buffers = []
    for buf in doc.get("buffers", []):
        uri = buf.get("uri")
        if uri is None:
            buffers.append(glb_bin)
        elif uri.startswith("data:"):
            buffers.append(base64.b64decode(uri.split(",", 1)[1]))
        else:
            buffers.append((path.parent / uri).read_bytes())

    def accessor(i):
        acc = doc["accessors"][i]
        width = _GLTF_WIDTH[acc["type"]]
        dtype = np.dtype(_GLTF_DTYPES[acc["componentType"]])
        count = acc["count"]
        view = doc["bufferViews"][acc["bufferView"]]
        raw = buffers[view["buffer"]]
        start = view.get("byteOffset", 0) + acc.get("byteOffset", 0)
        stride = view.get("byteStride") or width * dtype.itemsize
        out = np.empty((count, width), dtype=np.float64)
        rows = np.ndarray((count,), dtype=np.dtype((dtype, (width,))), buffer=raw,
                          offset=start, strides=(stride,)) if count else np.empty((0, width))
        out[:] = rows
        return out

    positions, normals, uvs, faces, groups, names = [], [], [], [], [], []
    n_pos = n_nrm = n_uv = 0

    def visit(node_idx, parent):
        nonlocal n_pos, n_nrm, n_uv
        node = doc["nodes"][node_idx]
        world = parent @ _node_matrix(node)
        if "mesh" in node:
            gid = len(names)
            names.append(node.get("name") or f"node_{node_idx}")
            normal_mat = np.linalg.inv(world[:3, :3]).T
            for prim in doc["meshes"][node["mesh"]]["primitives"]:
                if prim.get("mode", 4) != 4:
                    continue
                attrs = prim["attributes"]
                p = accessor(attrs["POSITION"])
                p = p @ world[:3, :3].T + world[:3, 3]
                count = len(p)
                idx = accessor(prim["indices"])[:, 0].astype(np.int64) if "indices" in prim else np.arange(count)
                tri = idx.reshape(-1, 3)
                face = np.empty((len(tri), 3, 3), dtype=np.int64)
                face[:, :, POS] = tri + n_pos
                positions.append(p)
                if "NORMAL" in attrs:
                    nrm = accessor(attrs["NORMAL"]) @ normal_mat.T
                    normals.append(nrm)
                    face[:, :, NRM] = tri + n_nrm
                    n_nrm += count
                else:
                    face[:, :, NRM] = -1
                if "TEXCOORD_0" in attrs:
                    t = accessor(attrs["TEXCOORD_0"])
                    t[:, 1] = 1.0 - t[:, 1]
                    uvs.append(t)
                    face[:, :, UV] = tri + n_uv
                    n_uv += count
                else:
                    face[:, :, UV] = -1
                n_pos += count
                faces.append(face)
                groups.append(np.full(len(tri), gid))
        for child in node.get("children", []):
            visit(child, world)

    try:
        scene = doc.get("scenes", [{}])[doc.get("scene", 0)] if doc.get("scenes") else None
        roots = scene["nodes"] if scene else range(len(doc.get("nodes", [])))
        for r in roots:
            visit(r, np.eye(4))
    except (KeyError, IndexError, ValueError, TypeError) as exc:
        raise MeshError(f"{path}: malformed glTF: {exc}") from exc

    cat = lambda parts, w: np.vstack(parts) if parts else np.zeros((0, w))  # noqa: E731
    return TriMesh(
        cat(positions, 3), cat(normals, 3), cat(uvs, 2),
        np.concatenate(faces) if faces else np.zeros((0, 3, 3), dtype=np.int64),
        np.concatenate(groups) if groups else np.zeros(0, dtype=np.int64),
        name=path.stem, group_names=names,
    )


def _node_matrix(node) -> np.ndarray:
    if "matrix" in node:
        return np.asarray(node["matrix"], dtype=np.float64).reshape(4, 4).T
    m = np.eye(4)
    x, y, z, w = node.get("rotation", (0.0, 0.0, 0.0, 1.0))
    rot = np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - z * w), 2 * (x * z + y * w)],
        [2 * (x * y + z * w), 1 - 2 * (x * x + z * z), 2 * (y * z - x * w)],
        [2 * (x * z - y * w), 2 * (y * z + x * w), 1 - 2 * (x * x + y * y)],
    ])
    m[:3, :3] = rot * np.asarray(node.get("scale", (1.0, 1.0, 1.0)))
    m[:3, 3] = node.get("translation", (0.0, 0.0, 0.0))
    return m
