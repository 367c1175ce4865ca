"""Pinhole cameras and the circular orbit of bake viewpoints.

World convention: +z is up, orbits lie in planes of constant z. Cameras look
down their local -z axis (OpenGL style); view-space depth is the positive
distance along the viewing axis. Pixel (i, j) covers [i, i+1) x [j, j+1) with
its center at i + 0.5, rows grow downwards.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

WORLD_UP = np.array([0.0, 0.0, 1.0])


class CameraError(ValueError):
    pass


def _unit(v: np.ndarray) -> np.ndarray:
    n = np.linalg.norm(v)
    if n == 0.0 or not np.isfinite(n):
        raise CameraError("zero-length direction")
    return v / n


@dataclass(frozen=True)
class Camera:
    position: np.ndarray
    target: np.ndarray
    up: np.ndarray = field(default_factory=lambda: WORLD_UP.copy())
    vfov: float = math.radians(50.0)
    near: float = 0.01
    far: float = 100.0
    width: int = 1024
    height: int = 1024

    def __post_init__(self):
        object.__setattr__(self, "position", np.asarray(self.position, dtype=np.float64))
        object.__setattr__(self, "target", np.asarray(self.target, dtype=np.float64))
        object.__setattr__(self, "up", np.asarray(self.up, dtype=np.float64))
        if np.allclose(self.position, self.target, rtol=0.0, atol=1e-12):
            raise CameraError("camera position coincides with its target")
        if not 0.0 < self.vfov < math.pi:
            raise CameraError(f"vfov must lie in (0, pi), got {self.vfov}")
        if not 0.0 < self.near < self.far:
            raise CameraError("need 0 < near < far")

    @property
    def basis(self) -> np.ndarray:
        """Rows are the camera right, up and backward axes in world space."""
        forward = _unit(self.target - self.position)
        up = self.up
        if np.linalg.norm(np.cross(forward, up)) < 1e-9:
            up = np.array([1.0, 0.0, 0.0])
        right = _unit(np.cross(forward, up))
        true_up = np.cross(right, forward)
        return np.stack([right, true_up, -forward])

    def view_matrix(self) -> np.ndarray:
        m = np.eye(4)
        rot = self.basis
        m[:3, :3] = rot
        m[:3, 3] = -rot @ self.position
        return m

    def projection_matrix(self) -> np.ndarray:
        f = 1.0 / math.tan(0.5 * self.vfov)
        aspect = self.width / self.height
        n, fa = self.near, self.far
        return np.array([
            [f / aspect, 0.0, 0.0, 0.0],
            [0.0, f, 0.0, 0.0],
            [0.0, 0.0, (fa + n) / (n - fa), 2.0 * fa * n / (n - fa)],
            [0.0, 0.0, -1.0, 0.0],
        ])

    @property
    def focal_px(self) -> float:
        """Focal length in pixels (vertical)."""
        return 0.5 * self.height / math.tan(0.5 * self.vfov)

    def to_view(self, points: np.ndarray) -> np.ndarray:
        rot = self.basis
        return (np.asarray(points, dtype=np.float64) - self.position) @ rot.T

    def project(self, points: np.ndarray):
        """Vectorised projection of (N, 3) points.

        Returns pixel x, pixel y and view depth arrays plus a boolean mask of
        points strictly in front of the near plane.
        """
        cam = self.to_view(points)
        depth = -cam[..., 2]
        front = depth > self.near
        safe = np.where(front, depth, 1.0)
        f = self.focal_px
        px = 0.5 * self.width + f * cam[..., 0] / safe
        py = 0.5 * self.height - f * cam[..., 1] / safe
        return px, py, depth, front

    def unproject(self, px, py, depth) -> np.ndarray:
        f = self.focal_px
        x = (np.asarray(px) - 0.5 * self.width) * depth / f
        y = (0.5 * self.height - np.asarray(py)) * depth / f
        cam = np.stack([x, y, -np.asarray(depth, dtype=np.float64)], axis=-1)
        return cam @ self.basis + self.position


def project_point(camera: Camera, point):
    """(pixel x, pixel y, view depth), or None when the point is at/behind the near plane."""
    p = np.asarray(point, dtype=np.float64)
    if not np.all(np.isfinite(p)):
        raise CameraError("non-finite point")
    px, py, depth, front = camera.project(p[None])
    if not front[0]:
        return None
    return float(px[0]), float(py[0]), float(depth[0])


def view_direction(camera: Camera, point) -> np.ndarray:
    """Unit vector from ``point`` towards the camera centre."""
    return _unit(camera.position - np.asarray(point, dtype=np.float64))


@dataclass(frozen=True)
class OrbitSpec:
    radius: float
    height: float = 0.0
    frames: int = 8
    target: tuple = (0.0, 0.0, 0.0)
    vfov: float = math.radians(50.0)
    near: float = 0.01
    far: float = 100.0
    resolution: int = 1024

    def __post_init__(self):
        if not self.radius > 0.0:
            if self.radius == 0.0 and self.height == 0.0:
                raise CameraError("orbit radius and height both zero: camera would sit on the target")
            if self.radius < 0.0:
                raise CameraError("orbit radius must be positive")
        if int(self.frames) != self.frames or self.frames < 1:
            raise CameraError("frames must be an integer >= 1")


def orbit_angle(t: int, frames: int) -> float:
    return 2.0 * math.pi * t / frames


def orbit_position(t: int, spec: OrbitSpec) -> np.ndarray:
    """Orbit offset (r cos(2 pi t/T), r sin(2 pi t/T), z) relative to the orbit target."""
    if not 0 <= t < spec.frames:
        raise CameraError(f"frame index {t} outside [0, {spec.frames})")
    a = orbit_angle(t, spec.frames)
    return np.array([spec.radius * math.cos(a), spec.radius * math.sin(a), spec.height])


def orbit_cameras(spec: OrbitSpec) -> list[Camera]:
    target = np.asarray(spec.target, dtype=np.float64)
    cams = []
    for t in range(spec.frames):
        cams.append(Camera(
            position=target + orbit_position(t, spec),
            target=target,
            up=WORLD_UP,
            vfov=spec.vfov,
            near=spec.near,
            far=spec.far,
            width=spec.resolution,
            height=spec.resolution,
        ))
    return cams


def framing_vfov(bound: float, distance: float, margin: float = 1.05) -> float:
    """Smallest vertical field of view (radians) that keeps a sphere of radius ``bound`` in frame."""
    if distance <= bound:
        return math.pi * 0.75
    return min(2.0 * math.asin(bound / distance) * margin, math.pi * 0.75)


def orbit_for_mesh(mesh, frames: int = 8, radius_scale: float = 1.8, height: float = 0.0,
                   vfov_deg: float = 50.0, resolution: int = 1024, fit: bool = True) -> OrbitSpec:
    """Default framing: orbit the bounding-box centre at ``radius_scale`` bounding-sphere radii.

    ``height`` is measured from the bounding-box centre. With ``fit`` the field of
    view is widened beyond ``vfov_deg`` when needed so the bounding sphere stays
    entirely in frame from every orbit position.
    """
    center = mesh.bbox_center()
    bound = mesh.bounding_radius(center)
    radius = radius_scale * bound
    distance = math.hypot(radius, height)
    vfov = math.radians(vfov_deg)
    if fit:
        vfov = max(vfov, framing_vfov(bound, distance))
    reach = distance + bound
    return OrbitSpec(
        radius=radius,
        height=height,
        frames=frames,
        target=tuple(center.tolist()),
        vfov=vfov,
        near=max(1e-4, 1e-3 * reach),
        far=4.0 * reach,
        resolution=resolution,
    )
