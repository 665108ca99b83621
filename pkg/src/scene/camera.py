"""
Pinhole cameras, poses and rays.

Camera frame convention: x right, y down, z forward (optical axis). Pixel coordinates
are continuous; the centre of pixel (i, j) sits at (i + 0.5, j + 0.5). Depth values in
this package are distances along the unit ray direction.
"""

from dataclasses import dataclass
from typing import Tuple

import numpy as np
from scipy.spatial.transform import Rotation


@dataclass(frozen=True)
class Intrinsics:
    """Pinhole intrinsics in pixels."""
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self) -> None:
        if self.fx <= 0 or self.fy <= 0:
            raise ValueError(f"focal lengths must be positive, got fx={self.fx}, fy={self.fy}")
        if not (0 < self.cx < self.width and 0 < self.cy < self.height):
            raise ValueError(
                f"principal point ({self.cx}, {self.cy}) outside image {self.width}x{self.height}"
            )

    @classmethod
    def from_fov(cls, width: int, height: int, fov_deg: float) -> "Intrinsics":
        """Square pixels, horizontal field of view, centred principal point."""
        focal = 0.5 * width / np.tan(0.5 * np.radians(fov_deg))
        return cls(fx=focal, fy=focal, cx=width / 2.0, cy=height / 2.0, width=width, height=height)

    def matrix(self) -> np.ndarray:
        return np.array([[self.fx, 0.0, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]])

    def scaled(self, width: int, height: int) -> "Intrinsics":
        sx, sy = width / self.width, height / self.height
        return Intrinsics(self.fx * sx, self.fy * sy, self.cx * sx, self.cy * sy, width, height)


@dataclass(frozen=True)
class Pose:
    """Camera-to-world rigid transform."""
    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self) -> None:
        rotation = np.asarray(self.rotation, dtype=np.float64)
        translation = np.asarray(self.translation, dtype=np.float64).reshape(3)
        if rotation.shape != (3, 3):
            raise ValueError(f"rotation must be 3x3, got {rotation.shape}")
        if not np.allclose(rotation.T @ rotation, np.eye(3), atol=1e-9) or abs(np.linalg.det(rotation) - 1.0) > 1e-9:
            raise ValueError("rotation must be orthonormal with determinant +1")
        object.__setattr__(self, "rotation", rotation)
        object.__setattr__(self, "translation", translation)

    @classmethod
    def identity(cls) -> "Pose":
        return cls(np.eye(3), np.zeros(3))

    @classmethod
    def look_at(cls, eye: np.ndarray, target: np.ndarray, up: Tuple[float, float, float] = (0.0, 1.0, 0.0)) -> "Pose":
        """Camera at `eye` looking at `target`; image y axis points along -up."""
        eye = np.asarray(eye, dtype=np.float64)
        forward = np.asarray(target, dtype=np.float64) - eye
        forward /= np.linalg.norm(forward)
        right = np.cross(forward, -np.asarray(up, dtype=np.float64))
        if np.linalg.norm(right) < 1e-9:
            raise ValueError("look_at: viewing direction parallel to up vector")
        right /= np.linalg.norm(right)
        down = np.cross(forward, right)
        rotation = np.stack([right, down, forward], axis=1)
        # re-orthonormalize to machine precision
        u, _, vt = np.linalg.svd(rotation)
        return cls(u @ vt, eye)

    @classmethod
    def from_vector(cls, vector: np.ndarray) -> "Pose":
        """Six-vector form: axis-angle rotation (radians) followed by translation."""
        vector = np.asarray(vector, dtype=np.float64).reshape(6)
        rotation = Rotation.from_rotvec(vector[:3]).as_matrix()
        u, _, vt = np.linalg.svd(rotation)
        return cls(u @ vt, vector[3:])

    def to_vector(self) -> np.ndarray:
        return np.concatenate([Rotation.from_matrix(self.rotation).as_rotvec(), self.translation])

    def world_to_camera(self, points: np.ndarray) -> np.ndarray:
        return (np.asarray(points) - self.translation) @ self.rotation

    def camera_to_world(self, points: np.ndarray) -> np.ndarray:
        return np.asarray(points) @ self.rotation.T + self.translation


@dataclass(frozen=True)
class Ray:
    """r(t) = origin + t * direction for t in [near, far]."""
    origin: np.ndarray
    direction: np.ndarray
    near: float
    far: float

    def __post_init__(self) -> None:
        if abs(np.linalg.norm(self.direction) - 1.0) > 1e-9:
            raise ValueError("ray direction must be unit length")
        if not 0.0 <= self.near < self.far:
            raise ValueError(f"invalid ray bounds near={self.near}, far={self.far}")

    def at(self, t: float) -> np.ndarray:
        return self.origin + t * self.direction


def pixel_ray(intr: Intrinsics, pose: Pose, px: float, py: float, near: float = 0.0, far: float = 1e3) -> Ray:
    """Ray through the continuous pixel coordinate (px, py)."""
    if not (0 <= px < intr.width and 0 <= py < intr.height):
        raise ValueError(f"pixel ({px}, {py}) outside image {intr.width}x{intr.height}")
    camera = np.array([(px - intr.cx) / intr.fx, (py - intr.cy) / intr.fy, 1.0])
    direction = pose.rotation @ (camera / np.linalg.norm(camera))
    return Ray(origin=pose.translation.copy(), direction=direction / np.linalg.norm(direction), near=near, far=far)


def pixel_directions(intr: Intrinsics, pose: Pose, px: np.ndarray, py: np.ndarray) -> np.ndarray:
    """Unit world directions through continuous pixel coordinates (no bounds check)."""
    px = np.asarray(px, dtype=np.float64)
    py = np.asarray(py, dtype=np.float64)
    camera = np.stack([(px - intr.cx) / intr.fx, (py - intr.cy) / intr.fy, np.ones_like(px)], axis=-1)
    directions = camera @ pose.rotation.T
    return directions / np.linalg.norm(directions, axis=-1, keepdims=True)


def image_rays(intr: Intrinsics, pose: Pose) -> Tuple[np.ndarray, np.ndarray]:
    """Origins and unit directions through every pixel centre, each shaped (H, W, 3)."""
    px, py = np.meshgrid(np.arange(intr.width) + 0.5, np.arange(intr.height) + 0.5)
    directions = pixel_directions(intr, pose, px, py)
    origins = np.broadcast_to(pose.translation, directions.shape).copy()
    return origins, directions


def project_points(intr: Intrinsics, pose: Pose, points: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Project world points into a camera.

    Returns:
        (px, py) continuous pixel coordinates, ray distance from the camera centre,
        and a mask of points in front of the camera
    """
    camera = pose.world_to_camera(np.atleast_2d(points))
    in_front = camera[:, 2] > 1e-9
    z = np.where(in_front, camera[:, 2], 1.0)
    pixels = np.stack([intr.fx * camera[:, 0] / z + intr.cx, intr.fy * camera[:, 1] / z + intr.cy], axis=-1)
    distance = np.linalg.norm(camera, axis=-1)
    return pixels, distance, in_front
