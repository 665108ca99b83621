"""
Analytic room scenes: an axis-aligned box room with textured boxes and spheres standing
on the floor, lit by an ambient plus one directional term.

World frame: y is up, the floor is y = 0 and the room spans [0, size] on every axis.
"""

from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Tuple

import numpy as np

from src.config.settings import SceneConfig

TEXTURE_KINDS = ("plain", "checker", "stripes")

# Shifts texture cell boundaries off the room planes.
_TEXTURE_OFFSET = 0.0137
# objects rest this far above the floor so they stay strictly inside the room
FLOOR_GAP = 1e-3


class PlacementError(RuntimeError):
    """Object placement exhausted its retry budget."""


@dataclass
class Texture:
    """Procedural albedo defined on world coordinates."""
    kind: str
    color_a: Tuple[float, float, float]
    color_b: Tuple[float, float, float] = (0.0, 0.0, 0.0)
    scale: float = 0.25

    def __post_init__(self) -> None:
        if self.kind not in TEXTURE_KINDS:
            raise ValueError(f"unknown texture kind {self.kind!r}")
        for color in (self.color_a, self.color_b):
            if any(c < 0.0 or c > 1.0 for c in color):
                raise ValueError(f"texture colors must lie in [0, 1], got {color}")
        if self.scale <= 0:
            raise ValueError("texture scale must be positive")

    def albedo(self, points: np.ndarray) -> np.ndarray:
        """Albedo in [0, 1]^3 at each of the (N, 3) points."""
        a = np.asarray(self.color_a, dtype=np.float64)
        b = np.asarray(self.color_b, dtype=np.float64)
        if self.kind == "plain":
            return np.broadcast_to(a, points.shape).copy()
        cells = np.floor((points + _TEXTURE_OFFSET) / self.scale)
        if self.kind == "checker":
            mix = (cells.sum(axis=-1) % 2.0)[:, None]
        else:
            phase = 2.0 * np.pi * (points[:, 0] + points[:, 2] + _TEXTURE_OFFSET) / self.scale
            mix = (0.5 + 0.5 * np.sin(phase))[:, None]
        return (1.0 - mix) * a + mix * b


@dataclass
class Box:
    """Axis-aligned box."""
    center: np.ndarray
    half_extents: np.ndarray
    texture: Texture
    kind: str = "box"

    def footprint(self) -> float:
        return float(np.hypot(self.half_extents[0], self.half_extents[2]))

    def intersect(self, origins: np.ndarray, directions: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """Slab test. Returns entry distance (inf on miss) and outward normals."""
        lo = self.center - self.half_extents
        hi = self.center + self.half_extents
        with np.errstate(divide="ignore", invalid="ignore"):
            inverse = 1.0 / directions
            t0 = (lo - origins) * inverse
            t1 = (hi - origins) * inverse
        # rays parallel to a slab: inside the slab -> unbounded, outside -> miss
        parallel = directions == 0.0
        inside = (origins >= lo) & (origins <= hi)
        t_near = np.where(parallel, np.where(inside, -np.inf, np.inf), np.minimum(t0, t1))
        t_far = np.where(parallel, np.where(inside, np.inf, -np.inf), np.maximum(t0, t1))
        enter = t_near.max(axis=-1)
        leave = t_far.min(axis=-1)
        hit = (enter <= leave) & (enter > 1e-9)
        depth = np.where(hit, enter, np.inf)

        axis = np.argmax(t_near, axis=-1)
        normals = np.zeros_like(directions)
        rows = np.arange(len(directions))
        normals[rows, axis] = -np.sign(directions[rows, axis])
        return depth, normals

    def to_dict(self) -> Dict[str, Any]:
        return {
            "kind": self.kind,
            "center": [float(v) for v in self.center],
            "half_extents": [float(v) for v in self.half_extents],
            "texture": _texture_dict(self.texture),
        }


@dataclass
class Sphere:
    center: np.ndarray
    radius: float
    texture: Texture
    kind: str = "sphere"

    def footprint(self) -> float:
        return float(self.radius)

    def intersect(self, origins: np.ndarray, directions: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        offset = origins - self.center
        b = np.einsum("ij,ij->i", offset, directions)
        c = np.einsum("ij,ij->i", offset, offset) - self.radius ** 2
        disc = b * b - c
        root = np.sqrt(np.maximum(disc, 0.0))
        t = -b - root
        hit = (disc >= 0.0) & (t > 1e-9)
        depth = np.where(hit, t, np.inf)
        points = origins + np.where(hit, t, 0.0)[:, None] * directions
        normals = (points - self.center) / self.radius
        return depth, normals

    def to_dict(self) -> Dict[str, Any]:
        return {
            "kind": self.kind,
            "center": [float(v) for v in self.center],
            "radius": float(self.radius),
            "texture": _texture_dict(self.texture),
        }


@dataclass
class Lighting:
    """Ambient plus one directional light; ambient + diffuse <= 1 keeps colors in [0, 1]."""
    ambient: float = 0.35
    diffuse: float = 0.65
    direction: Tuple[float, float, float] = (0.3, -1.0, 0.2)

    def shade(self, normals: np.ndarray) -> np.ndarray:
        light = -np.asarray(self.direction, dtype=np.float64)
        light /= np.linalg.norm(light)
        return self.ambient + self.diffuse * np.clip(normals @ light, 0.0, None)


# Room faces: (axis, side) with side 0 = the plane at 0, side 1 = the plane at size.
ROOM_FACES: Tuple[Tuple[int, int], ...] = ((0, 0), (0, 1), (1, 0), (1, 1), (2, 0), (2, 1))


@dataclass
class SceneGeometry:
    """Room box, objects and lighting."""
    room_size: np.ndarray
    wall_textures: List[Texture]
    objects: List[Any] = field(default_factory=list)
    lighting: Lighting = field(default_factory=Lighting)
    seed: int = 0

    def __post_init__(self) -> None:
        self.room_size = np.asarray(self.room_size, dtype=np.float64)
        if len(self.wall_textures) != len(ROOM_FACES):
            raise ValueError(f"expected {len(ROOM_FACES)} wall textures, got {len(self.wall_textures)}")

    @property
    def diagonal(self) -> float:
        return float(np.linalg.norm(self.room_size))

    @property
    def center(self) -> np.ndarray:
        return self.room_size / 2.0

    def contains(self, points: np.ndarray, margin: float = 0.0) -> np.ndarray:
        points = np.atleast_2d(points)
        return np.all((points > margin) & (points < self.room_size - margin), axis=-1)

    def intersect(self, origins: np.ndarray, directions: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """
        Nearest hit for (N, 3) rays.

        Returns:
            depth (inf on miss), unit surface normals facing the ray, and the surface id
            (0..5 room faces, 6.. objects, -1 on miss)
        """
        origins = np.atleast_2d(origins).astype(np.float64)
        directions = np.atleast_2d(directions).astype(np.float64)
        count = len(origins)

        depth = np.full(count, np.inf)
        normals = np.zeros((count, 3))
        surface = np.full(count, -1, dtype=np.int64)

        with np.errstate(divide="ignore", invalid="ignore"):
            for face, (axis, side) in enumerate(ROOM_FACES):
                plane = self.room_size[axis] * side
                t = (plane - origins[:, axis]) / directions[:, axis]
                t = np.where(np.isfinite(t) & (t > 1e-9), t, np.inf)
                closer = t < depth
                depth = np.where(closer, t, depth)
                surface = np.where(closer, face, surface)
                normals[closer] = 0.0
                normals[closer, axis] = 1.0 if side == 0 else -1.0

        for index, obj in enumerate(self.objects):
            t, obj_normals = obj.intersect(origins, directions)
            closer = t < depth
            depth = np.where(closer, t, depth)
            surface = np.where(closer, len(ROOM_FACES) + index, surface)
            normals[closer] = obj_normals[closer]

        return depth, normals, surface

    def surface_albedo(self, points: np.ndarray, surface: np.ndarray) -> np.ndarray:
        albedo = np.zeros_like(points)
        textures = list(self.wall_textures) + [obj.texture for obj in self.objects]
        for index in np.unique(surface[surface >= 0]):
            mask = surface == index
            albedo[mask] = textures[index].albedo(points[mask])
        return albedo

    def to_dict(self) -> Dict[str, Any]:
        return {
            "seed": int(self.seed),
            "room_size": [float(v) for v in self.room_size],
            "wall_textures": [_texture_dict(t) for t in self.wall_textures],
            "objects": [obj.to_dict() for obj in self.objects],
            "lighting": {
                "ambient": float(self.lighting.ambient),
                "diffuse": float(self.lighting.diffuse),
                "direction": [float(v) for v in self.lighting.direction],
            },
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "SceneGeometry":
        objects: List[Any] = []
        for item in data.get("objects", []):
            texture = _texture_from(item["texture"])
            if item["kind"] == "box":
                objects.append(Box(np.array(item["center"], float), np.array(item["half_extents"], float), texture))
            elif item["kind"] == "sphere":
                objects.append(Sphere(np.array(item["center"], float), float(item["radius"]), texture))
            else:
                raise ValueError(f"unknown object kind {item['kind']!r}")
        lighting = data.get("lighting", {})
        return cls(
            room_size=np.array(data["room_size"], dtype=np.float64),
            wall_textures=[_texture_from(t) for t in data["wall_textures"]],
            objects=objects,
            lighting=Lighting(
                ambient=float(lighting.get("ambient", 0.35)),
                diffuse=float(lighting.get("diffuse", 0.65)),
                direction=tuple(lighting.get("direction", (0.3, -1.0, 0.2))),
            ),
            seed=int(data.get("seed", 0)),
        )


def _texture_dict(texture: Texture) -> Dict[str, Any]:
    return {
        "kind": texture.kind,
        "color_a": [float(c) for c in texture.color_a],
        "color_b": [float(c) for c in texture.color_b],
        "scale": float(texture.scale),
    }


def _texture_from(data: Dict[str, Any]) -> Texture:
    return Texture(
        kind=data["kind"],
        color_a=tuple(data["color_a"]),
        color_b=tuple(data.get("color_b", (0.0, 0.0, 0.0))),
        scale=float(data.get("scale", 0.25)),
    )


def _random_texture(rng: np.random.Generator, kinds: Tuple[str, ...] = ("checker", "stripes")) -> Texture:
    kind = kinds[int(rng.integers(len(kinds)))]
    return Texture(
        kind=kind,
        color_a=tuple(float(c) for c in rng.uniform(0.15, 0.95, size=3)),
        color_b=tuple(float(c) for c in rng.uniform(0.05, 0.6, size=3)),
        scale=float(rng.uniform(0.15, 0.45)),
    )


def rig_center(config: SceneConfig) -> np.ndarray:
    """Centre of the camera rig: room centre at camera height."""
    size = np.asarray(config.room_size, dtype=np.float64)
    return np.array([size[0] / 2.0, config.camera_height, size[2] / 2.0])


def generate_scene(seed: int, config: Optional[SceneConfig] = None) -> SceneGeometry:
    """
    Build a random room deterministically from `seed`.

    Objects rest just above the floor, stay strictly inside the room, do not overlap each
    other and keep out of the camera clearance radius around the rig.

    Args:
        seed: Random seed
        config: Room size, object count and placement limits

    Returns:
        Scene geometry
    """
    config = config or SceneConfig()
    size = np.asarray(config.room_size, dtype=np.float64)
    if np.any(size <= 0):
        raise ValueError(f"room dimensions must be positive, got {tuple(size)}")
    if config.object_count < 0:
        raise ValueError(f"object count must be >= 0, got {config.object_count}")
    if not 0.0 < config.camera_height < size[1]:
        raise ValueError(f"camera height {config.camera_height} outside room height {size[1]}")

    rng = np.random.default_rng(seed)
    walls = [_random_texture(rng) for _ in ROOM_FACES]
    if config.textureless_wall:
        # back wall (z = size) is a single flat color
        walls[5] = Texture(kind="plain", color_a=tuple(float(c) for c in rng.uniform(0.5, 0.9, size=3)))

    direction = np.array([rng.uniform(-0.5, 0.5), -1.0, rng.uniform(-0.5, 0.5)])
    lighting = Lighting(ambient=0.35, diffuse=0.65, direction=tuple(float(v) for v in direction))

    center = rig_center(config)
    margin = 0.05
    objects: List[Any] = []
    for _ in range(config.object_count):
        for _attempt in range(config.max_placement_attempts):
            texture = _random_texture(rng)
            if rng.uniform() < 0.5:
                half = np.array([rng.uniform(0.12, 0.35), rng.uniform(0.12, 0.5), rng.uniform(0.12, 0.35)])
                candidate: Any = Box(np.zeros(3), half, texture)
                height = half[1]
            else:
                radius = float(rng.uniform(0.12, 0.35))
                candidate = Sphere(np.zeros(3), radius, texture)
                height = radius
            reach = candidate.footprint()
            xz = rng.uniform([reach + margin, reach + margin], [size[0] - reach - margin, size[2] - reach - margin])
            candidate.center = np.array([xz[0], height + FLOOR_GAP, xz[1]])

            if np.hypot(xz[0] - center[0], xz[1] - center[2]) < config.camera_clearance + reach:
                continue
            if 2.0 * height + FLOOR_GAP > size[1] - margin:
                continue
            if any(
                np.hypot(*(candidate.center - other.center)[[0, 2]]) < reach + other.footprint() + margin
                for other in objects
            ):
                continue
            objects.append(candidate)
            break
        else:
            raise PlacementError(
                f"could not place object {len(objects) + 1} of {config.object_count} "
                f"after {config.max_placement_attempts} attempts (seed {seed})"
            )

    return SceneGeometry(room_size=size, wall_textures=walls, objects=objects, lighting=lighting, seed=seed)
