"""
On-disk artifacts of the pipeline: depth maps, images, camera records, scene files,
metrics logs and the per-run directory layout.
"""

import struct
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
import yaml
from PIL import Image

from src.scene.camera import Intrinsics, Pose
from src.scene.geometry import SceneGeometry
from src.scene.render import CameraViews, SceneDataset
from src.utils.logging_setup import PipelineLoggerMixin

PathLike = Union[str, Path]

DEPTH_MAGIC = b"DPTH"
DEPTH_VERSION = 1


# --- depth maps -------------------------------------------------------------

def save_depth_map(path: PathLike, depth: np.ndarray) -> None:
    """float32 H x W map behind a magic, version and dimension header."""
    depth = np.asarray(depth)
    if depth.ndim != 2:
        raise ValueError(f"depth map must be 2-D, got shape {depth.shape}")
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as handle:
        handle.write(DEPTH_MAGIC)
        handle.write(struct.pack("<III", DEPTH_VERSION, depth.shape[0], depth.shape[1]))
        handle.write(np.ascontiguousarray(depth, dtype="<f4").tobytes())


def load_depth_map(path: PathLike) -> np.ndarray:
    with open(path, "rb") as handle:
        magic = handle.read(4)
        if magic != DEPTH_MAGIC:
            raise ValueError(f"{path}: not a depth map (magic {magic!r})")
        version, height, width = struct.unpack("<III", handle.read(12))
        if version != DEPTH_VERSION:
            raise ValueError(f"{path}: unsupported depth map version {version}")
        data = np.frombuffer(handle.read(4 * height * width), dtype="<f4")
    if data.size != height * width:
        raise ValueError(f"{path}: truncated depth map")
    return data.reshape(height, width).astype(np.float64)


# --- images -----------------------------------------------------------------

def to_uint8(image: np.ndarray) -> np.ndarray:
    return np.round(np.clip(np.asarray(image, dtype=np.float64), 0.0, 1.0) * 255.0).astype(np.uint8)


def save_image(path: PathLike, image: np.ndarray) -> None:
    """Write an RGB or grayscale image in [0, 1] as 8-bit PNG or ASCII PPM (by suffix)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    pixels = to_uint8(image)
    if path.suffix.lower() == ".ppm":
        if pixels.ndim == 2:
            pixels = np.repeat(pixels[..., None], 3, axis=-1)
        height, width = pixels.shape[:2]
        with open(path, "w") as handle:
            handle.write(f"P3\n{width} {height}\n255\n")
            for row in pixels:
                handle.write(" ".join(str(v) for v in row.reshape(-1)) + "\n")
        return
    Image.fromarray(pixels).save(path)


def load_image(path: PathLike) -> np.ndarray:
    """Read an image as float64 H x W x 3 in [0, 1]."""
    path = Path(path)
    if path.suffix.lower() == ".ppm":
        tokens: List[str] = []
        with open(path) as handle:
            for line in handle:
                tokens.extend(line.split("#", 1)[0].split())
        if not tokens or tokens[0] != "P3":
            raise ValueError(f"{path}: only ASCII (P3) PPM is supported")
        width, height, peak = (int(t) for t in tokens[1:4])
        values = np.array(tokens[4:4 + width * height * 3], dtype=np.float64)
        if values.size != width * height * 3:
            raise ValueError(f"{path}: truncated PPM")
        return values.reshape(height, width, 3) / peak
    with Image.open(path) as handle:
        return np.asarray(handle.convert("RGB"), dtype=np.float64) / 255.0


# --- camera records ---------------------------------------------------------

def save_views(path: PathLike, intr: Intrinsics, poses: Sequence[Pose], near: float, far: float) -> None:
    """One line per view: index fx fy cx cy W H r00 .. r22 tx ty tz."""
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as handle:
        handle.write(f"# near {near!r} far {far!r}\n")
        for index, pose in enumerate(poses):
            values = [intr.fx, intr.fy, intr.cx, intr.cy]
            sizes = [intr.width, intr.height]
            matrix = list(pose.rotation.reshape(-1)) + list(pose.translation)
            handle.write(
                " ".join([str(index)] + [repr(float(v)) for v in values] + [str(s) for s in sizes]
                         + [repr(float(v)) for v in matrix]) + "\n"
            )


def load_views(path: PathLike) -> Tuple[Intrinsics, List[Pose], float, float]:
    intr: Optional[Intrinsics] = None
    poses: List[Pose] = []
    near, far = 0.0, float("inf")
    with open(path) as handle:
        for line_number, line in enumerate(handle, start=1):
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                parts = line[1:].split()
                if len(parts) == 4 and parts[0] == "near" and parts[2] == "far":
                    near, far = float(parts[1]), float(parts[3])
                continue
            fields = line.split()
            if len(fields) != 19:
                raise ValueError(f"{path}:{line_number}: expected 19 fields, got {len(fields)}")
            fx, fy, cx, cy = (float(v) for v in fields[1:5])
            width, height = int(fields[5]), int(fields[6])
            view_intr = Intrinsics(fx, fy, cx, cy, width, height)
            if intr is not None and view_intr != intr:
                raise ValueError(f"{path}:{line_number}: views must share intrinsics")
            intr = view_intr
            values = np.array([float(v) for v in fields[7:]])
            poses.append(Pose(values[:9].reshape(3, 3), values[9:]))
    if intr is None:
        raise ValueError(f"{path}: no view records")
    return intr, poses, near, far


# --- scenes -----------------------------------------------------------------

def save_scene(path: PathLike, scene: SceneGeometry) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as handle:
        yaml.safe_dump(scene.to_dict(), handle, sort_keys=False)


def load_scene(path: PathLike) -> SceneGeometry:
    with open(path) as handle:
        data = yaml.safe_load(handle)
    if not isinstance(data, dict):
        raise ValueError(f"{path}: scene file must contain a mapping")
    return SceneGeometry.from_dict(data)


# --- metrics ----------------------------------------------------------------

class MetricsLog:
    """Append-only CSV of validation records."""

    COLUMNS = ("iteration", "psnr", "depth_rmse")

    def __init__(self, path: PathLike):
        self.path = Path(path)

    def append(self, record: Dict[str, Any]) -> None:
        self.path.parent.mkdir(parents=True, exist_ok=True)
        df = pd.DataFrame([{column: record[column] for column in self.COLUMNS}], columns=list(self.COLUMNS))
        df.to_csv(self.path, mode="a", header=not self.path.exists(), index=False, float_format="%.6f")

    def read(self) -> pd.DataFrame:
        if not self.path.exists():
            return pd.DataFrame(columns=list(self.COLUMNS))
        return pd.read_csv(self.path)


def write_metrics_table(path: PathLike, rows: Iterable[Dict[str, Any]], columns: Sequence[str]) -> pd.DataFrame:
    """Comma-delimited table with a header row and the given column order."""
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    df = pd.DataFrame(list(rows), columns=list(columns))
    df.to_csv(path, index=False, float_format="%.6f")
    return df


def read_metrics_table(path: PathLike) -> pd.DataFrame:
    return pd.read_csv(path)


# --- run directory ----------------------------------------------------------

class ArtifactStore(PipelineLoggerMixin):
    """
    Named locations of every artifact under one run directory.

        scene.yaml
        views/{train,test}.txt
        images/{split}_{index:03d}.png
        depth/{split}_{index:03d}.bin
        sparse/{tag}/{index:03d}.bin
        priors/{tag}/{depth,std}_{index:03d}.bin
        completion/params.bin
        nerf/{name}/...
        eval/{name}/...
    """

    def __init__(self, root: PathLike):
        self.root = Path(root)

    def path(self, *parts: str) -> Path:
        return self.root.joinpath(*parts)

    @property
    def scene_path(self) -> Path:
        return self.path("scene.yaml")

    def views_path(self, split: str) -> Path:
        return self.path("views", f"{split}.txt")

    def image_path(self, split: str, index: int) -> Path:
        return self.path("images", f"{split}_{index:03d}.png")

    def depth_path(self, split: str, index: int) -> Path:
        return self.path("depth", f"{split}_{index:03d}.bin")

    def sparse_path(self, tag: str, index: int) -> Path:
        return self.path("sparse", tag, f"{index:03d}.bin")

    def prior_paths(self, tag: str, index: int) -> Tuple[Path, Path]:
        return self.path("priors", tag, f"depth_{index:03d}.bin"), self.path("priors", tag, f"std_{index:03d}.bin")

    @property
    def completion_dir(self) -> Path:
        return self.path("completion")

    def nerf_dir(self, name: str) -> Path:
        return self.path("nerf", name)

    def eval_dir(self, name: str) -> Path:
        return self.path("eval", name)

    def require(self, path: Path, producer: str) -> Path:
        if not path.exists():
            raise FileNotFoundError(f"missing {path}; run `{producer}` first")
        return path

    def save_dataset(self, dataset: SceneDataset) -> None:
        save_scene(self.scene_path, dataset.scene)
        for split, views in (("train", dataset.train), ("test", dataset.test)):
            save_views(self.views_path(split), views.intrinsics, views.poses, views.near, views.far)
            for index in range(len(views)):
                save_image(self.image_path(split, index), views.images[index])
                save_depth_map(self.depth_path(split, index), views.depths[index])
        self.logger.info("Saved dataset", root=str(self.root), train=len(dataset.train), test=len(dataset.test))

    def load_split(self, split: str) -> CameraViews:
        intr, poses, near, far = load_views(self.require(self.views_path(split), "generate-scene"))
        images = np.array([load_image(self.image_path(split, i)) for i in range(len(poses))])
        depths = np.array([load_depth_map(self.depth_path(split, i)) for i in range(len(poses))])
        return CameraViews(
            intrinsics=intr,
            poses=poses,
            images=images.reshape(len(poses), intr.height, intr.width, 3),
            depths=depths.reshape(len(poses), intr.height, intr.width),
            near=near,
            far=far,
            gains=np.ones((len(poses), 3)),
        )

    def load_dataset(self) -> SceneDataset:
        scene = load_scene(self.require(self.scene_path, "generate-scene"))
        return SceneDataset(scene=scene, train=self.load_split("train"), test=self.load_split("test"))

    def save_sparse(self, tag: str, maps: Sequence[np.ndarray]) -> None:
        for index, depth in enumerate(maps):
            save_depth_map(self.sparse_path(tag, index), depth)
        self.logger.info("Saved sparse depth", tag=tag, views=len(maps))

    def load_sparse(self, tag: str, count: int) -> np.ndarray:
        return np.array([load_depth_map(self.require(self.sparse_path(tag, i), "simulate-sparse")) for i in range(count)])

    def save_priors(self, tag: str, depths: Sequence[np.ndarray], stds: Sequence[np.ndarray]) -> None:
        for index, (depth, std) in enumerate(zip(depths, stds)):
            depth_path, std_path = self.prior_paths(tag, index)
            save_depth_map(depth_path, depth)
            save_depth_map(std_path, std)
        self.logger.info("Saved depth priors", tag=tag, views=len(depths))

    def load_priors(self, tag: str, count: int) -> Tuple[np.ndarray, np.ndarray]:
        depths, stds = [], []
        for index in range(count):
            depth_path, std_path = self.prior_paths(tag, index)
            depths.append(load_depth_map(self.require(depth_path, "export-priors")))
            stds.append(load_depth_map(self.require(std_path, "export-priors")))
        return np.array(depths), np.array(stds)
