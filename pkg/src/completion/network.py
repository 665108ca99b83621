"""
Depth completion network: image + sparse depth -> dense depth and per-pixel std.

A strided conv encoder feeds two decoder branches (depth, std) through shared skip
connections. Each branch ends in a map head and an affinity head; the maps are refined
by spatial propagation, the depth branch re-anchored on the sparse input after every
iteration.
"""

from dataclasses import dataclass
from typing import Dict, List, Optional, Tuple

import numpy as np

from src.autodiff import graph as ad
from src.autodiff.graph import Node, no_grad
from src.autodiff.params import ParameterSet, he_uniform
from src.completion.cspn import NEIGHBOR_OFFSETS, cspn_refine
from src.config.settings import CompletionConfig
from src.utils.logging_setup import PipelineLoggerMixin

INPUT_CHANNELS = 5          # RGB, scaled sparse depth, validity mask
BRANCHES = ("depth", "std")


@dataclass
class DepthPrior:
    """Dense depth (meters, in [0, far]) and std (meters, >= s_min) of one view."""
    depth: np.ndarray
    std: np.ndarray


@dataclass
class CompletionOutput:
    depth: Node                 # (N, 1, H, W)
    std: Node
    initial_depth: Node
    initial_std: Node


class CompletionNet(PipelineLoggerMixin):
    """Encoder with two upsampling branches and per-branch spatial propagation."""

    def __init__(self, config: Optional[CompletionConfig] = None, seed: int = 0):
        self.config = config or CompletionConfig()
        self.params = ParameterSet()
        rng = np.random.default_rng(seed)
        widths = list(self.config.encoder_widths)
        if not widths:
            raise ValueError("encoder_widths must name at least one stage")

        self._conv(rng, "stem", INPUT_CHANNELS, widths[0])
        previous = widths[0]
        for stage, width in enumerate(widths):
            self._conv(rng, f"enc{stage}", previous, width)
            previous = width

        # skip widths from deep to shallow: encoder stages except the last, then the stem
        self.skip_widths = widths[-2::-1] + [widths[0]]
        for branch in BRANCHES:
            channels = widths[-1]
            for level, skip in enumerate(self.skip_widths):
                out = skip
                self._conv(rng, f"{branch}.dec{level}", channels + skip, out)
                channels = out
            self._conv(rng, f"{branch}.head", channels, 1)
            self._conv(rng, f"{branch}.affinity", channels, len(NEIGHBOR_OFFSETS), zero=True)
        self.logger.debug("Built completion network", widths=widths, parameters=self.params.num_values())

    @property
    def stride(self) -> int:
        return 2 ** len(self.config.encoder_widths)

    def _conv(self, rng: np.random.Generator, name: str, cin: int, cout: int, zero: bool = False) -> None:
        shape = (cout, cin, 3, 3)
        weight = np.zeros(shape) if zero else he_uniform(rng, shape, fan_in=cin * 9)
        self.params.add(f"{name}.weight", weight)
        self.params.add(f"{name}.bias", np.zeros(cout))

    def _apply(self, name: str, x: Node, stride: int = 1) -> Node:
        return ad.conv2d(x, self.params[f"{name}.weight"], self.params[f"{name}.bias"], stride=stride, padding=1)

    def check_input(self, height: int, width: int) -> None:
        if height % self.stride or width % self.stride:
            raise ValueError(
                f"input {height}x{width} is not divisible by the encoder stride {self.stride}"
            )

    def make_input(self, images: np.ndarray, sparse: np.ndarray) -> np.ndarray:
        """Stack (N, H, W, 3) images and (N, H, W) sparse maps into (N, 5, H, W)."""
        images = np.asarray(images, dtype=np.float64)
        sparse = np.asarray(sparse, dtype=np.float64)
        if images.ndim == 3:
            images, sparse = images[None], sparse[None]
        if images.shape[:3] != sparse.shape:
            raise ValueError(f"image {images.shape[1:3]} and sparse {sparse.shape[1:]} resolutions differ")
        self.check_input(*sparse.shape[1:])
        rgb = images.transpose(0, 3, 1, 2)
        mask = (sparse > 0).astype(np.float64)[:, None]
        return np.concatenate([rgb, sparse[:, None] / self.config.depth_scale, mask], axis=1)

    def forward(self, images: np.ndarray, sparse: np.ndarray) -> CompletionOutput:
        x = self.make_input(images, sparse)
        anchors = np.asarray(sparse, dtype=np.float64).reshape(x.shape[0], 1, *x.shape[2:])

        features: List[Node] = [ad.relu(self._apply("stem", ad.lift(x)))]
        for stage in range(len(self.config.encoder_widths)):
            features.append(ad.relu(self._apply(f"enc{stage}", features[-1], stride=2)))
        bottleneck = features[-1]
        skips = features[-2::-1]

        outputs: Dict[str, Tuple[Node, Node]] = {}
        for branch in BRANCHES:
            h = bottleneck
            for level, skip in enumerate(skips):
                h = ad.concat([ad.upsample2x(h), skip], axis=1)
                h = ad.relu(self._apply(f"{branch}.dec{level}", h))
            head = ad.softplus(self._apply(f"{branch}.head", h)) * self.config.depth_scale
            outputs[branch] = (head, self._apply(f"{branch}.affinity", h))

        initial_depth, depth_affinity = outputs["depth"]
        raw_std, std_affinity = outputs["std"]
        initial_std = raw_std + self.config.s_min

        depth = cspn_refine(initial_depth, depth_affinity, anchors=anchors, iterations=self.config.cspn_iterations_depth)
        std = cspn_refine(initial_std, std_affinity, iterations=self.config.cspn_iterations_std, convex=True)
        return CompletionOutput(depth=depth, std=std, initial_depth=initial_depth, initial_std=initial_std)


def complete(
    net: CompletionNet,
    image: np.ndarray,
    sparse: np.ndarray,
    far: Optional[float] = None,
    invalidate_std_above: Optional[float] = None,
) -> DepthPrior:
    """
    Dense depth prior of one view.

    Args:
        net: Completion network
        image: H x W x 3 image in [0, 1]
        sparse: H x W sparse depth, 0 = invalid
        far: Far plane; depth is clamped to [0, far]
        invalidate_std_above: Zero the depth where the std exceeds this value

    Returns:
        Depth prior with std >= s_min everywhere
    """
    with no_grad():
        output = net.forward(np.asarray(image)[None], np.asarray(sparse)[None])
    depth = output.depth.value[0, 0]
    std = np.maximum(output.std.value[0, 0], net.config.s_min)
    depth = np.clip(depth, 0.0, far if far is not None else np.inf)
    if invalidate_std_above is not None:
        depth = np.where(std > invalidate_std_above, 0.0, depth)
    return DepthPrior(depth=depth, std=std)
