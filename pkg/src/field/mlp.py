"""
Radiance field MLP with per-image latent codes.

Density depends on position only; the viewing direction (raw, unencoded) and the latent
code enter after the density head, in the colour branch.
"""

from typing import Optional, Tuple

import numpy as np

from src.autodiff import graph as ad
from src.autodiff.graph import Node
from src.autodiff.params import ParameterSet, glorot_uniform, he_uniform
from src.config.settings import FieldConfig
from src.field.encoding import SceneBounds, encode_position, encoded_width
from src.utils.logging_setup import PipelineLoggerMixin

LATENT_CODES = "latent_codes"


class FieldMLP(PipelineLoggerMixin):
    """
    Trunk of `depth` rectified layers of `width` units; the encoded position re-enters the
    trunk at `skip_layer`. A softplus density head and a linear feature layer follow; the
    view branch maps (feature, direction, code) through one rectified layer to a sigmoid
    colour.
    """

    def __init__(self, config: FieldConfig, bounds: SceneBounds, num_images: int, seed: int = 0):
        if config.depth < 1 or config.width < 1:
            raise ValueError("field depth and width must be positive")
        if not 0 <= config.skip_layer < config.depth:
            raise ValueError(f"skip_layer {config.skip_layer} outside trunk of depth {config.depth}")
        self.config = config
        self.bounds = bounds
        self.num_images = num_images
        self.params = ParameterSet()
        self.query_count = 0
        rng = np.random.default_rng(seed)

        self.input_width = encoded_width(config.frequencies)
        for layer in range(config.depth):
            if layer == 0:
                fan_in = self.input_width
            elif layer == config.skip_layer:
                fan_in = config.width + self.input_width
            else:
                fan_in = config.width
            self._dense(rng, f"trunk{layer}", fan_in, config.width, relu=True)

        self._dense(rng, "sigma", config.width, 1)
        self._dense(rng, "feature", config.width, config.width)
        self.view_input_width = config.width + 3 + config.latent_size
        self._dense(rng, "view", self.view_input_width, config.view_width, relu=True)
        self._dense(rng, "rgb", config.view_width, 3)

        if config.latent_size > 0:
            self.params.add(LATENT_CODES, np.zeros((num_images, config.latent_size)))
        self.logger.debug(
            "Built radiance field",
            depth=config.depth,
            width=config.width,
            latent_size=config.latent_size,
            parameters=self.params.num_values(),
        )

    def _dense(self, rng: np.random.Generator, name: str, fan_in: int, fan_out: int, relu: bool = False) -> None:
        shape = (fan_in, fan_out)
        weight = he_uniform(rng, shape, fan_in) if relu else glorot_uniform(rng, shape, fan_in, fan_out)
        self.params.add(f"{name}.weight", weight)
        self.params.add(f"{name}.bias", np.zeros(fan_out))

    def _linear(self, name: str, x: Node) -> Node:
        return ad.matmul(x, self.params[f"{name}.weight"]) + self.params[f"{name}.bias"]

    @property
    def latent_size(self) -> int:
        return self.config.latent_size

    def codes_for(self, image_indices: np.ndarray) -> Optional[Node]:
        """Per-ray latent codes gathered from the trainable table."""
        if self.latent_size == 0:
            return None
        return ad.take(self.params[LATENT_CODES], np.asarray(image_indices, dtype=np.int64))

    def zero_codes(self, count: int) -> Optional[Node]:
        if self.latent_size == 0:
            return None
        return ad.lift(np.zeros((count, self.latent_size)))

    def query(self, points: np.ndarray, directions: np.ndarray, codes: Optional[Node] = None) -> Tuple[Node, Node]:
        """
        Evaluate the field.

        Args:
            points: (N, 3) world positions
            directions: (N, 3) unit viewing directions
            codes: (N, e) latent codes; zeros when omitted

        Returns:
            (colour (N, 3) in [0, 1], density (N,) >= 0)
        """
        points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
        directions = np.asarray(directions, dtype=np.float64).reshape(-1, 3)
        count = len(points)
        self.query_count += count
        encoded = encode_position(self.bounds.normalize(points), self.config.frequencies)

        h = encoded
        for layer in range(self.config.depth):
            if layer == self.config.skip_layer and layer > 0:
                h = ad.concat([encoded, h], axis=-1)
            h = ad.relu(self._linear(f"trunk{layer}", h))

        sigma = ad.softplus(self._linear("sigma", h))
        feature = self._linear("feature", h)

        branch = [feature, ad.lift(directions)]
        if self.latent_size > 0:
            if codes is None:
                codes = self.zero_codes(count)
            if codes.shape != (count, self.latent_size):
                raise ad.ShapeError(f"latent codes must be ({count}, {self.latent_size}), got {codes.shape}")
            branch.append(codes)
        view = ad.relu(self._linear("view", ad.concat(branch, axis=-1)))
        rgb = ad.sigmoid(self._linear("rgb", view))
        return rgb, ad.reshape(sigma, (count,))
