"""
Tests for the positional encoding and the radiance field MLP.
"""

from dataclasses import replace

import numpy as np
import pytest
from structlog.testing import capture_logs

from src.autodiff import graph as ad
from src.field.encoding import SceneBounds, encode_position, encoded_width
from src.field.mlp import LATENT_CODES, FieldMLP
from tests.test_helpers import FD_STEP, GRADIENT_TOLERANCE, MLP_FD_STEP, parameter_gradient_error, tiny_settings


def _points(rng: np.random.Generator, count: int) -> np.ndarray:
    return rng.uniform([0.2, 0.2, 0.2], [3.8, 2.8, 3.8], size=(count, 3))


def _directions(rng: np.random.Generator, count: int) -> np.ndarray:
    d = rng.normal(size=(count, 3))
    return d / np.linalg.norm(d, axis=-1, keepdims=True)


def test_encoding_examples():
    """At x = 0 every sine is 0 and every cosine is 1; L = 0 passes x through."""
    encoded = encode_position(np.zeros((1, 3)), 4).value[0]
    assert encoded.shape == (encoded_width(4),)
    blocks = encoded[3:].reshape(4, 2, 3)
    np.testing.assert_array_equal(blocks[:, 0], 0.0)
    np.testing.assert_array_equal(blocks[:, 1], 1.0)

    x = np.array([[0.1, -0.4, 0.7]])
    np.testing.assert_array_equal(encode_position(x, 0).value, x)
    assert encode_position(x, 9).shape == (1, 57)

    second = encode_position(x, 2).value[0]
    np.testing.assert_allclose(second[9:12], np.sin(2.0 * np.pi * x[0]))

    with pytest.raises(ValueError):
        encode_position(x, -1)


def test_scene_bounds_map_box_to_unit_cube():
    bounds = SceneBounds.from_box(np.zeros(3), np.array([4.0, 3.0, 4.0]))
    np.testing.assert_allclose(bounds.normalize(np.array([[0.0, 1.5, 0.0], [4.0, 1.5, 4.0]])),
                               [[-1.0, 0.0, -1.0], [1.0, 0.0, 1.0]])


def test_field_output_ranges(tiny_field, rng):
    rgb, sigma = tiny_field.query(_points(rng, 40), _directions(rng, 40))
    assert rgb.shape == (40, 3) and sigma.shape == (40,)
    assert np.all((rgb.value > 0) & (rgb.value < 1))
    assert np.all(sigma.value >= 0)
    assert tiny_field.query_count == 40


def test_density_ignores_direction_and_code(tiny_field, rng):
    """Changing the view direction or latent code changes colour but never density."""
    points = _points(rng, 25)
    codes = ad.lift(rng.normal(size=(25, tiny_field.latent_size)))
    rgb_a, sigma_a = tiny_field.query(points, _directions(rng, 25))
    rgb_b, sigma_b = tiny_field.query(points, _directions(rng, 25), codes)
    np.testing.assert_array_equal(sigma_a.value, sigma_b.value)
    assert not np.allclose(rgb_a.value, rgb_b.value)


def test_zero_density_head_gives_softplus_of_zero(tiny_field, rng):
    tiny_field.params["sigma.weight"].value = np.zeros_like(tiny_field.params["sigma.weight"].value)
    _, sigma = tiny_field.query(_points(rng, 10), _directions(rng, 10))
    np.testing.assert_allclose(sigma.value, np.log(2.0))


def test_field_layer_shapes():
    settings = tiny_settings()
    config = settings.radiance
    bounds = SceneBounds.from_box(np.zeros(3), np.ones(3))
    field = FieldMLP(config, bounds, num_images=5)
    assert field.view_input_width == config.width + 3 + config.latent_size
    assert field.params["view.weight"].shape == (field.view_input_width, config.view_width)
    assert field.params[f"trunk{config.skip_layer}.weight"].shape == (config.width + encoded_width(config.frequencies),
                                                                      config.width)
    assert field.params[LATENT_CODES].shape == (5, config.latent_size)
    np.testing.assert_array_equal(field.params[LATENT_CODES].value, 0.0)

    without_codes = FieldMLP(replace(config, latent_size=0), bounds, 5)
    assert LATENT_CODES not in without_codes.params.names()
    assert without_codes.codes_for(np.array([0, 1])) is None


def test_field_rejects_bad_configuration(settings):
    bounds = SceneBounds.from_box(np.zeros(3), np.ones(3))
    bad = replace(settings.radiance, skip_layer=settings.radiance.depth)
    with pytest.raises(ValueError, match="skip_layer"):
        FieldMLP(bad, bounds, 2)


def test_field_rejects_wrong_code_shape(tiny_field, rng):
    with pytest.raises(ValueError, match="latent codes"):
        tiny_field.query(_points(rng, 4), _directions(rng, 4), ad.lift(np.zeros((3, tiny_field.latent_size))))


@pytest.mark.parametrize("step", [FD_STEP, MLP_FD_STEP])
def test_field_parameter_gradients(tiny_field, rng, step):
    """Finite differences agree with backprop for trunk, heads and latent codes."""
    points = _points(rng, 12)
    dirs = _directions(rng, 12)
    images = np.array([0, 1, 2, 3] * 3)
    tiny_field.params[LATENT_CODES].value = rng.normal(scale=0.3, size=tiny_field.params[LATENT_CODES].shape)
    weights = rng.normal(size=(12, 4))

    def loss():
        rgb, sigma = tiny_field.query(points, dirs, tiny_field.codes_for(images))
        out = ad.concat([rgb, ad.reshape(sigma, (12, 1))], axis=-1)
        return ad.sum_(out * weights)

    names = ["trunk0.weight", "trunk1.bias", "sigma.weight", "feature.weight", "view.weight", "rgb.bias", LATENT_CODES]
    error = parameter_gradient_error(tiny_field.params, loss, names=names, entries=5, step=step)
    assert error < GRADIENT_TOLERANCE, f"relative gradient error {error:.2e}"


def test_field_logs_its_size_when_built(settings):
    with capture_logs() as logs:
        field = FieldMLP(settings.radiance, SceneBounds.from_box(np.zeros(3), np.ones(3)), num_images=3)
    built = [entry for entry in logs if entry["event"] == "Built radiance field"]
    assert len(built) == 1
    assert built[0]["parameters"] == field.params.num_values()
    assert built[0]["latent_size"] == settings.radiance.latent_size
