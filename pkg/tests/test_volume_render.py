"""
Tests for compositing, the ray samplers and the two-pass renderer.
"""

import numpy as np
import pytest

from src.autodiff import graph as ad
from src.render.pixel import FALLBACK_OPACITY, render_image, render_pixel_test_time, render_rays, render_two_pass
from src.render.sampling import (
    depth_guided_sample,
    make_strictly_ascending,
    merge_samples,
    stratified_sample,
)
from src.render.volume import composite, interval_lengths
from src.scene.camera import Ray
from tests.test_helpers import GRADIENT_TOLERANCE, parameter_gradient_error


class PlaneField:
    """Grey field that is empty before z = wall and dense behind it."""

    latent_size = 0

    def __init__(self, wall: float = 2.0, density: float = 1e3):
        self.wall = wall
        self.density = density
        self.query_count = 0

    def query(self, points, directions, codes=None):
        points = np.asarray(points).reshape(-1, 3)
        self.query_count += len(points)
        sigma = np.where(points[:, 2] > self.wall, self.density, 0.0)
        return ad.lift(np.full((len(points), 3), 0.5)), ad.lift(sigma)


def _forward_rays(count: int):
    origins = np.zeros((count, 3))
    directions = np.tile([0.0, 0.0, 1.0], (count, 1))
    return origins, directions


def test_transparent_ray_renders_nothing():
    t = np.linspace(0.5, 3.5, 8)[None]
    result = composite(t, np.zeros((1, 8)), np.full((1, 8, 3), 0.7), far=4.0)
    assert result.opacity.item() == 0.0
    np.testing.assert_array_equal(result.color.value, 0.0)
    assert result.depth.item() == 0.0 and result.std.item() == 0.0


def test_single_opaque_sample():
    t = np.array([[1.0, 2.0, 3.0]])
    rgb = np.array([[[0.1, 0.1, 0.1], [0.2, 0.6, 0.9], [1.0, 1.0, 1.0]]])
    result = composite(t, np.array([[0.0, 1e6, 0.0]]), rgb, far=4.0)
    assert abs(result.opacity.item() - 1.0) < 1e-12
    assert abs(result.depth.item() - 2.0) < 1e-12
    assert result.std.item() < 1e-6
    np.testing.assert_allclose(result.color.value[0], [0.2, 0.6, 0.9])


def test_homogeneous_medium_opacity():
    """sigma = 0.5 over [0, 4] absorbs 1 - exp(-2) of the light."""
    t = (np.arange(256) * 4.0 / 256)[None]
    result = composite(t, np.full((1, 256), 0.5), np.full((1, 256, 3), 0.3), far=4.0)
    assert abs(result.opacity.item() - (1.0 - np.exp(-2.0))) < 1e-3


def test_weights_sum_matches_total_absorption(rng):
    t = np.sort(rng.uniform(0.1, 5.0, size=(6, 20)), axis=-1)
    sigma = rng.uniform(0.0, 2.0, size=(6, 20))
    result = composite(t, sigma, rng.uniform(size=(6, 20, 3)), far=5.0)
    expected = 1.0 - np.exp(-(sigma * interval_lengths(t, 5.0)).sum(axis=-1))
    np.testing.assert_allclose(result.opacity.value, expected, rtol=0, atol=1e-12)
    assert np.all(result.weights.value >= 0)


def test_opacity_grows_with_density_and_depth_is_bounded(rng):
    t = np.sort(rng.uniform(0.1, 5.0, size=(4, 16)), axis=-1)
    sigma = rng.uniform(0.0, 1.0, size=(4, 16))
    rgb = rng.uniform(size=(4, 16, 3))
    thin = composite(t, sigma, rgb, far=5.0)
    thick = composite(t, sigma * 3.0, rgb, far=5.0)
    assert np.all(thick.opacity.value >= thin.opacity.value)
    for result in (thin, thick):
        assert np.all(result.depth.value <= result.opacity.value * t[:, -1] + 1e-12)
        assert np.all(result.opacity.value <= 1.0)


def test_homogeneous_depth_converges_with_more_samples():
    """Expected depth approaches the closed-form integral as samples are added."""
    sigma, far = 0.5, 4.0
    exact = (1.0 - np.exp(-sigma * far) * (1.0 + sigma * far)) / sigma
    errors = []
    for count in (32, 256):
        t = (np.arange(count) * far / count)[None]
        result = composite(t, np.full((1, count), sigma), np.zeros((1, count, 3)), far=far)
        errors.append(abs(result.depth.item() - exact))
    assert errors[1] < errors[0] / 4, f"errors {errors}"


def test_composite_rejects_bad_samples():
    with pytest.raises(ValueError, match="strictly ascending"):
        composite(np.array([[1.0, 1.0, 2.0]]), np.zeros((1, 3)), np.zeros((1, 3, 3)), far=3.0)
    with pytest.raises(ValueError, match="do not match"):
        composite(np.array([[1.0, 2.0]]), np.zeros((1, 3)), np.zeros((1, 3, 3)), far=3.0)


def test_stratified_sample_one_per_bin(rng):
    t = stratified_sample(0.5, 4.5, 16, rng, rays=10)
    assert t.shape == (10, 16)
    bins = np.floor((t - 0.5) / 4.0 * 16).astype(int)
    np.testing.assert_array_equal(bins, np.tile(np.arange(16), (10, 1)))

    per_ray = stratified_sample(np.array([0.0, 1.0]), np.array([1.0, 3.0]), 4, rng)
    assert per_ray.shape == (2, 4)
    assert np.all(per_ray[1] >= 1.0) and np.all(per_ray[1] <= 3.0)

    with pytest.raises(ValueError):
        stratified_sample(0.0, 1.0, 0, rng)


def test_depth_guided_sample_concentrates_near_prior(rng):
    near, far, mean, std = 0.1, 4.0, np.full(5, 2.0), np.full(5, 0.05)
    t = depth_guided_sample(near, far, mean, std, 64, rng)
    assert t.shape == (5, 64)
    assert np.all(np.diff(t, axis=-1) > 0)
    assert np.all((t >= near) & (t <= far))
    close = np.sum(np.abs(t - 2.0) <= 3 * 0.05, axis=-1)
    assert np.all(close >= 30), f"samples within 3 std of the prior: {close}"

    assert depth_guided_sample(near, far, 2.0, 0.1, 7, rng).shape == (1, 7)


def test_depth_guided_sample_clamps_to_range(rng):
    """A prior behind the far plane still yields strictly ascending samples inside [near, far]."""
    t = depth_guided_sample(0.1, 4.0, np.array([10.0, 3.99]), np.array([0.01, 0.5]), 32, rng)
    assert np.all(np.diff(t, axis=-1) > 0)
    assert np.all((t >= 0.1) & (t <= 4.0))

    with pytest.raises(ValueError, match="positive"):
        depth_guided_sample(0.1, 4.0, 2.0, 0.0, 8, rng)
    with pytest.raises(ValueError):
        depth_guided_sample(0.1, 4.0, 2.0, 0.1, 1, rng)


def test_make_strictly_ascending_separates_duplicates():
    t = make_strictly_ascending(np.array([[1.0, 1.0, 1.0], [2.0, 2.0, 2.0]]), 0.0, 2.0)
    assert np.all(np.diff(t, axis=-1) > 0)
    assert np.all(t <= 2.0)
    assert abs(t[0, 0] - 1.0) < 1e-12


def test_merge_samples_order(rng):
    first = stratified_sample(0.0, 1.0, 5, rng, rays=3)
    second = stratified_sample(0.0, 1.0, 4, rng, rays=3)
    merged, order = merge_samples(first, second, 0.0, 1.0)
    joined = np.concatenate([first, second], axis=-1)
    np.testing.assert_allclose(merged, np.take_along_axis(joined, order, axis=-1), atol=1e-12)
    assert np.all(np.diff(merged, axis=-1) > 0)


def test_two_pass_queries_each_sample_once(rng):
    field = PlaneField()
    origins, directions = _forward_rays(6)
    result, _ = render_two_pass(field, origins, directions, 0.1, 4.0, 33, rng)
    assert field.query_count == 6 * 33
    assert result.t.shape == (6, 33)


def test_two_pass_finds_opaque_wall(rng):
    field = PlaneField(wall=2.0)
    origins, directions = _forward_rays(4)
    result, info = render_two_pass(field, origins, directions, 0.1, 4.0, 64, rng)
    bin_width = (4.0 - 0.1) / 32
    assert not info.fallback.any()
    np.testing.assert_array_less(np.abs(info.pass_one_depth - 2.0), 2 * bin_width)
    np.testing.assert_array_less(np.abs(result.depth.value - 2.0), bin_width)
    assert np.all(np.abs(info.samples - 2.0) < 8 * bin_width)
    np.testing.assert_allclose(result.color.value, 0.5, atol=1e-6)


def test_two_pass_falls_back_on_empty_field(rng):
    field = PlaneField(wall=100.0)
    origins, directions = _forward_rays(3)
    result, info = render_two_pass(field, origins, directions, 0.1, 4.0, 16, rng)
    assert info.fallback.all()
    assert np.all(result.opacity.value < FALLBACK_OPACITY)
    bins = np.floor((np.sort(info.samples, axis=-1) - 0.1) / 3.9 * 8).astype(int)
    np.testing.assert_array_equal(bins, np.tile(np.arange(8), (3, 1)))

    with pytest.raises(ValueError):
        render_two_pass(field, origins, directions, 0.1, 4.0, 1, rng)


def test_render_pixel_test_time_is_seeded(tiny_field):
    ray = Ray(origin=np.array([2.0, 1.3, 2.0]), direction=np.array([0.0, 0.0, 1.0]), near=0.1, far=4.0)
    first = render_pixel_test_time(tiny_field, ray, None, 16, seed=5)
    second = render_pixel_test_time(tiny_field, ray, np.zeros(tiny_field.latent_size), 16, seed=5)
    np.testing.assert_array_equal(first.color.value, second.color.value)
    assert first.t.shape == (1, 16)


def test_render_image_shapes(tiny_field, tiny_dataset):
    views = tiny_dataset.test
    rendered = render_image(tiny_field, views.intrinsics, views.poses[0], views.near, views.far,
                            samples=8, seed=0, chunk_size=64)
    height, width = views.shape
    assert rendered["rgb"].shape == (height, width, 3)
    for key in ("depth", "std", "opacity"):
        assert rendered[key].shape == (height, width)
        assert np.all(np.isfinite(rendered[key]))
    assert np.all(rendered["opacity"] <= 1.0 + 1e-12)


def test_render_gradients_through_composite(tiny_field, rng):
    """Colour, depth and std of composited rays backpropagate to the field parameters."""
    origins = np.tile([2.0, 1.3, 0.5], (5, 1))
    directions = rng.normal(size=(5, 3))
    directions /= np.linalg.norm(directions, axis=-1, keepdims=True)
    t = stratified_sample(0.1, 3.0, 12, rng, rays=5)
    weights = rng.normal(size=(5, 5))

    def loss():
        result = render_rays(tiny_field, origins, directions, t, 3.0)
        out = ad.concat([result.color, ad.reshape(result.depth, (5, 1)), ad.reshape(result.std, (5, 1))], axis=-1)
        return ad.sum_(out * weights)

    error = parameter_gradient_error(tiny_field.params, loss, names=["trunk0.weight", "sigma.weight", "rgb.weight"])
    assert error < GRADIENT_TOLERANCE, f"relative gradient error {error:.2e}"
