"""
Tests for the depth completion network, spatial propagation, the GNLL loss and
uncertainty calibration.
"""

import numpy as np
import pytest
from structlog.testing import capture_logs

from src.autodiff.graph import Node, backward
from src.completion.calibration import calibration_report
from src.completion.cspn import cspn_refine, normalize_affinity
from src.completion.losses import gnll_loss
from src.completion.network import CompletionNet, complete
from src.completion.training import CompletionSample, train_completion
from tests.test_helpers import tiny_settings


@pytest.fixture
def tiny_net():
    return CompletionNet(tiny_settings().completion, seed=0)


def _sparse_from(depth: np.ndarray, count: int, seed: int = 0) -> np.ndarray:
    rng = np.random.default_rng(seed)
    sparse = np.zeros_like(depth)
    flat = rng.choice(depth.size, size=count, replace=False)
    sparse.reshape(-1)[flat] = depth.reshape(-1)[flat]
    return sparse


def test_untrained_completion_is_dense_and_floored(tiny_net, tiny_dataset):
    """Any input yields finite dense depth and std >= s_min, even from a nearly empty map."""
    views = tiny_dataset.train
    sparse = _sparse_from(views.depths[0], 2)
    prior = complete(tiny_net, views.images[0], sparse, far=views.far)
    assert prior.depth.shape == views.shape and prior.std.shape == views.shape
    assert np.all(np.isfinite(prior.depth)) and np.all(np.isfinite(prior.std))
    assert np.all(prior.depth > 0), "every pixel should get a depth"
    assert np.all(prior.depth <= views.far)
    assert np.all(prior.std >= tiny_net.config.s_min)

    invalidated = complete(tiny_net, views.images[0], sparse, far=views.far, invalidate_std_above=0.0)
    assert np.all(invalidated.depth == 0.0)


def test_completion_rejects_incompatible_resolution(tiny_net):
    with pytest.raises(ValueError, match="not divisible"):
        complete(tiny_net, np.zeros((10, 16, 3)), np.zeros((10, 16)))
    with pytest.raises(ValueError, match="resolutions differ"):
        tiny_net.make_input(np.zeros((1, 12, 16, 3)), np.zeros((1, 12, 8)))


def test_affinity_normalization_is_stable():
    raw = np.random.default_rng(0).normal(scale=3.0, size=(2, 8, 5, 6))
    weights, center = normalize_affinity(raw)
    total = np.abs(weights.value).sum(axis=1)
    assert np.all(total < 1.0)
    np.testing.assert_allclose(center.value[:, 0], 1.0 - total)

    convex_weights, _ = normalize_affinity(raw, convex=True)
    assert np.all(convex_weights.value >= 0)


def test_cspn_zero_iterations_is_identity():
    initial = np.random.default_rng(1).normal(size=(1, 1, 4, 4))
    out = cspn_refine(initial, np.ones((1, 8, 4, 4)), iterations=0)
    np.testing.assert_array_equal(out.value, initial)


def test_cspn_influence_grows_one_pixel_per_iteration():
    """A single anchor reaches Chebyshev distance k only after k iterations."""
    anchors = np.zeros((1, 1, 11, 11))
    anchors[0, 0, 5, 5] = 2.0
    uniform = np.ones((1, 8, 11, 11))
    out = cspn_refine(np.zeros_like(anchors), uniform, anchors=anchors, iterations=3).value[0, 0]
    assert out[5, 5] == 2.0, "anchor must be reset after every iteration"
    assert out[5, 8] > 0 and out[2, 2] > 0, "distance 3 should be reached after 3 iterations"
    assert out[5, 9] == 0.0 and out[1, 5] == 0.0, "distance 4 must still be untouched"


def test_cspn_is_non_expansive():
    rng = np.random.default_rng(2)
    initial = rng.uniform(-1.0, 1.0, size=(2, 1, 6, 7))
    out = cspn_refine(initial, rng.normal(scale=2.0, size=(2, 8, 6, 7)), iterations=10)
    assert np.abs(out.value).max() <= np.abs(initial).max() + 1e-12


def test_cspn_rejects_bad_shapes():
    with pytest.raises(ValueError):
        cspn_refine(np.zeros((1, 1, 4, 4)), np.zeros((1, 8, 4, 4)), iterations=-1)
    with pytest.raises(ValueError, match="affinity"):
        cspn_refine(np.zeros((1, 1, 4, 4)), np.zeros((1, 3, 4, 4)))


def test_gnll_loss_examples():
    target = np.full((2, 3), 1.5)
    assert abs(gnll_loss(target, np.ones_like(target), target).item()) < 1e-15
    assert abs(gnll_loss(target, np.full_like(target, np.exp(0.5)), target).item() - 1.0) < 1e-12
    shifted = gnll_loss(target + 0.2, np.full_like(target, 0.2), target).item()
    assert abs(shifted - (np.log(0.04) + 1.0)) < 1e-12

    with pytest.raises(ValueError, match="no valid"):
        gnll_loss(target, target, np.zeros_like(target))


def test_gnll_gradient_vanishes_at_matching_std():
    """d/ds [log s^2 + r^2 / s^2] = 0 at s = |r|."""
    target = np.array([2.0, 3.0])
    depth = target + np.array([0.3, -0.15])
    std = Node(np.array([0.3, 0.15]), requires_grad=True)
    backward(gnll_loss(depth, std, target))
    np.testing.assert_allclose(std.grad, [0.0, 0.0], atol=1e-12)


def test_calibration_report_coverage():
    rng = np.random.default_rng(3)
    gt = rng.uniform(1.0, 4.0, size=(4, 100, 100))
    std = rng.uniform(0.05, 0.3, size=gt.shape)
    depth = gt + std * rng.standard_normal(gt.shape)
    report = calibration_report(list(depth), list(std), list(gt))
    for k, expected in zip((1, 2, 3), (0.683, 0.954, 0.997)):
        assert abs(report.coverage[k] - expected) < 0.01, f"k={k}: {report.coverage[k]}"
    assert report.pixels == gt.size

    wide = calibration_report(list(depth), list(np.full_like(std, 1e9)), list(gt))
    assert all(value == 1.0 for value in wide.coverage.values())

    sparse = np.where(rng.uniform(size=gt.shape) < 0.01, gt + 0.1, 0.0)
    with_sparse = calibration_report(list(depth), list(std), list(gt), sparse=list(sparse))
    assert abs(with_sparse.sparse_rmse - 0.1) < 1e-9
    assert set(with_sparse.as_row()) == {"coverage_1", "coverage_2", "coverage_3", "dense_rmse", "sparse_rmse"}


def test_train_completion_zero_epochs_keeps_parameters(tiny_net, tiny_dataset):
    views = tiny_dataset.train
    before = tiny_net.params.state_dict()
    sample = CompletionSample(views.images[0], _sparse_from(views.depths[0], 10), views.depths[0])
    history = train_completion(tiny_net, [sample], epochs=0, learning_rate=1e-3, batch_size=1)
    assert history.train_loss == [] and history.best_epoch == -1
    for name, value in tiny_net.params.state_dict().items():
        np.testing.assert_array_equal(value, before[name])


def test_train_completion_overfits_one_sample(tiny_net, tiny_dataset):
    """Loss on a single repeated sample falls from the first to the last 40-step window."""
    views = tiny_dataset.train
    sample = CompletionSample(views.images[1], _sparse_from(views.depths[1], 12, seed=1), views.depths[1])
    history = train_completion(tiny_net, [sample], epochs=120, learning_rate=1e-3, batch_size=1,
                               validation_fraction=0.0)
    losses = np.array(history.train_loss)
    assert np.all(np.isfinite(losses))
    assert losses[-40:].mean() < losses[:40].mean(), f"loss did not decrease: {losses[:3]} ... {losses[-3:]}"
    assert history.val_loss[history.best_epoch] == min(history.val_loss)


def test_completion_net_logs_its_size_when_built():
    with capture_logs() as logs:
        net = CompletionNet(tiny_settings().completion, seed=0)
    built = [entry for entry in logs if entry["event"] == "Built completion network"]
    assert len(built) == 1
    assert built[0]["parameters"] == net.params.num_values()
