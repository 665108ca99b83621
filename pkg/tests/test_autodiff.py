"""
Tests for the autodiff engine: forward values, gradients against central differences,
Adam and binary checkpoints.
"""

import numpy as np
import pytest

from src.autodiff import graph as ad
from src.autodiff.checkpoint import load_optimizer, load_parameters, save_optimizer, save_parameters
from src.autodiff.graph import Node, ShapeError, backward, forward_op, no_grad
from src.autodiff.optim import Adam, AdamState, MissingGradientError, adam_step
from src.autodiff.params import ParameterSet
from tests.test_helpers import (
    FD_STEP,
    GRADIENT_TOLERANCE,
    MLP_FD_STEP,
    away_from_zero,
    gradient_error,
    parameter_gradient_error,
    project,
)


def _uniform(low, high):
    return lambda rng, shape: rng.uniform(low, high, size=shape)


_NORMAL = lambda rng, shape: rng.normal(size=shape)  # noqa: E731
_KINKED = away_from_zero

# kind -> (function of input nodes, [(shape, generator), ...])
GRADIENT_CASES = {
    "add": (lambda a, b: a + b, [((3, 4), _NORMAL), ((4,), _NORMAL)]),
    "sub": (lambda a, b: a - b, [((3, 4), _NORMAL), ((3, 1), _NORMAL)]),
    "mul": (lambda a, b: a * b, [((3, 4), _NORMAL), ((3, 4), _NORMAL)]),
    "div": (lambda a, b: a / b, [((3, 4), _NORMAL), ((1, 4), _uniform(0.5, 2.0))]),
    "matmul": (lambda a, b: ad.matmul(a, b), [((5, 3), _NORMAL), ((3, 4), _NORMAL)]),
    "exp": (ad.exp, [((4, 3), _NORMAL)]),
    "log": (ad.log, [((4, 3), _uniform(0.5, 2.0))]),
    "relu": (ad.relu, [((4, 3), _KINKED)]),
    "softplus": (ad.softplus, [((4, 3), lambda rng, s: 5.0 * rng.normal(size=s))]),
    "sigmoid": (ad.sigmoid, [((4, 3), _NORMAL)]),
    "sin": (ad.sin, [((4, 3), _NORMAL)]),
    "cos": (ad.cos, [((4, 3), _NORMAL)]),
    "square": (ad.square, [((4, 3), _NORMAL)]),
    "sqrt": (ad.sqrt, [((4, 3), _uniform(0.5, 2.0))]),
    "abs": (ad.absolute, [((4, 3), _KINKED)]),
    "clamp_min": (lambda x: ad.clamp_min(x, 0.0), [((4, 3), _KINKED)]),
    "sum": (lambda x: ad.sum_(x, axis=0), [((4, 3), _NORMAL)]),
    "mean": (lambda x: ad.mean(x, axis=1, keepdims=True), [((4, 3), _NORMAL)]),
    "cumsum": (lambda x: ad.cumsum(x, axis=-1, exclusive=True), [((3, 5), _NORMAL)]),
    "concat": (lambda a, b: ad.concat([a, b], axis=0), [((2, 3), _NORMAL), ((1, 3), _NORMAL)]),
    "slice": (lambda x: x[1:, ::2], [((4, 5), _NORMAL)]),
    "take": (lambda x: ad.take(x, np.array([0, 2, 2, 1])), [((3, 2), _NORMAL)]),
    "reshape": (lambda x: ad.reshape(x, (6, 2)), [((3, 4), _NORMAL)]),
    "transpose": (lambda x: ad.transpose(x, (1, 0, 2)), [((2, 3, 2), _NORMAL)]),
    "pad2d": (lambda x: ad.pad2d(x, pad=1, mode="edge"), [((2, 3, 4), _NORMAL)]),
    "conv2d": (
        lambda x, w, b: ad.conv2d(x, w, b, stride=2, padding=1),
        [((1, 2, 5, 5), _NORMAL), ((3, 2, 3, 3), _NORMAL), ((3,), _NORMAL)],
    ),
    "upsample2x": (ad.upsample2x, [((1, 2, 3, 3), _NORMAL)]),
}


def test_every_op_kind_has_a_gradient_case():
    """Each registered op kind is covered by the finite-difference sweep."""
    assert set(ad.OP_KINDS) == set(GRADIENT_CASES), "gradient cases out of sync with OP_KINDS"


@pytest.mark.parametrize("seed", [0, 1])
@pytest.mark.parametrize("kind", sorted(GRADIENT_CASES))
def test_gradient_matches_finite_differences(kind, seed):
    """Analytic gradients agree with central differences for every op kind."""
    fn, specs = GRADIENT_CASES[kind]
    rng = np.random.default_rng([seed, len(kind)])
    arrays = [generate(rng, shape) for shape, generate in specs]
    error = gradient_error(lambda *nodes: project(fn(*nodes)), arrays)
    assert error < GRADIENT_TOLERANCE, f"{kind}: relative gradient error {error:.2e}"


def test_zero_padding_and_fancy_slice_gradients():
    """The zero-pad mode and list indexing (repeated rows) backpropagate correctly."""
    rng = np.random.default_rng(7)
    x = rng.normal(size=(3, 4))
    assert gradient_error(lambda n: project(ad.pad2d(n, pad=2, mode="zero")), [x]) < GRADIENT_TOLERANCE
    assert gradient_error(lambda n: project(n[[0, 2, 2]]), [x]) < GRADIENT_TOLERANCE


@pytest.mark.parametrize("step", [FD_STEP, MLP_FD_STEP])
@pytest.mark.parametrize("seed", range(4))
def test_two_layer_mlp_gradients(seed, step):
    """Random two-layer MLP: parameter gradients match finite differences."""
    rng = np.random.default_rng(seed)
    params = ParameterSet()
    params.add("w1", rng.normal(size=(3, 8)))
    params.add("b1", rng.normal(size=8))
    params.add("w2", rng.normal(size=(8, 2)))
    params.add("b2", rng.normal(size=2))
    x = rng.normal(size=(5, 3))
    target = rng.normal(size=(5, 2))

    def loss():
        hidden = ad.softplus(ad.matmul(x, params["w1"]) + params["b1"])
        out = ad.matmul(hidden, params["w2"]) + params["b2"]
        return ad.mean(ad.square(out - target))

    error = parameter_gradient_error(params, loss, entries=8, step=step, seed=seed)
    assert error < GRADIENT_TOLERANCE, f"MLP relative gradient error {error:.2e}"


def test_forward_examples():
    """relu, softplus and a 1x1 identity convolution."""
    np.testing.assert_array_equal(ad.relu(np.array([-1.0, 0.0, 2.0])).value, [0.0, 0.0, 2.0])
    assert abs(ad.softplus(np.array([0.0])).value[0] - np.log(2.0)) < 1e-15, "softplus(0) should be ln 2"

    large = ad.softplus(np.array([800.0, -800.0])).value
    assert np.all(np.isfinite(large)), "softplus must not overflow"
    assert abs(large[0] - 800.0) < 1e-9

    image = np.random.default_rng(0).normal(size=(1, 1, 4, 5))
    out = ad.conv2d(image, np.ones((1, 1, 1, 1)))
    np.testing.assert_allclose(out.value, image)


def test_backward_square_sum():
    """d/dp sum(p * p) = 2p."""
    p = Node(np.array([1.0, 2.0, 3.0]), requires_grad=True)
    backward(ad.sum_(p * p))
    np.testing.assert_allclose(p.grad, [2.0, 4.0, 6.0])


def test_backward_accumulates_and_constant_root():
    """Repeated backward adds gradients; a constant root leaves zero gradients."""
    params = ParameterSet()
    p = params.add("p", np.array([1.0, -2.0]))
    root = ad.sum_(p * 3.0)
    backward(root, params)
    backward(root, params)
    np.testing.assert_allclose(p.grad, [6.0, 6.0])

    params.zero_grad()
    backward(ad.sum_(ad.lift(np.ones(3))), params)
    np.testing.assert_array_equal(p.grad, [0.0, 0.0])


def test_backward_is_linear():
    """grad(a f + b g) = a grad(f) + b grad(g)."""
    rng = np.random.default_rng(3)
    value = rng.normal(size=4)

    def grad_of(build):
        x = Node(value.copy(), requires_grad=True)
        backward(build(x))
        return x.grad

    f = lambda x: ad.sum_(ad.sin(x))  # noqa: E731
    g = lambda x: ad.sum_(ad.square(x) * 2.0)  # noqa: E731
    combined = grad_of(lambda x: f(x) * 0.7 + g(x) * -1.3)
    np.testing.assert_allclose(combined, 0.7 * grad_of(f) - 1.3 * grad_of(g), rtol=1e-12, atol=1e-12)


def test_errors_name_the_op_and_shapes():
    """Shape mismatches are rejected with the op and both shapes in the message."""
    with pytest.raises(ShapeError, match=r"add.*\(2, 3\).*\(4,\)"):
        forward_op("add", (np.zeros((2, 3)), np.zeros(4)))
    with pytest.raises(ShapeError, match="matmul"):
        ad.matmul(np.zeros((2, 3)), np.zeros((2, 3)))
    with pytest.raises(ShapeError, match="conv2d"):
        ad.conv2d(np.zeros((1, 2, 4, 4)), np.zeros((1, 3, 3, 3)))
    with pytest.raises(ValueError, match="unknown op kind"):
        forward_op("tanh", (np.zeros(2),))
    with pytest.raises(ValueError, match="scalar"):
        backward(Node(np.ones(3), requires_grad=True))


def test_sqrt_at_zero_has_zero_gradient():
    x = Node(np.array([0.0, 4.0]), requires_grad=True)
    backward(ad.sum_(ad.sqrt(x)))
    np.testing.assert_allclose(x.grad, [0.0, 0.25])


def test_no_grad_and_frozen_parameters():
    """no_grad records nothing; frozen parameters get no gradient."""
    params = ParameterSet()
    a = params.add("a", np.ones(2))
    b = params.add("b", np.ones(2))
    with no_grad():
        assert not (a * 2.0).requires_grad, "no_grad output should not require grad"

    params.set_trainable(False, ["b"])
    backward(ad.sum_(a * b), params)
    assert b.grad is None, "frozen parameter received a gradient"
    np.testing.assert_allclose(a.grad, [1.0, 1.0])


def test_parameter_names_are_unique():
    params = ParameterSet()
    params.add("w", np.zeros(2))
    with pytest.raises(ValueError, match="duplicate"):
        params.add("w", np.zeros(2))


def test_adam_first_step_and_zero_gradient():
    """First bias-corrected step moves by lr; a zero gradient leaves the value alone."""
    params = ParameterSet()
    p = params.add("p", np.array([1.0]))
    p.grad = np.array([1.0])
    adam_step(params, AdamState(), lr=0.1)
    assert abs(p.value[0] - 0.9) < 1e-6, f"expected ~0.9 after one step, got {p.value[0]}"
    np.testing.assert_array_equal(p.grad, [1.0])

    q = ParameterSet()
    node = q.add("q", np.array([2.5]))
    node.grad = np.zeros(1)
    adam_step(q, AdamState(), lr=0.1)
    assert node.value[0] == 2.5


def test_adam_minimizes_quadratic():
    """200 steps on (p - 3)^2 from 0."""
    params = ParameterSet()
    p = params.add("p", np.array([0.0]))
    optimizer = Adam(params, lr=0.1)
    for _ in range(200):
        optimizer.zero_grad()
        backward(ad.sum_(ad.square(p - 3.0)), params)
        optimizer.step()
    assert abs(p.value[0] - 3.0) < 0.05, f"Adam ended at {p.value[0]}"


def test_adam_rejects_missing_gradient():
    params = ParameterSet()
    params.add("p", np.ones(2))
    with pytest.raises(MissingGradientError, match="'p'"):
        adam_step(params, AdamState(), lr=0.1)


def test_checkpoint_restores_parameters_and_moments(tmp_path):
    """Parameters and Adam state survive a save/load cycle exactly."""
    rng = np.random.default_rng(5)
    params = ParameterSet()
    params.add("layer.weight", rng.normal(size=(3, 2)))
    params.add("scalar", np.array(1.5))
    optimizer = Adam(params, lr=0.01)
    for node in (params["layer.weight"], params["scalar"]):
        node.grad = np.asarray(rng.normal(size=node.shape))
    optimizer.step()

    save_parameters(tmp_path / "params.bin", params)
    save_optimizer(tmp_path / "optimizer.bin", optimizer.state)

    restored = load_parameters(tmp_path / "params.bin")
    assert restored.names() == params.names()
    for name in params.names():
        np.testing.assert_array_equal(restored[name].value, params[name].value)

    state = load_optimizer(tmp_path / "optimizer.bin")
    assert state.step == 1
    np.testing.assert_array_equal(state.m["layer.weight"], optimizer.state.m["layer.weight"])
    np.testing.assert_array_equal(state.v["scalar"], optimizer.state.v["scalar"])


def test_checkpoint_rejects_foreign_files(tmp_path):
    path = tmp_path / "bogus.bin"
    path.write_bytes(b"NOPE" + bytes(16))
    with pytest.raises(ValueError, match="magic"):
        load_parameters(path)

    params = ParameterSet()
    params.add("w", np.zeros(2))
    save_parameters(tmp_path / "w.bin", params)
    other = ParameterSet()
    other.add("w", np.zeros(3))
    with pytest.raises(ValueError, match="shape"):
        load_parameters(tmp_path / "w.bin", other)
