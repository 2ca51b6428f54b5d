import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from finxplore.errors import DimensionMismatchError, ShapeMismatchError, TapeMismatchError
from finxplore.nn import (
    AdamState,
    DenseNet,
    adam_step,
    backward,
    forward,
    load_checkpoint,
    save_checkpoint,
    softmax,
)


def finite_difference_grads(net, x, output_grad, h=1e-5):
    """Central finite differences of sum(forward(net, x) * output_grad)."""

    def loss():
        y, _ = forward(net, x)
        return float((y * output_grad).sum())

    grads = []
    for p in net.parameters():
        g = np.empty_like(p)
        flat = p.reshape(-1)
        gflat = g.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            up = loss()
            flat[i] = orig - h
            down = loss()
            flat[i] = orig
            gflat[i] = (up - down) / (2 * h)
        grads.append(g)
    return grads


def relative_errors(analytic, numeric):
    errs = []
    for a, f in zip(analytic, numeric):
        denom = np.maximum(np.maximum(np.abs(a), np.abs(f)), 1e-8)
        errs.append(np.abs(a - f) / denom)
    return np.concatenate([e.reshape(-1) for e in errs])


def test_identity_linear_layer():
    net = DenseNet([np.eye(4)], [np.zeros(4)], ["linear"])
    x = np.array([1.0, -2.0, 3.0, 0.5])
    y, _ = forward(net, x)
    assert np.array_equal(y, x)


def test_relu_zeroes_negative_preactivations():
    net = DenseNet([np.eye(3)], [np.zeros(3)], ["relu"])
    y, _ = forward(net, np.array([-1.0, 0.0, 2.0]))
    assert np.array_equal(y, [0.0, 0.0, 2.0])


def test_two_layer_matches_matmul_oracle(rng):
    w1 = rng.normal(size=(5, 4))
    b1 = rng.normal(size=4)
    w2 = rng.normal(size=(4, 3))
    b2 = rng.normal(size=3)
    net = DenseNet([w1, w2], [b1, b2], ["tanh", "linear"])
    x = rng.normal(size=5)
    y, _ = forward(net, x)
    expected = np.tanh(x @ w1 + b1) @ w2 + b2
    assert np.allclose(y, expected, rtol=1e-12, atol=1e-15)


def test_backward_matches_finite_differences(rng):
    net = DenseNet.create([6, 12, 8, 4], "tanh", "linear", rng)
    x = rng.normal(size=(3, 6))
    g = rng.normal(size=(3, 4))
    _, tape = forward(net, x)
    analytic = backward(net, tape, g).parameters()
    numeric = finite_difference_grads(net, x, g)
    errs = relative_errors(analytic, numeric)
    assert np.quantile(errs, 0.99) < 1e-4


def test_backward_input_gradient(rng):
    net = DenseNet.create([4, 6, 2], "sigmoid", "linear", rng)
    x = rng.normal(size=4)
    g = rng.normal(size=2)
    _, tape = forward(net, x)
    grad = backward(net, tape, g).input_grad
    h = 1e-6
    numeric = np.empty(4)
    for i in range(4):
        xp, xm = x.copy(), x.copy()
        xp[i] += h
        xm[i] -= h
        numeric[i] = (
            (forward(net, xp)[0] * g).sum() - (forward(net, xm)[0] * g).sum()
        ) / (2 * h)
    assert np.allclose(grad, numeric, rtol=1e-5, atol=1e-8)


def test_zero_output_grad_gives_zero_buffer(rng):
    net = DenseNet.create([3, 5, 2], "relu", "linear", rng)
    _, tape = forward(net, rng.normal(size=3))
    grads = backward(net, tape, np.zeros(2))
    assert all(np.all(g == 0) for g in grads.parameters())


def test_single_linear_layer_closed_form(rng):
    net = DenseNet([rng.normal(size=(3, 2))], [np.zeros(2)], ["linear"])
    x = rng.normal(size=3)
    g = rng.normal(size=2)
    _, tape = forward(net, x)
    buf = backward(net, tape, g)
    assert np.allclose(buf.weight_grads[0], np.outer(x, g))
    assert np.allclose(buf.bias_grads[0], g)


def test_dropout_train_vs_eval(rng):
    net = DenseNet.create([8, 16, 16, 4], "relu", "linear", rng)
    x = rng.normal(size=8)
    y_eval, _ = forward(net, x)
    y_eval2, _ = forward(net, x)
    assert np.array_equal(y_eval, y_eval2)  # evaluation path is deterministic
    y_train, tape = forward(net, x, train=True, dropout=0.5, rng=rng)
    assert not np.array_equal(y_train, y_eval)
    assert tape.dropout_masks[0] is not None
    assert tape.dropout_masks[-1] is None  # never on the output layer


def test_dropout_gradients_respect_masks(rng):
    # with dropout active, backward must use the same masks the forward used
    net = DenseNet.create([4, 6, 2], "linear", "linear", rng)
    x = rng.normal(size=(2, 4))
    g = rng.normal(size=(2, 2))
    y, tape = forward(net, x, train=True, dropout=0.5, rng=rng)
    buf = backward(net, tape, g)
    mask = tape.dropout_masks[0]
    scaled_hidden = (x @ net.weights[0] + net.biases[0]) * mask / 0.5
    assert np.allclose(buf.weight_grads[1], scaled_hidden.T @ g)


def test_dimension_and_tape_mismatch(rng):
    net = DenseNet.create([4, 3], "tanh", "linear", rng)
    other = DenseNet.create([4, 3], "tanh", "linear", rng)
    with pytest.raises(DimensionMismatchError):
        forward(net, np.zeros(5))
    _, tape = forward(net, np.zeros(4))
    with pytest.raises(TapeMismatchError):
        backward(other, tape, np.zeros(3))
    with pytest.raises(TapeMismatchError):
        backward(net, tape, np.zeros(7))


# -- softmax ---------------------------------------------------------------------


def test_softmax_uniform_and_shift_invariance():
    assert np.allclose(softmax(np.zeros(5)), 0.2)
    z = np.array([0.3, -1.2, 4.0])
    assert np.allclose(softmax(z), softmax(z + 123.4), rtol=1e-12)


def test_softmax_closed_form():
    out = softmax(np.array([0.0, np.log(3.0)]))
    assert out == pytest.approx([0.25, 0.75], rel=1e-12)


@given(st.lists(st.floats(min_value=-50, max_value=50), min_size=1, max_size=16))
@settings(max_examples=100, deadline=None)
def test_softmax_simplex_property(logits):
    out = softmax(np.array(logits))
    assert abs(out.sum() - 1.0) < 1e-12
    assert np.all(out > 0)


# -- adam ------------------------------------------------------------------------


def test_adam_zero_gradient_fixed_point():
    params = [np.array([1.0, -2.0])]
    state = AdamState.for_params(params, learning_rate=0.1)
    adam_step(params, [np.zeros(2)], state)
    assert np.array_equal(params[0], [1.0, -2.0])


def test_adam_first_step_magnitude():
    # bias correction makes the first update ~ lr * sign(g)
    params = [np.array([0.0])]
    state = AdamState.for_params(params, learning_rate=0.05)
    adam_step(params, [np.array([3.7])], state)
    assert params[0][0] == pytest.approx(-0.05, rel=1e-6)


def test_adam_minimizes_quadratic_bowl():
    target = np.array([1.5, -0.5, 2.0])
    params = [np.zeros(3)]
    state = AdamState.for_params(params, learning_rate=0.01)
    for _ in range(5000):
        grad = 2.0 * (params[0] - target)
        adam_step(params, [grad], state)
    assert np.abs(params[0] - target).max() < 1e-6


def test_adam_shape_mismatch():
    params = [np.zeros(3)]
    state = AdamState.for_params(params, learning_rate=0.01)
    with pytest.raises(DimensionMismatchError):
        adam_step(params, [np.zeros(4)], state)


# -- determinism / checkpointing ------------------------------------------------------


def test_seeded_init_is_deterministic():
    a = DenseNet.create([7, 9, 3], "tanh", "linear", np.random.default_rng(99))
    b = DenseNet.create([7, 9, 3], "tanh", "linear", np.random.default_rng(99))
    for pa, pb in zip(a.parameters(), b.parameters()):
        assert np.array_equal(pa, pb)


def test_checkpoint_round_trip(tmp_path, rng):
    net = DenseNet.create([5, 8, 2], "relu", "linear", rng)
    extra = {"sigma": rng.normal(size=2)}
    save_checkpoint(tmp_path / "ck.npz", {"actor": net}, extra, {"note": 7})
    nets, arrays, meta = load_checkpoint(tmp_path / "ck.npz")
    for p, q in zip(net.parameters(), nets["actor"].parameters()):
        assert np.array_equal(p, q)
    assert np.array_equal(arrays["sigma"], extra["sigma"])
    assert meta == {"note": 7}
    assert nets["actor"].activations == net.activations


def test_checkpoint_shape_mismatch_rejected(tmp_path, rng):
    net = DenseNet.create([5, 8, 2], "relu", "linear", rng)
    save_checkpoint(tmp_path / "ck.npz", {"actor": net})
    nets, _, _ = load_checkpoint(tmp_path / "ck.npz")
    receiver = DenseNet.create([5, 9, 2], "relu", "linear", rng)
    with pytest.raises(ShapeMismatchError):
        receiver.load_parameters_from(nets["actor"])
